//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs as a plain binary (`harness = false`) so the criteria execute in
//! order with no other test competing for the CPU during timing checks.

mod support;

use std::collections::HashSet;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use lightbridge::api::{self, ApiOptions, ApiState};
use lightbridge::game::{draw, Answer, GameError, GameEvent, GameSession, GestureId, GestureSet, Phase};
use lightbridge::model::{AccountHandle, Cue, LightState, PairingCode};
use lightbridge::reconciler::{ReconcilerConfig, ReconcilerHandle};
use lightbridge::registry::{CodeGenerator, MemoryStore, Registry};
use lightbridge::vendor::{
    sim_router, DeviceSummary, Fixture, HttpVendorClient, SimConfig, Simulator, VendorCloud, VendorError, VendorLink,
    VendorSession,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

async fn serve(router: axum::Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router).await.unwrap();
    });
    addr
}

fn random_state(rng: &mut impl Rng) -> LightState {
    LightState {
        power: rng.random(),
        hue: rng.random_range(0..360),
        saturation: rng.random_range(0..=100),
        brightness: rng.random_range(0..=100),
    }
}

// Golden ritual trace

fn golden_ritual() -> Verdict {
    let started = Instant::now();
    let run = support::golden_ritual();
    let elapsed = started.elapsed();
    let cues = support::cue_trace(&run.transcript);
    let pattern = support::trace_matches_ritual(&cues);
    let identical = run.transcript == run.expected;
    check(
        run.success && pattern && identical && elapsed < Duration::from_secs(10),
        format!(
            "code {} cues [{}] pattern={pattern} byte_identical={identical} runtime={:.2}s (< 10s)",
            run.code,
            cues.join(","),
            elapsed.as_secs_f64()
        ),
    )
}

// Reconciliation convergence

async fn convergence() -> Verdict {
    const POLL: u64 = 100;
    const LATENCY: u64 = 30;
    let bound = Duration::from_millis(2 * POLL + LATENCY + 100);

    let sim = Arc::new(Simulator::new(
        &Fixture::demo(),
        SimConfig {
            latency: Duration::from_millis(LATENCY),
            ..SimConfig::default()
        },
    ));
    let sim_url = format!("http://{}", serve(sim_router(sim.clone())).await);
    let link = Arc::new(VendorLink::new(Arc::new(HttpVendorClient::new(&sim_url).unwrap())));
    let registry = Arc::new(Registry::open(Arc::new(MemoryStore::new()), CodeGenerator::seeded(3)).unwrap());
    let state = ApiState::new(registry.clone(), link.clone(), ApiOptions::test_mode()).unwrap();
    let base = format!("http://{}", serve(api::router(state, None)).await);
    let reconciler = ReconcilerHandle::spawn(
        registry,
        link,
        ReconcilerConfig {
            poll_interval: Duration::from_millis(POLL),
            ..ReconcilerConfig::default()
        },
    )
    .unwrap();

    let http = reqwest::Client::new();
    let paired: Value = http
        .post(format!("{base}/api/pair"))
        .json(&json!({"vendor_username":"demo","vendor_password":"demo","vendor_device_id":"bulb-1"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let code = paired["code"].as_str().unwrap().to_owned();
    let state_url = format!("{base}/api/device/{code}/state");

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = Duration::ZERO;
    let mut failures = Vec::new();
    for seq in 0..100 {
        // a short burst of writes with random gaps; the clock starts at the last
        let writes = rng.random_range(1..=4);
        let mut last = LightState::OFF;
        for w in 0..writes {
            if w > 0 {
                tokio::time::sleep(Duration::from_millis(rng.random_range(0..40))).await;
            }
            last = random_state(&mut rng);
            let resp = http.put(&state_url).json(&last).send().await.unwrap();
            assert!(resp.status().is_success());
        }
        let t0 = Instant::now();
        loop {
            let view: Value = http.get(&state_url).send().await.unwrap().json().await.unwrap();
            if view["in_sync"] == true {
                let took = t0.elapsed();
                worst = worst.max(took);
                if took > bound || view["reported"] != serde_json::to_value(last).unwrap() {
                    failures.push(format!("seq {seq}: {took:?}"));
                }
                break;
            }
            if t0.elapsed() > Duration::from_secs(3) {
                failures.push(format!("seq {seq}: never in sync"));
                break;
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }
    reconciler.shutdown().await;
    check(
        failures.is_empty(),
        format!(
            "100 sequences, worst {} ms, bound {} ms{}",
            worst.as_millis(),
            bound.as_millis(),
            if failures.is_empty() { String::new() } else { format!(", late: {failures:?}") }
        ),
    )
}

// Fault-tolerant convergence

/// Wraps the simulator and checks, on every failed set, that neither the
/// cloud's state nor the registry's reported state moved.
struct Watchdog {
    sim: Arc<Simulator>,
    registry: OnceLock<Arc<Registry>>,
    code: OnceLock<PairingCode>,
    failed: AtomicU64,
    violations: AtomicU64,
}

#[async_trait]
impl VendorCloud for Watchdog {
    async fn login(&self, username: &str, password: &str) -> Result<VendorSession, VendorError> {
        self.sim.login(username, password).await
    }

    async fn list_devices(&self, session: &VendorSession) -> Result<Vec<DeviceSummary>, VendorError> {
        self.sim.list_devices(session).await
    }

    async fn get_state(&self, session: &VendorSession, id: &str) -> Result<LightState, VendorError> {
        self.sim.get_state(session, id).await
    }

    async fn set_state(&self, session: &VendorSession, id: &str, state: LightState) -> Result<(), VendorError> {
        let reported = || {
            let registry = self.registry.get()?;
            let rec = registry.get_record(self.code.get()?).ok()?;
            Some((rec.reported, rec.reported_revision))
        };
        let cloud_before = self.sim.device_state(id);
        let registry_before = reported();
        let result = self.sim.set_state(session, id, state).await;
        if result.is_err() {
            self.failed.fetch_add(1, Ordering::Relaxed);
            if self.sim.device_state(id) != cloud_before || reported() != registry_before {
                self.violations.fetch_add(1, Ordering::Relaxed);
            }
        }
        result
    }
}

async fn fault_convergence() -> Verdict {
    let sim = Arc::new(Simulator::new(
        &Fixture::demo(),
        SimConfig {
            fault_seed: 30,
            latency: Duration::from_millis(2),
            ..SimConfig::default()
        },
    ));
    sim.set_fail_probability("bulb-1", 0.3);
    let watchdog = Arc::new(Watchdog {
        sim: sim.clone(),
        registry: Default::default(),
        code: Default::default(),
        failed: AtomicU64::new(0),
        violations: AtomicU64::new(0),
    });
    let link = Arc::new(VendorLink::new(watchdog.clone()));
    let session = link.login("demo", "demo").await.unwrap();
    let registry = Arc::new(Registry::in_memory());
    let code = registry
        .register_device(session.account, "bulb-1", "Desk Lamp", Some(LightState::WHITE))
        .unwrap()
        .code;
    let _ = watchdog.registry.set(registry.clone());
    let _ = watchdog.code.set(code.clone());
    let handle = ReconcilerHandle::spawn(
        registry.clone(),
        link,
        ReconcilerConfig {
            poll_interval: Duration::from_millis(20),
            retry_backoff: Duration::from_millis(2),
            backoff_cap: Duration::from_millis(10),
            ..ReconcilerConfig::default()
        },
    )
    .unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut worst = 0;
    let mut late = Vec::new();
    for update in 0..50 {
        let target = random_state(&mut rng);
        registry.set_desired(&code, target).unwrap();
        let start = handle.cycles();
        loop {
            let rec = registry.get_record(&code).unwrap();
            let used = handle.cycles() - start;
            if rec.in_sync() && sim.device_state("bulb-1") == Some(target) {
                worst = worst.max(used);
                break;
            }
            if used > 50 {
                late.push(update);
                break;
            }
            tokio::time::sleep(Duration::from_millis(1)).await;
        }
    }
    handle.shutdown().await;
    let failed = watchdog.failed.load(Ordering::Relaxed);
    let violations = watchdog.violations.load(Ordering::Relaxed);
    check(
        late.is_empty() && violations == 0 && failed > 0,
        format!(
            "50 updates at p=0.3, worst {worst} cycles (limit 50), {failed} failed vendor calls, {violations} state changes on failure{}",
            if late.is_empty() { String::new() } else { format!(", late updates {late:?}") }
        ),
    )
}

// Code uniqueness

fn code_uniqueness() -> Verdict {
    let registry = Arc::new(Registry::open(Arc::new(MemoryStore::new()), CodeGenerator::seeded(10_000)).unwrap());
    let account = AccountHandle("acct-demo".into());
    let mut issued: Vec<PairingCode> = (0..9_000)
        .map(|i| {
            registry
                .register_device(account.clone(), &format!("bulb-{i}"), "x", None)
                .unwrap()
                .code
        })
        .collect();
    let concurrent: Vec<PairingCode> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..1_000)
            .map(|i| {
                let registry = registry.clone();
                let account = account.clone();
                s.spawn(move || {
                    registry
                        .register_device(account, &format!("par-{i}"), "x", None)
                        .unwrap()
                        .code
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    issued.extend(concurrent);
    let active = registry.active_codes();
    let unique: HashSet<_> = active.iter().collect();
    let issued_unique: HashSet<_> = issued.iter().collect();
    let re = regex::Regex::new("^[0-9]{5}$").unwrap();
    let well_formed = active.iter().all(|c| re.is_match(c.as_str()));
    let duplicates = active.len() - unique.len() + (issued.len() - issued_unique.len());
    check(
        active.len() == 10_000 && duplicates == 0 && well_formed,
        format!(
            "{} active codes (1000 concurrent), {duplicates} duplicates, all match [0-9]{{5}}: {well_formed}",
            active.len()
        ),
    )
}

// FSM fuzz

/// Allowed transitions, independent of the engine's own match.
const TABLE: &[(Phase, &str, Phase, &[Cue])] = &[
    (Phase::Created, "Start", Phase::Ambiance, &[Cue::SpookyAmbiance]),
    (Phase::Ambiance, "GestureDetected", Phase::Listening, &[Cue::Listening]),
    (Phase::Listening, "QuestionAsked", Phase::Answering, &[Cue::AnswerYes, Cue::AnswerNo]),
    (Phase::Answering, "AnswerHoldElapsed", Phase::Listening, &[Cue::Listening]),
    (Phase::Created, "End", Phase::Ended, &[Cue::Restore]),
    (Phase::Ambiance, "End", Phase::Ended, &[Cue::Restore]),
    (Phase::Listening, "End", Phase::Ended, &[Cue::Restore]),
    (Phase::Answering, "End", Phase::Ended, &[Cue::Restore]),
];

fn kind(e: &GameEvent) -> &'static str {
    match e {
        GameEvent::Start => "Start",
        GameEvent::GestureDetected { .. } => "GestureDetected",
        GameEvent::QuestionAsked => "QuestionAsked",
        GameEvent::AnswerHoldElapsed => "AnswerHoldElapsed",
        GameEvent::End => "End",
    }
}

fn random_event(rng: &mut impl Rng) -> GameEvent {
    match rng.random_range(0..6) {
        0 => GameEvent::Start,
        1 => GameEvent::GestureDetected { gesture_id: GestureId::t_pose() },
        2 => GameEvent::GestureDetected { gesture_id: GestureId("Wave".into()) },
        3 => GameEvent::QuestionAsked,
        4 => GameEvent::AnswerHoldElapsed,
        _ => GameEvent::End,
    }
}

fn fsm_fuzz() -> Verdict {
    let gestures = GestureSet::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1_000);
    let mut events = 0u64;
    let mut accepted = 0u64;
    let mut problems: Vec<String> = Vec::new();
    for i in 0..1_000u32 {
        let mut s = GameSession::new(format!("s{i}"), PairingCode::from_index(i), LightState::WHITE, rng.random());
        for _ in 0..100 {
            let e = random_event(&mut rng);
            events += 1;
            let row = TABLE.iter().find(|(p, k, _, _)| *p == s.phase && *k == kind(&e));
            match (row, s.apply(&e, &gestures)) {
                (Some((_, _, to, allowed)), Ok((next, cues))) => {
                    accepted += 1;
                    if next.phase != *to || cues.len() != 1 || !allowed.contains(&cues[0]) {
                        problems.push(format!("{:?} + {e:?} gave {:?} {cues:?}", s.phase, next.phase));
                    }
                    if next.pending_answer.is_some() != (next.phase == Phase::Answering) {
                        problems.push(format!("pending_answer broken after {e:?}"));
                    }
                    s = next;
                }
                (Some(_), Err(GameError::UnknownGesture(_))) if kind(&e) == "GestureDetected" => {}
                (None, Err(GameError::InvalidTransition { .. })) => {}
                (row, other) => problems.push(format!("{:?} + {e:?}: table {row:?}, engine {other:?}", s.phase)),
            }
        }
    }
    check(
        problems.is_empty() && events == 100_000,
        format!(
            "{events} events over 1000 sessions, {accepted} accepted, {} violations{}",
            problems.len(),
            problems.first().map(|p| format!(", first: {p}")).unwrap_or_default()
        ),
    )
}

// Answer fairness and determinism

fn replay(seed: u64, events: &[GameEvent]) -> (Vec<Cue>, GameSession) {
    let gestures = GestureSet::default();
    let mut s = GameSession::new("r", PairingCode::from_index(1), LightState::WHITE, seed);
    let mut cues = Vec::new();
    for e in events {
        if let Ok((next, emitted)) = s.apply(e, &gestures) {
            s = next;
            cues.extend(emitted);
        }
    }
    (cues, s)
}

fn fairness() -> Verdict {
    let yes = (0..10_000u64).filter(|i| draw(7, *i) == Answer::Yes).count();
    let fraction = yes as f64 / 10_000.0;
    let fair = (0.47..=0.53).contains(&fraction);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    for _ in 0..500 {
        let seed: u64 = rng.random();
        let len = rng.random_range(0..200);
        let events: Vec<GameEvent> = (0..len).map(|_| random_event(&mut rng)).collect();
        if replay(seed, &events) != replay(seed, &events) {
            mismatches += 1;
        }
    }
    check(
        fair && mismatches == 0,
        format!("seed 7 Yes fraction {fraction:.4} (allowed [0.47, 0.53]), 500 replays, {mismatches} mismatches"),
    )
}

// Quiescence

async fn quiescence() -> Verdict {
    let sim = Arc::new(Simulator::new(&Fixture::demo(), SimConfig::default()));
    let sim_url = format!("http://{}", serve(sim_router(sim.clone())).await);
    let link = Arc::new(VendorLink::new(Arc::new(HttpVendorClient::new(&sim_url).unwrap())));
    let session = link.login("demo", "demo").await.unwrap();
    let registry = Arc::new(Registry::in_memory());
    let a = registry
        .register_device(session.account.clone(), "bulb-1", "Desk Lamp", Some(LightState::WHITE))
        .unwrap()
        .code;
    registry
        .register_device(session.account, "bulb-2", "Ceiling Light", Some(LightState::OFF))
        .unwrap();
    let handle = ReconcilerHandle::spawn(
        registry.clone(),
        link,
        ReconcilerConfig {
            poll_interval: Duration::from_millis(100),
            ..ReconcilerConfig::default()
        },
    )
    .unwrap();
    // one real write first, so the loop has done work before going idle
    registry.set_desired(&a, LightState::BLUE).unwrap();
    while !registry.list_dirty().is_empty() {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    handle.wait_for_cycles(handle.cycles() + 1).await;
    let before = sim.stats();
    let start = handle.cycles();
    let mut dirty_seen = 0;
    while handle.cycles() < start + 20 {
        dirty_seen += registry.list_dirty().len();
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    let after = sim.stats();
    handle.shutdown().await;
    check(
        after.mutations == before.mutations && after.set_calls == before.set_calls && dirty_seen == 0,
        format!(
            "20 idle cycles, mutations {} -> {}, set calls {} -> {}",
            before.mutations, after.mutations, before.set_calls, after.set_calls
        ),
    )
}

fn report(name: &str, verdict: &Verdict) -> bool {
    match verdict {
        Ok(detail) => {
            println!("PASS {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            false
        }
    }
}

fn main() {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let mut all = true;
    all &= report("golden ritual trace", &golden_ritual());
    all &= report("reconciliation convergence", &runtime.block_on(convergence()));
    all &= report("fault-tolerant convergence", &runtime.block_on(fault_convergence()));
    all &= report("code uniqueness", &code_uniqueness());
    all &= report("fsm fuzz", &fsm_fuzz());
    all &= report("answer fairness and determinism", &fairness());
    all &= report("quiescence", &runtime.block_on(quiescence()));
    if !all {
        std::process::exit(1);
    }
}
