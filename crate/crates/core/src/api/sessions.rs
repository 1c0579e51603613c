//! Game sessions behind the API.
//!
//! Each session sits behind its own async mutex; handlers and the
//! answer-hold timer take it for the whole apply-and-write step, so events
//! for one session are applied strictly in arrival order.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, PathRejection};
use axum::extract::{Path, State};
use axum::Json;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;

use super::{parse_code, parse_json, path_param, ApiError, ApiOptions, ApiState};
use crate::game::{EventLogEntry, GameEvent, GameSession, GestureId, Phase};
use crate::model::{cue_to_state, Cue, PairingCode};

pub(super) struct SessionTable {
    slots: Mutex<HashMap<String, Arc<AsyncMutex<Slot>>>>,
    next_id: AtomicU64,
    log_file: Option<Mutex<File>>,
}

struct Slot {
    session: GameSession,
    log: Vec<EventLogEntry>,
}

impl SessionTable {
    pub(super) fn new(options: &ApiOptions) -> std::io::Result<Self> {
        let log_file = match &options.event_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new().create(true).append(true).open(path)?,
            )),
            None => None,
        };
        Ok(SessionTable {
            slots: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            log_file,
        })
    }

    fn get(&self, id: &str) -> Result<Arc<AsyncMutex<Slot>>, ApiError> {
        self.slots
            .lock()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn new_id(&self, sequential: bool) -> String {
        if sequential {
            format!("sess-{:04}", self.next_id.fetch_add(1, Ordering::SeqCst))
        } else {
            format!("sess-{:016x}", rand::random::<u64>())
        }
    }

    fn append_log(&self, entry: &EventLogEntry) {
        if let Some(file) = &self.log_file {
            let mut line = serde_json::to_vec(entry).expect("log entry serializes");
            line.push(b'\n');
            if let Err(e) = file.lock().write_all(&line) {
                tracing::warn!(error = %e, "event log write failed");
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub code: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub phase: Phase,
}

pub(super) async fn create_session(
    State(state): State<Arc<ApiState>>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<SessionCreated>, ApiError> {
    let req: CreateSessionRequest = parse_json(body)?;
    let code: PairingCode = parse_code(&req.code)?;
    let record = state.registry.get_record(&code)?;
    let baseline = record.reported.unwrap_or(record.desired);
    let seed = req.seed.unwrap_or_else(rand::random);
    let id = state.sessions.new_id(state.options.test_mode);
    let session = GameSession::new(id.clone(), code, baseline, seed)
        .with_answer_hold(state.options.answer_hold);
    let phase = session.phase;
    state.sessions.slots.lock().insert(
        id.clone(),
        Arc::new(AsyncMutex::new(Slot {
            session,
            log: Vec::new(),
        })),
    );
    Ok(Json(SessionCreated {
        session_id: id,
        phase,
    }))
}

pub(super) async fn get_session(
    State(state): State<Arc<ApiState>>,
    id: Result<Path<String>, PathRejection>,
) -> Result<Json<GameSession>, ApiError> {
    let id = path_param(id)?;
    let slot = state.sessions.get(&id)?;
    let session = slot.lock().await.session.clone();
    Ok(Json(session))
}

pub(super) async fn get_events(
    State(state): State<Arc<ApiState>>,
    id: Result<Path<String>, PathRejection>,
) -> Result<Json<Vec<EventLogEntry>>, ApiError> {
    let id = path_param(id)?;
    let slot = state.sessions.get(&id)?;
    let log = slot.lock().await.log.clone();
    Ok(Json(log))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRequest {
    pub kind: String,
    #[serde(default)]
    pub gesture_id: Option<String>,
}

impl EventRequest {
    fn into_event(self) -> Result<GameEvent, ApiError> {
        let event = match self.kind.as_str() {
            "Start" => GameEvent::Start,
            "GestureDetected" => GameEvent::GestureDetected {
                gesture_id: GestureId(self.gesture_id.clone().ok_or_else(|| {
                    ApiError::malformed("GestureDetected requires gesture_id")
                })?),
            },
            "QuestionAsked" => GameEvent::QuestionAsked,
            "AnswerHoldElapsed" => GameEvent::AnswerHoldElapsed,
            "End" => GameEvent::End,
            other => return Err(ApiError::malformed(format!("unknown event kind {other:?}"))),
        };
        if self.gesture_id.is_some() && !matches!(event, GameEvent::GestureDetected { .. }) {
            return Err(ApiError::malformed("gesture_id is only valid with GestureDetected"));
        }
        Ok(event)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventResponse {
    pub phase: Phase,
    pub cues: Vec<Cue>,
    pub question_index: u64,
}

pub(super) async fn post_event(
    State(state): State<Arc<ApiState>>,
    id: Result<Path<String>, PathRejection>,
    body: Result<Bytes, BytesRejection>,
) -> Result<Json<EventResponse>, ApiError> {
    let id = path_param(id)?;
    let slot = state.sessions.get(&id)?;
    let event = parse_json::<EventRequest>(body)?.into_event()?;
    let mut guard = slot.lock().await;
    let response = apply_event(&state, &mut guard, event)?;
    if guard.session.phase == Phase::Answering && state.options.hold_timer {
        spawn_hold_timer(state.clone(), id, guard.session.question_index);
    }
    Ok(Json(response))
}

/// Apply the event, write each emitted cue as desired state, then commit.
/// If any write fails the session is left as it was.
fn apply_event(state: &ApiState, slot: &mut Slot, event: GameEvent) -> Result<EventResponse, ApiError> {
    let (next, cues) = slot.session.apply(&event, &state.options.gestures)?;
    for cue in &cues {
        state
            .registry
            .set_desired(&next.code, cue_to_state(*cue, next.baseline))?;
    }
    let entry = EventLogEntry {
        session_id: next.session_id.clone(),
        event,
        phase: next.phase,
        cues: cues.clone(),
        timestamp: state.now(),
    };
    state.sessions.append_log(&entry);
    slot.log.push(entry);
    slot.session = next;
    tracing::info!(
        session = %slot.session.session_id,
        phase = %slot.session.phase,
        cues = ?cues,
        "session event"
    );
    Ok(EventResponse {
        phase: slot.session.phase,
        cues,
        question_index: slot.session.question_index,
    })
}

/// Fire `AnswerHoldElapsed` once for the Answering phase entered with
/// `question_index`. If the session has moved on by then, do nothing.
fn spawn_hold_timer(state: Arc<ApiState>, id: String, question_index: u64) {
    tokio::spawn(async move {
        let Ok(slot) = state.sessions.get(&id) else {
            return;
        };
        let hold = slot.lock().await.session.answer_hold;
        tokio::time::sleep(hold).await;
        let mut guard = slot.lock().await;
        if guard.session.phase != Phase::Answering || guard.session.question_index != question_index {
            return;
        }
        if let Err(e) = apply_event(&state, &mut guard, GameEvent::AnswerHoldElapsed) {
            tracing::warn!(session = %id, error = %e, "answer hold timer failed");
        }
    });
}
