//! `bridge play`: walk a ritual from the terminal.
//!
//! The prompts follow the legal path through the game, so a player who
//! just presses enter never sends an event the session would reject.
//! Entering `q` (or closing stdin) at any prompt ends the ritual.

use std::time::{Duration, Instant};

use clap::Args;
use lightbridge::api::{DeviceStateView, EventResponse, SessionCreated};
use lightbridge::game::{Phase, T_POSE};
use lightbridge::model::Cue;
use serde_json::json;
use tokio::io::{AsyncBufReadExt, BufReader, Lines, Stdin};

use crate::client::{BridgeClient, CliError};

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long)]
    pub code: String,
    /// Answer seed. The bridge picks one when omitted.
    #[arg(long)]
    pub seed: Option<u64>,
    /// End the answer hold on a keypress instead of waiting for the
    /// bridge's timer. Pair with `serve --test-mode`.
    #[arg(long)]
    pub test_mode: bool,
    /// How long to wait for the light to catch up after each step.
    #[arg(long, default_value_t = 5000)]
    pub sync_wait_ms: u64,
}

enum Input {
    Go,
    Quit,
}

struct Player {
    client: BridgeClient,
    code: String,
    session: String,
    sync_wait: Duration,
    lines: Lines<BufReader<Stdin>>,
}

impl Player {
    async fn prompt(&mut self, text: &str) -> Result<Input, CliError> {
        println!("[{text}]");
        match self.lines.next_line().await? {
            Some(line) if line.trim().eq_ignore_ascii_case("q") => Ok(Input::Quit),
            Some(_) => Ok(Input::Go),
            None => Ok(Input::Quit),
        }
    }

    async fn send(&self, kind: &str) -> Result<EventResponse, CliError> {
        let body = if kind == "GestureDetected" {
            json!({ "kind": kind, "gesture_id": T_POSE })
        } else {
            json!({ "kind": kind })
        };
        self.client
            .post(&format!("/api/session/{}/event", self.session), &body)
            .await
    }

    /// Poll until the light reports the desired state or the wait runs out.
    async fn wait_in_sync(&self) -> Result<bool, CliError> {
        let started = Instant::now();
        loop {
            let view: DeviceStateView = self
                .client
                .get(&format!("/api/device/{}/state", self.code))
                .await?;
            if view.in_sync {
                return Ok(true);
            }
            if started.elapsed() >= self.sync_wait {
                return Ok(false);
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    async fn report(&self, resp: &EventResponse) -> Result<(), CliError> {
        let in_sync = self.wait_in_sync().await?;
        for cue in &resp.cues {
            let color = cue.color_name().unwrap_or("baseline");
            println!("phase {:?} | cue {cue} ({color}) | in_sync {in_sync}", resp.phase);
            match cue {
                Cue::AnswerYes => println!("the spirits answer YES"),
                Cue::AnswerNo => println!("the spirits answer NO"),
                _ => {}
            }
        }
        Ok(())
    }

    async fn step(&self, kind: &str) -> Result<EventResponse, CliError> {
        let resp = self.send(kind).await?;
        self.report(&resp).await?;
        Ok(resp)
    }

    async fn end(&self) -> Result<(), CliError> {
        self.step("End").await?;
        println!("the ritual is over");
        Ok(())
    }

    /// Without test mode the bridge's timer ends the hold; wait for it.
    async fn wait_hold(&self) -> Result<(), CliError> {
        println!("[the light holds the answer]");
        loop {
            let session: serde_json::Value = self
                .client
                .get(&format!("/api/session/{}", self.session))
                .await?;
            if session["phase"] != "Answering" {
                break;
            }
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
        let in_sync = self.wait_in_sync().await?;
        println!("phase Listening | cue Listening (white) | in_sync {in_sync}");
        Ok(())
    }
}

pub async fn play(api: &str, args: PlayArgs) -> Result<(), CliError> {
    let client = BridgeClient::new(api);
    let mut body = json!({ "code": args.code });
    if let Some(seed) = args.seed {
        body["seed"] = json!(seed);
    }
    let created: SessionCreated = client.post("/api/session", &body).await?;
    match args.seed {
        Some(seed) => println!(
            "ritual on code {} | session {} | seed {seed}",
            args.code, created.session_id
        ),
        None => println!("ritual on code {} | session {}", args.code, created.session_id),
    }
    let mut p = Player {
        client,
        code: args.code,
        session: created.session_id,
        sync_wait: Duration::from_millis(args.sync_wait_ms),
        lines: BufReader::new(tokio::io::stdin()).lines(),
    };

    if let Input::Quit = p.prompt("press enter to summon the spirits, q to stop").await? {
        return p.end().await;
    }
    p.step("Start").await?;
    if let Input::Quit = p
        .prompt("direct your partner to strike a T pose, then press enter")
        .await?
    {
        return p.end().await;
    }
    p.step("GestureDetected").await?;
    loop {
        if let Input::Quit = p
            .prompt("ask your yes-no question aloud, then press enter")
            .await?
        {
            return p.end().await;
        }
        let resp = p.step("QuestionAsked").await?;
        debug_assert_eq!(resp.phase, Phase::Answering);
        if args.test_mode {
            if let Input::Quit = p.prompt("press enter once everyone has seen the answer").await? {
                return p.end().await;
            }
            p.step("AnswerHoldElapsed").await?;
        } else {
            p.wait_hold().await?;
        }
    }
}
