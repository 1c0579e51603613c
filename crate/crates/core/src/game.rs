//! The summoning ritual as a pure finite state machine.
//!
//! ```text
//! Created --Start--> Ambiance --Gesture--> Listening --Question--> Answering
//!                                              ^                      |
//!                                              +--AnswerHoldElapsed---+
//! any phase but Ended --End--> Ended
//! ```
//!
//! Transitions emit [`Cue`]s; turning cues into light states and writing
//! them to the registry is the caller's job.

use std::collections::BTreeSet;
use std::fmt;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Cue, LightState, PairingCode};

pub const DEFAULT_ANSWER_HOLD: Duration = Duration::from_millis(4000);
pub const T_POSE: &str = "TPose";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Created,
    Ambiance,
    Listening,
    Answering,
    Ended,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    pub fn cue(self) -> Cue {
        match self {
            Answer::Yes => Cue::AnswerYes,
            Answer::No => Cue::AnswerNo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GestureId(pub String);

impl GestureId {
    pub fn t_pose() -> Self {
        GestureId(T_POSE.to_owned())
    }
}

impl fmt::Display for GestureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Gestures that open the listening phase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureSet(BTreeSet<GestureId>);

impl GestureSet {
    pub fn new(gestures: impl IntoIterator<Item = GestureId>) -> Self {
        GestureSet(gestures.into_iter().collect())
    }

    pub fn contains(&self, g: &GestureId) -> bool {
        self.0.contains(g)
    }
}

impl Default for GestureSet {
    fn default() -> Self {
        GestureSet::new([GestureId::t_pose()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum GameEvent {
    Start,
    GestureDetected { gesture_id: GestureId },
    QuestionAsked,
    AnswerHoldElapsed,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Start,
    GestureDetected,
    QuestionAsked,
    AnswerHoldElapsed,
    End,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl GameEvent {
    pub fn kind(&self) -> EventKind {
        match self {
            GameEvent::Start => EventKind::Start,
            GameEvent::GestureDetected { .. } => EventKind::GestureDetected,
            GameEvent::QuestionAsked => EventKind::QuestionAsked,
            GameEvent::AnswerHoldElapsed => EventKind::AnswerHoldElapsed,
            GameEvent::End => EventKind::End,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("{event} is not allowed in phase {phase}")]
    InvalidTransition { phase: Phase, event: EventKind },
    #[error("unknown gesture {0}")]
    UnknownGesture(GestureId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSession {
    pub session_id: String,
    pub code: PairingCode,
    pub phase: Phase,
    /// Set exactly while `phase == Answering`.
    pub pending_answer: Option<Answer>,
    /// Questions accepted so far.
    pub question_index: u64,
    pub answer_seed: u64,
    /// Light state to restore when the ritual ends.
    pub baseline: LightState,
    #[serde(rename = "answer_hold_ms", with = "millis")]
    pub answer_hold: Duration,
}

impl GameSession {
    pub fn new(session_id: impl Into<String>, code: PairingCode, baseline: LightState, seed: u64) -> Self {
        GameSession {
            session_id: session_id.into(),
            code,
            phase: Phase::Created,
            pending_answer: None,
            question_index: 0,
            answer_seed: seed,
            baseline,
            answer_hold: DEFAULT_ANSWER_HOLD,
        }
    }

    pub fn with_answer_hold(mut self, hold: Duration) -> Self {
        self.answer_hold = hold;
        self
    }

    /// Apply one event. On error the session is unchanged and nothing is
    /// emitted.
    pub fn apply(
        &self,
        event: &GameEvent,
        gestures: &GestureSet,
    ) -> Result<(GameSession, Vec<Cue>), GameError> {
        let mut next = self.clone();
        let cue = match (self.phase, event) {
            (Phase::Created, GameEvent::Start) => {
                next.phase = Phase::Ambiance;
                Cue::SpookyAmbiance
            }
            (Phase::Ambiance, GameEvent::GestureDetected { gesture_id }) => {
                if !gestures.contains(gesture_id) {
                    return Err(GameError::UnknownGesture(gesture_id.clone()));
                }
                next.phase = Phase::Listening;
                Cue::Listening
            }
            (Phase::Listening, GameEvent::QuestionAsked) => {
                let answer = draw(self.answer_seed, self.question_index);
                next.phase = Phase::Answering;
                next.pending_answer = Some(answer);
                next.question_index += 1;
                answer.cue()
            }
            (Phase::Answering, GameEvent::AnswerHoldElapsed) => {
                next.phase = Phase::Listening;
                next.pending_answer = None;
                Cue::Listening
            }
            (phase, GameEvent::End) if phase != Phase::Ended => {
                next.phase = Phase::Ended;
                next.pending_answer = None;
                Cue::Restore
            }
            (phase, event) => {
                return Err(GameError::InvalidTransition {
                    phase,
                    event: event.kind(),
                })
            }
        };
        Ok((next, vec![cue]))
    }
}

/// The spirits' answer to question number `question_index`: a fair coin,
/// fully determined by `(seed, question_index)`.
pub fn draw(seed: u64, question_index: u64) -> Answer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(question_index);
    if rng.random::<bool>() {
        Answer::Yes
    } else {
        Answer::No
    }
}

/// One line of the per-session event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub session_id: String,
    pub event: GameEvent,
    /// Phase after the event was applied.
    pub phase: Phase,
    pub cues: Vec<Cue>,
    pub timestamp: DateTime<Utc>,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}
