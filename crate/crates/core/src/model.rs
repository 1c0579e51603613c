//! Domain types shared by every part of the bridge: pairing codes, light
//! states, cues and the device record.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of distinct pairing codes ("00000" through "99999").
pub const CODE_SPACE: u32 = 100_000;

/// A 5-digit public handle binding an experience client to one device.
///
/// Leading zeros are significant: "00042" and "42" are not the same code,
/// and only the former is valid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PairingCode(String);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("pairing code must be exactly 5 decimal digits, got {0:?}")]
pub struct InvalidCode(pub String);

impl PairingCode {
    /// Zero-padded code for a raw draw in `0..CODE_SPACE`.
    pub fn from_index(index: u32) -> Self {
        assert!(index < CODE_SPACE, "code index {index} out of range");
        PairingCode(format!("{index:05}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for PairingCode {
    type Err = InvalidCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(PairingCode(s.to_owned()))
        } else {
            Err(InvalidCode(s.to_owned()))
        }
    }
}

impl TryFrom<String> for PairingCode {
    type Error = InvalidCode;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<PairingCode> for String {
    fn from(code: PairingCode) -> Self {
        code.0
    }
}

impl fmt::Display for PairingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Power plus hue/saturation/brightness.
///
/// When `power` is false the colour fields keep their last-set values but
/// have no visible effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLightState", deny_unknown_fields)]
pub struct LightState {
    pub power: bool,
    /// Degrees in `[0, 360)`.
    pub hue: u16,
    /// Percent in `[0, 100]`.
    pub saturation: u8,
    /// Percent in `[0, 100]`.
    pub brightness: u8,
}

impl LightState {
    pub const BLUE: LightState = LightState::on(240, 100, 60);
    pub const WHITE: LightState = LightState::on(0, 0, 100);
    pub const GREEN: LightState = LightState::on(120, 100, 100);
    pub const RED: LightState = LightState::on(0, 100, 100);

    /// Used as desired state when a device registers with unknown state.
    pub const OFF: LightState = LightState {
        power: false,
        hue: 0,
        saturation: 0,
        brightness: 100,
    };

    const fn on(hue: u16, saturation: u8, brightness: u8) -> Self {
        LightState {
            power: true,
            hue,
            saturation,
            brightness,
        }
    }
}

/// Unvalidated light state as it arrives off the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLightState {
    pub power: bool,
    pub hue: i64,
    pub saturation: i64,
    pub brightness: i64,
}

impl From<LightState> for RawLightState {
    fn from(s: LightState) -> Self {
        RawLightState {
            power: s.power,
            hue: s.hue.into(),
            saturation: s.saturation.into(),
            brightness: s.brightness.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateField {
    Hue,
    Saturation,
    Brightness,
}

impl fmt::Display for StateField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateField::Hue => "hue",
            StateField::Saturation => "saturation",
            StateField::Brightness => "brightness",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutOfRange {
    pub field: StateField,
    pub value: i64,
    /// Human-readable allowed range, e.g. `[0,360)`.
    pub allowed: &'static str,
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={} outside {}", self.field, self.value, self.allowed)
    }
}

/// Every violated field of a rejected light state, in field order.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", self.violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct ValidationError {
    pub violations: Vec<OutOfRange>,
}

impl ValidationError {
    pub fn fields(&self) -> Vec<StateField> {
        self.violations.iter().map(|v| v.field).collect()
    }
}

pub fn validate_state(raw: RawLightState) -> Result<LightState, ValidationError> {
    let mut violations = Vec::new();
    if !(0..360).contains(&raw.hue) {
        violations.push(OutOfRange {
            field: StateField::Hue,
            value: raw.hue,
            allowed: "[0,360)",
        });
    }
    for (field, value) in [
        (StateField::Saturation, raw.saturation),
        (StateField::Brightness, raw.brightness),
    ] {
        if !(0..=100).contains(&value) {
            violations.push(OutOfRange {
                field,
                value,
                allowed: "[0,100]",
            });
        }
    }
    if !violations.is_empty() {
        return Err(ValidationError { violations });
    }
    // Ranges checked above, the narrowing casts are lossless.
    Ok(LightState {
        power: raw.power,
        hue: raw.hue as u16,
        saturation: raw.saturation as u8,
        brightness: raw.brightness as u8,
    })
}

impl TryFrom<RawLightState> for LightState {
    type Error = ValidationError;

    fn try_from(raw: RawLightState) -> Result<Self, Self::Error> {
        validate_state(raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cue {
    SpookyAmbiance,
    Listening,
    AnswerYes,
    AnswerNo,
    Restore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CueRole {
    Ambiance,
    Information,
    Housekeeping,
}

impl Cue {
    pub const ALL: [Cue; 5] = [
        Cue::SpookyAmbiance,
        Cue::Listening,
        Cue::AnswerYes,
        Cue::AnswerNo,
        Cue::Restore,
    ];

    pub fn role(self) -> CueRole {
        match self {
            Cue::SpookyAmbiance => CueRole::Ambiance,
            Cue::Listening | Cue::AnswerYes | Cue::AnswerNo => CueRole::Information,
            Cue::Restore => CueRole::Housekeeping,
        }
    }

    /// Colour name shown to players; `None` for `Restore`.
    pub fn color_name(self) -> Option<&'static str> {
        match self {
            Cue::SpookyAmbiance => Some("blue"),
            Cue::Listening => Some("white"),
            Cue::AnswerYes => Some("green"),
            Cue::AnswerNo => Some("red"),
            Cue::Restore => None,
        }
    }

    /// Inverse of [`Cue::color_name`].
    pub fn from_color_name(name: &str) -> Option<Cue> {
        match name {
            "blue" => Some(Cue::SpookyAmbiance),
            "white" => Some(Cue::Listening),
            "green" => Some(Cue::AnswerYes),
            "red" => Some(Cue::AnswerNo),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cue::SpookyAmbiance => "SpookyAmbiance",
            Cue::Listening => "Listening",
            Cue::AnswerYes => "AnswerYes",
            Cue::AnswerNo => "AnswerNo",
            Cue::Restore => "Restore",
        }
    }
}

impl fmt::Display for Cue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Map a cue to the light state it commands. `Restore` hands back the
/// baseline captured when the session started.
pub fn cue_to_state(cue: Cue, session_baseline: LightState) -> LightState {
    match cue {
        Cue::SpookyAmbiance => LightState::BLUE,
        Cue::Listening => LightState::WHITE,
        Cue::AnswerYes => LightState::GREEN,
        Cue::AnswerNo => LightState::RED,
        Cue::Restore => session_baseline,
    }
}

/// Opaque vendor account handle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountHandle(pub String);

impl fmt::Display for AccountHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Active,
    Revoked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub code: PairingCode,
    pub vendor_device_id: String,
    pub vendor_account: AccountHandle,
    pub alias: String,
    pub desired: LightState,
    pub desired_revision: u64,
    /// `None` until the vendor cloud has reported a state.
    pub reported: Option<LightState>,
    pub reported_revision: u64,
    pub created_at: DateTime<Utc>,
    pub last_reconciled_at: Option<DateTime<Utc>>,
    pub status: RecordStatus,
}

impl DeviceRecord {
    pub fn is_dirty(&self) -> bool {
        self.desired_revision > self.reported_revision
    }

    pub fn in_sync(&self) -> bool {
        self.desired_revision == self.reported_revision
    }

    pub fn is_active(&self) -> bool {
        self.status == RecordStatus::Active
    }
}
