//! Smart-light bridge for co-located play.
//!
//! A pairing registry hands out 5-digit codes for vendor bulbs, a polling
//! reconciler pushes each code's desired light state to the vendor cloud,
//! and a small state machine drives the light through a summoning ritual.

pub mod api;
pub mod game;
pub mod model;
pub mod reconciler;
pub mod registry;
pub mod vendor;
