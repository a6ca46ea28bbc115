//! Deterministic light-signal engine for a dual-ring, 40-pixel robot eye.
//!
//! This crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation: ring geometry, frames and the color palette, the
//! animation timeline compiler, the luceme catalog with gaze rendering and
//! decoding, the controller-to-driver wire protocol, driver state logic, the
//! controller scheduler and the study analysis metrics.
//!
//! IO, concurrency, the HTTP service and the command line live in the
//! companion `hreye` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
#[macro_use]
extern crate std;

pub mod angle;
pub mod animation;
pub mod controller;
pub mod driver;
pub mod frames;
pub mod geometry;
pub mod lucemes;
pub mod metrics;
pub mod protocol;

pub use animation::{LucemeDef, Primitive, PrimitiveKind, RingScope, Track};
pub use controller::{Controller, ControllerMode};
pub use driver::{ApplyOutcome, EyeState};
pub use frames::{ColorName, ColorRGBA, LedFrame, Palette};
pub use geometry::{LedAddress, Ring, RingGeometry};
pub use lucemes::{ActiveLucemeId, Catalog, GazeAngle, OcularLucemeId};
pub use protocol::{DriverMessage, EyeId};
