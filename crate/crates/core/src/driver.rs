//! Driver-side state for one eye: the staleness rule and calibration rotation.
//!
//! The concurrent device simulator in the `hreye` crate wraps these types.

use crate::frames::{blank_frame, LedFrame};
use crate::geometry::{Ring, RingGeometry};
use crate::protocol::{DriverMessage, EyeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DriverError {
    #[error("message for the {got} eye delivered to the {expected} eye")]
    WrongEye { expected: EyeId, got: EyeId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    Accepted,
    /// Sequence not newer than the last accepted one; state unchanged.
    Stale,
}

impl ApplyOutcome {
    pub fn accepted(self) -> bool {
        self == ApplyOutcome::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EyeState {
    pub eye: EyeId,
    pub frame: LedFrame,
    pub last_sequence: Option<u32>,
    pub calibration_offset_deg: f64,
    pub updated_at_ms: u64,
}

/// Consistent copy of one eye, with calibration applied to the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snapshot {
    pub eye: EyeId,
    /// Each pixel moved to the LED nearest its rotated position.
    pub frame: LedFrame,
    pub sequence: Option<u32>,
    pub calibration_offset_deg: f64,
    pub updated_at_ms: u64,
}

impl EyeState {
    pub fn new(eye: EyeId) -> Self {
        EyeState {
            eye,
            frame: blank_frame(),
            last_sequence: None,
            calibration_offset_deg: 0.0,
            updated_at_ms: 0,
        }
    }

    pub fn apply(&mut self, msg: &DriverMessage, now_ms: u64) -> Result<ApplyOutcome, DriverError> {
        if msg.eye != self.eye {
            return Err(DriverError::WrongEye {
                expected: self.eye,
                got: msg.eye,
            });
        }
        if self.last_sequence.is_some_and(|last| msg.sequence <= last) {
            return Ok(ApplyOutcome::Stale);
        }
        self.frame = msg.frame;
        self.last_sequence = Some(msg.sequence);
        self.updated_at_ms = now_ms;
        Ok(ApplyOutcome::Accepted)
    }

    pub fn geometry(&self) -> RingGeometry {
        RingGeometry::with_offset(self.calibration_offset_deg)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            eye: self.eye,
            frame: rotate_frame(&self.frame, self.calibration_offset_deg),
            sequence: self.last_sequence,
            calibration_offset_deg: self.calibration_offset_deg,
            updated_at_ms: self.updated_at_ms,
        }
    }
}

/// Re-indexes `frame` as seen on an eye mounted `offset_deg` counterclockwise.
///
/// Every pixel on a ring moves by the same whole number of LEDs (the index of
/// the LED nearest `offset_deg`), so this is a per-ring rotation.
pub fn rotate_frame(frame: &LedFrame, offset_deg: f64) -> LedFrame {
    let mut out = *frame;
    let identity = RingGeometry::new();
    for ring in Ring::ALL {
        let Ok(shift) = identity.nearest_led(ring, offset_deg) else {
            continue;
        };
        let n = ring.count();
        let src = frame.ring(ring);
        let dst = out.ring_mut(ring);
        for (i, px) in src.iter().enumerate() {
            dst[(i + shift.index()) % n] = *px;
        }
    }
    out
}
