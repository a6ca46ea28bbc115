//! Physical layout of one eye: two concentric rings of addressable pixels.
//!
//! Orientation convention: index 0 of each ring sits at 0 degrees (rightward,
//! 3 o'clock) and indices increase counterclockwise, matching the Cartesian
//! angle convention used for gaze cues. A per-eye calibration offset models
//! a rotated mounting.

use alloc::vec::Vec;
use core::fmt;

use crate::angle::{circular_distance, normalize_deg, signed_delta};

pub const OUTER_COUNT: usize = 24;
pub const INNER_COUNT: usize = 16;
pub const PIXEL_COUNT: usize = OUTER_COUNT + INNER_COUNT;

/// Slack used when testing arc membership so that LEDs sitting exactly on an
/// arc boundary are not lost to rounding.
const ARC_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("index {index} is out of range for the {ring} ring")]
    AddressOutOfRange { ring: Ring, index: usize },
    #[error("angle {0} is not finite")]
    NonFinite(f64),
    #[error("arc half-width {0} is outside [0, 180]")]
    HalfWidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Ring {
    Outer,
    Inner,
}

impl Ring {
    pub const ALL: [Ring; 2] = [Ring::Outer, Ring::Inner];

    pub const fn count(self) -> usize {
        match self {
            Ring::Outer => OUTER_COUNT,
            Ring::Inner => INNER_COUNT,
        }
    }

    /// Angular distance between neighbouring LEDs on this ring.
    pub fn spacing_deg(self) -> f64 {
        360.0 / self.count() as f64
    }

    /// Position of this ring's first pixel inside a [`LedFrame`](crate::LedFrame).
    pub const fn frame_base(self) -> usize {
        match self {
            Ring::Outer => 0,
            Ring::Inner => OUTER_COUNT,
        }
    }

    pub fn addresses(self) -> impl Iterator<Item = LedAddress> {
        (0..self.count()).map(move |index| LedAddress {
            ring: self,
            index: index as u8,
        })
    }
}

impl fmt::Display for Ring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ring::Outer => "Outer",
            Ring::Inner => "Inner",
        })
    }
}

/// A valid pixel position on one of the two rings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LedAddress {
    ring: Ring,
    index: u8,
}

impl LedAddress {
    pub fn new(ring: Ring, index: usize) -> Result<Self, GeometryError> {
        if index >= ring.count() {
            return Err(GeometryError::AddressOutOfRange { ring, index });
        }
        Ok(LedAddress {
            ring,
            index: index as u8,
        })
    }

    pub fn ring(self) -> Ring {
        self.ring
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    /// Position inside the 40-pixel frame (outer 0..24, inner 24..40).
    pub fn frame_index(self) -> usize {
        self.ring.frame_base() + self.index()
    }

    /// Inverse of [`frame_index`](Self::frame_index).
    pub fn from_frame_index(i: usize) -> Option<Self> {
        if i < OUTER_COUNT {
            Some(LedAddress {
                ring: Ring::Outer,
                index: i as u8,
            })
        } else if i < PIXEL_COUNT {
            Some(LedAddress {
                ring: Ring::Inner,
                index: (i - OUTER_COUNT) as u8,
            })
        } else {
            None
        }
    }

    /// The address `steps` positions counterclockwise (negative: clockwise).
    pub fn step(self, steps: i64) -> Self {
        let n = self.ring.count() as i64;
        let index = (self.index as i64 + steps).rem_euclid(n);
        LedAddress {
            ring: self.ring,
            index: index as u8,
        }
    }
}

impl fmt::Display for LedAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.ring {
            Ring::Outer => 'O',
            Ring::Inner => 'I',
        };
        write!(f, "{}{}", tag, self.index)
    }
}

/// Ring layout of one eye plus its mounting calibration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RingGeometry {
    /// Mounting rotation in degrees, counterclockwise positive.
    pub calibration_offset_deg: f64,
}

impl RingGeometry {
    pub const fn new() -> Self {
        RingGeometry {
            calibration_offset_deg: 0.0,
        }
    }

    pub fn with_offset(offset_deg: f64) -> Self {
        RingGeometry {
            calibration_offset_deg: offset_deg,
        }
    }

    pub fn outer_count(&self) -> usize {
        OUTER_COUNT
    }

    pub fn inner_count(&self) -> usize {
        INNER_COUNT
    }

    pub fn led_angle(&self, addr: LedAddress) -> f64 {
        normalize_deg(addr.index() as f64 * addr.ring.spacing_deg() + self.calibration_offset_deg)
    }

    pub fn nearest_led(&self, ring: Ring, angle_deg: f64) -> Result<LedAddress, GeometryError> {
        if !angle_deg.is_finite() {
            return Err(GeometryError::NonFinite(angle_deg));
        }
        let target = normalize_deg(angle_deg);
        let mut best = LedAddress { ring, index: 0 };
        let mut best_dist = f64::INFINITY;
        for addr in ring.addresses() {
            let d = circular_distance(self.led_angle(addr), target);
            if d < best_dist {
                best = addr;
                best_dist = d;
            }
        }
        Ok(best)
    }

    /// LEDs within `half_width_deg` of `center_deg`, most clockwise first.
    pub fn arc(
        &self,
        ring: Ring,
        center_deg: f64,
        half_width_deg: f64,
    ) -> Result<Vec<LedAddress>, GeometryError> {
        if !center_deg.is_finite() {
            return Err(GeometryError::NonFinite(center_deg));
        }
        if !(0.0..=180.0).contains(&half_width_deg) {
            return Err(GeometryError::HalfWidth(half_width_deg));
        }
        let mut members: Vec<(f64, LedAddress)> = ring
            .addresses()
            .filter_map(|addr| {
                let offset = signed_delta(center_deg, self.led_angle(addr));
                (libm::fabs(offset) <= half_width_deg + ARC_EPSILON).then_some((offset, addr))
            })
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(members.into_iter().map(|(_, addr)| addr).collect())
    }
}

/// Angle of `addr` under the default (uncalibrated) geometry.
pub fn led_angle(addr: LedAddress) -> f64 {
    RingGeometry::new().led_angle(addr)
}

pub fn nearest_led(ring: Ring, angle_deg: f64) -> Result<LedAddress, GeometryError> {
    RingGeometry::new().nearest_led(ring, angle_deg)
}

pub fn arc(ring: Ring, center_deg: f64, half_width_deg: f64) -> Result<Vec<LedAddress>, GeometryError> {
    RingGeometry::new().arc(ring, center_deg, half_width_deg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(ring: Ring, i: usize) -> LedAddress {
        LedAddress::new(ring, i).unwrap()
    }

    fn indices(v: &[LedAddress]) -> Vec<usize> {
        v.iter().map(|a| a.index()).collect()
    }

    #[test]
    fn angles_follow_convention() {
        assert_eq!(led_angle(addr(Ring::Outer, 0)), 0.0);
        assert_eq!(led_angle(addr(Ring::Outer, 6)), 90.0);
        assert_eq!(led_angle(addr(Ring::Inner, 4)), 90.0);
        assert_eq!(Ring::Outer.spacing_deg(), 15.0);
        assert_eq!(Ring::Inner.spacing_deg(), 22.5);
    }

    #[test]
    fn out_of_range_address_rejected() {
        assert!(matches!(
            LedAddress::new(Ring::Outer, 24),
            Err(GeometryError::AddressOutOfRange { .. })
        ));
        assert!(LedAddress::new(Ring::Inner, 16).is_err());
        assert!(LedAddress::new(Ring::Inner, 15).is_ok());
    }

    #[test]
    fn nearest_examples() {
        assert_eq!(nearest_led(Ring::Inner, 91.0).unwrap(), addr(Ring::Inner, 4));
        assert_eq!(nearest_led(Ring::Outer, 7.5).unwrap(), addr(Ring::Outer, 0));
        assert_eq!(nearest_led(Ring::Outer, 359.0).unwrap(), addr(Ring::Outer, 0));
        assert!(matches!(
            nearest_led(Ring::Outer, f64::NAN),
            Err(GeometryError::NonFinite(_))
        ));
        assert!(nearest_led(Ring::Outer, f64::INFINITY).is_err());
    }

    #[test]
    fn arc_examples() {
        assert_eq!(indices(&arc(Ring::Inner, 90.0, 22.5).unwrap()), [3, 4, 5]);
        assert_eq!(indices(&arc(Ring::Outer, 0.0, 0.0).unwrap()), [0]);
        let full = arc(Ring::Outer, 180.0, 180.0).unwrap();
        assert_eq!(full.len(), 24);
        // most clockwise member (offset -180) first, then counterclockwise
        assert_eq!(full[0].index(), 0);
        assert_eq!(full[1].index(), 1);
        assert!(arc(Ring::Outer, 0.0, 181.0).is_err());
        assert!(arc(Ring::Outer, 0.0, -1.0).is_err());
    }

    #[test]
    fn arc_ordering_across_zero() {
        assert_eq!(indices(&arc(Ring::Outer, 0.0, 30.0).unwrap()), [22, 23, 0, 1, 2]);
    }

    #[test]
    fn calibration_rotates_angles() {
        let g = RingGeometry::with_offset(45.0);
        assert_eq!(g.led_angle(addr(Ring::Outer, 0)), 45.0);
        assert_eq!(g.nearest_led(Ring::Outer, 45.0).unwrap(), addr(Ring::Outer, 0));
    }

    #[test]
    fn frame_index_round_trip() {
        for i in 0..PIXEL_COUNT {
            assert_eq!(LedAddress::from_frame_index(i).unwrap().frame_index(), i);
        }
        assert!(LedAddress::from_frame_index(40).is_none());
        assert_eq!(addr(Ring::Inner, 0).frame_index(), 24);
    }

    #[test]
    fn step_wraps() {
        assert_eq!(addr(Ring::Outer, 23).step(1), addr(Ring::Outer, 0));
        assert_eq!(addr(Ring::Inner, 0).step(-1), addr(Ring::Inner, 15));
    }
}
