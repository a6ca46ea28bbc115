//! Degree-based circular arithmetic shared by geometry, gaze decoding and
//! the metrics pipeline.

use core::f64::consts::PI;

/// Wraps any finite angle into `[0, 360)`.
pub fn normalize_deg(deg: f64) -> f64 {
    let r = libm::fmod(deg, 360.0);
    let r = if r < 0.0 { r + 360.0 } else { r };
    // fmod of a tiny negative number plus 360 can round up to exactly 360.
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// Signed shortest rotation from `from` to `to`, in `[-180, 180)`.
pub fn signed_delta(from: f64, to: f64) -> f64 {
    let d = normalize_deg(to - from);
    if d >= 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// `min(|a - b|, 360 - |a - b|)` after normalization; always in `[0, 180]`.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = libm::fabs(normalize_deg(a) - normalize_deg(b));
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

pub fn to_radians(deg: f64) -> f64 {
    deg * PI / 180.0
}

pub fn to_degrees(rad: f64) -> f64 {
    rad * 180.0 / PI
}

/// Weighted circular mean (direction of the resultant vector) in `[0, 360)`.
///
/// Returns `None` when the input is empty, all weights are zero, or the
/// resultant vanishes (e.g. two opposite angles).
pub fn weighted_circular_mean<I>(samples: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut x = 0.0;
    let mut y = 0.0;
    let mut total = 0.0;
    for (deg, w) in samples {
        let rad = to_radians(deg);
        x += w * libm::cos(rad);
        y += w * libm::sin(rad);
        total += w;
    }
    if total <= 0.0 {
        return None;
    }
    let resultant = libm::sqrt(x * x + y * y) / total;
    if resultant < 1e-12 {
        return None;
    }
    Some(normalize_deg(to_degrees(libm::atan2(y, x))))
}

/// Unweighted circular mean; see [`weighted_circular_mean`].
pub fn circular_mean(angles: &[f64]) -> Option<f64> {
    weighted_circular_mean(angles.iter().map(|&a| (a, 1.0)))
}
