//! Animation primitives and the timeline compiler.
//!
//! A [`LucemeDef`] is a list of timed [`Track`]s. Sampling renders every
//! track active at the requested time into its own frame and composites the
//! results in track order (painter's rule). Time is integer milliseconds so
//! that sampling is bit-reproducible.
//!
//! Definitions have a line-oriented text form:
//!
//! ```text
//! # comment
//! luceme FollowMe duration=2000 loop=true
//! track 0..2000 Chase ring=Outer color=directional-yellow segments=4,4 speed=180 dir=ccw start=90
//! track 0..2000 Fill ring=Inner color=auv-purple
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt::{self, Write as _};
use core::str::FromStr;

use crate::angle::{normalize_deg, signed_delta, weighted_circular_mean};
use crate::frames::{blank_frame, ColorName, ColorRGBA, LedFrame, Palette};
use crate::geometry::{self, LedAddress, Ring};

pub const DEFAULT_FPS: u32 = 30;
pub const MAX_FPS: u32 = 120;

const WIPE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnimationError {
    #[error("invalid luceme definition: {0}")]
    Invalid(String),
    #[error("frame rate {0} is outside 1..=120")]
    Fps(u32),
    #[error("repeat count must be at least 1")]
    Repeats,
}

fn invalid(msg: impl Into<String>) -> AnimationError {
    AnimationError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RingScope {
    Outer,
    Inner,
    Both,
}

impl RingScope {
    pub fn rings(self) -> &'static [Ring] {
        match self {
            RingScope::Outer => &[Ring::Outer],
            RingScope::Inner => &[Ring::Inner],
            RingScope::Both => &Ring::ALL,
        }
    }

    pub fn contains(self, ring: Ring) -> bool {
        self.rings().contains(&ring)
    }

    fn as_str(self) -> &'static str {
        match self {
            RingScope::Outer => "Outer",
            RingScope::Inner => "Inner",
            RingScope::Both => "Both",
        }
    }
}

impl FromStr for RingScope {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "Outer" | "outer" => Ok(RingScope::Outer),
            "Inner" | "inner" => Ok(RingScope::Inner),
            "Both" | "both" => Ok(RingScope::Both),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Increasing angle / index.
    Ccw,
    Cw,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ccw => 1.0,
            Direction::Cw => -1.0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Ccw => "ccw",
            Direction::Cw => "cw",
        }
    }
}

/// Hard on/off blinking: lit for `on_ms`, dark for `off_ms`, repeating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Blink {
    pub on_ms: u32,
    pub off_ms: u32,
}

impl Blink {
    fn is_on(self, t_ms: u64) -> bool {
        t_ms % (self.on_ms as u64 + self.off_ms as u64) < self.on_ms as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PrimitiveKind {
    /// Every LED in scope.
    Fill,
    /// Whole-scope hard blink.
    Flash(Blink),
    /// Whole-scope raised-cosine alpha: `min` at t = 0, `max` at half period.
    Pulse {
        period_ms: u32,
        min_alpha: u8,
        max_alpha: u8,
    },
    /// Segments of `segments[i]` LEDs evenly spaced around the ring, heads
    /// rotating at `speed_deg_s` from `start_deg`.
    Chase {
        segments: Vec<u8>,
        speed_deg_s: f64,
        direction: Direction,
        start_deg: f64,
    },
    /// Arc growing from `start_deg` toward `end_deg` (sign picks the
    /// direction) over `duration_ms`, then held.
    Wipe {
        start_deg: f64,
        end_deg: f64,
        duration_ms: u32,
    },
    /// Static arc. With `from_half_width_deg`, the half-width interpolates
    /// from that value over `sweep_ms`. With `centroid`, the arc is centred on
    /// the LED nearest `center_deg` and one end LED is dimmed so that the
    /// alpha-weighted circular mean lands exactly on `center_deg`.
    ArcHold {
        center_deg: f64,
        half_width_deg: f64,
        from_half_width_deg: Option<f64>,
        sweep_ms: u32,
        centroid: bool,
    },
    /// Explicit LED set, optionally blinking.
    Shape {
        leds: Vec<LedAddress>,
        blink: Option<Blink>,
    },
}

impl PrimitiveKind {
    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Fill => "Fill",
            PrimitiveKind::Flash(_) => "Flash",
            PrimitiveKind::Pulse { .. } => "Pulse",
            PrimitiveKind::Chase { .. } => "Chase",
            PrimitiveKind::Wipe { .. } => "Wipe",
            PrimitiveKind::ArcHold { .. } => "ArcHold",
            PrimitiveKind::Shape { .. } => "Shape",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub scope: RingScope,
    pub color: ColorName,
    /// Replaces the palette alpha when set.
    pub alpha: Option<u8>,
}

impl Primitive {
    pub fn new(kind: PrimitiveKind, scope: RingScope, color: ColorName) -> Self {
        Primitive {
            kind,
            scope,
            color,
            alpha: None,
        }
    }

    pub fn with_alpha(mut self, alpha: u8) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn validate(&self) -> Result<(), AnimationError> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(alloc::format!("{what} must be finite")))
            }
        };
        let blink_ok = |b: &Blink| {
            if b.on_ms == 0 || b.off_ms == 0 {
                Err(invalid("blink on/off durations must be positive"))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            PrimitiveKind::Fill => Ok(()),
            PrimitiveKind::Flash(b) => blink_ok(b),
            PrimitiveKind::Pulse {
                period_ms,
                min_alpha,
                max_alpha,
            } => {
                if *period_ms == 0 {
                    Err(invalid("pulse period must be positive"))
                } else if min_alpha > max_alpha {
                    Err(invalid("pulse min alpha exceeds max alpha"))
                } else {
                    Ok(())
                }
            }
            PrimitiveKind::Chase {
                segments,
                speed_deg_s,
                start_deg,
                ..
            } => {
                finite(*speed_deg_s, "chase speed")?;
                finite(*start_deg, "chase start")?;
                if segments.is_empty() {
                    return Err(invalid("chase needs at least one segment"));
                }
                let min_ring = self
                    .scope
                    .rings()
                    .iter()
                    .map(|r| r.count())
                    .min()
                    .unwrap_or(0);
                if segments.iter().any(|&s| s == 0 || s as usize > min_ring) {
                    return Err(invalid("chase segment length out of range"));
                }
                Ok(())
            }
            PrimitiveKind::Wipe {
                start_deg,
                end_deg,
                duration_ms,
            } => {
                finite(*start_deg, "wipe start")?;
                finite(*end_deg, "wipe end")?;
                if *duration_ms == 0 {
                    Err(invalid("wipe duration must be positive"))
                } else if libm::fabs(end_deg - start_deg) > 360.0 {
                    Err(invalid("wipe spans more than a full turn"))
                } else {
                    Ok(())
                }
            }
            PrimitiveKind::ArcHold {
                center_deg,
                half_width_deg,
                from_half_width_deg,
                sweep_ms,
                ..
            } => {
                finite(*center_deg, "arc center")?;
                let hw_ok = |v: f64| v.is_finite() && (0.0..=180.0).contains(&v);
                if !hw_ok(*half_width_deg) {
                    return Err(invalid("arc half-width outside [0, 180]"));
                }
                match from_half_width_deg {
                    Some(from) if !hw_ok(*from) => {
                        Err(invalid("arc starting half-width outside [0, 180]"))
                    }
                    Some(_) if *sweep_ms == 0 => {
                        Err(invalid("arc sweep needs a positive duration"))
                    }
                    _ => Ok(()),
                }
            }
            PrimitiveKind::Shape { blink, .. } => blink.as_ref().map_or(Ok(()), blink_ok),
        }
    }

    /// Renders this primitive alone at `t_ms` after its track started.
    pub fn render(&self, palette: &Palette, t_ms: u64) -> LedFrame {
        let base = palette.get(self.color);
        let color = match self.alpha {
            Some(a) => base.with_alpha(a),
            None => base,
        };
        let mut frame = blank_frame();
        let fill = |frame: &mut LedFrame, c: ColorRGBA| {
            for ring in self.scope.rings() {
                frame.ring_mut(*ring).fill(c);
            }
        };
        match &self.kind {
            PrimitiveKind::Fill => fill(&mut frame, color),
            PrimitiveKind::Flash(b) => {
                if b.is_on(t_ms) {
                    fill(&mut frame, color);
                }
            }
            PrimitiveKind::Pulse {
                period_ms,
                min_alpha,
                max_alpha,
            } => {
                let a = pulse_alpha(*period_ms, *min_alpha, *max_alpha, t_ms);
                fill(&mut frame, color.with_alpha(a));
            }
            PrimitiveKind::Chase {
                segments,
                speed_deg_s,
                direction,
                start_deg,
            } => {
                let travelled = direction.sign() * speed_deg_s * t_ms as f64 / 1000.0;
                let spacing = 360.0 / segments.len() as f64;
                for ring in self.scope.rings() {
                    for (i, &len) in segments.iter().enumerate() {
                        let head_angle = start_deg + i as f64 * spacing + travelled;
                        let Ok(head) = geometry::nearest_led(*ring, head_angle) else {
                            continue;
                        };
                        for k in 0..len as i64 {
                            let trail = match direction {
                                Direction::Ccw => -k,
                                Direction::Cw => k,
                            };
                            frame.set(head.step(trail), color);
                        }
                    }
                }
            }
            PrimitiveKind::Wipe {
                start_deg,
                end_deg,
                duration_ms,
            } => {
                let progress = (t_ms as f64 / *duration_ms as f64).min(1.0);
                let span = libm::fabs(end_deg - start_deg) * progress;
                let ccw = end_deg >= start_deg;
                for ring in self.scope.rings() {
                    for addr in ring.addresses() {
                        let theta = geometry::led_angle(addr);
                        let along = if ccw {
                            normalize_deg(theta - start_deg)
                        } else {
                            normalize_deg(start_deg - theta)
                        };
                        if along <= span + WIPE_EPSILON {
                            frame.set(addr, color);
                        }
                    }
                }
            }
            PrimitiveKind::ArcHold {
                center_deg,
                half_width_deg,
                from_half_width_deg,
                sweep_ms,
                centroid,
            } => {
                let sweeping = from_half_width_deg.is_some() && t_ms < *sweep_ms as u64;
                let half_width = match from_half_width_deg {
                    Some(from) if sweeping => {
                        from + (half_width_deg - from) * (t_ms as f64 / *sweep_ms as f64)
                    }
                    _ => *half_width_deg,
                };
                for ring in self.scope.rings() {
                    let center = if *centroid {
                        match geometry::nearest_led(*ring, *center_deg) {
                            Ok(a) => geometry::led_angle(a),
                            Err(_) => continue,
                        }
                    } else {
                        *center_deg
                    };
                    let Ok(members) = geometry::arc(*ring, center, half_width) else {
                        continue;
                    };
                    for addr in &members {
                        frame.set(*addr, color);
                    }
                    if *centroid && !sweeping {
                        if let Some((addr, a)) = centroid_trim(&members, *center_deg, color.a) {
                            frame.set(addr, color.with_alpha(a));
                        }
                    }
                }
            }
            PrimitiveKind::Shape { leds, blink } => {
                if blink.is_none_or(|b| b.is_on(t_ms)) {
                    for addr in leds.iter().filter(|a| self.scope.contains(a.ring())) {
                        frame.set(*addr, color);
                    }
                }
            }
        }
        frame
    }
}

/// Raised-cosine alpha used by [`PrimitiveKind::Pulse`].
pub fn pulse_alpha(period_ms: u32, min_alpha: u8, max_alpha: u8, t_ms: u64) -> u8 {
    let phase = (t_ms % period_ms as u64) as f64 / period_ms as f64;
    let lift = (1.0 - libm::cos(2.0 * PI * phase)) / 2.0;
    let a = min_alpha as f64 + (max_alpha as f64 - min_alpha as f64) * lift;
    libm::round(a) as u8
}

/// For an arc centred on an LED, find the end LED and the alpha that moves
/// the alpha-weighted circular mean of the arc onto `target_deg`.
fn centroid_trim(members: &[LedAddress], target_deg: f64, full_alpha: u8) -> Option<(LedAddress, u8)> {
    if members.len() < 2 || full_alpha == 0 {
        return None;
    }
    let mid = geometry::led_angle(members[members.len() / 2]);
    let offset = signed_delta(mid, target_deg);
    if libm::fabs(offset) < 1e-9 {
        return None;
    }
    // Dimming the end opposite the target pulls the mean toward the target.
    let trimmed = if offset > 0.0 { 0 } else { members.len() - 1 };
    let mean_with = |w: f64| {
        let samples = members.iter().enumerate().map(|(i, a)| {
            (geometry::led_angle(*a), if i == trimmed { w } else { 1.0 })
        });
        weighted_circular_mean(samples).map(|m| signed_delta(mid, m))
    };
    // The shift grows as the end weight shrinks; bisect on the weight.
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let reach = mean_with(0.0)?;
    if libm::fabs(reach) <= libm::fabs(offset) {
        hi = 0.0;
    } else {
        for _ in 0..60 {
            let w = (lo + hi) / 2.0;
            let shift = mean_with(w)?;
            if libm::fabs(shift) > libm::fabs(offset) {
                lo = w;
            } else {
                hi = w;
            }
        }
    }
    let weight = (lo + hi) / 2.0;
    Some((members[trimmed], libm::round(weight * full_alpha as f64) as u8))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub primitive: Primitive,
    pub start_ms: u32,
    pub end_ms: u32,
}

impl Track {
    pub fn new(start_ms: u32, end_ms: u32, primitive: Primitive) -> Self {
        Track {
            primitive,
            start_ms,
            end_ms,
        }
    }

    pub fn is_active(&self, t_ms: u64) -> bool {
        (self.start_ms as u64..self.end_ms as u64).contains(&t_ms)
    }
}

/// A named, timed light program.
#[derive(Debug, Clone, PartialEq)]
pub struct LucemeDef {
    name: String,
    duration_ms: u32,
    looping: bool,
    tracks: Vec<Track>,
    palette: Palette,
}

impl LucemeDef {
    pub fn new(
        name: impl Into<String>,
        duration_ms: u32,
        looping: bool,
        tracks: Vec<Track>,
        palette: Palette,
    ) -> Result<Self, AnimationError> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(invalid("name must be a non-empty word"));
        }
        if duration_ms == 0 {
            return Err(invalid("duration must be positive"));
        }
        for (i, track) in tracks.iter().enumerate() {
            if track.start_ms >= track.end_ms || track.end_ms > duration_ms {
                return Err(invalid(alloc::format!(
                    "track {i} ({}..{}) does not fit in 0..{duration_ms}",
                    track.start_ms,
                    track.end_ms
                )));
            }
            track.primitive.validate()?;
        }
        Ok(LucemeDef {
            name,
            duration_ms,
            looping,
            tracks,
            palette,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn duration_ms(&self) -> u32 {
        self.duration_ms
    }

    pub fn looping(&self) -> bool {
        self.looping
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn palette(&self) -> &Palette {
        &self.palette
    }

    /// Frame at `t_ms`. Looping definitions wrap; others hold their final frame.
    pub fn sample(&self, t_ms: u64) -> LedFrame {
        let duration = self.duration_ms as u64;
        let t = if self.looping {
            t_ms % duration
        } else {
            t_ms.min(duration - 1)
        };
        self.tracks
            .iter()
            .filter(|track| track.is_active(t))
            .fold(blank_frame(), |acc, track| {
                acc.composite(&track.primitive.render(&self.palette, t - track.start_ms as u64))
            })
    }

    /// Frames at `t = k * 1000 / fps` for `k` in `0..repeats * duration * fps / 1000`.
    pub fn stream(&self, fps: u32, repeats: u32) -> Result<Vec<LedFrame>, AnimationError> {
        let count = frame_count(self.duration_ms, fps, repeats)?;
        Ok((0..count)
            .map(|k| self.sample(frame_time_ms(k, fps)))
            .collect())
    }

    /// Parses the text form, resolving color names against `palette`.
    pub fn parse(text: &str, palette: &Palette) -> Result<Self, ParseError> {
        parse_def(text, palette)
    }

    /// Canonical text form; [`parse`](Self::parse) reads it back to an equal value
    /// when given the same palette.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "luceme {} duration={} loop={}",
            self.name, self.duration_ms, self.looping
        );
        for track in &self.tracks {
            let p = &track.primitive;
            let _ = write!(
                out,
                "track {}..{} {} ring={} color={}",
                track.start_ms,
                track.end_ms,
                p.kind.name(),
                p.scope.as_str(),
                p.color
            );
            match &p.kind {
                PrimitiveKind::Fill => {}
                PrimitiveKind::Flash(b) => {
                    let _ = write!(out, " on={} off={}", b.on_ms, b.off_ms);
                }
                PrimitiveKind::Pulse {
                    period_ms,
                    min_alpha,
                    max_alpha,
                } => {
                    let _ = write!(out, " period={period_ms} min={min_alpha} max={max_alpha}");
                }
                PrimitiveKind::Chase {
                    segments,
                    speed_deg_s,
                    direction,
                    start_deg,
                } => {
                    out.push_str(" segments=");
                    join(&mut out, segments.iter());
                    let _ = write!(
                        out,
                        " speed={speed_deg_s} dir={} start={start_deg}",
                        direction.as_str()
                    );
                }
                PrimitiveKind::Wipe {
                    start_deg,
                    end_deg,
                    duration_ms,
                } => {
                    let _ = write!(out, " from={start_deg} to={end_deg} over={duration_ms}");
                }
                PrimitiveKind::ArcHold {
                    center_deg,
                    half_width_deg,
                    from_half_width_deg,
                    sweep_ms,
                    centroid,
                } => {
                    let _ = write!(out, " center={center_deg} half={half_width_deg}");
                    if let Some(from) = from_half_width_deg {
                        let _ = write!(out, " from_half={from}");
                    }
                    if *sweep_ms > 0 {
                        let _ = write!(out, " sweep={sweep_ms}");
                    }
                    if *centroid {
                        out.push_str(" centroid=true");
                    }
                }
                PrimitiveKind::Shape { leds, blink } => {
                    out.push_str(" leds=");
                    if leds.is_empty() {
                        out.push_str("none");
                    }
                    join(&mut out, leds.iter());
                    if let Some(b) = blink {
                        let _ = write!(out, " on={} off={}", b.on_ms, b.off_ms);
                    }
                }
            }
            if let Some(a) = p.alpha {
                let _ = write!(out, " alpha={a}");
            }
            out.push('\n');
        }
        out
    }
}

fn join<T: fmt::Display>(out: &mut String, items: impl Iterator<Item = T>) {
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{item}");
    }
}

/// Number of frames [`LucemeDef::stream`] produces.
pub fn frame_count(duration_ms: u32, fps: u32, repeats: u32) -> Result<u64, AnimationError> {
    if !(1..=MAX_FPS).contains(&fps) {
        return Err(AnimationError::Fps(fps));
    }
    if repeats == 0 {
        return Err(AnimationError::Repeats);
    }
    Ok(repeats as u64 * duration_ms as u64 * fps as u64 / 1000)
}

/// Sample time of frame `k`, floored to whole milliseconds.
pub fn frame_time_ms(k: u64, fps: u32) -> u64 {
    k * 1000 / fps as u64
}

pub fn sample(def: &LucemeDef, t_ms: u64) -> LedFrame {
    def.sample(t_ms)
}

pub fn stream(def: &LucemeDef, fps: u32, repeats: u32) -> Result<Vec<LedFrame>, AnimationError> {
    def.stream(fps, repeats)
}

/// Parses a definition using the default palette.
pub fn parse_luceme_file(text: &str) -> Result<LucemeDef, ParseError> {
    LucemeDef::parse(text, &Palette::default())
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {cause}")]
pub struct ParseError {
    /// 1-based; 0 when the problem is not tied to a line (e.g. a missing header).
    pub line: usize,
    pub cause: String,
}

fn parse_def(text: &str, palette: &Palette) -> Result<LucemeDef, ParseError> {
    let mut header: Option<(usize, String, u32, bool)> = None;
    let mut tracks = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |cause: String| ParseError { line, cause };
        let mut words = content.split_whitespace();
        match words.next() {
            Some("luceme") => {
                if header.is_some() {
                    return Err(err("second `luceme` header".into()));
                }
                let name = words
                    .next()
                    .ok_or_else(|| err("missing luceme name".into()))?;
                let mut fields = Fields::parse(words).map_err(err)?;
                let duration = fields.required::<u32>("duration").map_err(err)?;
                let looping = fields.optional::<bool>("loop").map_err(err)?.unwrap_or(false);
                fields.finish().map_err(err)?;
                header = Some((line, name.to_string(), duration, looping));
            }
            Some("track") => {
                if header.is_none() {
                    return Err(err("`track` before `luceme` header".into()));
                }
                let track = parse_track(words).map_err(err)?;
                track.primitive.validate().map_err(|e| err(e.to_string()))?;
                let duration = header.as_ref().map_or(0, |h| h.2);
                if track.start_ms >= track.end_ms || track.end_ms > duration {
                    return Err(err(alloc::format!(
                        "track {}..{} does not fit in 0..{duration}",
                        track.start_ms, track.end_ms
                    )));
                }
                tracks.push(track);
            }
            Some(other) => return Err(err(alloc::format!("unknown directive `{other}`"))),
            None => {}
        }
    }
    let (line, name, duration, looping) = header.ok_or(ParseError {
        line: 0,
        cause: "missing `luceme` header".into(),
    })?;
    LucemeDef::new(name, duration, looping, tracks, *palette).map_err(|e| ParseError {
        line,
        cause: e.to_string(),
    })
}

fn parse_track<'a>(mut words: impl Iterator<Item = &'a str>) -> Result<Track, String> {
    let range = words.next().ok_or("missing time range")?;
    let (start, end) = range
        .split_once("..")
        .ok_or_else(|| alloc::format!("bad time range `{range}`"))?;
    let start_ms: u32 = start
        .parse()
        .map_err(|_| alloc::format!("bad start time `{start}`"))?;
    let end_ms: u32 = end
        .parse()
        .map_err(|_| alloc::format!("bad end time `{end}`"))?;
    let kind_word = words.next().ok_or("missing primitive kind")?;
    let mut fields = Fields::parse(words)?;
    let scope: RingScope = fields
        .take("ring")
        .ok_or("missing `ring`")?
        .parse()
        .map_err(|_| "ring must be Outer, Inner or Both".to_string())?;
    let color: ColorName = fields
        .take("color")
        .ok_or("missing `color`")?
        .parse()
        .map_err(|e: crate::frames::UnknownColor| e.to_string())?;
    let blink = |fields: &mut Fields<'a>| -> Result<Option<Blink>, String> {
        match (fields.optional::<u32>("on")?, fields.optional::<u32>("off")?) {
            (Some(on_ms), Some(off_ms)) => Ok(Some(Blink { on_ms, off_ms })),
            (None, None) => Ok(None),
            _ => Err("`on` and `off` must be given together".into()),
        }
    };
    let kind = match kind_word {
        "Fill" => PrimitiveKind::Fill,
        "Flash" => PrimitiveKind::Flash(blink(&mut fields)?.ok_or("Flash needs `on` and `off`")?),
        "Pulse" => PrimitiveKind::Pulse {
            period_ms: fields.required("period")?,
            min_alpha: fields.required("min")?,
            max_alpha: fields.required("max")?,
        },
        "Chase" => {
            let segments = fields
                .take("segments")
                .ok_or("missing `segments`")?
                .split(',')
                .map(|s| s.parse::<u8>().map_err(|_| alloc::format!("bad segment length `{s}`")))
                .collect::<Result<Vec<_>, _>>()?;
            let direction = match fields.take("dir") {
                None | Some("ccw") => Direction::Ccw,
                Some("cw") => Direction::Cw,
                Some(d) => return Err(alloc::format!("bad direction `{d}`")),
            };
            PrimitiveKind::Chase {
                segments,
                speed_deg_s: fields.required("speed")?,
                direction,
                start_deg: fields.optional("start")?.unwrap_or(0.0),
            }
        }
        "Wipe" => PrimitiveKind::Wipe {
            start_deg: fields.required("from")?,
            end_deg: fields.required("to")?,
            duration_ms: fields.required("over")?,
        },
        "ArcHold" => PrimitiveKind::ArcHold {
            center_deg: fields.required("center")?,
            half_width_deg: fields.required("half")?,
            from_half_width_deg: fields.optional("from_half")?,
            sweep_ms: fields.optional("sweep")?.unwrap_or(0),
            centroid: fields.optional("centroid")?.unwrap_or(false),
        },
        "Shape" => {
            let leds = fields
                .take("leds")
                .ok_or("missing `leds`")?;
            let leds = if leds == "none" { "" } else { leds };
            let leds = leds
                .split(',')
                .filter(|s| !s.is_empty())
                .map(parse_address)
                .collect::<Result<Vec<_>, _>>()?;
            PrimitiveKind::Shape {
                leds,
                blink: blink(&mut fields)?,
            }
        }
        other => return Err(alloc::format!("unknown primitive kind `{other}`")),
    };
    let alpha = fields.optional::<u8>("alpha")?;
    fields.finish()?;
    Ok(Track {
        primitive: Primitive {
            kind,
            scope,
            color,
            alpha,
        },
        start_ms,
        end_ms,
    })
}

/// `O5` / `I12` style address.
fn parse_address(s: &str) -> Result<LedAddress, String> {
    let ring = match s.as_bytes().first() {
        Some(b'O') | Some(b'o') => Ring::Outer,
        Some(b'I') | Some(b'i') => Ring::Inner,
        _ => return Err(alloc::format!("bad LED address `{s}`")),
    };
    let index: usize = s[1..]
        .parse()
        .map_err(|_| alloc::format!("bad LED address `{s}`"))?;
    LedAddress::new(ring, index).map_err(|e| e.to_string())
}

/// `key=value` pairs of one line; every key may appear once and must be consumed.
struct Fields<'a> {
    pairs: Vec<(&'a str, Option<&'a str>)>,
}

impl<'a> Fields<'a> {
    fn parse(words: impl Iterator<Item = &'a str>) -> Result<Self, String> {
        let mut pairs: Vec<(&str, Option<&str>)> = Vec::new();
        for word in words {
            let (k, v) = word
                .split_once('=')
                .ok_or_else(|| alloc::format!("expected key=value, found `{word}`"))?;
            if k.is_empty() || v.is_empty() {
                return Err(alloc::format!("expected key=value, found `{word}`"));
            }
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(alloc::format!("field `{k}` given more than once"));
            }
            pairs.push((k, Some(v)));
        }
        Ok(Fields { pairs })
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.pairs
            .iter_mut()
            .find(|(k, _)| *k == key)
            .and_then(|(_, v)| v.take())
    }

    fn optional<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, String> {
        self.take(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| alloc::format!("bad value `{v}` for `{key}`"))
            })
            .transpose()
    }

    fn required<T: FromStr>(&mut self, key: &str) -> Result<T, String> {
        self.optional(key)?
            .ok_or_else(|| alloc::format!("missing `{key}`"))
    }

    fn finish(self) -> Result<(), String> {
        match self.pairs.iter().find(|(_, v)| v.is_some()) {
            Some((k, _)) => Err(alloc::format!("unknown field `{k}`")),
            None => Ok(()),
        }
    }
}
