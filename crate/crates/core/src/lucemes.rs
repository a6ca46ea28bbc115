//! The luceme catalog: sixteen active signals and the ocular (eye-like) set,
//! plus gaze quantization, rendering and decoding.
//!
//! Color protocol: yellow for directions, red for problems, blue for
//! information, purple for the vehicle itself. Structural protocol: Danger
//! and Attention share one blinking symbol, WaitCMD and Malfunction pulse,
//! FollowMe and FollowYou share one chase animation.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::angle::{normalize_deg, weighted_circular_mean};
use crate::animation::{
    AnimationError, Blink, Direction, LucemeDef, Primitive, PrimitiveKind, RingScope, Track,
};
use crate::frames::{ColorName, LedFrame, Palette};
use crate::geometry::{LedAddress, Ring, RingGeometry};

/// Alpha of the non-pupil inner LEDs during a gaze cue; also the decoder's
/// qualification threshold (pixels must be strictly brighter).
pub const DIM_ALPHA: u8 = 40;
pub const PUPIL_LEDS: usize = 5;
pub const GAZE_ENTRY_MS: u32 = 300;
pub const DEFAULT_DURATION_MS: u32 = 2000;
pub const PULSE_PERIOD_MS: u32 = 1500;
pub const DEFAULT_BATTERY_LEVEL: f64 = 0.5;

/// Outer-ring LEDs of the shared Danger/Attention symbol: three 3-LED
/// clusters at 90, 210 and 330 degrees.
pub const WARNING_SYMBOL: [usize; 9] = [5, 6, 7, 13, 14, 15, 21, 22, 23];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LucemeError {
    #[error("battery level {0} is outside [0, 1]")]
    BatteryLevel(f64),
    #[error("gaze angle {0} is not a multiple of 30 in [0, 330]")]
    GazeAngle(i64),
    #[error("angle {0} is not finite")]
    NonFinite(f64),
    #[error("no pupil pixels in frame")]
    NoPupil,
    #[error("unknown luceme `{0}`")]
    UnknownLuceme(String),
    #[error("{0} is parameterized and cannot be replaced")]
    NotOverridable(ActiveLucemeId),
    #[error(transparent)]
    Animation(#[from] AnimationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActiveLucemeId {
    Affirmative,
    Negative,
    Danger,
    Attention,
    Malfunction,
    WaitCMD,
    GoLeft,
    GoRight,
    GoUp,
    GoDown,
    WhichWay,
    Stay,
    ComeHere,
    FollowMe,
    FollowYou,
    BatteryLevel,
}

impl ActiveLucemeId {
    pub const ALL: [ActiveLucemeId; 16] = [
        ActiveLucemeId::Affirmative,
        ActiveLucemeId::Negative,
        ActiveLucemeId::Danger,
        ActiveLucemeId::Attention,
        ActiveLucemeId::Malfunction,
        ActiveLucemeId::WaitCMD,
        ActiveLucemeId::GoLeft,
        ActiveLucemeId::GoRight,
        ActiveLucemeId::GoUp,
        ActiveLucemeId::GoDown,
        ActiveLucemeId::WhichWay,
        ActiveLucemeId::Stay,
        ActiveLucemeId::ComeHere,
        ActiveLucemeId::FollowMe,
        ActiveLucemeId::FollowYou,
        ActiveLucemeId::BatteryLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActiveLucemeId::Affirmative => "Affirmative",
            ActiveLucemeId::Negative => "Negative",
            ActiveLucemeId::Danger => "Danger",
            ActiveLucemeId::Attention => "Attention",
            ActiveLucemeId::Malfunction => "Malfunction",
            ActiveLucemeId::WaitCMD => "WaitCMD",
            ActiveLucemeId::GoLeft => "GoLeft",
            ActiveLucemeId::GoRight => "GoRight",
            ActiveLucemeId::GoUp => "GoUp",
            ActiveLucemeId::GoDown => "GoDown",
            ActiveLucemeId::WhichWay => "WhichWay",
            ActiveLucemeId::Stay => "Stay",
            ActiveLucemeId::ComeHere => "ComeHere",
            ActiveLucemeId::FollowMe => "FollowMe",
            ActiveLucemeId::FollowYou => "FollowYou",
            ActiveLucemeId::BatteryLevel => "BatteryLevel",
        }
    }

    pub fn gloss(self) -> &'static str {
        match self {
            ActiveLucemeId::Affirmative => "yes / okay",
            ActiveLucemeId::Negative => "no",
            ActiveLucemeId::Danger => "danger nearby",
            ActiveLucemeId::Attention => "look at the vehicle",
            ActiveLucemeId::Malfunction => "the vehicle has an internal fault",
            ActiveLucemeId::WaitCMD => "waiting for a command",
            ActiveLucemeId::GoLeft => "go left / vehicle moving left",
            ActiveLucemeId::GoRight => "go right / vehicle moving right",
            ActiveLucemeId::GoUp => "go up / vehicle ascending",
            ActiveLucemeId::GoDown => "go down / vehicle descending",
            ActiveLucemeId::WhichWay => "which way should the vehicle go?",
            ActiveLucemeId::Stay => "stay where you are",
            ActiveLucemeId::ComeHere => "come to the vehicle",
            ActiveLucemeId::FollowMe => "the diver may follow the vehicle",
            ActiveLucemeId::FollowYou => "the vehicle will follow the diver",
            ActiveLucemeId::BatteryLevel => "battery level",
        }
    }
}

impl fmt::Display for ActiveLucemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lower-cases and drops separators so `Go Left`, `go-left` and `GoLeft` match.
fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

impl FromStr for ActiveLucemeId {
    type Err = LucemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        ActiveLucemeId::ALL
            .into_iter()
            .find(|id| squash(id.name()) == key)
            .ok_or_else(|| LucemeError::UnknownLuceme(s.to_string()))
    }
}

/// A gaze direction in 30-degree steps, Cartesian (0 = right, 90 = up).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GazeAngle(u16);

impl GazeAngle {
    pub fn new(degrees: i64) -> Result<Self, LucemeError> {
        if (0..360).contains(&degrees) && degrees % 30 == 0 {
            Ok(GazeAngle(degrees as u16))
        } else {
            Err(LucemeError::GazeAngle(degrees))
        }
    }

    pub fn degrees(self) -> u16 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = GazeAngle> {
        (0..12).map(|k| GazeAngle(k * 30))
    }
}

impl fmt::Display for GazeAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Nearest 30-degree direction; exact ties round counterclockwise.
pub fn quantize_gaze(angle_deg: f64) -> Result<GazeAngle, LucemeError> {
    if !angle_deg.is_finite() {
        return Err(LucemeError::NonFinite(angle_deg));
    }
    let steps = libm::floor(normalize_deg(angle_deg) / 30.0 + 0.5) as u16;
    Ok(GazeAngle((steps % 12) * 30))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OcularLucemeId {
    Steady,
    Blink,
    Squint,
    EyesWide,
    Gaze(GazeAngle),
}

impl OcularLucemeId {
    /// The four gestures followed by the twelve gaze cues.
    pub fn all() -> impl Iterator<Item = OcularLucemeId> {
        [
            OcularLucemeId::Steady,
            OcularLucemeId::Blink,
            OcularLucemeId::Squint,
            OcularLucemeId::EyesWide,
        ]
        .into_iter()
        .chain(GazeAngle::all().map(OcularLucemeId::Gaze))
    }

    pub fn gloss(self) -> &'static str {
        match self {
            OcularLucemeId::Steady => "resting eye",
            OcularLucemeId::Blink => "a blink",
            OcularLucemeId::Squint => "squinting / focusing",
            OcularLucemeId::EyesWide => "eyes widening",
            OcularLucemeId::Gaze(_) => "looking in a direction",
        }
    }
}

impl fmt::Display for OcularLucemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OcularLucemeId::Steady => f.write_str("Steady"),
            OcularLucemeId::Blink => f.write_str("Blink"),
            OcularLucemeId::Squint => f.write_str("Squint"),
            OcularLucemeId::EyesWide => f.write_str("EyesWide"),
            OcularLucemeId::Gaze(g) => write!(f, "Gaze{g}"),
        }
    }
}

impl FromStr for OcularLucemeId {
    type Err = LucemeError;

    /// Accepts `Steady`, `Blink`, `Squint`, `EyesWide`, `Gaze<deg>` and
    /// `Ocular-<deg>`; the gaze angle must already be a valid [`GazeAngle`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = squash(s);
        let key = key.strip_prefix("ocular").unwrap_or(&key);
        let unknown = || LucemeError::UnknownLuceme(s.to_string());
        match key {
            "steady" => Ok(OcularLucemeId::Steady),
            "blink" => Ok(OcularLucemeId::Blink),
            "squint" => Ok(OcularLucemeId::Squint),
            "eyeswide" => Ok(OcularLucemeId::EyesWide),
            _ => {
                let digits = key.strip_prefix("gaze").unwrap_or(key);
                let deg: i64 = digits.parse().map_err(|_| unknown())?;
                Ok(OcularLucemeId::Gaze(GazeAngle::new(deg)?))
            }
        }
    }
}

/// Either kind of luceme, as named on the command line or in the service API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LucemeId {
    Active(ActiveLucemeId),
    Ocular(OcularLucemeId),
}

impl FromStr for LucemeId {
    type Err = LucemeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse::<ActiveLucemeId>()
            .map(LucemeId::Active)
            .or_else(|_| s.parse::<OcularLucemeId>().map(LucemeId::Ocular))
            .map_err(|e| match e {
                LucemeError::GazeAngle(_) => e,
                _ => LucemeError::UnknownLuceme(s.to_string()),
            })
    }
}

impl fmt::Display for LucemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LucemeId::Active(id) => id.fmt(f),
            LucemeId::Ocular(id) => id.fmt(f),
        }
    }
}

/// Builds catalog definitions against one palette.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub palette: Palette,
    /// Bright inner LEDs forming the pupil; odd.
    pub pupil_leds: usize,
    pub gaze_entry_ms: u32,
    pub dim_alpha: u8,
    /// Replacement definitions loaded from luceme files. `BatteryLevel` is
    /// parameterized and cannot be overridden.
    pub overrides: BTreeMap<ActiveLucemeId, LucemeDef>,
}

impl Default for Catalog {
    fn default() -> Self {
        Catalog::new(Palette::default())
    }
}

fn track(start_ms: u32, end_ms: u32, kind: PrimitiveKind, scope: RingScope, color: ColorName) -> Track {
    Track::new(start_ms, end_ms, Primitive::new(kind, scope, color))
}

fn arc_hold(center_deg: f64, half_width_deg: f64) -> PrimitiveKind {
    PrimitiveKind::ArcHold {
        center_deg,
        half_width_deg,
        from_half_width_deg: None,
        sweep_ms: 0,
        centroid: false,
    }
}

fn wipe(start_deg: f64, end_deg: f64, duration_ms: u32) -> PrimitiveKind {
    PrimitiveKind::Wipe {
        start_deg,
        end_deg,
        duration_ms,
    }
}

fn outer(indices: impl IntoIterator<Item = usize>) -> Vec<LedAddress> {
    indices
        .into_iter()
        .filter_map(|i| LedAddress::new(Ring::Outer, i).ok())
        .collect()
}

impl Catalog {
    pub fn new(palette: Palette) -> Self {
        Catalog {
            palette,
            pupil_leds: PUPIL_LEDS,
            gaze_entry_ms: GAZE_ENTRY_MS,
            dim_alpha: DIM_ALPHA,
            overrides: BTreeMap::new(),
        }
    }

    /// Installs `def` in place of the built-in `id`.
    pub fn set_override(&mut self, id: ActiveLucemeId, def: LucemeDef) -> Result<(), LucemeError> {
        if id == ActiveLucemeId::BatteryLevel {
            return Err(LucemeError::NotOverridable(id));
        }
        self.overrides.insert(id, def);
        Ok(())
    }

    /// Half-width that selects exactly `pupil_leds` inner LEDs around an LED.
    pub fn pupil_half_width_deg(&self) -> f64 {
        (self.pupil_leds.saturating_sub(1) / 2) as f64 * Ring::Inner.spacing_deg()
    }

    fn build(&self, name: &str, duration_ms: u32, looping: bool, tracks: Vec<Track>) -> LucemeDef {
        LucemeDef::new(name, duration_ms, looping, tracks, self.palette)
            .expect("catalog definitions are valid")
    }

    /// Active luceme; `battery_level` is read only by `BatteryLevel`.
    pub fn active(&self, id: ActiveLucemeId, battery_level: Option<f64>) -> Result<LucemeDef, LucemeError> {
        use ActiveLucemeId::*;
        use ColorName::*;
        use RingScope::{Both, Inner, Outer};

        if let Some(def) = self.overrides.get(&id) {
            return Ok(def.clone());
        }
        let d = DEFAULT_DURATION_MS;
        let name = id.name();
        let def = match id {
            Affirmative | Negative => {
                let color = if id == Affirmative { AffirmGreen } else { ProblemRed };
                let double_flash = PrimitiveKind::Flash(Blink {
                    on_ms: 250,
                    off_ms: 250,
                });
                self.build(name, d, true, vec![track(0, 1000, double_flash, Both, color)])
            }
            Danger | Attention => {
                let color = if id == Danger { ProblemRed } else { InformationBlue };
                let symbol = PrimitiveKind::Shape {
                    leds: outer(WARNING_SYMBOL),
                    blink: Some(Blink {
                        on_ms: 125,
                        off_ms: 125,
                    }),
                };
                self.build(name, d, true, vec![track(0, d, symbol, Outer, color)])
            }
            Malfunction | WaitCMD => {
                let color = if id == Malfunction { ProblemRed } else { InformationBlue };
                let pulse = PrimitiveKind::Pulse {
                    period_ms: PULSE_PERIOD_MS,
                    min_alpha: 20,
                    max_alpha: 255,
                };
                let period = 2 * PULSE_PERIOD_MS;
                self.build(name, period, true, vec![track(0, period, pulse, Both, color)])
            }
            GoLeft | GoRight | GoUp | GoDown => {
                let target = match id {
                    GoLeft => 180.0,
                    GoRight => 0.0,
                    GoUp => 90.0,
                    _ => 270.0,
                };
                // Two wipes leave the opposite side and meet at the target.
                let origin = target + 180.0;
                self.build(
                    name,
                    d,
                    true,
                    vec![
                        track(0, d, wipe(origin, origin - 180.0, 1000), Outer, DirectionalYellow),
                        track(0, d, wipe(origin - 360.0, origin - 180.0, 1000), Outer, DirectionalYellow),
                        track(1000, d, arc_hold(target, 45.0), Inner, DirectionalYellow),
                    ],
                )
            }
            WhichWay => self.build(
                name,
                d,
                true,
                vec![
                    track(0, 500, arc_hold(180.0, 45.0), Outer, DirectionalYellow),
                    track(500, 1000, arc_hold(0.0, 45.0), Outer, DirectionalYellow),
                    track(1000, 1500, arc_hold(180.0, 45.0), Outer, DirectionalYellow),
                    track(1500, 2000, arc_hold(0.0, 45.0), Outer, DirectionalYellow),
                ],
            ),
            Stay => self.build(
                name,
                d,
                true,
                vec![track(0, d, arc_hold(90.0, 180.0), Outer, DirectionalYellow)],
            ),
            ComeHere => self.build(
                name,
                d,
                true,
                vec![
                    track(0, 1000, wipe(90.0, 450.0, 700), Outer, DirectionalYellow),
                    track(1000, 1600, wipe(90.0, 450.0, 500), Inner, DirectionalYellow),
                ],
            ),
            FollowMe | FollowYou => {
                let inner = if id == FollowMe { AuvPurple } else { InformationBlue };
                let chase = PrimitiveKind::Chase {
                    segments: vec![4, 4],
                    speed_deg_s: 180.0,
                    direction: Direction::Ccw,
                    start_deg: 90.0,
                };
                self.build(
                    name,
                    d,
                    true,
                    vec![
                        track(0, d, chase, Outer, DirectionalYellow),
                        track(0, d, PrimitiveKind::Fill, Inner, inner),
                    ],
                )
            }
            BatteryLevel => {
                let level = battery_level.unwrap_or(DEFAULT_BATTERY_LEVEL);
                if !(0.0..=1.0).contains(&level) {
                    return Err(LucemeError::BatteryLevel(level));
                }
                let lit = libm::round(level * Ring::Outer.count() as f64) as i64;
                let top = LedAddress::new(Ring::Outer, 6).expect("valid");
                // From 90 degrees, clockwise.
                let gauge = PrimitiveKind::Shape {
                    leds: (0..lit).map(|k| top.step(-k)).collect(),
                    blink: None,
                };
                let mut tracks = vec![Track::new(
                    0,
                    d,
                    Primitive::new(PrimitiveKind::Fill, Inner, AuvPurple).with_alpha(60),
                )];
                if lit > 0 {
                    tracks.push(track(0, d, gauge, Outer, InformationBlue));
                }
                self.build(name, d, true, tracks)
            }
        };
        Ok(def)
    }

    pub fn ocular(&self, id: OcularLucemeId) -> LucemeDef {
        use ColorName::{IrisPink, ScleraWhite};
        use RingScope::{Inner, Outer};

        let d = DEFAULT_DURATION_MS;
        let name = id.to_string();
        let iris = |start, end| track(start, end, arc_hold(90.0, 180.0), Inner, IrisPink);
        let sclera = |start, end| track(start, end, PrimitiveKind::Fill, Outer, ScleraWhite);
        match id {
            OcularLucemeId::Steady => self.build(&name, d, true, vec![sclera(0, d), iris(0, d)]),
            OcularLucemeId::Blink => self.build(
                &name,
                d,
                true,
                vec![sclera(0, 800), iris(0, 800), sclera(950, d), iris(950, d)],
            ),
            OcularLucemeId::Squint => self.build(
                &name,
                d,
                true,
                vec![
                    iris(0, d),
                    sclera(0, 400),
                    track(400, d, arc_hold(0.0, 45.0), Outer, ScleraWhite),
                    track(400, d, arc_hold(180.0, 45.0), Outer, ScleraWhite),
                ],
            ),
            OcularLucemeId::EyesWide => {
                let full = self.palette.get(ScleraWhite).a;
                let overshoot = PrimitiveKind::Pulse {
                    period_ms: 1000,
                    min_alpha: full,
                    max_alpha: 255,
                };
                self.build(
                    &name,
                    d,
                    true,
                    vec![iris(0, d), track(0, 1000, overshoot, Outer, ScleraWhite), sclera(1000, d)],
                )
            }
            OcularLucemeId::Gaze(angle) => {
                let pupil = PrimitiveKind::ArcHold {
                    center_deg: angle.degrees() as f64,
                    half_width_deg: self.pupil_half_width_deg(),
                    from_half_width_deg: Some(180.0),
                    sweep_ms: self.gaze_entry_ms,
                    centroid: true,
                };
                self.build(
                    &name,
                    d,
                    false,
                    vec![
                        sclera(0, d),
                        Track::new(
                            0,
                            d,
                            Primitive::new(PrimitiveKind::Fill, Inner, IrisPink).with_alpha(self.dim_alpha),
                        ),
                        track(0, d, pupil, Inner, IrisPink),
                    ],
                )
            }
        }
    }

    pub fn luceme(&self, id: LucemeId, battery_level: Option<f64>) -> Result<LucemeDef, LucemeError> {
        match id {
            LucemeId::Active(a) => self.active(a, battery_level),
            LucemeId::Ocular(o) => Ok(self.ocular(o)),
        }
    }

    pub fn render_gaze(&self, angle: GazeAngle, t_ms: u64) -> LedFrame {
        self.ocular(OcularLucemeId::Gaze(angle)).sample(t_ms)
    }
}

/// Active luceme from the default catalog.
pub fn catalog(id: ActiveLucemeId, battery_level: Option<f64>) -> Result<LucemeDef, LucemeError> {
    Catalog::default().active(id, battery_level)
}

pub fn ocular(id: OcularLucemeId) -> LucemeDef {
    Catalog::default().ocular(id)
}

pub fn render_gaze(angle: GazeAngle, t_ms: u64) -> LedFrame {
    Catalog::default().render_gaze(angle, t_ms)
}

/// Alpha-weighted circular mean of pupil-colored inner pixels brighter than
/// [`DIM_ALPHA`], using the uncalibrated geometry.
pub fn estimate_gaze(frame: &LedFrame) -> Result<f64, LucemeError> {
    estimate_gaze_with(&RingGeometry::new(), frame, DIM_ALPHA)
}

pub fn estimate_gaze_with(
    geometry: &RingGeometry,
    frame: &LedFrame,
    dim_threshold: u8,
) -> Result<f64, LucemeError> {
    let samples: Vec<(f64, f64)> = Ring::Inner
        .addresses()
        .filter_map(|addr| {
            let c = frame.get(addr);
            let pink = c.r > c.g && c.r > 0 && c.b > 0;
            (pink && c.a > dim_threshold).then(|| (geometry.led_angle(addr), c.a as f64))
        })
        .collect();
    if samples.is_empty() {
        return Err(LucemeError::NoPupil);
    }
    weighted_circular_mean(samples).ok_or(LucemeError::NoPupil)
}

/// Palette entry carrying the most alpha-weighted light over `frames`.
pub fn dominant_color<'a>(frames: impl IntoIterator<Item = &'a LedFrame>, palette: &Palette) -> Option<ColorName> {
    let mut weight = [0u64; 8];
    for frame in frames {
        for px in frame.pixels.iter().filter(|p| !p.is_dark()) {
            if let Some(name) = palette.name_of(*px) {
                weight[name as usize] += px.a as u64;
            }
        }
    }
    let (slot, &w) = weight.iter().enumerate().max_by_key(|(i, w)| (**w, core::cmp::Reverse(*i)))?;
    (w > 0).then(|| ColorName::ALL[slot])
}
