//! Colors, the 40-pixel frame, and the semantic palette.

use alloc::string::{String, ToString};
use core::fmt::{self, Write as _};
use core::str::FromStr;

use crate::geometry::{LedAddress, Ring, PIXEL_COUNT};

/// Minimum Euclidean RGB distance between any two lit palette entries.
pub const DEFAULT_MIN_SEPARATION: f64 = 80.0;

/// One pixel: RGB plus an intensity channel. `a == 0` is dark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ColorRGBA {
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub a: u8,
}

impl ColorRGBA {
    pub const OFF: ColorRGBA = ColorRGBA::new(0, 0, 0, 0);

    pub const fn new(r: u8, g: u8, b: u8, a: u8) -> Self {
        ColorRGBA { r, g, b, a }
    }

    pub const fn with_alpha(self, a: u8) -> Self {
        ColorRGBA { a, ..self }
    }

    pub fn is_dark(self) -> bool {
        self.a == 0 || (self.r == 0 && self.g == 0 && self.b == 0)
    }

    /// RGB with alpha applied as a brightness multiplier, rounded.
    pub fn rendered(self) -> [u8; 3] {
        let scale = |c: u8| ((c as u16 * self.a as u16 + 127) / 255) as u8;
        [scale(self.r), scale(self.g), scale(self.b)]
    }

    pub fn rgb_distance(self, other: ColorRGBA) -> f64 {
        let d = |x: u8, y: u8| {
            let v = x as f64 - y as f64;
            v * v
        };
        libm::sqrt(d(self.r, other.r) + d(self.g, other.g) + d(self.b, other.b))
    }

    pub fn to_array(self) -> [u8; 4] {
        [self.r, self.g, self.b, self.a]
    }

    pub fn from_array([r, g, b, a]: [u8; 4]) -> Self {
        ColorRGBA { r, g, b, a }
    }
}

impl fmt::Display for ColorRGBA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.r, self.g, self.b, self.a)
    }
}

/// Instantaneous state of one eye: outer ring (0..24) then inner ring (24..40).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LedFrame {
    pub pixels: [ColorRGBA; PIXEL_COUNT],
}

impl Default for LedFrame {
    fn default() -> Self {
        blank_frame()
    }
}

pub fn blank_frame() -> LedFrame {
    LedFrame {
        pixels: [ColorRGBA::OFF; PIXEL_COUNT],
    }
}

impl LedFrame {
    pub fn filled(color: ColorRGBA) -> Self {
        LedFrame {
            pixels: [color; PIXEL_COUNT],
        }
    }

    pub fn get(&self, addr: LedAddress) -> ColorRGBA {
        self.pixels[addr.frame_index()]
    }

    pub fn set(&mut self, addr: LedAddress, color: ColorRGBA) {
        self.pixels[addr.frame_index()] = color;
    }

    pub fn ring(&self, ring: Ring) -> &[ColorRGBA] {
        let base = ring.frame_base();
        &self.pixels[base..base + ring.count()]
    }

    pub fn ring_mut(&mut self, ring: Ring) -> &mut [ColorRGBA] {
        let base = ring.frame_base();
        &mut self.pixels[base..base + ring.count()]
    }

    /// Addresses of every pixel that would emit light.
    pub fn lit(&self) -> impl Iterator<Item = LedAddress> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_dark())
            .filter_map(|(i, _)| LedAddress::from_frame_index(i))
    }

    pub fn is_blank(&self) -> bool {
        self.pixels.iter().all(|c| c.is_dark())
    }

    /// Painter's rule: overlay pixels with `a > 0` replace the base pixel.
    pub fn composite(&self, overlay: &LedFrame) -> LedFrame {
        let mut out = *self;
        for (dst, src) in out.pixels.iter_mut().zip(overlay.pixels.iter()) {
            if src.a > 0 {
                *dst = *src;
            }
        }
        out
    }
}

pub fn composite(base: &LedFrame, overlay: &LedFrame) -> LedFrame {
    base.composite(overlay)
}

/// Named entries of the semantic color protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColorName {
    DirectionalYellow,
    ProblemRed,
    InformationBlue,
    AuvPurple,
    IrisPink,
    ScleraWhite,
    AffirmGreen,
    Off,
}

impl ColorName {
    pub const ALL: [ColorName; 8] = [
        ColorName::DirectionalYellow,
        ColorName::ProblemRed,
        ColorName::InformationBlue,
        ColorName::AuvPurple,
        ColorName::IrisPink,
        ColorName::ScleraWhite,
        ColorName::AffirmGreen,
        ColorName::Off,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColorName::DirectionalYellow => "directional-yellow",
            ColorName::ProblemRed => "problem-red",
            ColorName::InformationBlue => "information-blue",
            ColorName::AuvPurple => "auv-purple",
            ColorName::IrisPink => "iris-pink",
            ColorName::ScleraWhite => "sclera-white",
            ColorName::AffirmGreen => "affirm-green",
            ColorName::Off => "off",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ColorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown palette color `{0}`")]
pub struct UnknownColor(pub String);

impl FromStr for ColorName {
    type Err = UnknownColor;

    /// Case-insensitive; `_` and `-` are interchangeable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ColorName::ALL
            .into_iter()
            .find(|c| {
                let name = c.as_str();
                name.len() == s.len()
                    && name
                        .bytes()
                        .zip(s.bytes())
                        .all(|(a, b)| a == b.to_ascii_lowercase() || (a == b'-' && b == b'_'))
            })
            .ok_or_else(|| UnknownColor(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PaletteError {
    #[error("line {line}: {cause}")]
    Syntax { line: usize, cause: String },
    #[error("line {line}: {source}")]
    UnknownName { line: usize, source: UnknownColor },
    #[error("`off` must have alpha 0")]
    OffNotDark,
    #[error("{a} and {b} are only {distance:.1} apart in RGB (minimum {minimum})")]
    TooClose {
        a: ColorName,
        b: ColorName,
        distance: f64,
        minimum: f64,
    },
}

/// Mapping from every [`ColorName`] to a concrete color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Palette {
    colors: [ColorRGBA; 8],
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            colors: [
                ColorRGBA::new(255, 200, 0, 255),
                ColorRGBA::new(255, 0, 0, 255),
                ColorRGBA::new(0, 80, 255, 255),
                ColorRGBA::new(160, 0, 255, 255),
                ColorRGBA::new(255, 60, 160, 255),
                ColorRGBA::new(255, 255, 255, 180),
                ColorRGBA::new(0, 255, 60, 255),
                ColorRGBA::OFF,
            ],
        }
    }
}

impl Palette {
    pub fn get(&self, name: ColorName) -> ColorRGBA {
        self.colors[name.slot()]
    }

    pub fn set(&mut self, name: ColorName, color: ColorRGBA) {
        self.colors[name.slot()] = color;
    }

    /// Exact reverse lookup, ignoring alpha; `Off` never matches.
    pub fn name_of(&self, color: ColorRGBA) -> Option<ColorName> {
        ColorName::ALL[..7].iter().copied().find(|&n| {
            let c = self.get(n);
            (c.r, c.g, c.b) == (color.r, color.g, color.b)
        })
    }

    pub fn validate(&self, min_separation: f64) -> Result<(), PaletteError> {
        if self.get(ColorName::Off).a != 0 {
            return Err(PaletteError::OffNotDark);
        }
        let lit = &ColorName::ALL[..7];
        for (i, &a) in lit.iter().enumerate() {
            for &b in &lit[i + 1..] {
                let distance = self.get(a).rgb_distance(self.get(b));
                if distance <= min_separation {
                    return Err(PaletteError::TooClose {
                        a,
                        b,
                        distance,
                        minimum: min_separation,
                    });
                }
            }
        }
        Ok(())
    }

    /// Parses a palette file (`name = r,g,b,a` per line, `#` comments).
    ///
    /// Entries override the defaults; the result must satisfy
    /// [`DEFAULT_MIN_SEPARATION`].
    pub fn parse(text: &str) -> Result<Palette, PaletteError> {
        let mut palette = Palette::default();
        let mut seen = [false; 8];
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |cause: &str| PaletteError::Syntax {
                line,
                cause: cause.to_string(),
            };
            let (name, value) = content
                .split_once('=')
                .ok_or_else(|| syntax("expected `name = r,g,b,a`"))?;
            let name: ColorName = name
                .trim()
                .parse()
                .map_err(|source| PaletteError::UnknownName { line, source })?;
            if core::mem::replace(&mut seen[name.slot()], true) {
                return Err(syntax("duplicate entry"));
            }
            let mut channels = [0u8; 4];
            let mut parts = value.split(',');
            for ch in channels.iter_mut() {
                *ch = parts
                    .next()
                    .ok_or_else(|| syntax("expected four channels"))?
                    .trim()
                    .parse()
                    .map_err(|_| syntax("channel must be an integer in 0..=255"))?;
            }
            if parts.next().is_some() {
                return Err(syntax("expected four channels"));
            }
            palette.set(name, ColorRGBA::from_array(channels));
        }
        palette.validate(DEFAULT_MIN_SEPARATION)?;
        Ok(palette)
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        for name in ColorName::ALL {
            let _ = writeln!(out, "{} = {}", name, self.get(name));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outer0() -> LedAddress {
        LedAddress::new(Ring::Outer, 0).unwrap()
    }

    #[test]
    fn blank_frame_is_all_off() {
        let f = blank_frame();
        assert!(f.pixels.iter().all(|&p| p == ColorRGBA::new(0, 0, 0, 0)));
        assert_eq!(blank_frame(), blank_frame());
    }

    #[test]
    fn single_pixel_set() {
        let mut f = blank_frame();
        f.set(outer0(), Palette::default().get(ColorName::ProblemRed));
        assert_eq!(f.lit().count(), 1);
    }

    #[test]
    fn composite_identity_and_painter_rule() {
        let red = LedFrame::filled(Palette::default().get(ColorName::ProblemRed));
        assert_eq!(composite(&red, &blank_frame()), red);
        assert_eq!(composite(&blank_frame(), &red), red);

        let blue = Palette::default().get(ColorName::InformationBlue);
        let mut overlay = blank_frame();
        overlay.set(LedAddress::new(Ring::Inner, 0).unwrap(), blue);
        let out = composite(&red, &overlay);
        for (i, p) in out.pixels.iter().enumerate() {
            if i == 24 {
                assert_eq!(*p, blue);
            } else {
                assert_eq!(*p, red.pixels[i]);
            }
        }
    }

    #[test]
    fn zero_alpha_renders_black() {
        assert_eq!(ColorRGBA::new(255, 255, 255, 0).rendered(), [0, 0, 0]);
        assert_eq!(ColorRGBA::new(255, 100, 0, 255).rendered(), [255, 100, 0]);
        assert_eq!(ColorRGBA::new(255, 255, 255, 180).rendered(), [180, 180, 180]);
    }

    #[test]
    fn default_palette_is_separable() {
        Palette::default().validate(DEFAULT_MIN_SEPARATION).unwrap();
        assert_eq!(Palette::default().get(ColorName::Off).a, 0);
    }

    #[test]
    fn palette_config_round_trip() {
        let p = Palette::default();
        assert_eq!(Palette::parse(&p.to_config()).unwrap(), p);
    }

    #[test]
    fn palette_rejects_unknown_and_confusable() {
        let err = Palette::parse("# tweak\nmagenta = 255,0,255,255\n").unwrap_err();
        assert!(matches!(err, PaletteError::UnknownName { line: 2, .. }));

        let err = Palette::parse("problem-red = 250,200,0,255").unwrap_err();
        assert!(matches!(err, PaletteError::TooClose { .. }));

        assert!(matches!(
            Palette::parse("off = 0,0,0,1").unwrap_err(),
            PaletteError::OffNotDark
        ));
        assert!(Palette::parse("problem-red = 255,0").is_err());
        assert!(Palette::parse("problem-red = 255,0,0,256").is_err());
        assert!(Palette::parse("Problem_Red = 240,0,0,255").is_ok());
    }
}
