//! The controller: turns a mode (active, ocular, functional or idle) into a
//! stream of paired driver messages on a fixed-timestep logical clock.
//!
//! Frame `k` of a session is stamped `k * 1000 / fps` ms. A mode change takes
//! effect on the next emitted frame and restarts luceme time at zero, so no
//! frame ever mixes two lucemes.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use crate::animation::{frame_time_ms, LucemeDef, MAX_FPS};
use crate::frames::{ColorRGBA, LedFrame};
use crate::lucemes::{ActiveLucemeId, Catalog, LucemeError, OcularLucemeId};
use crate::protocol::{DriverMessage, EyeId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error(transparent)]
    Luceme(#[from] LucemeError),
    #[error("intensity {0} is outside [0, 1]")]
    Intensity(f64),
    #[error("frame rate {0} is outside 1..=120")]
    Fps(u32),
    #[error("a sequence needs at least one entry and a positive dwell time")]
    EmptySequence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerMode {
    Idle,
    Active {
        id: ActiveLucemeId,
        battery_level: Option<f64>,
    },
    Ocular(OcularLucemeId),
    /// Constant illumination; alpha is scaled by `intensity`.
    Functional { color: ColorRGBA, intensity: f64 },
}

impl ControllerMode {
    pub fn active(id: ActiveLucemeId) -> Self {
        ControllerMode::Active {
            id,
            battery_level: None,
        }
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerMode::Idle => f.write_str("Idle"),
            ControllerMode::Active { id, battery_level: Some(l) } => write!(f, "Active {id} {l}"),
            ControllerMode::Active { id, .. } => write!(f, "Active {id}"),
            ControllerMode::Ocular(id) => write!(f, "Ocular {id}"),
            ControllerMode::Functional { color, intensity } => {
                write!(f, "Functional {color} x{intensity}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Program {
    Constant(LedFrame),
    Luceme(LucemeDef),
}

impl Program {
    fn sample(&self, t_ms: u64) -> LedFrame {
        match self {
            Program::Constant(f) => *f,
            Program::Luceme(def) => def.sample(t_ms),
        }
    }
}

/// Both eyes' messages for one frame boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub messages: [DriverMessage; 2],
}

#[derive(Debug, Clone, PartialEq)]
struct Playlist {
    queue: VecDeque<ControllerMode>,
    dwell_frames: u64,
    total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    catalog: Catalog,
    fps: u32,
    mode: ControllerMode,
    program: Program,
    frame_index: u64,
    mode_start_frame: u64,
    next_sequence: [u32; 2],
    playlist: Option<Playlist>,
}

impl Controller {
    pub fn new(catalog: Catalog, fps: u32) -> Result<Self, ControllerError> {
        if !(1..=MAX_FPS).contains(&fps) {
            return Err(ControllerError::Fps(fps));
        }
        Ok(Controller {
            catalog,
            fps,
            mode: ControllerMode::Idle,
            program: Program::Constant(LedFrame::default()),
            frame_index: 0,
            mode_start_frame: 0,
            next_sequence: [0; 2],
            playlist: None,
        })
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// Index of the next frame to be emitted.
    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn next_sequence(&self, eye: EyeId) -> u32 {
        self.next_sequence[eye.index()]
    }

    /// `(entries started so far, total)` while a sequence is playing.
    pub fn sequence_progress(&self) -> Option<(usize, usize)> {
        self.playlist
            .as_ref()
            .map(|p| (p.total - p.queue.len(), p.total))
    }

    fn program_for(&self, mode: &ControllerMode) -> Result<Program, ControllerError> {
        Ok(match *mode {
            ControllerMode::Idle => Program::Constant(LedFrame::default()),
            ControllerMode::Active { id, battery_level } => {
                Program::Luceme(self.catalog.active(id, battery_level)?)
            }
            ControllerMode::Ocular(id) => Program::Luceme(self.catalog.ocular(id)),
            ControllerMode::Functional { color, intensity } => {
                if !(0.0..=1.0).contains(&intensity) {
                    return Err(ControllerError::Intensity(intensity));
                }
                let a = libm::round(color.a as f64 * intensity) as u8;
                Program::Constant(LedFrame::filled(color.with_alpha(a)))
            }
        })
    }

    fn switch(&mut self, mode: ControllerMode, program: Program) {
        self.mode = mode;
        self.program = program;
        self.mode_start_frame = self.frame_index;
    }

    /// Validates and installs `mode`; cancels any running sequence.
    pub fn set_mode(&mut self, mode: ControllerMode) -> Result<(), ControllerError> {
        let program = self.program_for(&mode)?;
        self.playlist = None;
        self.switch(mode, program);
        Ok(())
    }

    /// Plays `modes` back to back for `dwell_ms` each, then goes idle.
    pub fn play_sequence(&mut self, modes: Vec<ControllerMode>, dwell_ms: u32) -> Result<(), ControllerError> {
        if modes.is_empty() || dwell_ms == 0 {
            return Err(ControllerError::EmptySequence);
        }
        for m in &modes {
            self.program_for(m)?;
        }
        let dwell_frames = (dwell_ms as u64 * self.fps as u64).div_ceil(1000).max(1);
        let total = modes.len();
        let mut queue: VecDeque<ControllerMode> = modes.into();
        let first = queue.pop_front().expect("non-empty");
        let program = self.program_for(&first)?;
        self.switch(first, program);
        self.playlist = Some(Playlist {
            queue,
            dwell_frames,
            total,
        });
        Ok(())
    }

    fn advance_playlist(&mut self) {
        let Some(playlist) = &mut self.playlist else {
            return;
        };
        if self.frame_index - self.mode_start_frame < playlist.dwell_frames {
            return;
        }
        let next = playlist.queue.pop_front();
        let (mode, keep) = match next {
            Some(m) => (m, true),
            None => (ControllerMode::Idle, false),
        };
        if !keep {
            self.playlist = None;
        }
        // Entries were validated when the sequence was queued.
        let program = self.program_for(&mode).unwrap_or(Program::Constant(LedFrame::default()));
        self.switch(mode, program);
    }

    /// Frame the current mode shows at the next boundary, without emitting it.
    pub fn peek_frame(&self) -> LedFrame {
        let elapsed = frame_time_ms(self.frame_index - self.mode_start_frame, self.fps);
        self.program.sample(elapsed)
    }

    /// Emits the next frame boundary for both eyes.
    pub fn tick(&mut self) -> Emission {
        self.advance_playlist();
        let frame = self.peek_frame();
        let messages = EyeId::BOTH.map(|eye| {
            let slot = &mut self.next_sequence[eye.index()];
            let sequence = *slot;
            *slot = slot.wrapping_add(1);
            DriverMessage {
                eye,
                sequence,
                frame,
            }
        });
        let emission = Emission {
            frame_index: self.frame_index,
            timestamp_ms: frame_time_ms(self.frame_index, self.fps),
            messages,
        };
        self.frame_index += 1;
        emission
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{ColorName, Palette};
    use crate::lucemes::{render_gaze, GazeAngle};

    fn controller() -> Controller {
        Controller::new(Catalog::default(), 30).unwrap()
    }

    #[test]
    fn functional_white() {
        let mut c = controller();
        let white = Palette::default().get(ColorName::ScleraWhite);
        c.set_mode(ControllerMode::Functional { color: white, intensity: 1.0 }).unwrap();
        for _ in 0..10 {
            let e = c.tick();
            assert_eq!(e.messages[0].frame, LedFrame::filled(white));
        }
        assert!(c
            .set_mode(ControllerMode::Functional { color: white, intensity: 1.5 })
            .is_err());
        c.set_mode(ControllerMode::Functional { color: white, intensity: 0.5 }).unwrap();
        assert_eq!(c.tick().messages[1].frame.pixels[0].a, 90);
    }

    #[test]
    fn ocular_gaze_delegates() {
        let mut c = controller();
        c.tick();
        let g = GazeAngle::new(120).unwrap();
        c.set_mode(ControllerMode::Ocular(OcularLucemeId::Gaze(g))).unwrap();
        for k in 0..30u64 {
            let e = c.tick();
            let t = frame_time_ms(k, 30);
            assert_eq!(e.messages[0].frame, render_gaze(g, t));
        }
    }

    #[test]
    fn idle_is_dark() {
        let mut c = controller();
        c.set_mode(ControllerMode::active(ActiveLucemeId::Stay)).unwrap();
        c.tick();
        c.set_mode(ControllerMode::Idle).unwrap();
        assert!(c.tick().messages[0].frame.is_blank());
    }

    #[test]
    fn one_second_of_stay() {
        let mut c = controller();
        c.set_mode(ControllerMode::active(ActiveLucemeId::Stay)).unwrap();
        let emissions: Vec<Emission> = (0..30).map(|_| c.tick()).collect();
        for eye in EyeId::BOTH {
            let seqs: Vec<u32> = emissions.iter().map(|e| e.messages[eye.index()].sequence).collect();
            assert_eq!(seqs, (0..30).collect::<Vec<u32>>());
        }
        assert!(emissions.iter().all(|e| e.messages[0].frame == e.messages[1].frame));
        assert_eq!(emissions[29].timestamp_ms, 966);
    }

    #[test]
    fn mode_switch_restarts_luceme_time() {
        let mut a = controller();
        a.set_mode(ControllerMode::active(ActiveLucemeId::FollowMe)).unwrap();
        for _ in 0..7 {
            a.tick();
        }
        a.set_mode(ControllerMode::active(ActiveLucemeId::GoUp)).unwrap();
        let def = Catalog::default().active(ActiveLucemeId::GoUp, None).unwrap();
        for k in 0..20 {
            assert_eq!(a.tick().messages[0].frame, def.sample(frame_time_ms(k, 30)));
        }
    }

    #[test]
    fn sequence_plays_in_order_then_idles() {
        let mut c = controller();
        let modes = vec![
            ControllerMode::active(ActiveLucemeId::Stay),
            ControllerMode::active(ActiveLucemeId::Danger),
        ];
        c.play_sequence(modes, 100).unwrap();
        // 100 ms at 30 fps = 3 frames each
        let seen: Vec<ControllerMode> = (0..7).map(|_| {
            c.tick();
            c.mode()
        }).collect();
        assert_eq!(seen[0], ControllerMode::active(ActiveLucemeId::Stay));
        assert_eq!(seen[2], ControllerMode::active(ActiveLucemeId::Stay));
        assert_eq!(seen[3], ControllerMode::active(ActiveLucemeId::Danger));
        assert_eq!(seen[6], ControllerMode::Idle);
        assert!(c.sequence_progress().is_none());
        assert!(c.play_sequence(vec![], 100).is_err());
    }

    #[test]
    fn bad_fps_rejected() {
        assert!(Controller::new(Catalog::default(), 0).is_err());
        assert!(Controller::new(Catalog::default(), 121).is_err());
    }
}
