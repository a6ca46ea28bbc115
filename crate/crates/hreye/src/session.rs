//! A player session: the controller, where its frames go, and an optional
//! frame-log recording. Synchronous; the service scheduler drives it on a
//! timer and the CLI drives it flat out.

use std::sync::Arc;

use hreye_core::animation::frame_count;
use hreye_core::controller::{ControllerError, Emission};
use hreye_core::lucemes::{LucemeError, LucemeId};
use hreye_core::protocol::FrameLogWriter;
use hreye_core::{Catalog, Controller, ControllerMode, DriverMessage, EyeId, LedFrame};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::driver_sim::{DeviceLink, DriverSim};

/// Where emitted messages are delivered.
#[derive(Debug, Default)]
pub enum Device {
    #[default]
    None,
    Sim(Arc<DriverSim>),
    Link(DeviceLink),
}

impl Device {
    fn deliver(&mut self, msg: &DriverMessage) -> Result<(), String> {
        match self {
            Device::None => Err("no device connected".into()),
            Device::Sim(sim) => sim.apply(msg).map(|_| ()).map_err(|e| e.to_string()),
            Device::Link(link) => link.send(msg).map_err(|e| e.to_string()),
        }
    }

    pub fn is_connected(&self) -> bool {
        !matches!(self, Device::None)
    }
}

#[derive(Debug)]
pub struct Session {
    controller: Controller,
    device: Device,
    log: Option<FrameLogWriter>,
    dropped: [u64; 2],
    last: [DriverMessage; 2],
}

/// Result of resolving a trial sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Realized {
    pub order: Vec<LucemeId>,
}

impl Session {
    pub fn new(catalog: Catalog, fps: u32, device: Device) -> Result<Self, ControllerError> {
        Ok(Session {
            controller: Controller::new(catalog, fps)?,
            device,
            log: None,
            dropped: [0; 2],
            last: EyeId::BOTH.map(|eye| DriverMessage {
                eye,
                sequence: 0,
                frame: LedFrame::default(),
            }),
        })
    }

    /// Starts appending every emitted message to an in-memory frame log.
    pub fn record(&mut self) {
        self.log.get_or_insert_with(FrameLogWriter::new);
    }

    pub fn log_bytes(&self) -> Option<&[u8]> {
        self.log.as_ref().map(|l| l.as_bytes())
    }

    pub fn take_log(&mut self) -> Option<Vec<u8>> {
        self.log.take().map(|l| l.into_bytes())
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dropped(&self) -> [u64; 2] {
        self.dropped
    }

    /// Most recently emitted message per eye (sequence 0 and dark before the
    /// first tick).
    pub fn last_emitted(&self) -> [DriverMessage; 2] {
        self.last
    }

    /// Records the mode even with no device connected; frames emitted while
    /// disconnected are counted as dropped.
    pub fn set_mode(&mut self, mode: ControllerMode) -> Result<(), ControllerError> {
        self.controller.set_mode(mode)?;
        if !self.device.is_connected() {
            log::warn!("mode set to {mode} with no device connected; frames will be dropped");
        }
        Ok(())
    }

    /// Resolves `ids` (shuffled with `seed` when `randomize`) and plays them
    /// back to back for `dwell_ms` each.
    pub fn play_sequence(
        &mut self,
        ids: &[LucemeId],
        dwell_ms: u32,
        randomize: bool,
        seed: u64,
    ) -> Result<Realized, ControllerError> {
        let order = realize_order(ids, randomize, seed);
        let modes = order.iter().map(|&id| mode_for(id, None)).collect();
        self.controller.play_sequence(modes, dwell_ms)?;
        Ok(Realized { order })
    }

    pub fn tick(&mut self) -> Emission {
        let emission = self.controller.tick();
        for msg in &emission.messages {
            if let Err(e) = self.device.deliver(msg) {
                let n = &mut self.dropped[msg.eye.index()];
                if *n == 0 {
                    log::warn!("dropping frames: {e}");
                }
                *n += 1;
            }
            if let Some(log) = &mut self.log {
                log.push(emission.timestamp_ms, msg)
                    .expect("controller emits in order");
            }
        }
        self.last = emission.messages;
        emission
    }
}

pub fn mode_for(id: LucemeId, battery_level: Option<f64>) -> ControllerMode {
    match id {
        LucemeId::Active(id) => ControllerMode::Active { id, battery_level },
        LucemeId::Ocular(id) => ControllerMode::Ocular(id),
    }
}

/// Seeded Fisher–Yates over `ids`; identity when not randomizing.
pub fn realize_order(ids: &[LucemeId], randomize: bool, seed: u64) -> Vec<LucemeId> {
    let mut order = ids.to_vec();
    if randomize {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
}

/// Plays one luceme for `repeats` cycles as fast as possible and returns the
/// session (with its recorded log).
pub fn play_headless(
    catalog: Catalog,
    id: LucemeId,
    battery_level: Option<f64>,
    fps: u32,
    repeats: u32,
    device: Device,
) -> anyhow::Result<Session> {
    let def = catalog.luceme(id, battery_level)?;
    let frames = frame_count(def.duration_ms(), fps, repeats).map_err(LucemeError::from)?;
    let mut session = Session::new(catalog, fps, device)?;
    session.record();
    session.set_mode(mode_for(id, battery_level))?;
    for _ in 0..frames {
        session.tick();
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hreye_core::protocol::framelog_read;
    use hreye_core::ActiveLucemeId;

    #[test]
    fn stay_for_two_seconds() {
        let sim = Arc::new(DriverSim::new());
        let s = play_headless(
            Catalog::default(),
            LucemeId::Active(ActiveLucemeId::Stay),
            None,
            30,
            1,
            Device::Sim(Arc::clone(&sim)),
        )
        .unwrap();
        let log = framelog_read(s.log_bytes().unwrap()).unwrap();
        assert_eq!(log.records.len(), 120);
        assert_eq!(s.dropped(), [0, 0]);
        assert_eq!(sim.snapshot(EyeId::Left).sequence, Some(59));
    }

    #[test]
    fn no_device_counts_drops_but_keeps_mode() {
        let mut s = Session::new(Catalog::default(), 30, Device::None).unwrap();
        let mode = ControllerMode::active(ActiveLucemeId::Danger);
        s.set_mode(mode).unwrap();
        for _ in 0..5 {
            s.tick();
        }
        assert_eq!(s.controller().mode(), mode);
        assert_eq!(s.dropped(), [5, 5]);
    }

    #[test]
    fn seeded_order_is_a_permutation() {
        let ids: Vec<LucemeId> = ActiveLucemeId::ALL.iter().map(|&i| LucemeId::Active(i)).collect();
        let a = realize_order(&ids, true, 7);
        assert_eq!(a, realize_order(&ids, true, 7));
        assert_ne!(a, ids);
        let mut sorted = a.clone();
        sorted.sort_by_key(|id| id.to_string());
        let mut expect = ids.clone();
        expect.sort_by_key(|id| id.to_string());
        assert_eq!(sorted, expect);
        assert_eq!(realize_order(&ids, false, 7), ids);
    }
}
