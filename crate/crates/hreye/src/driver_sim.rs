//! Simulated pair of eyes: decodes driver messages, keeps per-eye state under
//! a lock, and renders snapshots as binary PPM images.

use std::f64::consts::PI;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, RwLock};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use hreye_core::driver::{DriverError, Snapshot};
use hreye_core::geometry::{Ring, RingGeometry};
use hreye_core::protocol::{self, DecodeError, FrameLog, MESSAGE_LEN};
use hreye_core::{ApplyOutcome, DriverMessage, EyeId, EyeState, LedFrame};

pub const EYE_SIZE: usize = 256;
pub const OUTER_RADIUS: f64 = 100.0;
pub const INNER_RADIUS: f64 = 60.0;
pub const DISC_RADIUS: f64 = 9.0;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderTarget {
    Eye(EyeId),
    Both,
}

impl std::str::FromStr for RenderTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "0" => Ok(RenderTarget::Eye(EyeId::Left)),
            "right" | "1" => Ok(RenderTarget::Eye(EyeId::Right)),
            "both" => Ok(RenderTarget::Both),
            _ => Err(format!("unknown render target `{s}` (left, right or both)")),
        }
    }
}

/// Counters from one byte-stream ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub accepted: u64,
    pub stale: u64,
    pub rejected: u64,
    /// Bytes left over after the last whole message.
    pub trailing: usize,
}

#[derive(Debug)]
pub struct DriverSim {
    eyes: [RwLock<EyeState>; 2],
    started: Instant,
}

impl Default for DriverSim {
    fn default() -> Self {
        Self::new()
    }
}

impl DriverSim {
    pub fn new() -> Self {
        DriverSim {
            eyes: EyeId::BOTH.map(|e| RwLock::new(EyeState::new(e))),
            started: Instant::now(),
        }
    }

    fn eye(&self, eye: EyeId) -> &RwLock<EyeState> {
        &self.eyes[eye.index()]
    }

    fn now_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn apply(&self, msg: &DriverMessage) -> Result<ApplyOutcome, DriverError> {
        let now = self.now_ms();
        self.apply_at(msg, now)
    }

    /// Like [`apply`](Self::apply) with an explicit timestamp (log replay).
    pub fn apply_at(&self, msg: &DriverMessage, now_ms: u64) -> Result<ApplyOutcome, DriverError> {
        // poisoning can only come from a panic inside EyeState::apply, which
        // leaves the state untouched
        let mut state = self.eye(msg.eye).write().unwrap_or_else(|e| e.into_inner());
        state.apply(msg, now_ms)
    }

    pub fn apply_bytes(&self, bytes: &[u8]) -> Result<ApplyOutcome, SimError> {
        let msg = protocol::decode(bytes)?;
        Ok(self.apply(&msg)?)
    }

    pub fn snapshot(&self, eye: EyeId) -> Snapshot {
        self.eye(eye).read().unwrap_or_else(|e| e.into_inner()).snapshot()
    }

    pub fn set_calibration(&self, eye: EyeId, offset_deg: f64) {
        self.eye(eye).write().unwrap_or_else(|e| e.into_inner()).calibration_offset_deg = offset_deg;
    }

    pub fn calibration(&self, eye: EyeId) -> f64 {
        self.eye(eye).read().unwrap_or_else(|e| e.into_inner()).calibration_offset_deg
    }

    pub fn geometry(&self, eye: EyeId) -> RingGeometry {
        RingGeometry::with_offset(self.calibration(eye))
    }

    /// Consumes back-to-back 172-byte messages until EOF. Undecodable
    /// messages are counted and skipped; the stream stays aligned.
    pub fn ingest<R: Read>(&self, mut reader: R) -> io::Result<IngestStats> {
        let mut stats = IngestStats::default();
        let mut buf = [0u8; MESSAGE_LEN];
        loop {
            let mut filled = 0;
            while filled < MESSAGE_LEN {
                match reader.read(&mut buf[filled..]) {
                    Ok(0) => {
                        stats.trailing = filled;
                        return Ok(stats);
                    }
                    Ok(n) => filled += n,
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                    Err(e) => return Err(e),
                }
            }
            match self.apply_bytes(&buf) {
                Ok(ApplyOutcome::Accepted) => stats.accepted += 1,
                Ok(ApplyOutcome::Stale) => stats.stale += 1,
                Err(e) => {
                    log::warn!("dropping message: {e}");
                    stats.rejected += 1;
                }
            }
        }
    }

    /// Applies every record of a frame log with its recorded timestamp.
    pub fn replay(&self, log: &FrameLog) -> Result<IngestStats, DriverError> {
        let mut stats = IngestStats::default();
        for rec in &log.records {
            match self.apply_at(&rec.message, rec.timestamp_ms)? {
                ApplyOutcome::Accepted => stats.accepted += 1,
                ApplyOutcome::Stale => stats.stale += 1,
            }
        }
        Ok(stats)
    }

    /// Accepts TCP connections on `addr`, one ingest thread per connection.
    pub fn listen(self: &Arc<Self>, addr: &str) -> io::Result<(SocketAddr, JoinHandle<()>)> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let sim = Arc::clone(self);
        let handle = thread::spawn(move || {
            for conn in listener.incoming() {
                let Ok(stream) = conn else { continue };
                let sim = Arc::clone(&sim);
                thread::spawn(move || match sim.ingest(stream) {
                    Ok(stats) => log::debug!("connection closed: {stats:?}"),
                    Err(e) => log::warn!("connection failed: {e}"),
                });
            }
        });
        Ok((local, handle))
    }

    pub fn render_image(&self, target: RenderTarget) -> Vec<u8> {
        match target {
            RenderTarget::Eye(eye) => render_ppm(&[self.snapshot(eye).frame]),
            RenderTarget::Both => render_ppm(&EyeId::BOTH.map(|e| self.snapshot(e).frame)),
        }
    }
}

/// Client side of the byte-stream endpoint.
#[derive(Debug)]
pub struct DeviceLink {
    stream: TcpStream,
}

impl DeviceLink {
    pub fn connect(addr: &str) -> io::Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(DeviceLink { stream })
    }

    pub fn send(&mut self, msg: &DriverMessage) -> io::Result<()> {
        self.stream.write_all(&protocol::encode(msg))
    }
}

/// Centre of an LED disc in a 256×256 eye tile, y pointing down.
pub fn disc_center(ring: Ring, index: usize) -> (f64, f64) {
    let radius = match ring {
        Ring::Outer => OUTER_RADIUS,
        Ring::Inner => INNER_RADIUS,
    };
    let theta = (index as f64 * ring.spacing_deg()) * PI / 180.0;
    let c = EYE_SIZE as f64 / 2.0;
    (c + radius * theta.cos(), c - radius * theta.sin())
}

/// P6 image of `frames` side by side, one 256×256 tile each.
pub fn render_ppm(frames: &[LedFrame]) -> Vec<u8> {
    let width = EYE_SIZE * frames.len();
    let height = EYE_SIZE;
    let mut rgb = vec![0u8; width * height * 3];
    let r2 = DISC_RADIUS * DISC_RADIUS;
    for (tile, frame) in frames.iter().enumerate() {
        for ring in Ring::ALL {
            for addr in ring.addresses() {
                let color = frame.get(addr).rendered();
                if color == [0, 0, 0] {
                    continue;
                }
                let (cx, cy) = disc_center(ring, addr.index());
                let y0 = (cy - DISC_RADIUS).floor().max(0.0) as usize;
                let y1 = ((cy + DISC_RADIUS).ceil() as usize).min(height - 1);
                let x0 = (cx - DISC_RADIUS).floor().max(0.0) as usize;
                let x1 = ((cx + DISC_RADIUS).ceil() as usize).min(EYE_SIZE - 1);
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                        if dx * dx + dy * dy <= r2 {
                            let at = (y * width + tile * EYE_SIZE + x) * 3;
                            rgb[at..at + 3].copy_from_slice(&color);
                        }
                    }
                }
            }
        }
    }
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(&rgb);
    out
}

#[derive(Debug, thiserror::Error)]
#[error("not a binary PPM: {0}")]
pub struct PpmError(String);

/// A decoded P6 image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Ppm {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let at = (y * self.width + x) * 3;
        [self.rgb[at], self.rgb[at + 1], self.rgb[at + 2]]
    }

    /// Reads an eye tile back into a frame by sampling each disc centre.
    /// Colours come back pre-scaled; alpha is taken as the brightest channel,
    /// which is exact for palette colours that have a full-scale channel.
    pub fn sample_frame(&self, tile: usize) -> LedFrame {
        let mut frame = LedFrame::default();
        for ring in Ring::ALL {
            for addr in ring.addresses() {
                let (cx, cy) = disc_center(ring, addr.index());
                let (x, y) = (tile * EYE_SIZE + cx.round() as usize, cy.round() as usize);
                let [r, g, b] = self.pixel(x, y);
                if [r, g, b] != [0, 0, 0] {
                    frame.set(addr, hreye_core::ColorRGBA::new(r, g, b, r.max(g).max(b)));
                }
            }
        }
        frame
    }
}

pub fn parse_ppm(bytes: &[u8]) -> Result<Ppm, PpmError> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(PpmError("truncated header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1; // single whitespace before the raster
    if fields[0] != "P6" {
        return Err(PpmError(format!("magic `{}`", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| PpmError(format!("bad number `{s}`")));
    let (width, height, max) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if max != 255 {
        return Err(PpmError(format!("maxval {max}")));
    }
    let need = width * height * 3;
    let rgb = bytes.get(pos..pos + need).ok_or_else(|| PpmError("short raster".into()))?;
    Ok(Ppm {
        width,
        height,
        rgb: rgb.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hreye_core::geometry::LedAddress;
    use hreye_core::{ColorName, ColorRGBA, Palette};

    fn msg(eye: EyeId, sequence: u32, frame: LedFrame) -> DriverMessage {
        DriverMessage { eye, sequence, frame }
    }

    #[test]
    fn dark_state_renders_black() {
        let sim = DriverSim::new();
        let img = parse_ppm(&sim.render_image(RenderTarget::Both)).unwrap();
        assert_eq!((img.width, img.height), (512, 256));
        assert!(img.rgb.iter().all(|&b| b == 0));
    }

    #[test]
    fn single_white_disc_area() {
        let sim = DriverSim::new();
        let mut frame = LedFrame::default();
        let white = ColorRGBA::new(255, 255, 255, 255);
        frame.set(LedAddress::new(Ring::Outer, 0).unwrap(), white);
        sim.apply(&msg(EyeId::Left, 0, frame)).unwrap();
        let img = parse_ppm(&sim.render_image(RenderTarget::Eye(EyeId::Left))).unwrap();
        let lit = img.rgb.chunks(3).filter(|p| p != &[0, 0, 0]).count() as f64;
        let area = PI * DISC_RADIUS * DISC_RADIUS;
        assert!((lit - area).abs() <= 0.1 * area, "lit {lit}");
        // disc sits to the right of centre
        assert_eq!(img.pixel(228, 128), [255, 255, 255]);
        assert_eq!(img.sample_frame(0).lit().collect::<Vec<_>>(), [LedAddress::new(Ring::Outer, 0).unwrap()]);
    }

    #[test]
    fn ingest_counts_and_skips_corruption() {
        let sim = DriverSim::new();
        let f = LedFrame::filled(Palette::default().get(ColorName::AffirmGreen));
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&protocol::encode(&msg(EyeId::Left, 1, f)));
        let mut bad = protocol::encode(&msg(EyeId::Right, 1, f));
        bad[40] ^= 0xff;
        bytes.extend_from_slice(&bad);
        bytes.extend_from_slice(&protocol::encode(&msg(EyeId::Left, 0, f)));
        bytes.extend_from_slice(&[1, 2, 3]);
        let stats = sim.ingest(&bytes[..]).unwrap();
        assert_eq!(
            stats,
            IngestStats {
                accepted: 1,
                stale: 1,
                rejected: 1,
                trailing: 3
            }
        );
        assert_eq!(sim.snapshot(EyeId::Left).frame, f);
        assert!(sim.snapshot(EyeId::Right).frame.is_blank());
    }

    #[test]
    fn tcp_endpoint_delivers() {
        let sim = Arc::new(DriverSim::new());
        let (addr, _h) = sim.listen("127.0.0.1:0").unwrap();
        let f = LedFrame::filled(Palette::default().get(ColorName::ProblemRed));
        {
            let mut link = DeviceLink::connect(&addr.to_string()).unwrap();
            link.send(&msg(EyeId::Right, 7, f)).unwrap();
        }
        let deadline = Instant::now() + std::time::Duration::from_secs(5);
        while sim.snapshot(EyeId::Right).sequence != Some(7) {
            assert!(Instant::now() < deadline, "message never arrived");
            thread::sleep(std::time::Duration::from_millis(5));
        }
        assert_eq!(sim.snapshot(EyeId::Right).frame, f);
    }

    #[test]
    fn ppm_parser_rejects_garbage() {
        assert!(parse_ppm(b"P3\n1 1\n255\n\0\0\0").is_err());
        assert!(parse_ppm(b"P6\n2 2\n255\n\0").is_err());
        let ok = parse_ppm(b"P6\n# note\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(ok.pixel(0, 0), [1, 2, 3]);
    }
}
