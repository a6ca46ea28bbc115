//! `hreye` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use hreye_core::animation::{frame_count, DEFAULT_FPS};
use hreye_core::lucemes::{estimate_gaze, quantize_gaze, LucemeId};
use hreye_core::metrics::{adjust_time, Report};
use hreye_core::protocol::framelog_read;
use hreye_core::{ActiveLucemeId, Catalog, EyeId, GazeAngle, OcularLucemeId};

use crate::catalog_dir::{dump_catalog, load_catalog};
use crate::driver_sim::{parse_ppm, DeviceLink, DriverSim, RenderTarget, EYE_SIZE};
use crate::responses::{read_ratings, read_responses};
use crate::service::{self, SchedulerConfig};
use crate::session::{mode_for, play_headless, Device, Session};

#[derive(Debug, Parser)]
#[command(name = "hreye", version, about = "Luceme player, device simulator and study scoring")]
pub struct Cli {
    /// Directory with `palette.conf` and `*.luceme` overrides.
    #[arg(long, global = true, env = "HREYE_CATALOG_DIR")]
    pub catalog_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct LucemeArgs {
    /// Active luceme name, ocular gesture, or `Gaze<deg>`.
    pub id: String,
    /// Gaze angle in degrees (multiple of 30); selects the Gaze ocular luceme.
    #[arg(long)]
    pub gaze: Option<i64>,
    /// Battery level in [0, 1] for BatteryLevel.
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    pub fps: u32,
    #[arg(long, default_value_t = 1)]
    pub repeats: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ExportFormat {
    PpmSeq,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReportFormat {
    Text,
    Kv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List active and ocular lucemes.
    List,
    /// Play a luceme headlessly into a frame log.
    Play {
        #[command(flatten)]
        luceme: LucemeArgs,
        /// Frame log path (default `<id>.hrlog`).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also stream messages to a byte-stream endpoint.
        #[arg(long)]
        device: Option<String>,
    },
    /// Render a luceme to numbered PPM frames.
    Export {
        #[command(flatten)]
        luceme: LucemeArgs,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "ppm-seq")]
        format: ExportFormat,
        /// left, right or both.
        #[arg(long, default_value = "both")]
        target: RenderTarget,
        /// Calibration offsets applied by the simulated driver.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        left_offset: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        right_offset: f64,
    },
    /// Run the player service with an embedded simulated driver.
    Serve {
        #[arg(long, env = "HREYE_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long, default_value_t = DEFAULT_FPS)]
        fps: u32,
        /// Send frames to this byte-stream endpoint instead of the embedded driver.
        #[arg(long)]
        device: Option<String>,
        /// Accept driver messages from other controllers on this address.
        #[arg(long)]
        driver_listen: Option<String>,
        /// Console build to serve at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Re-render a frame log to images.
    Replay {
        log: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value = "both")]
        target: RenderTarget,
    },
    /// Score a response CSV.
    Score {
        responses: PathBuf,
        /// Mean swim time added to OLED answers.
        #[arg(long)]
        swim_time: Option<f64>,
        /// Rating matrix for Fleiss' kappa.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Estimate the gaze direction shown in a PPM image or the last frame of a log.
    DecodeGaze {
        input: PathBuf,
        #[arg(long, default_value = "left")]
        eye: RenderTarget,
    },
    /// Write the built-in catalog as editable files.
    DumpCatalog { out: PathBuf },
    /// Run only the simulated driver on a byte-stream endpoint.
    Device {
        #[arg(long, default_value = "127.0.0.1:7170")]
        listen: String,
    },
}

impl LucemeArgs {
    fn luceme_id(&self) -> anyhow::Result<LucemeId> {
        if let Some(deg) = self.gaze {
            let key = self.id.to_ascii_lowercase();
            if !(key == "gaze" || key == "ocular") {
                bail!("--gaze only applies to the Gaze luceme, not `{}`", self.id);
            }
            return Ok(LucemeId::Ocular(OcularLucemeId::Gaze(GazeAngle::new(deg)?)));
        }
        Ok(self.id.parse()?)
    }
}

fn catalog(cli: &Cli) -> anyhow::Result<Catalog> {
    match &cli.catalog_dir {
        Some(dir) => load_catalog(dir),
        None => Ok(Catalog::default()),
    }
}

fn write_numbered(dir: &Path, index: usize, bytes: &[u8]) -> anyhow::Result<()> {
    let path = dir.join(format!("frame_{index:05}.ppm"));
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Runs one parsed command line, writing human output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match &cli.command {
        Command::List => {
            writeln!(out, "active lucemes:")?;
            for id in ActiveLucemeId::ALL {
                writeln!(out, "  {:<14} {}", id.name(), id.gloss())?;
            }
            writeln!(out, "ocular lucemes:")?;
            for id in OcularLucemeId::all() {
                writeln!(out, "  {:<14} {}", id.to_string(), id.gloss())?;
            }
        }
        Command::Play { luceme, out: path, device } => {
            let id = luceme.luceme_id()?;
            let device = match device {
                Some(addr) => Device::Link(DeviceLink::connect(addr).with_context(|| format!("connecting to {addr}"))?),
                None => Device::Sim(Arc::new(DriverSim::new())),
            };
            let mut session = play_headless(catalog(&cli)?, id, luceme.level, luceme.fps, luceme.repeats, device)?;
            let path = path.clone().unwrap_or_else(|| PathBuf::from(format!("{id}.hrlog")));
            let bytes = session.take_log().unwrap_or_default();
            fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
            let frames = session.controller().frame_index();
            writeln!(out, "{id}: {frames} frames per eye at {} fps -> {}", luceme.fps, path.display())?;
            let [l, r] = session.dropped();
            if l + r > 0 {
                writeln!(out, "dropped {l} left / {r} right")?;
            }
        }
        Command::Export {
            luceme,
            out: dir,
            format: ExportFormat::PpmSeq,
            target,
            left_offset,
            right_offset,
        } => {
            let id = luceme.luceme_id()?;
            let catalog = catalog(&cli)?;
            let def = catalog.luceme(id, luceme.level)?;
            let frames = frame_count(def.duration_ms(), luceme.fps, luceme.repeats)?;
            let sim = Arc::new(DriverSim::new());
            sim.set_calibration(EyeId::Left, *left_offset);
            sim.set_calibration(EyeId::Right, *right_offset);
            let mut session = Session::new(catalog, luceme.fps, Device::Sim(Arc::clone(&sim)))?;
            session.set_mode(mode_for(id, luceme.level))?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for k in 0..frames as usize {
                session.tick();
                write_numbered(dir, k, &sim.render_image(*target))?;
            }
            writeln!(out, "{id}: wrote {frames} frames to {}", dir.display())?;
        }
        Command::Serve {
            listen,
            fps,
            device,
            driver_listen,
            static_dir,
        } => {
            let catalog = catalog(&cli)?;
            let sim = Arc::new(DriverSim::new());
            let (dev, sim_view) = match device {
                Some(addr) => (
                    Device::Link(DeviceLink::connect(addr).with_context(|| format!("connecting to {addr}"))?),
                    None,
                ),
                None => (Device::Sim(Arc::clone(&sim)), Some(Arc::clone(&sim))),
            };
            if let Some(addr) = driver_listen {
                let (bound, _) = sim.listen(addr)?;
                log::info!("driver accepting messages on {bound}");
            }
            let session = Session::new(catalog, *fps, dev)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = service::spawn_scheduler(session, sim_view, SchedulerConfig::default());
                service::serve(listen, handle, static_dir.clone()).await
            })?;
        }
        Command::Replay { log, out: dir, target } => {
            let bytes = fs::read(log).with_context(|| format!("reading {}", log.display()))?;
            let parsed = framelog_read(&bytes)?;
            if parsed.truncated {
                log::warn!("{}: last record truncated", log.display());
            }
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let sim = DriverSim::new();
            let mut written = 0;
            let records = &parsed.records;
            // one image per timestamp, after both eyes' messages are applied
            for (i, rec) in records.iter().enumerate() {
                sim.apply_at(&rec.message, rec.timestamp_ms)?;
                let last_of_group = records.get(i + 1).is_none_or(|n| n.timestamp_ms != rec.timestamp_ms);
                if last_of_group {
                    write_numbered(dir, written, &sim.render_image(*target))?;
                    written += 1;
                }
            }
            writeln!(out, "replayed {} records into {written} images in {}", records.len(), dir.display())?;
        }
        Command::Score {
            responses,
            swim_time,
            ratings,
            format,
        } => {
            let file = fs::File::open(responses).with_context(|| format!("reading {}", responses.display()))?;
            let mut records = read_responses(file).with_context(|| format!("{}", responses.display()))?;
            if let Some(s) = swim_time {
                records = adjust_time(&records, *s)?;
            }
            let matrix = match ratings {
                Some(p) => {
                    let f = fs::File::open(p).with_context(|| format!("reading {}", p.display()))?;
                    Some(read_ratings(f).with_context(|| format!("{}", p.display()))?)
                }
                None => None,
            };
            let report = Report::build(&records, matrix.as_ref())?;
            match format {
                ReportFormat::Text => write!(out, "{}", report.to_text())?,
                ReportFormat::Kv => write!(out, "{}", report.to_key_values())?,
            }
        }
        Command::DecodeGaze { input, eye } => {
            let bytes = fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let frame = if bytes.starts_with(b"P6") {
                let img = parse_ppm(&bytes)?;
                let tile = match (eye, img.width / EYE_SIZE) {
                    (RenderTarget::Eye(EyeId::Right), 2) => 1,
                    _ => 0,
                };
                img.sample_frame(tile)
            } else {
                let log = framelog_read(&bytes)?;
                let want = match eye {
                    RenderTarget::Eye(e) => *e,
                    RenderTarget::Both => EyeId::Left,
                };
                let Some(rec) = log.records.iter().rev().find(|r| r.message.eye == want) else {
                    bail!("{}: no frames for the {want} eye", input.display());
                };
                rec.message.frame
            };
            let deg = estimate_gaze(&frame)?;
            writeln!(out, "{deg:.2} deg (Gaze{})", quantize_gaze(deg)?)?;
        }
        Command::DumpCatalog { out: dir } => {
            dump_catalog(&catalog(&cli)?, dir)?;
            writeln!(out, "wrote catalog to {}", dir.display())?;
        }
        Command::Device { listen } => {
            let sim = Arc::new(DriverSim::new());
            let (bound, handle) = sim.listen(listen)?;
            writeln!(out, "simulated driver listening on {bound}")?;
            out.flush()?;
            let _ = handle.join();
        }
    }
    Ok(())
}

/// Process entry point: parses arguments, runs, maps errors to exit status.
pub fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let cause = format!("{e:#}").replace('\n', " ");
            eprintln!("hreye: {cause}");
            std::process::ExitCode::FAILURE
        }
    }
}
