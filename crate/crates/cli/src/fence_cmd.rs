use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use watercare_core::pgm;
use watercare_core::protocol::{Encoder, Message, SYS_FENCE_CAMERA};
use watercare_core::scenario::FenceConfig;
use watercare_core::{Alert, FencePolyline, FenceState, GrayFrame, Link, TcpLink};

use crate::args::FenceArgs;
use crate::error::{io_error, CliError};
use crate::load_scenario;

/// Frames from disk fed one at a time through a [`FenceState`]. Frame `i`
/// of the sorted listing is stamped `i * frame_interval_ms`.
pub struct FencePipeline {
    files: Vec<PathBuf>,
    next: usize,
    interval_ms: u64,
    state: Option<FenceState>,
    config: FenceConfig,
}

impl FencePipeline {
    pub fn open(config: &FenceConfig) -> Result<Self, CliError> {
        let dir = config
            .frames_dir
            .as_ref()
            .ok_or_else(|| CliError::Validation("fence needs a frames directory".into()))?;
        if config.frame_interval_ms == 0 {
            return Err(CliError::Validation("frame interval must be > 0 ms".into()));
        }
        let files = pgm::list_frames(dir)?;
        let mut pipeline = Self {
            files,
            next: 0,
            interval_ms: config.frame_interval_ms,
            state: None,
            config: config.clone(),
        };
        if let Some(bg) = &config.background {
            let frame = pgm::read(bg, 0, 0)?;
            pipeline.state = Some(pipeline.make_state(frame)?);
        }
        Ok(pipeline)
    }

    fn make_state(&self, background: GrayFrame) -> Result<FenceState, CliError> {
        let c = &self.config;
        let fence = FencePolyline::new(
            FencePolyline::parse_vertices(&c.geometry)?,
            c.protected_side,
            c.direction,
        )?;
        Ok(FenceState::new(background, fence, c.params, c.camera_id))
    }

    pub fn frame_count(&self) -> usize {
        self.files.len()
    }

    pub fn count(&self) -> u64 {
        self.state.as_ref().map_or(0, |s| s.count)
    }

    /// Timestamp of the next unprocessed frame.
    pub fn next_due_ms(&self) -> Option<u64> {
        (self.next < self.files.len()).then(|| self.next as u64 * self.interval_ms)
    }

    /// Processes the next frame, if any.
    pub fn step(&mut self) -> Result<Option<Vec<Alert>>, CliError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        let index = self.next as u64;
        let frame = pgm::read(path, index, index * self.interval_ms)?;
        self.next += 1;
        if self.state.is_none() {
            self.state = Some(self.make_state(frame.clone())?);
        }
        let state = self.state.as_mut().expect("initialised");
        let alerts = state
            .process_frame(&frame)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Ok(Some(alerts))
    }

    /// Processes every frame due at or before `t_ms`.
    pub fn advance_to(&mut self, t_ms: u64) -> Result<Vec<Alert>, CliError> {
        let mut out = Vec::new();
        while self.next_due_ms().is_some_and(|due| due <= t_ms) {
            out.extend(self.step()?.unwrap_or_default());
        }
        Ok(out)
    }
}

pub fn alert_message(alert: &Alert) -> Message {
    Message::FenceAlert {
        t_ms: alert.t_ms.min(u32::MAX as u64) as u32,
        camera_id: alert.camera_id,
        count: alert.count.min(u16::MAX as u64) as u16,
    }
}

/// Encoder speaking as fence camera `camera_id`.
pub fn camera_encoder(camera_id: u8) -> Encoder {
    Encoder::new(SYS_FENCE_CAMERA, camera_id)
}

fn resolve(config: Option<&Path>, args: &FenceArgs) -> Result<FenceConfig, CliError> {
    let mut cfg = match config {
        Some(p) => load_scenario(p)?.fence.unwrap_or_default(),
        None => FenceConfig::default(),
    };
    if let Some(d) = &args.frames {
        cfg.frames_dir = Some(d.clone());
    }
    if let Some(g) = &args.fence {
        cfg.geometry = g.clone();
    }
    if let Some(s) = args.protected {
        cfg.protected_side = s.into();
    }
    if let Some(d) = args.direction {
        cfg.direction = d.into();
    }
    if let Some(b) = &args.background {
        cfg.background = Some(b.clone());
    }
    if let Some(c) = args.camera_id {
        cfg.camera_id = c;
    }
    if let Some(i) = args.interval {
        cfg.frame_interval_ms = i;
    }
    if cfg.geometry.trim().is_empty() {
        return Err(CliError::Validation("fence needs --fence or a [fence] geometry".into()));
    }
    // surface geometry errors before touching any frame
    FencePolyline::new(
        FencePolyline::parse_vertices(&cfg.geometry)?,
        cfg.protected_side,
        cfg.direction,
    )?;
    Ok(cfg)
}

pub fn run(config: Option<&Path>, args: FenceArgs) -> Result<(), CliError> {
    let cfg = resolve(config, &args)?;
    let mut link = match &args.gcs {
        Some(addr) => Some(
            TcpLink::connect(addr.as_str())
                .map_err(|e| CliError::Link(format!("cannot reach ground station at {addr}: {e}")))?,
        ),
        None => None,
    };
    let mut pipeline = FencePipeline::open(&cfg)?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| io_error(p.display(), e))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let mut encoder = camera_encoder(cfg.camera_id);
    let write_err = |e| io_error("writing alerts", e);
    while let Some(alerts) = pipeline.step()? {
        for alert in alerts {
            serde_json::to_writer(&mut out, &alert).map_err(|e| write_err(e.into()))?;
            out.write_all(b"\n").map_err(write_err)?;
            if let Some(link) = link.as_mut() {
                link.send(&encoder.encode(&alert_message(&alert)))
                    .map_err(|e| CliError::Link(format!("sending alert: {e}")))?;
            }
        }
    }
    out.flush().map_err(write_err)?;
    tracing::info!(frames = pipeline.frame_count(), count = pipeline.count(), "fence done");
    Ok(())
}
