use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use watercare_core::nav::Mission;
use watercare_core::{
    Command, Link, Onboard, RunReport, ScenarioConfig, SimRunner, TcpLink, Vec2, Waypoint,
};
use watercare_gcs::{EventLog, Gcs, GcsConfig, LoopbackLink, ManualClock, Ticket};

use crate::args::SimArgs;
use crate::error::{io_error, CliError};
use crate::fence_cmd::{alert_message, camera_encoder, FencePipeline};
use crate::load_scenario;

/// Round trips allowed for one synchronous handshake before giving up.
const HANDSHAKE_ROUNDS: usize = 64;

pub fn run(config: Option<&Path>, seed: Option<u64>, args: SimArgs) -> Result<(), CliError> {
    let path = args.scenario.as_deref().or(config);
    let mut cfg = match path {
        Some(p) => load_scenario(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = args.duration {
        cfg.run.duration_s = d;
    }
    if args.realtime {
        cfg.run.realtime = true;
    }
    cfg.validate()?;

    let started = Instant::now();
    let (report, events) = if args.loopback {
        run_loopback(&cfg, &args)?
    } else {
        run_remote(&cfg, &args)?
    };
    let mut report = report;
    if args.wall_time {
        report.wall_time_s = Some(started.elapsed().as_secs_f64());
    }

    if let Some(p) = &args.events {
        write_lines(p, &events)?;
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match args.report.as_ref().or(cfg.run.report.as_ref()) {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p.display(), e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_lines<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let err = |e| io_error(path.display(), e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| err(e.into()))?;
        w.write_all(b"\n").map_err(err)?;
    }
    w.flush().map_err(err)
}

type Outcome = (RunReport, Vec<watercare_core::SimEvent>);

/// Steps the runner while feeding the scenario's camera frames, if any,
/// in step with simulated time.
fn drive<L: Link, C: Link>(
    cfg: &ScenarioConfig,
    runner: &mut SimRunner<L>,
    camera: Option<C>,
    on_tick: impl Fn(u64),
) -> Result<RunReport, CliError> {
    runner.realtime = cfg.run.realtime;
    let mut fence = match (&cfg.fence, camera) {
        (Some(f), Some(link)) if f.frames_dir.is_some() => {
            Some((FencePipeline::open(f)?, link, camera_encoder(f.camera_id)))
        }
        _ => None,
    };
    let steps = (cfg.run.duration_s / runner.sim.dt).round().max(0.0) as u64;
    let mut alerts = 0u64;
    let wall = Instant::now();
    for i in 0..steps {
        let now_ms = (runner.sim.state.t * 1000.0).round() as u64;
        on_tick(now_ms);
        if let Some((pipeline, link, enc)) = fence.as_mut() {
            for alert in pipeline.advance_to(now_ms)? {
                alerts += 1;
                link.send(&enc.encode(&alert_message(&alert)))
                    .map_err(|e| CliError::Link(format!("sending alert: {e}")))?;
            }
        }
        runner.tick()?;
        if runner.realtime {
            let due = std::time::Duration::from_secs_f64((i + 1) as f64 * runner.sim.dt);
            if let Some(wait) = due.checked_sub(wall.elapsed()) {
                std::thread::sleep(wait);
            }
        }
    }
    let mut report = runner.report();
    report.alerts_emitted = alerts;
    Ok(report)
}

fn run_remote(cfg: &ScenarioConfig, args: &SimArgs) -> Result<Outcome, CliError> {
    let connect = |what: &str| {
        TcpLink::connect(args.gcs.as_str()).map_err(|e| {
            CliError::Link(format!("cannot reach ground station at {} for {what}: {e}", args.gcs))
        })
    };
    let link = connect("the bot")?;
    let camera = match &cfg.fence {
        Some(f) if f.frames_dir.is_some() => Some(connect("the fence camera")?),
        _ => None,
    };
    let mut runner = SimRunner::new(cfg.build_simulator()?, cfg.build_onboard(), link);
    let report = drive(cfg, &mut runner, camera, |_| {})?;
    Ok((report, runner.events().to_vec()))
}

/// A simulated bot wired to an in-process ground station whose clock
/// follows simulated time, so runs are reproducible.
pub struct LoopbackSession {
    pub gcs: Arc<Gcs>,
    pub clock: Arc<ManualClock>,
    pub runner: SimRunner<LoopbackLink>,
}

impl LoopbackSession {
    /// Builds the bot with an empty mission, then has the station upload
    /// the scenario's waypoints and, with `autostart`, arm and start it.
    pub fn start(cfg: &ScenarioConfig, log: EventLog) -> Result<Self, CliError> {
        let clock = Arc::new(ManualClock::new(0));
        let gcs = Gcs::new(GcsConfig::default(), clock.clone(), log);
        let home = Vec2::new(cfg.world.start.x, cfg.world.start.y);
        let onboard = Onboard::new(Mission::new(home), cfg.gains(), cfg.mission.onboard);
        let mut runner = SimRunner::new(cfg.build_simulator()?, onboard, LoopbackLink::bot(gcs.clone()));

        let waypoints = cfg.waypoints();
        if !waypoints.is_empty() {
            upload(&gcs, &mut runner, waypoints)?;
        }
        if cfg.mission.autostart {
            let mut plan = vec![Command::Arm];
            if cfg.mission.conveyor {
                plan.push(Command::ConveyorOn);
            }
            if !runner.onboard.mission.waypoints.is_empty() {
                plan.push(Command::Start);
            }
            for cmd in plan {
                let ticket = gcs.begin_command(cmd as u8).map_err(|e| CliError::Link(e.to_string()))?;
                settle(&gcs, &mut runner, ticket, cmd.name())?;
            }
        }
        Ok(Self { gcs, clock, runner })
    }

    /// Runs the scenario's duration, replaying camera frames if configured.
    pub fn run(&mut self, cfg: &ScenarioConfig) -> Result<RunReport, CliError> {
        let camera = LoopbackLink::source(self.gcs.clone());
        let clock = self.clock.clone();
        let report = drive(cfg, &mut self.runner, Some(camera), |ms| clock.set(ms))?;
        self.gcs.flush().map_err(|e| io_error("flushing event log", e))?;
        Ok(report)
    }
}

fn run_loopback(cfg: &ScenarioConfig, args: &SimArgs) -> Result<Outcome, CliError> {
    let log = match &args.gcs_log {
        Some(p) => EventLog::open(p).map_err(|e| CliError::Io(e.to_string()))?,
        None => EventLog::in_memory(),
    };
    let mut session = LoopbackSession::start(cfg, log)?;
    let report = session.run(cfg)?;
    Ok((report, session.runner.events().to_vec()))
}

fn upload(gcs: &Gcs, runner: &mut SimRunner<LoopbackLink>, waypoints: Vec<Waypoint>) -> Result<(), CliError> {
    let ticket = gcs.begin_mission(waypoints).map_err(|e| CliError::Validation(e.to_string()))?;
    settle(gcs, runner, ticket, "mission upload")
}

fn settle(gcs: &Gcs, runner: &mut SimRunner<LoopbackLink>, mut ticket: Ticket, what: &str) -> Result<(), CliError> {
    for _ in 0..HANDSHAKE_ROUNDS {
        runner.service_link()?;
        if let Some(outcome) = gcs.poll(&mut ticket) {
            return outcome.map_err(|e| CliError::Link(format!("{what}: {e}")));
        }
    }
    Err(CliError::Link(format!("{what}: no acknowledgement")))
}
