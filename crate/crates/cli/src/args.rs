use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use watercare_core::{DirectionMode, Side};

#[derive(Debug, Parser)]
#[command(name = "watercare", version, about = "Surface-bot simulator, fence camera and ground station")]
pub struct Cli {
    /// Scenario TOML shared by `sim` and `fence`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the scenario seed; also seeds `gen`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// tracing filter, e.g. `info` or `watercare_gcs=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the ground-control service until interrupted.
    Gcs(GcsArgs),
    /// Run a scenario headless and print a JSON report.
    Sim(SimArgs),
    /// Count fence crossings over a directory of graymap frames.
    Fence(FenceArgs),
    /// Generate synthetic inputs.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Print the version.
    Version,
}

#[derive(Debug, Args)]
pub struct GcsArgs {
    #[arg(long, env = "WATERCARE_BIND", default_value = "0.0.0.0")]
    pub bind: IpAddr,
    #[arg(long, env = "WATERCARE_HTTP_PORT", default_value_t = watercare_gcs::DEFAULT_HTTP_PORT)]
    pub http_port: u16,
    #[arg(long, env = "WATERCARE_PROTO_PORT", default_value_t = watercare_gcs::DEFAULT_PROTO_PORT)]
    pub proto_port: u16,
    /// Append-only JSONL event log; replayed on start.
    #[arg(long, env = "WATERCARE_LOG", default_value = "watercare-events.jsonl")]
    pub log: PathBuf,
    /// Keep events in memory only.
    #[arg(long, conflicts_with = "log")]
    pub no_log: bool,
    /// Bearer token required on every API route.
    #[arg(long, env = "WATERCARE_TOKEN")]
    pub token: Option<String>,
    /// Static operator UI served at `/`.
    #[arg(long, env = "WATERCARE_UI_DIR")]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    /// Scenario TOML; takes precedence over `--config`.
    pub scenario: Option<PathBuf>,
    /// Run an in-process ground station and upload the mission through it.
    #[arg(long, conflicts_with = "gcs")]
    pub loopback: bool,
    /// Ground-station protocol address.
    #[arg(long, default_value = "127.0.0.1:9000")]
    pub gcs: String,
    /// Simulated seconds; overrides the scenario.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Pace the simulation to wall-clock time.
    #[arg(long)]
    pub realtime: bool,
    /// Accepted for compatibility; the simulator never opens a window.
    #[arg(long)]
    pub headless: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write simulation events as JSON lines.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Persist the in-process ground station's event log (with `--loopback`).
    #[arg(long, requires = "loopback")]
    pub gcs_log: Option<PathBuf>,
    /// Include elapsed wall time in the report (makes it nondeterministic).
    #[arg(long)]
    pub wall_time: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SideArg {
    Left,
    Right,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Side {
        match s {
            SideArg::Left => Side::Left,
            SideArg::Right => Side::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    Into,
    Any,
}

impl From<DirectionArg> for DirectionMode {
    fn from(d: DirectionArg) -> DirectionMode {
        match d {
            DirectionArg::Into => DirectionMode::IntoProtected,
            DirectionArg::Any => DirectionMode::Any,
        }
    }
}

#[derive(Debug, Args)]
pub struct FenceArgs {
    /// Directory of `.pgm` frames, processed in file-name order.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Fence polyline in pixels: `x1,y1;x2,y2;...`.
    #[arg(long)]
    pub fence: Option<String>,
    #[arg(long, value_enum)]
    pub protected: Option<SideArg>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Reference frame; defaults to the first frame.
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long)]
    pub camera_id: Option<u8>,
    /// Milliseconds between frames.
    #[arg(long)]
    pub interval: Option<u64>,
    /// Alert JSON lines go here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also send each alert to a ground station at this address.
    #[arg(long)]
    pub gcs: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum GenCmd {
    /// Synthetic camera frames with bodies crossing a horizontal fence.
    FenceSequence(FenceSequenceArgs),
    /// A random trash field as a `[[world.trash]]` TOML fragment.
    Trash(TrashArgs),
}

#[derive(Debug, Args)]
pub struct FenceSequenceArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub crossings: usize,
    #[arg(long, default_value_t = 80)]
    pub width: usize,
    #[arg(long, default_value_t = 60)]
    pub height: usize,
    #[arg(long, default_value_t = 39)]
    pub frames_per_crossing: usize,
}

#[derive(Debug, Args)]
pub struct TrashArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    /// Lower corner `x,y`.
    #[arg(long, default_value = "0,0")]
    pub min: String,
    /// Upper corner `x,y`.
    #[arg(long, default_value = "40,24")]
    pub max: String,
    #[arg(long, default_value_t = 0.05)]
    pub mass_min: f64,
    #[arg(long, default_value_t = 0.4)]
    pub mass_max: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
