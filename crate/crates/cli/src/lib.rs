//! `watercare` command-line front end. Each subcommand lives in its own
//! module; [`run`] dispatches and maps failures to exit statuses.

pub mod args;
pub mod error;
pub mod fence_cmd;
pub mod gcs_cmd;
pub mod gen_cmd;
pub mod sim_cmd;

use std::path::Path;

pub use args::{Cli, Cmd};
pub use error::CliError;

use watercare_core::ScenarioConfig;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Gcs(a) => gcs_cmd::run(a),
        Cmd::Sim(a) => sim_cmd::run(cli.config.as_deref(), cli.seed, a),
        Cmd::Fence(a) => fence_cmd::run(cli.config.as_deref(), a),
        Cmd::Gen(a) => gen_cmd::run(cli.seed, a),
        Cmd::Version => {
            println!("watercare {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

/// Loads a scenario and resolves its relative paths against the file's
/// directory.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let mut cfg = ScenarioConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    if let Some(f) = cfg.fence.as_mut() {
        for p in [&mut f.frames_dir, &mut f.background].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(cfg)
}
