use std::fs;

use serde::Serialize;
use watercare_core::scenario::FenceConfig;
use watercare_core::synth::{self, FenceSequenceSpec};
use watercare_core::{pgm, DirectionMode, ScenarioConfig, Side, TrashItem, Vec2};

use crate::args::{FenceSequenceArgs, GenCmd, TrashArgs};
use crate::error::{io_error, CliError};

/// Name of the scenario stub written next to generated frames.
pub const SEQUENCE_SCENARIO: &str = "scenario.toml";

pub fn run(seed: Option<u64>, cmd: GenCmd) -> Result<(), CliError> {
    match cmd {
        GenCmd::FenceSequence(a) => fence_sequence(&a),
        GenCmd::Trash(a) => trash(seed.unwrap_or(0), &a),
    }
}

fn fence_sequence(a: &FenceSequenceArgs) -> Result<(), CliError> {
    let spec = FenceSequenceSpec {
        width: a.width,
        height: a.height,
        crossings: a.crossings,
        frames_per_crossing: a.frames_per_crossing,
        ..FenceSequenceSpec::default()
    };
    if spec.width < 2 * spec.blob_size + 10 || spec.height < spec.blob_size + 12 {
        return Err(CliError::Validation(format!(
            "frames must be at least {}x{}",
            2 * spec.blob_size + 10,
            spec.blob_size + 12
        )));
    }
    if spec.frames_per_crossing < 2 {
        return Err(CliError::Validation("frames-per-crossing must be >= 2".into()));
    }
    fs::create_dir_all(&a.out).map_err(|e| io_error(a.out.display(), e))?;
    let frames = synth::fence_sequence(&spec);
    for f in &frames {
        pgm::write(&a.out.join(format!("frame_{:04}.pgm", f.index)), f)?;
    }
    // with y pointing down, bodies heading down the frame pass from the
    // fence's right side onto its left
    let geometry = synth::fence_vertices(&spec)
        .iter()
        .map(|v| format!("{},{}", v.x, v.y))
        .collect::<Vec<_>>()
        .join(";");
    let scenario = ScenarioConfig {
        fence: Some(FenceConfig {
            frames_dir: Some(".".into()),
            geometry,
            protected_side: Side::Left,
            direction: DirectionMode::IntoProtected,
            frame_interval_ms: spec.frame_interval_ms,
            ..FenceConfig::default()
        }),
        ..ScenarioConfig::default()
    };
    #[derive(Serialize)]
    struct Stub<'a> {
        fence: &'a FenceConfig,
    }
    let text = toml::to_string(&Stub {
        fence: scenario.fence.as_ref().expect("set"),
    })
    .map_err(|e| CliError::Validation(e.to_string()))?;
    let path = a.out.join(SEQUENCE_SCENARIO);
    fs::write(&path, text).map_err(|e| io_error(path.display(), e))?;
    eprintln!("wrote {} frames and {} to {}", frames.len(), SEQUENCE_SCENARIO, a.out.display());
    Ok(())
}

fn parse_point(s: &str) -> Result<Vec2, CliError> {
    let bad = || CliError::Validation(format!("expected `x,y`, got {s:?}"));
    let (x, y) = s.split_once(',').ok_or_else(bad)?;
    let p = Vec2::new(x.trim().parse().map_err(|_| bad())?, y.trim().parse().map_err(|_| bad())?);
    if p.is_finite() {
        Ok(p)
    } else {
        Err(bad())
    }
}

fn trash(seed: u64, a: &TrashArgs) -> Result<(), CliError> {
    let (min, max) = (parse_point(&a.min)?, parse_point(&a.max)?);
    if !(max.x >= min.x && max.y >= min.y) {
        return Err(CliError::Validation("--max must be >= --min".into()));
    }
    if !(a.mass_min > 0.0 && a.mass_max >= a.mass_min) {
        return Err(CliError::Validation("mass range must satisfy 0 < min <= max".into()));
    }
    let items = synth::trash_field(a.n, seed, min, max, (a.mass_min, a.mass_max));
    #[derive(Serialize)]
    struct World {
        trash: Vec<TrashItem>,
    }
    #[derive(Serialize)]
    struct Fragment {
        world: World,
    }
    let text = toml::to_string(&Fragment { world: World { trash: items } })
        .map_err(|e| CliError::Validation(e.to_string()))?;
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p.display(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

