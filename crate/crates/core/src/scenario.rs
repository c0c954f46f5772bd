//! Scenario files (TOML). Every table rejects unknown keys; see SCENARIO.md
//! for the annotated schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fence::{DirectionMode, FenceParams, Side};
use crate::geom::Vec2;
use crate::nav::{Mission, Mode, NavGains, Waypoint};
use crate::onboard::{Onboard, OnboardConfig};
use crate::sim::{
    BotParams, PowerState, SimError, Simulator, SolarProfile, TrashItem, WorldState,
    DEFAULT_BATTERY_WH, DEFAULT_DT, DEFAULT_SOLAR_PEAK_W, MAX_DT,
};
use crate::synth;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

impl From<SimError> for ScenarioError {
    fn from(e: SimError) -> Self {
        ScenarioError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

/// Randomly scattered trash, drawn from the scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrashFieldSpec {
    pub n: usize,
    pub min: Vec2,
    pub max: Vec2,
    #[serde(default = "default_mass_min")]
    pub mass_min: f64,
    #[serde(default = "default_mass_max")]
    pub mass_max: f64,
}

fn default_mass_min() -> f64 {
    0.05
}
fn default_mass_max() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub bot: BotParams,
    pub start: StartPose,
    pub current: Vec2,
    pub battery_capacity_wh: f64,
    /// Defaults to a full battery.
    pub initial_soc_wh: Option<f64>,
    pub solar_peak_w: f64,
    /// Piecewise-linear `[t_s, watts]` pairs.
    pub solar_profile: Vec<(f64, f64)>,
    pub trash: Vec<TrashItem>,
    pub trash_field: Option<TrashFieldSpec>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            bot: BotParams::default(),
            start: StartPose::default(),
            current: Vec2::ZERO,
            battery_capacity_wh: DEFAULT_BATTERY_WH,
            initial_soc_wh: None,
            solar_peak_w: DEFAULT_SOLAR_PEAK_W,
            solar_profile: vec![(0.0, DEFAULT_SOLAR_PEAK_W)],
            trash: Vec::new(),
            trash_field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawnmowerSpec {
    pub min: Vec2,
    pub max: Vec2,
    pub lane_spacing: f64,
    #[serde(default = "default_radius")]
    pub accept_radius: f64,
}

fn default_radius() -> f64 {
    crate::nav::DEFAULT_ACCEPT_RADIUS
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    pub waypoints: Vec<Waypoint>,
    /// Appended after `waypoints`.
    pub lawnmower: Option<LawnmowerSpec>,
    /// Arm, switch the belt on (if `conveyor`) and start before the first step.
    pub autostart: bool,
    pub conveyor: bool,
    pub gains: Option<NavGains>,
    pub onboard: OnboardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FenceConfig {
    pub frames_dir: Option<PathBuf>,
    pub background: Option<PathBuf>,
    /// `"x1,y1;x2,y2;..."` in image pixels.
    pub geometry: String,
    pub protected_side: Side,
    pub direction: DirectionMode,
    pub camera_id: u8,
    pub frame_interval_ms: u64,
    pub params: FenceParams,
}

impl Default for FenceConfig {
    fn default() -> Self {
        Self {
            frames_dir: None,
            background: None,
            geometry: String::new(),
            protected_side: Side::Left,
            direction: DirectionMode::IntoProtected,
            camera_id: 1,
            frame_interval_ms: 100,
            params: FenceParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    pub dt: f64,
    pub realtime: bool,
    pub report: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_s: 600.0,
            dt: DEFAULT_DT,
            realtime: false,
            report: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub mission: MissionConfig,
    pub fence: Option<FenceConfig>,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        self.world.bot.validate()?;
        let w = &self.world;
        if !(w.battery_capacity_wh.is_finite() && w.battery_capacity_wh > 0.0) {
            return invalid(format!("battery_capacity_wh must be > 0, got {}", w.battery_capacity_wh));
        }
        if let Some(soc) = w.initial_soc_wh {
            if !(0.0..=w.battery_capacity_wh).contains(&soc) {
                return invalid(format!("initial_soc_wh {soc} outside [0, capacity]"));
            }
        }
        if !(w.solar_peak_w.is_finite() && w.solar_peak_w >= 0.0) {
            return invalid(format!("solar_peak_w must be >= 0, got {}", w.solar_peak_w));
        }
        SolarProfile::new(w.solar_profile.clone())?;
        if ![w.start.x, w.start.y, w.start.heading, w.current.x, w.current.y]
            .iter()
            .all(|v| v.is_finite())
        {
            return invalid("start pose and current must be finite".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for item in &w.trash {
            if !(item.mass.is_finite() && item.mass > 0.0 && item.position.is_finite()) {
                return invalid(format!("trash item {} has bad mass or position", item.id));
            }
            if !ids.insert(item.id) {
                return invalid(format!("duplicate trash id {}", item.id));
            }
        }
        if let Some(f) = &w.trash_field {
            if !(f.mass_min > 0.0 && f.mass_max >= f.mass_min) {
                return invalid("trash_field mass range must satisfy 0 < mass_min <= mass_max".into());
            }
            if !(f.max.x >= f.min.x && f.max.y >= f.min.y) {
                return invalid("trash_field max must be >= min".into());
            }
        }
        for (i, wp) in self.mission.waypoints.iter().enumerate() {
            if !wp.is_valid() {
                return invalid(format!("waypoint {i} needs finite coordinates and radius > 0"));
            }
        }
        if let Some(l) = &self.mission.lawnmower {
            if !(l.lane_spacing > 0.0 && l.accept_radius > 0.0) {
                return invalid("lawnmower lane_spacing and accept_radius must be > 0".into());
            }
        }
        let ob = &self.mission.onboard;
        for (name, hz) in [("telemetry_hz", ob.telemetry_hz), ("heartbeat_hz", ob.heartbeat_hz)] {
            if !(hz > 0.0 && hz <= 1000.0) {
                return invalid(format!("mission.onboard.{name} must be in (0, 1000], got {hz}"));
            }
        }
        if let Some(g) = &self.mission.gains {
            g.validate(&w.bot).map_err(ScenarioError::Invalid)?;
        }
        if let Some(f) = &self.fence {
            crate::fence::FencePolyline::parse_vertices(&f.geometry)
                .and_then(|v| crate::fence::FencePolyline::new(v, f.protected_side, f.direction))
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        let r = &self.run;
        if !(r.duration_s.is_finite() && r.duration_s >= 0.0) {
            return invalid(format!("run.duration_s must be >= 0, got {}", r.duration_s));
        }
        if !(r.dt > 0.0 && r.dt <= MAX_DT) {
            return invalid(format!("run.dt must be in (0, {MAX_DT}], got {}", r.dt));
        }
        Ok(())
    }

    pub fn waypoints(&self) -> Vec<Waypoint> {
        let mut wps = self.mission.waypoints.clone();
        if let Some(l) = &self.mission.lawnmower {
            wps.extend(synth::lawnmower(l.min, l.max, l.lane_spacing, l.accept_radius));
        }
        wps
    }

    pub fn trash(&self) -> Vec<TrashItem> {
        let mut items = self.world.trash.clone();
        if let Some(f) = &self.world.trash_field {
            let base = items.iter().map(|i| i.id + 1).max().unwrap_or(0);
            items.extend(
                synth::trash_field(f.n, self.seed, f.min, f.max, (f.mass_min, f.mass_max))
                    .into_iter()
                    .map(|mut i| {
                        i.id += base;
                        i
                    }),
            );
        }
        items
    }

    pub fn gains(&self) -> NavGains {
        self.mission
            .gains
            .unwrap_or_else(|| NavGains::for_params(&self.world.bot))
    }

    pub fn build_simulator(&self) -> Result<Simulator, ScenarioError> {
        let w = &self.world;
        let power = PowerState::new(
            w.battery_capacity_wh,
            w.initial_soc_wh.unwrap_or(w.battery_capacity_wh),
            w.solar_peak_w,
        );
        let mut state = WorldState::new(w.start.x, w.start.y, w.start.heading, power);
        state.current = w.current;
        state.trash = self.trash();
        state.rng_seed = self.seed;
        let solar = SolarProfile::new(w.solar_profile.clone())?;
        Ok(Simulator::new(state, w.bot.clone(), solar, self.run.dt)?)
    }

    pub fn build_onboard(&self) -> Onboard {
        let home = Vec2::new(self.world.start.x, self.world.start.y);
        let mission = Mission::with_waypoints(home, self.waypoints());
        let mut ob = Onboard::new(mission, self.gains(), self.mission.onboard);
        if self.mission.autostart {
            ob.mission.mode = Mode::Armed;
            if self.mission.conveyor {
                ob.conveyor = true;
            }
            if !ob.mission.waypoints.is_empty() {
                ob.mission.mode = Mode::Mission;
            }
        }
        ob
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.world.bot.payload_capacity, 14.0);
        assert_eq!(cfg.world.battery_capacity_wh, 50.0);
        assert_eq!(cfg.world.solar_peak_w, 3.0);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ScenarioConfig::from_toml("bogus = 1").is_err());
        assert!(ScenarioConfig::from_toml("[world]\nspeed = 3").is_err());
        assert!(ScenarioConfig::from_toml("[world.bot]\nmas = 3").is_err());
    }

    #[test]
    fn validation_errors() {
        assert!(ScenarioConfig::from_toml("[run]\ndt = 0.9").is_err());
        assert!(ScenarioConfig::from_toml("[world.bot]\nbelt_speed = 1.0").is_err());
        assert!(ScenarioConfig::from_toml(
            "[mission]\nwaypoints = [{ x = 1.0, y = 2.0, accept_radius = 0.0 }]"
        )
        .is_err());
        assert!(ScenarioConfig::from_toml("[fence]\ngeometry = \"1,1\"").is_err());
    }

    #[test]
    fn autostart_builds_running_mission() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            [mission]
            autostart = true
            conveyor = true
            waypoints = [{ x = 10.0, y = 0.0 }]
            "#,
        )
        .unwrap();
        let ob = cfg.build_onboard();
        assert_eq!(ob.mission.mode, Mode::Mission);
        assert!(ob.conveyor);
        assert_eq!(ob.mission.waypoints[0].accept_radius, 3.0);
    }

    #[test]
    fn trash_field_uses_seed_and_fresh_ids() {
        let text = r#"
            seed = 4
            [[world.trash]]
            id = 10
            position = { x = 1.0, y = 1.0 }
            mass = 0.2
            [world.trash_field]
            n = 3
            min = { x = 0.0, y = 0.0 }
            max = { x = 10.0, y = 10.0 }
        "#;
        let cfg = ScenarioConfig::from_toml(text).unwrap();
        let t = cfg.trash();
        assert_eq!(t.iter().map(|i| i.id).collect::<Vec<_>>(), vec![10, 11, 12, 13]);
        assert_eq!(t, cfg.trash());
    }
}
