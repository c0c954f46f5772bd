//! Discrete-time 2D world: twin-thruster surface bot, floating trash, bow
//! conveyor intake and the solar/battery power budget.
//!
//! The vehicle model is 3-DOF (surge, yaw, planar position) with linear
//! drag, integrated with semi-implicit Euler. Everything here is a pure
//! function of its inputs so identical command traces give bit-identical
//! state traces.

use std::cmp::Ordering;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{wrap_angle, Vec2};

/// 1 ft/min in m/s.
pub const FT_PER_MIN: f64 = 0.00508;
pub const MIN_BELT_SPEED: f64 = 5.0 * FT_PER_MIN;
pub const MAX_BELT_SPEED: f64 = 35.0 * FT_PER_MIN;
pub const DEFAULT_PAYLOAD_CAPACITY_KG: f64 = 14.0;
pub const DEFAULT_SOLAR_PEAK_W: f64 = 3.0;
pub const DEFAULT_BATTERY_WH: f64 = 50.0;
pub const DEFAULT_DT: f64 = 0.05;
pub const MAX_DT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("time step {0} s is outside (0, {MAX_DT}]")]
    BadStep(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative load {0} W")]
    NegativeLoad(f64),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BotParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    pub thruster_separation: f64,
    pub max_thrust_per_side: f64,
    pub surge_drag: f64,
    pub yaw_drag: f64,
    pub intake_half_width: f64,
    pub intake_reach: f64,
    pub payload_capacity: f64,
    pub belt_speed: f64,
    pub electronics_load: f64,
    /// Electrical draw with both thrusters at full thrust.
    pub thruster_load_max: f64,
    /// Electrical draw of the conveyor at the maximum belt speed.
    pub conveyor_load: f64,
}

impl Default for BotParams {
    fn default() -> Self {
        Self {
            mass: 15.0,
            yaw_inertia: 0.8,
            thruster_separation: 0.5,
            max_thrust_per_side: 10.0,
            surge_drag: 6.0,
            yaw_drag: 3.0,
            intake_half_width: 0.3,
            intake_reach: 0.5,
            payload_capacity: DEFAULT_PAYLOAD_CAPACITY_KG,
            belt_speed: 20.0 * FT_PER_MIN,
            electronics_load: 2.5,
            thruster_load_max: 12.0,
            conveyor_load: 3.0,
        }
    }
}

impl BotParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("mass", self.mass),
            ("yaw_inertia", self.yaw_inertia),
            ("thruster_separation", self.thruster_separation),
            ("max_thrust_per_side", self.max_thrust_per_side),
            ("surge_drag", self.surge_drag),
            ("yaw_drag", self.yaw_drag),
            ("intake_half_width", self.intake_half_width),
            ("intake_reach", self.intake_reach),
            ("payload_capacity", self.payload_capacity),
            ("belt_speed", self.belt_speed),
            ("electronics_load", self.electronics_load),
            ("thruster_load_max", self.thruster_load_max),
            ("conveyor_load", self.conveyor_load),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParam {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        if !(MIN_BELT_SPEED..=MAX_BELT_SPEED).contains(&self.belt_speed) {
            return Err(SimError::InvalidParam {
                name: "belt_speed",
                reason: format!(
                    "{} m/s outside [{MIN_BELT_SPEED}, {MAX_BELT_SPEED}] (5-35 ft/min)",
                    self.belt_speed
                ),
            });
        }
        Ok(())
    }

    /// Conveyor draw at the configured belt speed; scales linearly with speed.
    pub fn conveyor_draw(&self) -> f64 {
        self.conveyor_load * self.belt_speed / MAX_BELT_SPEED
    }

    pub fn thruster_draw(&self, cmd: ThrustCommand) -> f64 {
        self.thruster_load_max * (cmd.left.abs() + cmd.right.abs())
            / (2.0 * self.max_thrust_per_side)
    }

    /// Terminal surge speed reachable with both sides at full thrust.
    pub fn max_surge_speed(&self) -> f64 {
        2.0 * self.max_thrust_per_side / self.surge_drag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerState {
    pub soc_wh: f64,
    pub battery_capacity_wh: f64,
    pub solar_peak_w: f64,
    /// Mean solar input over the last step.
    pub solar_w: f64,
    /// Total electrical load over the last step.
    pub load_w: f64,
    /// Set when the battery hit empty; thrust and conveyor are cut while set.
    pub dead: bool,
}

impl PowerState {
    pub fn new(battery_capacity_wh: f64, soc_wh: f64, solar_peak_w: f64) -> Self {
        Self {
            soc_wh,
            battery_capacity_wh,
            solar_peak_w,
            solar_w: 0.0,
            load_w: 0.0,
            dead: soc_wh <= 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.battery_capacity_wh.is_finite() && self.battery_capacity_wh > 0.0) {
            return Err(SimError::InvalidParam {
                name: "battery_capacity_wh",
                reason: format!("must be > 0, got {}", self.battery_capacity_wh),
            });
        }
        if !(0.0..=self.battery_capacity_wh).contains(&self.soc_wh) {
            return Err(SimError::InvalidParam {
                name: "soc_wh",
                reason: format!("{} outside [0, {}]", self.soc_wh, self.battery_capacity_wh),
            });
        }
        if !(self.solar_peak_w.is_finite() && self.solar_peak_w >= 0.0) {
            return Err(SimError::InvalidParam {
                name: "solar_peak_w",
                reason: format!("must be >= 0, got {}", self.solar_peak_w),
            });
        }
        Ok(())
    }
}

/// Energy flows of one power update. `soc' - soc = harvested - consumed - clamped`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerStep {
    pub power: PowerState,
    pub harvested_wh: f64,
    pub consumed_wh: f64,
    /// Energy discarded by the [0, capacity] clamp: positive when the
    /// battery was full, negative when a deficit hit the empty floor.
    pub clamped_wh: f64,
}

pub fn update_power(
    power: &PowerState,
    solar_w: f64,
    load_w: f64,
    dt: f64,
) -> Result<PowerStep, SimError> {
    if !(solar_w.is_finite() && load_w.is_finite() && dt.is_finite()) {
        return Err(SimError::NonFinite("power update"));
    }
    if dt <= 0.0 {
        return Err(SimError::BadStep(dt));
    }
    if load_w < 0.0 {
        return Err(SimError::NegativeLoad(load_w));
    }
    let solar = solar_w.clamp(0.0, power.solar_peak_w);
    let harvested_wh = solar * dt / 3600.0;
    let consumed_wh = load_w * dt / 3600.0;
    let raw = power.soc_wh + (harvested_wh - consumed_wh);
    let soc = raw.clamp(0.0, power.battery_capacity_wh);
    Ok(PowerStep {
        power: PowerState {
            soc_wh: soc,
            solar_w: solar,
            load_w,
            dead: soc == 0.0,
            ..*power
        },
        harvested_wh,
        consumed_wh,
        clamped_wh: raw - soc,
    })
}

/// Piecewise-linear solar input over time, held constant past both ends.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SolarProfile {
    points: Vec<(f64, f64)>,
}

impl SolarProfile {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, SimError> {
        let profile = Self { points };
        profile.validate()?;
        Ok(profile)
    }

    pub fn constant(watts: f64) -> Self {
        Self {
            points: vec![(0.0, watts)],
        }
    }

    /// Half-sine day: zero at night, `peak` at noon, sampled every `step_s`.
    pub fn sinusoidal_day(peak: f64, step_s: f64) -> Self {
        let n = (86_400.0 / step_s).round() as usize;
        let points = (0..=n)
            .map(|i| {
                let t = i as f64 * step_s;
                (t, sun(peak, t))
            })
            .collect();
        Self { points }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for w in self.points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(SimError::InvalidParam {
                    name: "solar_profile",
                    reason: "time stamps must be strictly increasing".into(),
                });
            }
        }
        for &(t, p) in &self.points {
            if !(t.is_finite() && p.is_finite() && p >= 0.0) {
                return Err(SimError::InvalidParam {
                    name: "solar_profile",
                    reason: format!("bad sample ({t}, {p})"),
                });
            }
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> f64 {
        match self.points.as_slice() {
            [] => 0.0,
            [(_, p)] => *p,
            pts => {
                let first = pts[0];
                let last = pts[pts.len() - 1];
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = pts.partition_point(|&(ti, _)| ti <= t);
                let (t0, p0) = pts[i - 1];
                let (t1, p1) = pts[i];
                p0 + (p1 - p0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Exact integral of the profile over [t0, t1] in W·s.
    pub fn integral(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return 0.0;
        }
        let mut knots = vec![t0];
        knots.extend(
            self.points
                .iter()
                .map(|&(t, _)| t)
                .filter(|&t| t > t0 && t < t1),
        );
        knots.push(t1);
        knots
            .windows(2)
            .map(|w| 0.5 * (self.at(w[0]) + self.at(w[1])) * (w[1] - w[0]))
            .sum()
    }

    pub fn mean_over(&self, t0: f64, t1: f64) -> f64 {
        if t1 <= t0 {
            return self.at(t0);
        }
        self.integral(t0, t1) / (t1 - t0)
    }
}

/// Half-sine daylight curve with sunrise at 06:00 and sunset at 18:00.
pub fn sun(peak: f64, t: f64) -> f64 {
    let day = t.rem_euclid(86_400.0);
    (peak * (TAU * (day - 21_600.0) / 86_400.0).sin()).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrashItem {
    pub id: u32,
    pub position: Vec2,
    pub mass: f64,
    #[serde(default)]
    pub collected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrustCommand {
    pub left: f64,
    pub right: f64,
}

impl ThrustCommand {
    pub const ZERO: ThrustCommand = ThrustCommand {
        left: 0.0,
        right: 0.0,
    };

    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    pub fn is_zero(&self) -> bool {
        self.left == 0.0 && self.right == 0.0
    }

    pub fn saturate(self, max: f64) -> Self {
        Self {
            left: self.left.clamp(-max, max),
            right: self.right.clamp(-max, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub surge_speed: f64,
    pub yaw_rate: f64,
    pub trash: Vec<TrashItem>,
    pub payload_kg: f64,
    pub conveyor_on: bool,
    pub power: PowerState,
    pub current: Vec2,
    pub rng_seed: u64,
}

impl WorldState {
    pub fn new(x: f64, y: f64, heading: f64, power: PowerState) -> Self {
        Self {
            t: 0.0,
            x,
            y,
            heading: wrap_angle(heading),
            surge_speed: 0.0,
            yaw_rate: 0.0,
            trash: Vec::new(),
            payload_kg: 0.0,
            conveyor_on: false,
            power,
            current: Vec2::ZERO,
            rng_seed: 0,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn items_collected(&self) -> usize {
        self.trash.iter().filter(|i| i.collected).count()
    }

    fn check_finite(&self) -> Result<(), SimError> {
        let ok = [
            self.t,
            self.x,
            self.y,
            self.heading,
            self.surge_speed,
            self.yaw_rate,
            self.current.x,
            self.current.y,
        ]
        .iter()
        .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SimError::NonFinite("world state"))
        }
    }
}

/// Advances vehicle dynamics by one step. Thrust is saturated to the
/// per-side limit and forced to zero while the battery is empty.
pub fn step(
    state: &WorldState,
    cmd: ThrustCommand,
    params: &BotParams,
    dt: f64,
) -> Result<WorldState, SimError> {
    if !dt.is_finite() || dt <= 0.0 || dt > MAX_DT {
        return Err(SimError::BadStep(dt));
    }
    if !(cmd.left.is_finite() && cmd.right.is_finite()) {
        return Err(SimError::NonFinite("thrust command"));
    }
    state.check_finite()?;

    let cmd = if state.power.soc_wh <= 0.0 {
        ThrustCommand::ZERO
    } else {
        cmd.saturate(params.max_thrust_per_side)
    };
    let force = cmd.left + cmd.right;
    let torque = (cmd.right - cmd.left) * params.thruster_separation / 2.0;

    let mut next = state.clone();
    next.surge_speed += dt * (force - params.surge_drag * state.surge_speed) / params.mass;
    next.yaw_rate += dt * (torque - params.yaw_drag * state.yaw_rate) / params.yaw_inertia;
    next.heading = wrap_angle(state.heading + dt * next.yaw_rate);
    next.x += dt * (next.surge_speed * next.heading.cos() + state.current.x);
    next.y += dt * (next.surge_speed * next.heading.sin() + state.current.y);
    next.t += dt;
    Ok(next)
}

/// Bot-frame coordinates (forward, lateral-left) of a world point.
fn to_body(state: &WorldState, p: Vec2) -> (f64, f64) {
    let d = p - state.position();
    let (s, c) = state.heading.sin_cos();
    (d.x * c + d.y * s, -d.x * s + d.y * c)
}

fn by_distance_then_id(a: &(f64, u32), b: &(f64, u32)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Runs the bow intake: with the belt on, uncollected items inside the
/// intake rectangle are taken nearest first, skipping any that would
/// overload the belt.
pub fn collect_trash(state: &WorldState, params: &BotParams) -> (WorldState, Vec<u32>) {
    let mut next = state.clone();
    if !state.conveyor_on || state.power.dead {
        return (next, Vec::new());
    }
    let mut candidates: Vec<(f64, u32, usize)> = state
        .trash
        .iter()
        .enumerate()
        .filter(|(_, item)| !item.collected)
        .filter_map(|(idx, item)| {
            let (fwd, lat) = to_body(state, item.position);
            let inside = (0.0..=params.intake_reach).contains(&fwd)
                && lat.abs() <= params.intake_half_width;
            inside.then(|| (state.position().distance(item.position), item.id, idx))
        })
        .collect();
    candidates.sort_by(|a, b| by_distance_then_id(&(a.0, a.1), &(b.0, b.1)));

    let mut taken = Vec::new();
    for (_, id, idx) in candidates {
        let mass = next.trash[idx].mass;
        let loaded = next.payload_kg + mass;
        if loaded <= params.payload_capacity {
            next.payload_kg = loaded;
            next.trash[idx].collected = true;
            taken.push(id);
        }
    }
    (next, taken)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrashSighting {
    /// Relative to the bow, positive to port.
    pub bearing: f64,
    pub distance: f64,
    pub id: u32,
}

/// Proximity sensor standing in for the camera detector: uncollected items
/// within `range` and within +-fov/2 of the heading, nearest first.
pub fn trash_sensor(state: &WorldState, range: f64, fov: f64) -> Vec<TrashSighting> {
    let here = state.position();
    let mut seen: Vec<TrashSighting> = state
        .trash
        .iter()
        .filter(|item| !item.collected)
        .filter_map(|item| {
            let d = item.position - here;
            let distance = d.norm();
            let bearing = if distance == 0.0 {
                0.0
            } else {
                wrap_angle(d.y.atan2(d.x) - state.heading)
            };
            (distance <= range && bearing.abs() <= fov / 2.0).then_some(TrashSighting {
                bearing,
                distance,
                id: item.id,
            })
        })
        .collect();
    seen.sort_by(|a, b| by_distance_then_id(&(a.distance, a.id), &(b.distance, b.id)));
    seen
}

/// Running totals of the power budget across a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyLedger {
    pub steps: u64,
    pub harvested_wh: f64,
    pub consumed_wh: f64,
    pub clamped_wh: f64,
    pub clamp_events: u64,
}

impl EnergyLedger {
    fn record(&mut self, step: &PowerStep) {
        self.steps += 1;
        self.harvested_wh += step.harvested_wh;
        self.consumed_wh += step.consumed_wh;
        self.clamped_wh += step.clamped_wh;
        if step.clamped_wh != 0.0 {
            self.clamp_events += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutcome {
    pub collected: Vec<u32>,
    pub applied: ThrustCommand,
    pub power: PowerStep,
}

/// One full world tick: dynamics, intake, then the power budget.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub state: WorldState,
    pub params: BotParams,
    pub solar: SolarProfile,
    pub dt: f64,
    pub energy: EnergyLedger,
}

impl Simulator {
    pub fn new(
        state: WorldState,
        params: BotParams,
        solar: SolarProfile,
        dt: f64,
    ) -> Result<Self, SimError> {
        params.validate()?;
        state.power.validate()?;
        solar.validate()?;
        if !dt.is_finite() || dt <= 0.0 || dt > MAX_DT {
            return Err(SimError::BadStep(dt));
        }
        Ok(Self {
            state,
            params,
            solar,
            dt,
            energy: EnergyLedger::default(),
        })
    }

    pub fn tick(&mut self, cmd: ThrustCommand) -> Result<TickOutcome, SimError> {
        let dead = self.state.power.dead || self.state.power.soc_wh <= 0.0;
        let applied = if dead {
            ThrustCommand::ZERO
        } else {
            cmd.saturate(self.params.max_thrust_per_side)
        };
        let moved = step(&self.state, applied, &self.params, self.dt)?;
        let (mut next, collected) = collect_trash(&moved, &self.params);

        let mut load = self.params.electronics_load + self.params.thruster_draw(applied);
        if next.conveyor_on && !dead {
            load += self.params.conveyor_draw();
        }
        let solar = self.solar.mean_over(self.state.t, self.state.t + self.dt);
        let power = update_power(&next.power, solar, load, self.dt)?;
        next.power = power.power;
        self.energy.record(&power);
        self.state = next;
        Ok(TickOutcome {
            collected,
            applied,
            power,
        })
    }
}
