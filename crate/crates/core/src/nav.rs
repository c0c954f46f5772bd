//! Onboard guidance: the mission mode machine, straight-to-waypoint bearing
//! guidance and a PD heading loop mixed into differential thrust.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Vec2};
use crate::sim::{BotParams, ThrustCommand};

pub const DEFAULT_ACCEPT_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_accept_radius", alias = "radius")]
    pub accept_radius: f64,
}

fn default_accept_radius() -> f64 {
    DEFAULT_ACCEPT_RADIUS
}

impl Waypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            accept_radius: DEFAULT_ACCEPT_RADIUS,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.accept_radius.is_finite()
            && self.accept_radius > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum Mode {
    Disarmed = 0,
    Armed = 1,
    Mission = 2,
    Hold = 3,
    Rtl = 4,
    Complete = 5,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Disarmed,
        Mode::Armed,
        Mode::Mission,
        Mode::Hold,
        Mode::Rtl,
        Mode::Complete,
    ];

    pub fn from_u8(v: u8) -> Option<Mode> {
        Mode::ALL.get(v as usize).copied()
    }

    pub fn is_armed(self) -> bool {
        self != Mode::Disarmed
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Disarmed => "DISARMED",
            Mode::Armed => "ARMED",
            Mode::Mission => "MISSION",
            Mode::Hold => "HOLD",
            Mode::Rtl => "RTL",
            Mode::Complete => "COMPLETE",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Operator commands carried by COMMAND frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
#[repr(u8)]
pub enum Command {
    Arm = 1,
    Disarm = 2,
    Start = 3,
    Hold = 4,
    Rtl = 5,
    ConveyorOn = 6,
    ConveyorOff = 7,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Arm,
        Command::Disarm,
        Command::Start,
        Command::Hold,
        Command::Rtl,
        Command::ConveyorOn,
        Command::ConveyorOff,
    ];

    pub fn from_u8(v: u8) -> Option<Command> {
        Command::ALL.iter().copied().find(|c| *c as u8 == v)
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Arm => "ARM",
            Command::Disarm => "DISARM",
            Command::Start => "START",
            Command::Hold => "HOLD",
            Command::Rtl => "RTL",
            Command::ConveyorOn => "CONVEYOR_ON",
            Command::ConveyorOff => "CONVEYOR_OFF",
        }
    }

    pub fn parse(name: &str) -> Option<Command> {
        Command::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ack {
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    pub waypoints: Vec<Waypoint>,
    pub active_index: usize,
    pub home: Vec2,
    pub mode: Mode,
}

impl Mission {
    pub fn new(home: Vec2) -> Self {
        Self {
            waypoints: Vec::new(),
            active_index: 0,
            home,
            mode: Mode::Disarmed,
        }
    }

    pub fn with_waypoints(home: Vec2, waypoints: Vec<Waypoint>) -> Self {
        Self {
            waypoints,
            ..Self::new(home)
        }
    }

    pub fn active(&self) -> Option<&Waypoint> {
        self.waypoints.get(self.active_index)
    }

    /// Replaces the waypoint list. Refused while a mission is running.
    pub fn upload(&mut self, waypoints: Vec<Waypoint>) -> Ack {
        if self.mode == Mode::Mission || waypoints.is_empty() {
            return Ack::Rejected;
        }
        self.waypoints = waypoints;
        self.active_index = 0;
        if self.mode == Mode::Complete {
            self.mode = Mode::Armed;
        }
        Ack::Accepted
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavGains {
    pub kp_heading: f64,
    pub kd_heading: f64,
    pub cruise_thrust: f64,
    pub slowdown_radius: f64,
}

impl Default for NavGains {
    fn default() -> Self {
        Self::for_params(&BotParams::default())
    }
}

impl NavGains {
    pub fn for_params(params: &BotParams) -> Self {
        Self {
            kp_heading: 0.8 * params.max_thrust_per_side,
            kd_heading: 0.3,
            cruise_thrust: 0.4 * params.max_thrust_per_side,
            slowdown_radius: 10.0,
        }
    }

    pub fn validate(&self, params: &BotParams) -> Result<(), String> {
        if !(self.kp_heading.is_finite() && self.kp_heading > 0.0) {
            return Err(format!("kp_heading must be > 0, got {}", self.kp_heading));
        }
        if !(self.kd_heading.is_finite() && self.kd_heading >= 0.0) {
            return Err(format!("kd_heading must be >= 0, got {}", self.kd_heading));
        }
        if !(self.cruise_thrust > 0.0 && self.cruise_thrust <= params.max_thrust_per_side) {
            return Err(format!(
                "cruise_thrust must be in (0, {}], got {}",
                params.max_thrust_per_side, self.cruise_thrust
            ));
        }
        if !(self.slowdown_radius.is_finite() && self.slowdown_radius > 0.0) {
            return Err(format!(
                "slowdown_radius must be > 0, got {}",
                self.slowdown_radius
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub desired_heading: f64,
    pub distance: f64,
}

/// Bearing and range from `pose` straight to `target`. On the target itself
/// the bearing is undefined and the current heading is returned.
pub fn guidance(pose: Pose, target: Vec2) -> Guidance {
    let dx = target.x - pose.x;
    let dy = target.y - pose.y;
    let distance = dx.hypot(dy);
    let desired_heading = if distance == 0.0 {
        pose.heading
    } else {
        dy.atan2(dx)
    };
    Guidance {
        desired_heading,
        distance,
    }
}

/// Minimal signed difference `desired - actual`, in (-pi, pi].
pub fn wrap_error(desired: f64, actual: f64) -> f64 {
    wrap_angle(desired - actual)
}

pub fn heading_controller(
    error: f64,
    yaw_rate: f64,
    gains: &NavGains,
    distance: f64,
    max_thrust: f64,
) -> ThrustCommand {
    let delta = gains.kp_heading * error - gains.kd_heading * yaw_rate;
    let base = gains.cruise_thrust * (distance / gains.slowdown_radius).min(1.0);
    ThrustCommand {
        left: (base - delta).clamp(-max_thrust, max_thrust),
        right: (base + delta).clamp(-max_thrust, max_thrust),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionStep {
    pub mission: Mission,
    pub thrust: ThrustCommand,
    /// Waypoint index reached on this step, if any.
    pub reached: Option<usize>,
    pub arrived_home: bool,
}

fn steer_to(
    pose: Pose,
    target: Vec2,
    yaw_rate: f64,
    gains: &NavGains,
    params: &BotParams,
) -> ThrustCommand {
    let g = guidance(pose, target);
    let err = wrap_error(g.desired_heading, pose.heading);
    heading_controller(err, yaw_rate, gains, g.distance, params.max_thrust_per_side)
}

pub fn mission_step(
    mission: &Mission,
    pose: Pose,
    yaw_rate: f64,
    gains: &NavGains,
    params: &BotParams,
) -> MissionStep {
    let mut next = mission.clone();
    let mut out = MissionStep {
        mission: mission.clone(),
        thrust: ThrustCommand::ZERO,
        reached: None,
        arrived_home: false,
    };
    match mission.mode {
        Mode::Mission => {
            let Some(wp) = mission.active() else {
                next.mode = Mode::Complete;
                out.mission = next;
                return out;
            };
            if guidance(pose, wp.position()).distance <= wp.accept_radius {
                out.reached = Some(next.active_index);
                next.active_index += 1;
                match next.active() {
                    None => next.mode = Mode::Complete,
                    Some(wp) => {
                        out.thrust = steer_to(pose, wp.position(), yaw_rate, gains, params)
                    }
                }
            } else {
                out.thrust = steer_to(pose, wp.position(), yaw_rate, gains, params);
            }
        }
        Mode::Rtl => {
            if guidance(pose, mission.home).distance <= DEFAULT_ACCEPT_RADIUS {
                next.mode = Mode::Complete;
                out.arrived_home = true;
            } else {
                out.thrust = steer_to(pose, mission.home, yaw_rate, gains, params);
            }
        }
        Mode::Disarmed | Mode::Armed | Mode::Hold | Mode::Complete => {}
    }
    out.mission = next;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub mission: Mission,
    pub conveyor: Option<bool>,
    pub ack: Ack,
}

/// Applies one operator command against the transition table. A rejected
/// command returns the mission unchanged.
pub fn apply_command(mission: &Mission, cmd: Command) -> CommandOutcome {
    use Mode::*;
    let mut next = mission.clone();
    let mut conveyor = None;
    let accepted = match (cmd, mission.mode) {
        (Command::Arm, Disarmed) => {
            next.mode = Armed;
            true
        }
        (Command::Disarm, _) => {
            next.mode = Disarmed;
            true
        }
        (Command::Start, Armed | Hold) if mission.active_index < mission.waypoints.len() => {
            next.mode = Mission;
            true
        }
        (Command::Hold, Mission | Rtl) => {
            next.mode = Hold;
            true
        }
        (Command::Rtl, Mission | Hold) => {
            next.mode = Rtl;
            true
        }
        (Command::ConveyorOn | Command::ConveyorOff, m) if m != Disarmed => {
            conveyor = Some(cmd == Command::ConveyorOn);
            true
        }
        _ => false,
    };
    if accepted {
        CommandOutcome {
            mission: next,
            conveyor,
            ack: Ack::Accepted,
        }
    } else {
        CommandOutcome {
            mission: mission.clone(),
            conveyor: None,
            ack: Ack::Rejected,
        }
    }
}
