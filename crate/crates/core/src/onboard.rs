//! The bot's onboard computer: answers ground-station commands and mission
//! uploads, runs the mission through the guidance layer, diverts to nearby
//! floating trash while surveying, and produces telemetry.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::nav::{
    apply_command, guidance, heading_controller, mission_step, wrap_error, Ack, Command,
    Mission, Mode, NavGains, Pose, Waypoint,
};
use crate::protocol::{command_result, mission_result, Message};
use crate::sim::{trash_sensor, BotParams, ThrustCommand, WorldState};
use crate::synth::point_segment_distance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnboardConfig {
    pub telemetry_hz: f64,
    pub heartbeat_hz: f64,
    pub sensor_range: f64,
    pub sensor_fov: f64,
    /// Only trash within this distance of the current mission leg is chased.
    pub pursuit_corridor: f64,
    pub pursuit_timeout_s: f64,
    pub upload_timeout_ms: u64,
}

impl Default for OnboardConfig {
    fn default() -> Self {
        Self {
            telemetry_hz: 5.0,
            heartbeat_hz: 1.0,
            sensor_range: 6.0,
            sensor_fov: 2.0 * PI / 3.0,
            pursuit_corridor: 3.0,
            pursuit_timeout_s: 20.0,
            upload_timeout_ms: 2000,
        }
    }
}

#[derive(Debug, Clone)]
struct Upload {
    items: Vec<Option<Waypoint>>,
    last_activity_ms: u64,
}

#[derive(Debug, Clone, Copy)]
struct Pursuit {
    id: u32,
    since: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    pub thrust: ThrustCommand,
    pub reached: Option<usize>,
    pub arrived_home: bool,
    pub pursuing: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct Onboard {
    pub mission: Mission,
    pub gains: NavGains,
    pub config: OnboardConfig,
    /// Belt state requested by the operator.
    pub conveyor: bool,
    upload: Option<Upload>,
    pursuit: Option<Pursuit>,
    abandoned: BTreeSet<u32>,
    // whole milliseconds: accumulated float time drifts over long runs
    next_heartbeat_ms: u64,
    next_telemetry_ms: u64,
}

impl Onboard {
    pub fn new(mission: Mission, gains: NavGains, config: OnboardConfig) -> Self {
        Self {
            mission,
            gains,
            config,
            conveyor: false,
            upload: None,
            pursuit: None,
            abandoned: BTreeSet::new(),
            next_heartbeat_ms: 0,
            next_telemetry_ms: 0,
        }
    }

    pub fn command(&mut self, cmd: Command) -> Ack {
        let out = apply_command(&self.mission, cmd);
        self.mission = out.mission;
        if let Some(on) = out.conveyor {
            self.conveyor = on;
        }
        out.ack
    }

    /// Handles one message from the ground station and returns the replies.
    pub fn handle(&mut self, msg: &Message, now_ms: u64) -> Vec<Message> {
        match *msg {
            Message::Command { cmd } => {
                let result = match Command::from_u8(cmd) {
                    None => command_result::UNSUPPORTED,
                    Some(c) => match self.command(c) {
                        Ack::Accepted => command_result::ACCEPTED,
                        Ack::Rejected => command_result::REJECTED,
                    },
                };
                vec![Message::CommandAck { cmd, result }]
            }
            Message::MissionCount { count } => {
                if self.mission.mode == Mode::Mission || count == 0 {
                    self.upload = None;
                    return vec![Message::MissionAck {
                        result: mission_result::REJECTED,
                    }];
                }
                self.upload = Some(Upload {
                    items: vec![None; count as usize],
                    last_activity_ms: now_ms,
                });
                Vec::new()
            }
            Message::MissionItem {
                index,
                x,
                y,
                accept_radius,
            } => {
                let Some(up) = self.upload.as_mut() else {
                    return Vec::new();
                };
                let wp = Waypoint {
                    x: x as f64,
                    y: y as f64,
                    accept_radius: accept_radius as f64,
                };
                let Some(slot) = up.items.get_mut(index as usize) else {
                    return Vec::new();
                };
                if !wp.is_valid() {
                    self.upload = None;
                    return vec![Message::MissionAck {
                        result: mission_result::REJECTED,
                    }];
                }
                *slot = Some(wp);
                up.last_activity_ms = now_ms;
                if up.items.iter().all(Option::is_some) {
                    let items = self.upload.take().expect("upload in progress").items;
                    let waypoints = items.into_iter().map(Option::unwrap).collect();
                    let result = match self.mission.upload(waypoints) {
                        Ack::Accepted => {
                            self.abandoned.clear();
                            self.pursuit = None;
                            mission_result::OK
                        }
                        Ack::Rejected => mission_result::REJECTED,
                    };
                    return vec![Message::MissionAck { result }];
                }
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    /// Expires a stalled mission upload.
    pub fn poll_timeouts(&mut self, now_ms: u64) -> Vec<Message> {
        match &self.upload {
            Some(up) if now_ms.saturating_sub(up.last_activity_ms) >= self.config.upload_timeout_ms => {
                self.upload = None;
                vec![Message::MissionAck {
                    result: mission_result::MISSING_ITEMS,
                }]
            }
            _ => Vec::new(),
        }
    }

    fn leg(&self) -> Option<(Vec2, Vec2)> {
        let i = self.mission.active_index;
        let to = self.mission.waypoints.get(i)?.position();
        let from = match i {
            0 => self.mission.home,
            _ => self.mission.waypoints[i - 1].position(),
        };
        Some((from, to))
    }

    fn pursuit_target(&mut self, state: &WorldState) -> Option<(u32, Vec2)> {
        let position_of = |id: u32| {
            state
                .trash
                .iter()
                .find(|t| t.id == id && !t.collected)
                .map(|t| t.position)
        };
        if let Some(p) = self.pursuit {
            let held = position_of(p.id)
                .filter(|pos| pos.distance(state.position()) <= self.config.sensor_range * 1.5);
            let timed_out = state.t - p.since > self.config.pursuit_timeout_s;
            match held {
                Some(pos) if !timed_out => return Some((p.id, pos)),
                _ => {
                    if timed_out {
                        self.abandoned.insert(p.id);
                    }
                    self.pursuit = None;
                }
            }
        }
        let (from, to) = self.leg()?;
        let pick = trash_sensor(state, self.config.sensor_range, self.config.sensor_fov)
            .into_iter()
            .filter(|s| !self.abandoned.contains(&s.id))
            .find_map(|s| {
                let pos = position_of(s.id)?;
                (point_segment_distance(pos, from, to) <= self.config.pursuit_corridor)
                    .then_some((s.id, pos))
            })?;
        self.pursuit = Some(Pursuit {
            id: pick.0,
            since: state.t,
        });
        Some(pick)
    }

    pub fn control(&mut self, state: &WorldState, params: &BotParams) -> Control {
        let pose = Pose::new(state.x, state.y, state.heading);
        let step = mission_step(&self.mission, pose, state.yaw_rate, &self.gains, params);
        self.mission = step.mission;
        let mut control = Control {
            thrust: step.thrust,
            reached: step.reached,
            arrived_home: step.arrived_home,
            pursuing: None,
        };
        let can_collect = self.mission.mode == Mode::Mission
            && state.conveyor_on
            && !state.power.dead
            && state.payload_kg < params.payload_capacity;
        if !can_collect {
            self.pursuit = None;
            return control;
        }
        if let Some((id, target)) = self.pursuit_target(state) {
            let g = guidance(pose, target);
            let err = wrap_error(g.desired_heading, pose.heading);
            // full stop to turn when the item is abeam or behind
            let approach = g.distance.max(0.5 * self.gains.slowdown_radius) * err.cos().max(0.0);
            control.thrust = heading_controller(
                err,
                state.yaw_rate,
                &self.gains,
                approach,
                params.max_thrust_per_side,
            );
            control.pursuing = Some(id);
        }
        control
    }

    /// Telemetry due at sim time `state.t`.
    pub fn telemetry(&mut self, state: &WorldState) -> Vec<Message> {
        let mut out = Vec::new();
        let now_ms = (state.t * 1000.0).round() as u64;
        if now_ms >= self.next_heartbeat_ms {
            self.next_heartbeat_ms += period_ms(self.config.heartbeat_hz);
            out.push(self.heartbeat());
        }
        if now_ms >= self.next_telemetry_ms {
            self.next_telemetry_ms += period_ms(self.config.telemetry_hz);
            out.push(Message::Position {
                t_ms: (state.t * 1000.0).round() as u32,
                x: state.x as f32,
                y: state.y as f32,
                heading: state.heading as f32,
                speed: state.surge_speed as f32,
            });
            out.push(Message::Power {
                soc_wh: state.power.soc_wh as f32,
                solar_w: state.power.solar_w as f32,
                load_w: state.power.load_w as f32,
            });
            out.push(Message::TrashStatus {
                payload_kg: state.payload_kg as f32,
                items: state.items_collected().min(u16::MAX as usize) as u16,
            });
        }
        out
    }

    pub fn heartbeat(&self) -> Message {
        Message::Heartbeat {
            mode: self.mission.mode as u8,
            armed: self.mission.mode.is_armed() as u8,
        }
    }
}

/// Convenience for callers that only need the straight-line leg length.
fn period_ms(hz: f64) -> u64 {
    ((1000.0 / hz).round() as u64).max(1)
}

pub fn mission_length(start: Vec2, waypoints: &[Waypoint]) -> f64 {
    let mut prev = start;
    let mut total = 0.0;
    for wp in waypoints {
        total += prev.distance(wp.position());
        prev = wp.position();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::PowerState;

    fn onboard() -> Onboard {
        Onboard::new(
            Mission::new(Vec2::ZERO),
            NavGains::default(),
            OnboardConfig::default(),
        )
    }

    fn item(i: u16, x: f32) -> Message {
        Message::MissionItem {
            index: i,
            x,
            y: 0.0,
            accept_radius: 3.0,
        }
    }

    #[test]
    fn telemetry_keeps_its_rate_over_long_runs() {
        let mut ob = onboard();
        let mut state = WorldState::new(0.0, 0.0, 0.0, PowerState::new(50.0, 50.0, 0.0));
        let mut stamps = Vec::new();
        // ten simulated hours, time accumulated the way the simulator does
        for _ in 0..720_000 {
            for m in ob.telemetry(&state) {
                if let Message::Position { t_ms, .. } = m {
                    stamps.push(t_ms);
                }
            }
            state.t += 0.05;
        }
        assert_eq!(stamps.len(), 180_000);
        assert!(stamps.windows(2).all(|w| w[1] - w[0] == 200));
    }

    #[test]
    fn upload_handshake() {
        let mut ob = onboard();
        assert!(ob.handle(&Message::MissionCount { count: 2 }, 0).is_empty());
        assert!(ob.handle(&item(1, 20.0), 10).is_empty());
        let r = ob.handle(&item(0, 10.0), 20);
        assert_eq!(r, vec![Message::MissionAck { result: 0 }]);
        assert_eq!(ob.mission.waypoints.len(), 2);
        assert_eq!(ob.mission.waypoints[0].x, 10.0);
    }

    #[test]
    fn upload_times_out() {
        let mut ob = onboard();
        ob.handle(&Message::MissionCount { count: 3 }, 0);
        ob.handle(&item(0, 1.0), 100);
        assert!(ob.poll_timeouts(1000).is_empty());
        assert_eq!(
            ob.poll_timeouts(2100),
            vec![Message::MissionAck {
                result: mission_result::MISSING_ITEMS
            }]
        );
        assert!(ob.mission.waypoints.is_empty());
    }

    #[test]
    fn upload_rejected_in_mission_mode() {
        let mut ob = onboard();
        ob.mission.waypoints = vec![Waypoint::new(5.0, 5.0)];
        ob.mission.mode = Mode::Mission;
        let r = ob.handle(&Message::MissionCount { count: 1 }, 0);
        assert_eq!(r, vec![Message::MissionAck { result: 2 }]);
    }

    #[test]
    fn command_acks() {
        let mut ob = onboard();
        let r = ob.handle(&Message::Command { cmd: Command::Start as u8 }, 0);
        assert_eq!(r, vec![Message::CommandAck { cmd: 3, result: 1 }]);
        let r = ob.handle(&Message::Command { cmd: Command::Arm as u8 }, 0);
        assert_eq!(r, vec![Message::CommandAck { cmd: 1, result: 0 }]);
        let r = ob.handle(&Message::Command { cmd: 77 }, 0);
        assert_eq!(r, vec![Message::CommandAck { cmd: 77, result: 2 }]);
    }

    #[test]
    fn telemetry_rates() {
        let mut ob = onboard();
        let mut s = WorldState::new(0.0, 0.0, 0.0, PowerState::new(50.0, 50.0, 3.0));
        let mut hb = 0;
        let mut pos = 0;
        for i in 0..200 {
            s.t = i as f64 * 0.05;
            for m in ob.telemetry(&s) {
                match m {
                    Message::Heartbeat { .. } => hb += 1,
                    Message::Position { .. } => pos += 1,
                    _ => {}
                }
            }
        }
        assert_eq!(hb, 10);
        assert_eq!(pos, 50);
    }
}
