//! Software-in-the-loop runner: steps the world, runs the onboard computer
//! against it and exchanges frames with a ground station over a [`Link`].

use std::io;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::link::Link;
use crate::nav::Mode;
use crate::onboard::Onboard;
use crate::protocol::{Encoder, Message, StreamDecoder, SYS_BOT};
use crate::sim::{SimError, Simulator};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("link failure: {0}")]
    Link(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    WaypointReached { t: f64, index: usize },
    HomeReached { t: f64 },
    Collected { t: f64, id: u32 },
    ModeChanged { t: f64, mode: Mode },
    PowerDead { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub duration_s: f64,
    pub steps: u64,
    pub waypoints_reached: usize,
    pub items_collected: usize,
    pub payload_kg: f64,
    pub distance_traveled_m: f64,
    pub energy_consumed_wh: f64,
    pub energy_harvested_wh: f64,
    pub final_soc_wh: f64,
    pub alerts_emitted: u64,
    pub final_mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

pub struct SimRunner<L: Link> {
    pub sim: Simulator,
    pub onboard: Onboard,
    pub link: L,
    /// Throttle stepping to wall-clock time.
    pub realtime: bool,
    encoder: Encoder,
    decoder: StreamDecoder,
    inbox: Vec<u8>,
    events: Vec<SimEvent>,
    distance: f64,
    steps: u64,
    start_t: f64,
    waypoints_reached: usize,
}

impl<L: Link> SimRunner<L> {
    pub fn new(sim: Simulator, onboard: Onboard, link: L) -> Self {
        let start_t = sim.state.t;
        Self {
            sim,
            onboard,
            link,
            realtime: false,
            encoder: Encoder::new(SYS_BOT, 1),
            decoder: StreamDecoder::new(),
            inbox: Vec::new(),
            events: Vec::new(),
            distance: 0.0,
            steps: 0,
            start_t,
            waypoints_reached: 0,
        }
    }

    pub fn events(&self) -> &[SimEvent] {
        &self.events
    }

    /// Indices of waypoints in the order they were reached.
    pub fn arrival_order(&self) -> Vec<usize> {
        self.events
            .iter()
            .filter_map(|e| match e {
                SimEvent::WaypointReached { index, .. } => Some(*index),
                _ => None,
            })
            .collect()
    }

    pub fn distance_traveled(&self) -> f64 {
        self.distance
    }

    fn now_ms(&self) -> u64 {
        (self.sim.state.t * 1000.0).round() as u64
    }

    fn send(&mut self, msg: &Message) -> Result<(), RunError> {
        let frame = self.encoder.encode(msg);
        self.link.send(&frame)?;
        Ok(())
    }

    /// Sends a message on the link from the bot's identity.
    pub fn transmit(&mut self, msg: &Message) -> Result<(), RunError> {
        self.send(msg)
    }

    /// Drains the link and answers every complete message.
    pub fn service_link(&mut self) -> Result<(), RunError> {
        self.inbox.clear();
        self.link.poll(&mut self.inbox)?;
        let now = self.now_ms();
        let mut replies = Vec::new();
        if !self.inbox.is_empty() {
            let decoded = self.decoder.feed(&self.inbox);
            for packet in decoded.packets {
                let before = self.onboard.mission.mode;
                replies.extend(self.onboard.handle(&packet.message, now));
                self.note_mode(before);
            }
        }
        replies.extend(self.onboard.poll_timeouts(now));
        for reply in replies {
            self.send(&reply)?;
        }
        Ok(())
    }

    fn note_mode(&mut self, before: Mode) {
        let mode = self.onboard.mission.mode;
        if mode != before {
            self.events.push(SimEvent::ModeChanged {
                t: self.sim.state.t,
                mode,
            });
        }
    }

    pub fn tick(&mut self) -> Result<(), RunError> {
        self.service_link()?;

        for msg in self.onboard.telemetry(&self.sim.state) {
            self.send(&msg)?;
        }

        self.sim.state.conveyor_on = self.onboard.conveyor;
        let before = self.onboard.mission.mode;
        let control = self.onboard.control(&self.sim.state, &self.sim.params);
        if let Some(index) = control.reached {
            self.waypoints_reached += 1;
            self.events.push(SimEvent::WaypointReached {
                t: self.sim.state.t,
                index,
            });
        }
        if control.arrived_home {
            self.events.push(SimEvent::HomeReached {
                t: self.sim.state.t,
            });
        }
        self.note_mode(before);

        let was_dead = self.sim.state.power.dead;
        let from = self.sim.state.position();
        let outcome = self.sim.tick(control.thrust)?;
        self.distance += from.distance(self.sim.state.position());
        self.steps += 1;
        let t = self.sim.state.t;
        self.events
            .extend(outcome.collected.iter().map(|&id| SimEvent::Collected { t, id }));
        if self.sim.state.power.dead && !was_dead {
            self.events.push(SimEvent::PowerDead { t });
        }
        Ok(())
    }

    /// Steps until `duration_s` of simulated time has elapsed.
    pub fn run_for(&mut self, duration_s: f64) -> Result<RunReport, RunError> {
        let steps = (duration_s / self.sim.dt).round().max(0.0) as u64;
        let wall = Instant::now();
        for i in 0..steps {
            self.tick()?;
            if self.realtime {
                let due = Duration::from_secs_f64((i + 1) as f64 * self.sim.dt);
                if let Some(wait) = due.checked_sub(wall.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
        }
        Ok(self.report())
    }

    pub fn report(&self) -> RunReport {
        let s = &self.sim.state;
        RunReport {
            duration_s: s.t - self.start_t,
            steps: self.steps,
            waypoints_reached: self.waypoints_reached,
            items_collected: s.items_collected(),
            payload_kg: s.payload_kg,
            distance_traveled_m: self.distance,
            energy_consumed_wh: self.sim.energy.consumed_wh,
            energy_harvested_wh: self.sim.energy.harvested_wh,
            final_soc_wh: s.power.soc_wh,
            alerts_emitted: 0,
            final_mode: self.onboard.mission.mode,
            wall_time_s: None,
        }
    }
}
