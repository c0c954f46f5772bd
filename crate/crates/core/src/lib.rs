//! Core of the water-care ground-control platform.
//!
//! * [`sim`]: the surface bot, its trash intake and its solar/battery budget.
//! * [`nav`]: mission mode machine, waypoint guidance and heading control.
//! * [`fence`]: shore-camera virtual fence that counts crossings.
//! * [`protocol`]: binary framing spoken between bot, cameras and the GCS.
//! * [`onboard`] and [`runner`]: the software-in-the-loop vehicle.

pub mod fence;
pub mod geom;
pub mod link;
pub mod nav;
pub mod onboard;
pub mod pgm;
pub mod protocol;
pub mod runner;
pub mod scenario;
pub mod sim;
pub mod synth;

pub use fence::{
    detect_blobs, detect_crossing, Alert, Blob, Crossing, DirectionMode, FenceError, FenceParams,
    FencePolyline, FenceState, GrayFrame, Side, Track,
};
pub use geom::{side_of, wrap_angle, Vec2};
pub use link::{Link, NullLink, TcpLink};
pub use nav::{
    apply_command, guidance, heading_controller, mission_step, wrap_error, Ack, Command, Mission,
    Mode, NavGains, Pose, Waypoint,
};
pub use onboard::{Onboard, OnboardConfig};
pub use protocol::{decode_stream, encode, Decoded, DecodeError, Encoder, Header, Message, Packet, StreamDecoder};
pub use runner::{RunError, RunReport, SimEvent, SimRunner};
pub use scenario::{ScenarioConfig, ScenarioError};
pub use sim::{
    collect_trash, step, trash_sensor, update_power, BotParams, PowerState, SimError, Simulator,
    SolarProfile, ThrustCommand, TrashItem, WorldState,
};
