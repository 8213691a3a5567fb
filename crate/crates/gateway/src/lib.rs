//! Live session gateway: accepts one patient client over a newline-delimited
//! line protocol (TCP, or the same lines over WebSocket), maps tracked
//! positions to elbow angle, and runs the avatar control loop at a fixed rate.

pub mod calibration;
pub mod server;
pub mod slot;
pub mod wire;

pub use calibration::{angle_from_position, AngleReading, ArcCalibration};
pub use server::{serve, GatewayConfig, GatewayError, GatewayHandle, LoopStats};
pub use wire::{parse, serialize, Message, WireError};
