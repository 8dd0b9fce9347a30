#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Deterministic marine-robotics sensor and actuator models.
//!
//! Sensors render from a shared triangle scene: forward-looking sonar,
//! event camera, thermal camera and ground-truth optical flow. Actuators
//! cover modular thruster dynamics and a tether chain. Communication covers
//! acoustic modems, USBL fixes and optical modems. Annotation turns render
//! buffers into boxes, masks and labeled point clouds.
//!
//! Every model is generic over [`Real`] (`f32` or `f64`). The aliases below
//! pin the common types to one precision.

pub mod annotation;
pub mod comms;
pub mod error;
pub mod event_camera;
pub mod io;
pub mod num;
pub mod optical_flow;
pub mod rng;
pub mod scene;
pub mod sonar;
pub mod tether;
pub mod thermal;
pub mod thrusters;

pub use error::{Error, Result};
pub use num::{Quat, Real, Vec2, Vec3};

pub type Scene64 = scene::Scene<f64>;
pub type Scene32 = scene::Scene<f32>;
pub type Pose64 = scene::Pose<f64>;
pub type Pose32 = scene::Pose<f32>;
pub type BodyState64 = scene::RigidBodyState<f64>;
pub type BodyState32 = scene::RigidBodyState<f32>;
pub type Intrinsics64 = scene::CameraIntrinsics<f64>;
pub type Intrinsics32 = scene::CameraIntrinsics<f32>;
pub type SonarConfig64 = sonar::SonarConfig<f64>;
pub type SonarConfig32 = sonar::SonarConfig<f32>;
pub type EventCamera64 = event_camera::EventCamera<f64>;
pub type EventCamera32 = event_camera::EventCamera<f32>;
pub type Thruster64 = thrusters::Thruster<f64>;
pub type Thruster32 = thrusters::Thruster<f32>;
pub type TetherConfig64 = tether::TetherConfig<f64>;
pub type TetherConfig32 = tether::TetherConfig<f32>;
pub type FlowField64 = optical_flow::FlowField<f64>;
pub type FlowField32 = optical_flow::FlowField<f32>;
