//! Direct monocular visual odometry that fuses an asynchronous event stream
//! with sparse grayscale frames.
//!
//! The front-end accumulates events into brightness-increment images and
//! tracks 6-DOF camera motion against the last keyframe by comparing measured
//! increments with increments predicted from the keyframe via the event
//! generation model. The back-end refines keyframe poses and semi-dense
//! inverse depth maps with sliding-window photometric bundle adjustment.
//! A synthetic event-camera simulator and trajectory-evaluation tooling make
//! the whole pipeline testable without sensor hardware.

pub mod bootstrap;
pub mod camera;
pub mod config;
pub mod egm;
pub mod eval;
pub mod event;
pub mod geometry;
pub mod image;
pub mod io;
pub mod keyframes;
pub mod pba;
pub mod pipeline;
pub mod simconfig;
pub mod simulator;
pub mod study;
pub mod tracking;

pub use camera::CameraIntrinsics;
pub use event::Event;
pub use geometry::{Pose, Trajectory, Twist};
pub use image::ImageF64;
