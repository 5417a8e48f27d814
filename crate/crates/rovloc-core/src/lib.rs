//! Planar mobile-robot localization core.
//!
//! The crate fuses three kinds of localization signals — wheel-encoder
//! odometry, compass heading, and absolute pose fixes from matching laser
//! scans against a known occupancy grid — with an extended Kalman filter
//! over the 5-state unicycle model `[x, y, theta, v, omega]`.
//!
//! Alongside the estimator it carries everything needed to exercise it
//! without hardware: a rectangle-trajectory generator, per-sensor noise
//! simulators, a ray-cast laser model with a bootstrap Monte Carlo
//! localizer, and RMSE trajectory evaluation.
//!
//! The crate is `no_std` (with `alloc`); file formats, configuration and
//! the command-line front end live in the companion `rovloc` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod mcl;
pub mod motion;
pub mod sensors;
pub mod sim;
pub mod traj;
pub mod world;

pub use geometry::{Pose2D, Twist2D};
pub use motion::{Mat5, State5};
pub use sensors::{Measurement, SensorLog};
pub use fusion::StateEstimate;
