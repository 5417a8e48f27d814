//! Nonlinear process model for the 5-state unicycle and its Jacobian.
//!
//! The state is `[x, y, theta, v, omega]`: planar pose plus body twist.
//! There is no exogenous control input; forward speed and yaw rate are
//! part of the state and get corrected by measurements.

use nalgebra::{Matrix5, Vector5};

use crate::geometry::{wrap_angle, Pose2D, Twist2D};

/// 5x5 real matrix over the state `[x, y, theta, v, omega]`.
pub type Mat5 = Matrix5<f64>;

/// 5-vector over the state `[x, y, theta, v, omega]`.
pub type Vec5 = Vector5<f64>;

/// Full vehicle state: pose plus body twist.
///
/// Flattened order for matrices is `[x, y, theta, v, omega]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State5 {
    pub pose: Pose2D,
    pub twist: Twist2D,
}

impl State5 {
    pub fn new(pose: Pose2D, twist: Twist2D) -> Self {
        State5 { pose, twist }
    }

    /// Flatten to `[x, y, theta, v, omega]`.
    pub fn to_vector(&self) -> Vec5 {
        Vec5::new(self.pose.x, self.pose.y, self.pose.theta, self.twist.v, self.twist.omega)
    }

    /// Rebuild from `[x, y, theta, v, omega]`, wrapping the heading.
    pub fn from_vector(v: &Vec5) -> Self {
        State5 {
            pose: Pose2D::new(v[0], v[1], wrap_angle(v[2])),
            twist: Twist2D::new(v[3], v[4]),
        }
    }
}

/// Advance the state by `dt` seconds under constant twist (Euler step).
///
/// ```text
/// x'     = x + v*dt*cos(theta)
/// y'     = y + v*dt*sin(theta)
/// theta' = wrap(theta + omega*dt)
/// v'     = v
/// omega' = omega
/// ```
///
/// Panics if `dt` is negative or non-finite.
pub fn predict_state(s: &State5, dt: f64) -> State5 {
    assert!(dt.is_finite() && dt >= 0.0, "predict_state: dt must be >= 0, got {dt}");
    let (x, y, theta) = (s.pose.x, s.pose.y, s.pose.theta);
    let (v, omega) = (s.twist.v, s.twist.omega);
    State5 {
        pose: Pose2D::new(
            x + v * dt * libm::cos(theta),
            y + v * dt * libm::sin(theta),
            wrap_angle(theta + omega * dt),
        ),
        twist: s.twist,
    }
}

/// Jacobian of [`predict_state`] with respect to the state.
///
/// Identity plus the partial derivatives of the Euler step:
/// `(0,2) = -v*dt*sin(theta)`, `(0,3) = dt*cos(theta)`,
/// `(1,2) = v*dt*cos(theta)`, `(1,3) = dt*sin(theta)`, `(2,4) = dt`.
///
/// Panics if `dt` is negative or non-finite.
pub fn jacobian_f(s: &State5, dt: f64) -> Mat5 {
    assert!(dt.is_finite() && dt >= 0.0, "jacobian_f: dt must be >= 0, got {dt}");
    let theta = s.pose.theta;
    let v = s.twist.v;
    let (sin_t, cos_t) = (libm::sin(theta), libm::cos(theta));
    let mut f = Mat5::identity();
    f[(0, 2)] = -v * dt * sin_t;
    f[(0, 3)] = dt * cos_t;
    f[(1, 2)] = v * dt * cos_t;
    f[(1, 3)] = dt * sin_t;
    f[(2, 4)] = dt;
    f
}
