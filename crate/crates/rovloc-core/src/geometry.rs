//! Planar pose and angle primitives.
//!
//! All angles are radians and all wrapped angles live in the half-open
//! interval `(-PI, PI]`, so the boundary angle has the unique
//! representation `PI`. Degrees appear only at CLI and report boundaries.

use core::f64::consts::{PI, TAU};

/// Wrap an angle to `(-PI, PI]`.
///
/// The result is congruent to `theta` modulo `2*PI`.
///
/// Panics if `theta` is not finite.
pub fn wrap_angle(theta: f64) -> f64 {
    assert!(theta.is_finite(), "wrap_angle: non-finite angle {theta}");
    // `%` is an exact operation on f64, so r is in (-TAU, TAU) and a single
    // correction lands in (-PI, PI].
    let r = theta % TAU;
    if r > PI {
        r - TAU
    } else if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Shortest signed angular difference `a - b`, wrapped to `(-PI, PI]`.
///
/// Panics if either input is not finite.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    assert!(a.is_finite() && b.is_finite(), "angle_diff: non-finite input");
    wrap_angle(a - b)
}

/// Degrees to radians.
pub fn deg_to_rad(deg: f64) -> f64 {
    deg * (PI / 180.0)
}

/// Radians to degrees.
pub fn rad_to_deg(rad: f64) -> f64 {
    rad * (180.0 / PI)
}

/// A planar pose: position in meters, heading in radians.
///
/// `theta` is kept wrapped to `(-PI, PI]` by the constructor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    /// World-frame x position (m).
    pub x: f64,
    /// World-frame y position (m).
    pub y: f64,
    /// Heading (rad), in `(-PI, PI]`.
    pub theta: f64,
}

impl Pose2D {
    /// Build a pose, wrapping `theta`.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        assert!(x.is_finite() && y.is_finite(), "Pose2D: non-finite position");
        Pose2D {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// Compose `self` with a body-frame increment `delta`.
    ///
    /// The increment's x axis points along the current heading.
    pub fn compose(&self, delta: &Pose2D) -> Pose2D {
        let (s, c) = (libm::sin(self.theta), libm::cos(self.theta));
        Pose2D::new(
            self.x + c * delta.x - s * delta.y,
            self.y + s * delta.x + c * delta.y,
            self.theta + delta.theta,
        )
    }

    /// Body-frame increment that carries `self` onto `other`.
    pub fn delta_to(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = (libm::sin(self.theta), libm::cos(self.theta));
        let dx = other.x - self.x;
        let dy = other.y - self.y;
        Pose2D::new(
            c * dx + s * dy,
            -s * dx + c * dy,
            angle_diff(other.theta, self.theta),
        )
    }

    /// Euclidean distance between the positions of two poses.
    pub fn distance(&self, other: &Pose2D) -> f64 {
        libm::hypot(other.x - self.x, other.y - self.y)
    }
}

impl Default for Pose2D {
    fn default() -> Self {
        Pose2D { x: 0.0, y: 0.0, theta: 0.0 }
    }
}

/// Body-frame velocity: forward linear speed and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist2D {
    /// Forward linear speed (m/s).
    pub v: f64,
    /// Yaw rate (rad/s), positive counter-clockwise.
    pub omega: f64,
}

impl Twist2D {
    /// Build a twist from finite components.
    pub fn new(v: f64, omega: f64) -> Self {
        assert!(v.is_finite() && omega.is_finite(), "Twist2D: non-finite component");
        Twist2D { v, omega }
    }
}
