//! Ground-truth trajectory generation along a closed polygon at constant
//! speed.
//!
//! The waypoint list is traversed as a closed loop (the last edge returns
//! to the first corner). Corners are handled per [`CornerMode`]: either
//! the robot stops and rotates in place, or the corner is replaced by a
//! circular arc driven at full speed.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{angle_diff, wrap_angle, Pose2D, Twist2D};

/// Corner maneuver for polygon traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CornerMode {
    /// Stop at the corner and rotate in place at `turn_rate` rad/s.
    /// `f64::INFINITY` turns instantaneously (the heading steps between
    /// samples and no time is consumed).
    StopAndTurn { turn_rate: f64 },
    /// Replace the corner with a circular arc of the given radius,
    /// driven at full speed.
    BlendedArc { radius: f64 },
}

/// Closed-polygon trajectory specification.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    /// Polygon corners (m); the loop closes from the last back to the
    /// first.
    pub waypoints: Vec<(f64, f64)>,
    /// Constant forward speed on straight and arc segments (m/s).
    pub speed: f64,
    /// Ground-truth sample rate (Hz).
    pub sample_rate: f64,
    pub corner_mode: CornerMode,
}

impl TrajectorySpec {
    /// Axis-aligned rectangle with one corner at the origin, traversed
    /// counter-clockwise starting along +x.
    pub fn rectangle(width: f64, height: f64, speed: f64, sample_rate: f64, corner_mode: CornerMode) -> Self {
        TrajectorySpec {
            waypoints: alloc::vec![(0.0, 0.0), (width, 0.0), (width, height), (0.0, height)],
            speed,
            sample_rate,
            corner_mode,
        }
    }

    /// Validate and lay the spec out on a timeline.
    pub fn compile(&self) -> Result<Trajectory, TrajectoryError> {
        Trajectory::build(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryError {
    /// Fewer than three waypoints cannot form a closed polygon.
    TooFewWaypoints,
    /// Two consecutive waypoints coincide.
    DegenerateEdge,
    /// Speed or sample rate is not strictly positive.
    BadRates,
    /// A blend radius does not fit the adjacent edges.
    RadiusTooLarge,
}

impl fmt::Display for TrajectoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrajectoryError::TooFewWaypoints => write!(f, "need at least three waypoints"),
            TrajectoryError::DegenerateEdge => write!(f, "consecutive waypoints coincide"),
            TrajectoryError::BadRates => write!(f, "speed and sample rate must be positive"),
            TrajectoryError::RadiusTooLarge => {
                write!(f, "blend radius exceeds half an adjacent edge")
            }
        }
    }
}

impl core::error::Error for TrajectoryError {}

/// One timestamped ground-truth state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub pose: Pose2D,
    pub twist: Twist2D,
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    /// Straight segment from `(x0, y0)` along `heading`.
    Line { x0: f64, y0: f64, heading: f64 },
    /// Rotation in place at `(x, y)` from `heading0` at signed `rate`.
    Turn { x: f64, y: f64, heading0: f64, rate: f64 },
    /// Circular arc around `(cx, cy)`: polar angle starts at `phi0`, the
    /// heading turns at signed rate `omega` while driving at full speed.
    Arc { cx: f64, cy: f64, radius: f64, phi0: f64, omega: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct TimedPhase {
    t0: f64,
    duration: f64,
    phase: Phase,
}

/// A compiled trajectory: pose and twist as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    phases: Vec<TimedPhase>,
    duration: f64,
    path_length: f64,
    corner_times: Vec<f64>,
    speed: f64,
    sample_rate: f64,
}

impl Trajectory {
    fn build(spec: &TrajectorySpec) -> Result<Self, TrajectoryError> {
        let n = spec.waypoints.len();
        if n < 3 {
            return Err(TrajectoryError::TooFewWaypoints);
        }
        if !(spec.speed > 0.0 && spec.speed.is_finite())
            || !(spec.sample_rate > 0.0 && spec.sample_rate.is_finite())
        {
            return Err(TrajectoryError::BadRates);
        }

        // Edge geometry around the closed loop.
        let mut lengths = Vec::with_capacity(n);
        let mut headings = Vec::with_capacity(n);
        for i in 0..n {
            let (x0, y0) = spec.waypoints[i];
            let (x1, y1) = spec.waypoints[(i + 1) % n];
            let len = libm::hypot(x1 - x0, y1 - y0);
            if len <= 0.0 {
                return Err(TrajectoryError::DegenerateEdge);
            }
            lengths.push(len);
            headings.push(libm::atan2(y1 - y0, x1 - x0));
        }

        // Interior corners sit at waypoints 1..n-1 plus none at the start;
        // the loop ends back at waypoint 0 without turning. Blend cuts
        // shorten the edges on both sides of each turned corner.
        let mut cut_start = alloc::vec![0.0; n];
        let mut cut_end = alloc::vec![0.0; n];
        let turn_angle = |i: usize| angle_diff(headings[i + 1], headings[i]);

        if let CornerMode::BlendedArc { radius } = spec.corner_mode {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(TrajectoryError::RadiusTooLarge);
            }
            for i in 0..n - 1 {
                let delta = turn_angle(i);
                if delta != 0.0 {
                    let cut = radius * libm::tan(libm::fabs(delta) * 0.5);
                    cut_end[i] = cut;
                    cut_start[i + 1] = cut;
                }
            }
            for i in 0..n {
                if cut_start[i] + cut_end[i] >= lengths[i] {
                    return Err(TrajectoryError::RadiusTooLarge);
                }
            }
        }

        let mut phases = Vec::new();
        let mut corner_times = Vec::new();
        let mut t = 0.0;
        let mut path_length = 0.0;
        let unit = |heading: f64| (libm::cos(heading), libm::sin(heading));

        for i in 0..n {
            let (wx, wy) = spec.waypoints[i];
            let (dx, dy) = unit(headings[i]);
            let x0 = wx + cut_start[i] * dx;
            let y0 = wy + cut_start[i] * dy;
            let line_len = lengths[i] - cut_start[i] - cut_end[i];
            let line_time = line_len / spec.speed;
            phases.push(TimedPhase {
                t0: t,
                duration: line_time,
                phase: Phase::Line { x0, y0, heading: headings[i] },
            });
            t += line_time;
            path_length += line_len;

            if i == n - 1 {
                break;
            }
            let delta = turn_angle(i);
            if delta == 0.0 {
                continue;
            }
            let (cx_w, cy_w) = spec.waypoints[i + 1];
            match spec.corner_mode {
                CornerMode::StopAndTurn { turn_rate } => {
                    if !(turn_rate > 0.0) {
                        return Err(TrajectoryError::BadRates);
                    }
                    if turn_rate == f64::INFINITY {
                        // Instantaneous heading step; the corner still
                        // counts for spike bookkeeping.
                        corner_times.push(t);
                        continue;
                    }
                    let duration = libm::fabs(delta) / turn_rate;
                    let rate = if delta >= 0.0 { turn_rate } else { -turn_rate };
                    phases.push(TimedPhase {
                        t0: t,
                        duration,
                        phase: Phase::Turn { x: cx_w, y: cy_w, heading0: headings[i], rate },
                    });
                    corner_times.push(t + 0.5 * duration);
                    t += duration;
                }
                CornerMode::BlendedArc { radius } => {
                    // Arc center sits perpendicular to the incoming edge,
                    // on the inside of the turn.
                    let side = if delta >= 0.0 { 1.0 } else { -1.0 };
                    let entry_x = cx_w - cut_end[i] * dx;
                    let entry_y = cy_w - cut_end[i] * dy;
                    let cx = entry_x - side * radius * dy;
                    let cy = entry_y + side * radius * dx;
                    let phi0 = libm::atan2(entry_y - cy, entry_x - cx);
                    let omega = side * spec.speed / radius;
                    let duration = libm::fabs(delta) * radius / spec.speed;
                    phases.push(TimedPhase {
                        t0: t,
                        duration,
                        phase: Phase::Arc { cx, cy, radius, phi0, omega },
                    });
                    corner_times.push(t + 0.5 * duration);
                    t += duration;
                    path_length += libm::fabs(delta) * radius;
                }
            }
        }

        Ok(Trajectory {
            phases,
            duration: t,
            path_length,
            corner_times,
            speed: spec.speed,
            sample_rate: spec.sample_rate,
        })
    }

    /// Total traversal time (s).
    pub fn duration(&self) -> f64 {
        self.duration
    }

    /// Driven path length (m). Equals the polygon perimeter for
    /// stop-and-turn corners; arc blending shortens it.
    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Times at which the robot negotiates each interior corner.
    pub fn corner_times(&self) -> &[f64] {
        &self.corner_times
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Pose and twist at time `t`, clamped to `[0, duration]`.
    pub fn state_at(&self, t: f64) -> (Pose2D, Twist2D) {
        if t >= self.duration {
            if let Some(last) = self.phases.last() {
                let tail = self.phase_state(last, last.duration);
                return (tail.0, Twist2D::default());
            }
        }
        let t = t.clamp(0.0, self.duration);
        let idx = match self
            .phases
            .binary_search_by(|p| p.t0.total_cmp(&t))
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        // Zero-duration boundaries: advance to the phase that owns `t`.
        let mut idx = idx;
        while idx + 1 < self.phases.len() && t >= self.phases[idx + 1].t0 {
            idx += 1;
        }
        let phase = &self.phases[idx];
        self.phase_state(phase, t - phase.t0)
    }

    fn phase_state(&self, timed: &TimedPhase, dt: f64) -> (Pose2D, Twist2D) {
        let dt = dt.clamp(0.0, timed.duration);
        match &timed.phase {
            Phase::Line { x0, y0, heading } => {
                let s = self.speed * dt;
                (
                    Pose2D::new(
                        x0 + s * libm::cos(*heading),
                        y0 + s * libm::sin(*heading),
                        *heading,
                    ),
                    Twist2D::new(self.speed, 0.0),
                )
            }
            Phase::Turn { x, y, heading0, rate } => (
                Pose2D::new(*x, *y, wrap_angle(heading0 + rate * dt)),
                Twist2D::new(0.0, *rate),
            ),
            Phase::Arc { cx, cy, radius, phi0, omega } => {
                let phi = phi0 + omega * dt;
                let heading = phi + if *omega >= 0.0 { core::f64::consts::FRAC_PI_2 } else { -core::f64::consts::FRAC_PI_2 };
                (
                    Pose2D::new(
                        cx + radius * libm::cos(phi),
                        cy + radius * libm::sin(phi),
                        wrap_angle(heading),
                    ),
                    Twist2D::new(self.speed, *omega),
                )
            }
        }
    }

    /// Sample the trajectory at its configured rate: `t_k = k / rate` up
    /// to the duration.
    pub fn sample(&self) -> Vec<TruthSample> {
        let count = libm::floor(self.duration * self.sample_rate) as usize + 1;
        (0..count)
            .map(|k| {
                let t = k as f64 / self.sample_rate;
                let (pose, twist) = self.state_at(t);
                TruthSample { t, pose, twist }
            })
            .collect()
    }
}

/// Compile and sample a trajectory in one step.
pub fn generate_truth(spec: &TrajectorySpec) -> Result<Vec<TruthSample>, TrajectoryError> {
    Ok(spec.compile()?.sample())
}
