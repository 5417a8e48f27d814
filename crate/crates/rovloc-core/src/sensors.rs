//! Measurement models for the three localization sources and the
//! encoder tick-to-twist conversion.
//!
//! Every source observes a linear slice of the state `[x, y, theta, v,
//! omega]`, so the observation matrices are constant selectors:
//!
//! * map pose fix: `[x, y, theta]`
//! * encoder twist: `[v, omega]`
//! * compass: `[theta, omega]`

use alloc::vec::Vec;
use core::f64::consts::TAU;

use nalgebra::{Matrix2, Matrix3, SMatrix, Vector2, Vector3};

use crate::geometry::Pose2D;
use crate::motion::State5;

/// Observation matrix for map pose fixes: selects `[x, y, theta]`.
pub const H_MAP: SMatrix<f64, 3, 5> = SMatrix::<f64, 3, 5>::new(
    1.0, 0.0, 0.0, 0.0, 0.0, //
    0.0, 1.0, 0.0, 0.0, 0.0, //
    0.0, 0.0, 1.0, 0.0, 0.0,
);

/// Observation matrix for encoder twist: selects `[v, omega]`.
pub const H_ENCODER: SMatrix<f64, 2, 5> = SMatrix::<f64, 2, 5>::new(
    0.0, 0.0, 0.0, 1.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 1.0,
);

/// Observation matrix for the compass: selects `[theta, omega]`.
pub const H_COMPASS: SMatrix<f64, 2, 5> = SMatrix::<f64, 2, 5>::new(
    0.0, 0.0, 1.0, 0.0, 0.0, //
    0.0, 0.0, 0.0, 0.0, 1.0,
);

/// Predicted map observation `[x, y, theta]`.
pub fn h_map(s: &State5) -> Vector3<f64> {
    Vector3::new(s.pose.x, s.pose.y, s.pose.theta)
}

/// Predicted encoder observation `[v, omega]`.
pub fn h_encoder(s: &State5) -> Vector2<f64> {
    Vector2::new(s.twist.v, s.twist.omega)
}

/// Predicted compass observation `[theta, omega]`.
pub fn h_compass(s: &State5) -> Vector2<f64> {
    Vector2::new(s.pose.theta, s.twist.omega)
}

/// Which source produced a measurement.
///
/// The ordering doubles as the processing priority for measurements that
/// share a timestamp: map fix first, then compass, then encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    MapPose,
    CompassHeading,
    EncoderTwist,
}

/// Source-tagged observation vector with its noise covariance.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// Absolute pose fix `[x, y, theta]` from matching against the map.
    MapPose { z: Vector3<f64>, r: Matrix3<f64> },
    /// Body twist `[v, omega]` from wheel encoders.
    EncoderTwist { z: Vector2<f64>, r: Matrix2<f64> },
    /// Heading and yaw rate `[theta, omega]` from the digital compass.
    CompassHeading { z: Vector2<f64>, r: Matrix2<f64> },
}

/// A timestamped reading from one of the three sources.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Time of validity (s).
    pub t: f64,
    pub obs: Observation,
}

impl Measurement {
    pub fn source(&self) -> Source {
        match self.obs {
            Observation::MapPose { .. } => Source::MapPose,
            Observation::EncoderTwist { .. } => Source::EncoderTwist,
            Observation::CompassHeading { .. } => Source::CompassHeading,
        }
    }

    pub fn map_pose(t: f64, z: Vector3<f64>, r: Matrix3<f64>) -> Self {
        Measurement { t, obs: Observation::MapPose { z, r } }
    }

    pub fn encoder_twist(t: f64, z: Vector2<f64>, r: Matrix2<f64>) -> Self {
        Measurement { t, obs: Observation::EncoderTwist { z, r } }
    }

    pub fn compass_heading(t: f64, z: Vector2<f64>, r: Matrix2<f64>) -> Self {
        Measurement { t, obs: Observation::CompassHeading { z, r } }
    }
}

/// One entry of a sensor log: either a ground-truth pose sample or a
/// measurement.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Truth { t: f64, pose: Pose2D },
    Measurement(Measurement),
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::Truth { t, .. } => *t,
            Record::Measurement(m) => m.t,
        }
    }
}

/// Time-ordered sensor log: measurements interleaved with optional
/// ground-truth pose samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SensorLog {
    /// Records in nondecreasing timestamp order. Consumers re-validate;
    /// build through [`SensorLog::from_sorted`] or [`SensorLog::merge`]
    /// to keep the invariant.
    pub records: Vec<Record>,
}

impl SensorLog {
    /// Build a log from records already sorted by timestamp.
    ///
    /// Returns the index of the first offending record if timestamps
    /// decrease anywhere.
    pub fn from_sorted(records: Vec<Record>) -> Result<Self, usize> {
        for i in 1..records.len() {
            if records[i].t() < records[i - 1].t() {
                return Err(i);
            }
        }
        Ok(SensorLog { records })
    }

    /// Merge record streams into one log, stably sorted by timestamp.
    ///
    /// Records with equal timestamps keep the order of the input streams,
    /// so merging is deterministic.
    pub fn merge<I: IntoIterator<Item = Record>>(streams: I) -> Self {
        let mut records: Vec<Record> = streams.into_iter().collect();
        records.sort_by(|a, b| a.t().total_cmp(&b.t()));
        SensorLog { records }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> {
        self.records.iter().filter_map(|r| match r {
            Record::Measurement(m) => Some(m),
            _ => None,
        })
    }

    /// Ground-truth pose samples, in log order.
    pub fn truth(&self) -> Vec<(f64, Pose2D)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Truth { t, pose } => Some((*t, *pose)),
                _ => None,
            })
            .collect()
    }
}

/// Differential-drive wheel geometry and encoder resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelGeometry {
    /// Wheel radius (m).
    pub wheel_radius: f64,
    /// Wheel separation (m).
    pub track_width: f64,
    /// Encoder ticks per wheel revolution (quadrature multiplier folded in).
    pub counts_per_rev: f64,
}

impl WheelGeometry {
    pub fn new(wheel_radius: f64, track_width: f64, counts_per_rev: f64) -> Self {
        assert!(
            wheel_radius > 0.0 && track_width > 0.0 && counts_per_rev > 0.0,
            "WheelGeometry: all parameters must be strictly positive"
        );
        WheelGeometry { wheel_radius, track_width, counts_per_rev }
    }

    /// Meters of wheel travel per encoder tick.
    pub fn meters_per_tick(&self) -> f64 {
        TAU * self.wheel_radius / self.counts_per_rev
    }
}

impl Default for WheelGeometry {
    /// 10 cm wheels on a 30 cm track with a 500-count encoder.
    fn default() -> Self {
        WheelGeometry::new(0.05, 0.30, 500.0)
    }
}

/// Convert per-interval encoder tick deltas to a body twist.
///
/// Wheel speed is `2*PI*wheel_radius*ticks / (counts_per_rev*dt)`; then
/// `v = (s_r + s_l)/2` and `omega = (s_r - s_l)/track_width`.
///
/// Tick deltas are signed and fractional values are accepted (rounding
/// to whole ticks is the simulator's job).
///
/// Panics if `dt <= 0`.
pub fn ticks_to_twist(d_left: f64, d_right: f64, dt: f64, geom: &WheelGeometry) -> crate::geometry::Twist2D {
    assert!(dt.is_finite() && dt > 0.0, "ticks_to_twist: dt must be > 0, got {dt}");
    let scale = geom.meters_per_tick() / dt;
    let s_l = d_left * scale;
    let s_r = d_right * scale;
    crate::geometry::Twist2D::new(0.5 * (s_r + s_l), (s_r - s_l) / geom.track_width)
}

/// Ideal (fractional) tick deltas that reproduce a twist over `dt`.
///
/// Inverse of [`ticks_to_twist`]; used by the encoder simulator.
pub fn twist_to_ticks(twist: &crate::geometry::Twist2D, dt: f64, geom: &WheelGeometry) -> (f64, f64) {
    assert!(dt.is_finite() && dt > 0.0, "twist_to_ticks: dt must be > 0, got {dt}");
    let half_track = 0.5 * geom.track_width;
    let s_l = twist.v - twist.omega * half_track;
    let s_r = twist.v + twist.omega * half_track;
    let scale = dt / geom.meters_per_tick();
    (s_l * scale, s_r * scale)
}
