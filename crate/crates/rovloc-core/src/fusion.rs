//! Extended Kalman filter over the 5-state unicycle model.
//!
//! Measurements from the three sources arrive asynchronously; the filter
//! predicts to each measurement's timestamp and applies that source's
//! linear update. Sequential updates with per-source noise blocks are
//! equivalent to a batched update for independent sensors, so nothing is
//! lost by processing one measurement at a time.
//!
//! Angular innovation components are computed circularly and the posterior
//! heading is re-wrapped, so the filter never sees a `2*PI` jump as a real
//! error.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Matrix2, Matrix3, SMatrix, SVector};

use crate::geometry::{angle_diff, wrap_angle, Pose2D, Twist2D};
use crate::motion::{jacobian_f, predict_state, Mat5, State5, Vec5};
use crate::sensors::{Measurement, Observation, SensorLog, Source, H_COMPASS, H_ENCODER, H_MAP};

/// Filter state: timestamped mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEstimate {
    /// Time of validity (s).
    pub t: f64,
    pub mean: State5,
    /// 5x5 covariance; kept symmetric and positive semidefinite.
    pub cov: Mat5,
}

impl StateEstimate {
    pub fn new(t: f64, mean: State5, cov: Mat5) -> Self {
        StateEstimate { t, mean, cov }
    }

    /// Estimate at a known pose with the default initial covariance
    /// `diag(0.25, 0.25, 0.1, 0.1, 0.1)` and zero twist.
    pub fn at_pose(t: f64, pose: Pose2D) -> Self {
        StateEstimate {
            t,
            mean: State5::new(pose, Twist2D::default()),
            cov: Mat5::from_diagonal(&Vec5::new(0.25, 0.25, 0.1, 0.1, 0.1)),
        }
    }
}

/// Process noise, per-sensor measurement-noise defaults, and gating
/// thresholds.
///
/// `q` is added once per predict call (per step, not per second); the
/// default is sized for stepping at roughly the fused output rate.
/// The per-sensor `r_*` blocks are construction defaults — measurements
/// carry their own covariance, which is what the filter uses.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// Process covariance added per predict step.
    pub q: Mat5,
    /// Default map-fix covariance (x, y, theta).
    pub r_map: Matrix3<f64>,
    /// Default encoder covariance (v, omega).
    pub r_encoder: Matrix2<f64>,
    /// Default compass covariance (theta, omega).
    pub r_compass: Matrix2<f64>,
    /// Apply the Mahalanobis gate inside [`update`].
    pub gating_enabled: bool,
    /// Gate threshold for 3-dimensional map fixes.
    pub gate_map: f64,
    /// Gate threshold for 2-dimensional encoder measurements.
    pub gate_encoder: f64,
    /// Gate threshold for 2-dimensional compass measurements.
    pub gate_compass: f64,
}

impl NoiseConfig {
    fn gate_threshold(&self, source: Source) -> f64 {
        match source {
            Source::MapPose => self.gate_map,
            Source::CompassHeading => self.gate_compass,
            Source::EncoderTwist => self.gate_encoder,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            q: Mat5::from_diagonal(&Vec5::new(1e-4, 1e-4, 1e-4, 1e-2, 1e-2)),
            // Map fixes: 2 cm position, 0.5 deg heading.
            r_map: Matrix3::from_diagonal(&nalgebra::Vector3::new(4.0e-4, 4.0e-4, 7.6e-5)),
            // Encoder: half-tick quantization plus ~1% slip at nominal
            // speed over 20 ms intervals.
            r_encoder: Matrix2::from_diagonal(&nalgebra::Vector2::new(8.0e-5, 3.3e-3)),
            // Compass: 0.2 deg heading noise plus 0.1 deg quantization,
            // 0.01 rad/s yaw-rate noise.
            r_compass: Matrix2::from_diagonal(&nalgebra::Vector2::new(1.25e-5, 1.0e-4)),
            gating_enabled: true,
            // Chi-square 99th percentile for 3 and 2 degrees of freedom.
            gate_map: 11.34,
            gate_encoder: 9.21,
            gate_compass: 9.21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FusionError {
    /// Measurement timestamps decrease at this index of the log's
    /// measurement sequence.
    UnsortedLog { index: usize },
    /// A measurement predates the initial estimate.
    InitAfterLogStart,
    /// The innovation covariance could not be inverted; the measurement
    /// noise or state covariance is ill-conditioned.
    SingularInnovation { source: Source },
    /// A non-finite value appeared in the state or covariance.
    NonFinite,
}

impl fmt::Display for FusionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionError::UnsortedLog { index } => {
                write!(f, "measurement log not sorted by timestamp at index {index}")
            }
            FusionError::InitAfterLogStart => {
                write!(f, "initial estimate is timestamped after the first measurement")
            }
            FusionError::SingularInnovation { source } => {
                write!(f, "singular innovation covariance for {source:?} measurement")
            }
            FusionError::NonFinite => write!(f, "non-finite value in filter state"),
        }
    }
}

impl core::error::Error for FusionError {}

/// Result of applying one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub estimate: StateEstimate,
    /// True when the Mahalanobis gate rejected the measurement; the
    /// estimate is then the unchanged prior.
    pub rejected: bool,
}

fn symmetrize(p: &Mat5) -> Mat5 {
    (p + p.transpose()) * 0.5
}

/// Clamp negative eigenvalues to zero, leaving already-PSD matrices
/// untouched.
fn clamp_psd(p: Mat5) -> Mat5 {
    let eig = p.symmetric_eigen();
    if eig.eigenvalues.min() >= 0.0 {
        return p;
    }
    let mut vals = eig.eigenvalues;
    for v in vals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    symmetrize(&(eig.eigenvectors * Mat5::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// Propagate the estimate by `dt` seconds: mean through the motion model,
/// covariance as `F P F^T + Q`, then re-symmetrized.
///
/// Panics if `dt` is negative.
pub fn predict(est: &StateEstimate, dt: f64, noise: &NoiseConfig) -> StateEstimate {
    let f = jacobian_f(&est.mean, dt);
    StateEstimate {
        t: est.t + dt,
        mean: predict_state(&est.mean, dt),
        cov: symmetrize(&(f * est.cov * f.transpose() + noise.q)),
    }
}

/// Innovation and its covariance for one linear measurement.
fn innovation<const M: usize>(
    est: &StateEstimate,
    h: &SMatrix<f64, M, 5>,
    z: &SVector<f64, M>,
    r: &SMatrix<f64, M, M>,
    angular: &[bool; M],
) -> (SVector<f64, M>, SMatrix<f64, M, M>) {
    let predicted = h * est.mean.to_vector();
    let mut nu = SVector::<f64, M>::zeros();
    for i in 0..M {
        nu[i] = if angular[i] {
            angle_diff(z[i], predicted[i])
        } else {
            z[i] - predicted[i]
        };
    }
    (nu, h * est.cov * h.transpose() + r)
}

fn apply_update<const M: usize>(
    est: &StateEstimate,
    source: Source,
    h: &SMatrix<f64, M, 5>,
    z: &SVector<f64, M>,
    r: &SMatrix<f64, M, M>,
    angular: &[bool; M],
    gate_threshold: Option<f64>,
) -> Result<UpdateOutcome, FusionError> {
    let (nu, s) = innovation(est, h, z, r, angular);
    let s_inv = s
        .try_inverse()
        .ok_or(FusionError::SingularInnovation { source })?;

    if let Some(threshold) = gate_threshold {
        let d2 = (nu.transpose() * s_inv * nu)[(0, 0)];
        if !(d2 <= threshold) {
            return Ok(UpdateOutcome { estimate: est.clone(), rejected: true });
        }
    }

    let k = est.cov * h.transpose() * s_inv;
    let mean_vec = est.mean.to_vector() + k * nu;
    let cov = clamp_psd(symmetrize(&(est.cov - k * h * est.cov)));
    if !mean_vec.iter().all(|v| v.is_finite()) || !cov.iter().all(|v| v.is_finite()) {
        return Err(FusionError::NonFinite);
    }
    Ok(UpdateOutcome {
        estimate: StateEstimate { t: est.t, mean: State5::from_vector(&mean_vec), cov },
        rejected: false,
    })
}

/// Apply one measurement to an estimate already predicted to its
/// timestamp.
///
/// When gating is enabled and the innovation fails the source's
/// Mahalanobis threshold, the prior is returned with `rejected = true`.
///
/// Panics if the measurement timestamp is not within 1 us of the
/// estimate's.
pub fn update(
    est: &StateEstimate,
    m: &Measurement,
    noise: &NoiseConfig,
) -> Result<UpdateOutcome, FusionError> {
    assert!(
        libm::fabs(m.t - est.t) <= 1e-6,
        "update: estimate at t={} but measurement at t={}; predict first",
        est.t,
        m.t
    );
    let threshold = noise
        .gating_enabled
        .then(|| noise.gate_threshold(m.source()));
    match &m.obs {
        Observation::MapPose { z, r } => {
            apply_update(est, Source::MapPose, &H_MAP, z, r, &[false, false, true], threshold)
        }
        Observation::EncoderTwist { z, r } => apply_update(
            est,
            Source::EncoderTwist,
            &H_ENCODER,
            z,
            r,
            &[false, false],
            threshold,
        ),
        Observation::CompassHeading { z, r } => apply_update(
            est,
            Source::CompassHeading,
            &H_COMPASS,
            z,
            r,
            &[true, false],
            threshold,
        ),
    }
}

/// Mahalanobis acceptance test: true iff the innovation's squared
/// Mahalanobis distance is within the source's configured threshold.
///
/// A singular innovation covariance counts as a rejection.
pub fn gate(est: &StateEstimate, m: &Measurement, noise: &NoiseConfig) -> bool {
    fn distance2<const M: usize>(
        est: &StateEstimate,
        h: &SMatrix<f64, M, 5>,
        z: &SVector<f64, M>,
        r: &SMatrix<f64, M, M>,
        angular: &[bool; M],
    ) -> Option<f64> {
        let (nu, s) = innovation(est, h, z, r, angular);
        let s_inv = s.try_inverse()?;
        Some((nu.transpose() * s_inv * nu)[(0, 0)])
    }

    let d2 = match &m.obs {
        Observation::MapPose { z, r } => distance2(est, &H_MAP, z, r, &[false, false, true]),
        Observation::EncoderTwist { z, r } => distance2(est, &H_ENCODER, z, r, &[false, false]),
        Observation::CompassHeading { z, r } => distance2(est, &H_COMPASS, z, r, &[true, false]),
    };
    match d2 {
        Some(d2) => d2 <= noise.gate_threshold(m.source()),
        None => false,
    }
}

/// Run the filter over a time-sorted log.
///
/// For each measurement the filter predicts to the measurement timestamp
/// and applies the update, emitting one estimate per measurement (gated
/// measurements emit the prior). Measurements sharing a timestamp are
/// processed in the fixed order map fix, compass, encoder.
///
/// The output is a pure function of `(log, init, noise)`.
pub fn run_filter(
    log: &SensorLog,
    init: &StateEstimate,
    noise: &NoiseConfig,
) -> Result<Vec<StateEstimate>, FusionError> {
    let mut ms: Vec<&Measurement> = log.measurements().collect();
    for i in 1..ms.len() {
        if ms[i].t < ms[i - 1].t {
            return Err(FusionError::UnsortedLog { index: i });
        }
    }
    // Pin the tie order: stable-sort each group of equal timestamps by
    // source priority.
    let mut start = 0;
    while start < ms.len() {
        let mut end = start + 1;
        while end < ms.len() && ms[end].t == ms[start].t {
            end += 1;
        }
        ms[start..end].sort_by_key(|m| m.source());
        start = end;
    }

    let mut est = init.clone();
    let mut trajectory = Vec::with_capacity(ms.len());
    for m in ms {
        let dt = m.t - est.t;
        if dt < -1e-9 {
            return Err(FusionError::InitAfterLogStart);
        }
        est = predict(&est, dt.max(0.0), noise);
        est.t = m.t;
        est = update(&est, m, noise)?.estimate;
        trajectory.push(est.clone());
    }
    Ok(trajectory)
}

/// Initial estimate for a log: pose from the first map fix when one
/// exists, otherwise `fallback`; zero twist; default initial covariance.
///
/// The timestamp is the first measurement's, so `run_filter` starts with
/// a zero-length predict.
pub fn initial_estimate(log: &SensorLog, fallback: &Pose2D) -> StateEstimate {
    let t0 = log.measurements().next().map_or(0.0, |m| m.t);
    let pose = log
        .measurements()
        .find_map(|m| match &m.obs {
            Observation::MapPose { z, .. } => Some(Pose2D::new(z[0], z[1], wrap_angle(z[2]))),
            _ => None,
        })
        .unwrap_or(*fallback);
    StateEstimate::at_pose(t0, pose)
}

/// Encoder-only dead reckoning: integrate each encoder twist through the
/// motion model over the interval it reports.
///
/// The baseline every fusion result is judged against.
pub fn dead_reckon(log: &SensorLog, init: Pose2D) -> Vec<(f64, Pose2D)> {
    let mut t_prev = log.records().first().map_or(0.0, |r| r.t());
    let mut state = State5::new(init, Twist2D::default());
    let mut out = Vec::new();
    for m in log.measurements() {
        if let Observation::EncoderTwist { z, .. } = &m.obs {
            let dt = (m.t - t_prev).max(0.0);
            // Ticks accumulate over (t_prev, m.t]; the reported twist
            // applies to that whole interval.
            state.twist = Twist2D::new(z[0], z[1]);
            state = predict_state(&state, dt);
            t_prev = m.t;
            out.push((m.t, state.pose));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::Record;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag5(a: f64, b: f64, c: f64, d: f64, e: f64) -> Mat5 {
        Mat5::from_diagonal(&Vec5::new(a, b, c, d, e))
    }

    fn no_gating() -> NoiseConfig {
        NoiseConfig { gating_enabled: false, ..NoiseConfig::default() }
    }

    fn min_eigenvalue(p: &Mat5) -> f64 {
        p.symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn predict_with_zero_twist_keeps_mean_and_transforms_cov() {
        // Stationary robot: F still carries the dt*cos/dt*sin/dt terms, so
        // the covariance picks up the hand-computed congruence below.
        let theta = 0.3;
        let dt = 0.1;
        let p = diag5(1.0, 2.0, 3.0, 4.0, 5.0);
        let est = StateEstimate::new(
            0.0,
            State5::new(Pose2D::new(1.0, -1.0, theta), Twist2D::new(0.0, 0.0)),
            p,
        );
        let noise = NoiseConfig { q: Mat5::zeros(), ..no_gating() };
        let out = predict(&est, dt, &noise);
        assert_eq!(out.mean, est.mean);
        assert_eq!(out.t, 0.1);

        let (s, c) = (libm::sin(theta), libm::cos(theta));
        // F = I + dt*c*E03 + dt*s*E13 + dt*E24 with v = 0, so F*P*F^T has
        // these entries for diagonal P:
        let mut expected = p;
        expected[(0, 0)] = 1.0 + (dt * c) * (dt * c) * 4.0;
        expected[(0, 1)] = dt * c * dt * s * 4.0;
        expected[(1, 0)] = expected[(0, 1)];
        expected[(0, 3)] = dt * c * 4.0;
        expected[(3, 0)] = expected[(0, 3)];
        expected[(1, 1)] = 2.0 + (dt * s) * (dt * s) * 4.0;
        expected[(1, 3)] = dt * s * 4.0;
        expected[(3, 1)] = expected[(1, 3)];
        expected[(2, 2)] = 3.0 + dt * dt * 5.0;
        expected[(2, 4)] = dt * 5.0;
        expected[(4, 2)] = expected[(2, 4)];
        assert_abs_diff_eq!((out.cov - expected).abs().max(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_zero_dt_zero_q_is_identity() {
        let est = StateEstimate::new(
            3.0,
            State5::new(Pose2D::new(1.0, 2.0, -0.5), Twist2D::new(0.4, 0.1)),
            diag5(0.3, 0.2, 0.1, 0.05, 0.05),
        );
        let noise = NoiseConfig { q: Mat5::zeros(), ..no_gating() };
        assert_eq!(predict(&est, 0.0, &noise), est);
    }

    #[test]
    fn predict_zero_dt_adds_process_noise() {
        let q = 0.25;
        let est = StateEstimate::new(0.0, State5::default(), Mat5::identity());
        let noise = NoiseConfig { q: Mat5::identity() * q, ..no_gating() };
        let out = predict(&est, 0.0, &noise);
        assert_eq!(out.cov, Mat5::identity() * (1.0 + q));
    }

    #[test]
    fn near_perfect_map_fix_dominates() {
        let est = StateEstimate::at_pose(0.0, Pose2D::default());
        let m = Measurement::map_pose(
            0.0,
            Vector3::new(5.0, 6.0, 0.2),
            Matrix3::identity() * 1e-12,
        );
        let out = update(&est, &m, &no_gating()).unwrap();
        assert!(!out.rejected);
        assert_abs_diff_eq!(out.estimate.mean.pose.x, 5.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out.estimate.mean.pose.y, 6.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out.estimate.mean.pose.theta, 0.2, epsilon = 1e-5);
    }

    #[test]
    fn unit_prior_and_unit_noise_halve_the_innovation() {
        // Degenerate check of the gain formula: P = I and R = I give
        // K = 0.5 on every measured component.
        let est = StateEstimate::new(0.0, State5::default(), Mat5::identity());
        let m = Measurement::map_pose(0.0, Vector3::new(1.0, 0.0, 0.0), Matrix3::identity());
        let out = update(&est, &m, &no_gating()).unwrap().estimate;
        assert_abs_diff_eq!(out.mean.pose.x, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.mean.pose.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn compass_innovation_wraps_across_the_seam() {
        // Prior heading 3.1, measured -3.1: the circular innovation is
        // +0.0832 (the short way), not -6.2. With P = R = I the gain is
        // 0.5, which lands the posterior exactly on PI.
        let est = StateEstimate::new(
            0.0,
            State5::new(Pose2D::new(0.0, 0.0, 3.1), Twist2D::default()),
            Mat5::identity(),
        );
        let m = Measurement::compass_heading(0.0, Vector2::new(-3.1, 0.0), Matrix2::identity());
        let out = update(&est, &m, &no_gating()).unwrap().estimate;
        assert_abs_diff_eq!(out.mean.pose.theta, core::f64::consts::PI, epsilon = 1e-9);
        let moved = angle_diff(out.mean.pose.theta, 3.1);
        assert_abs_diff_eq!(moved, 0.0832 / 2.0, epsilon = 1e-4);
    }

    #[test]
    fn gate_accepts_zero_innovation() {
        let est = StateEstimate::at_pose(0.0, Pose2D::new(1.0, 2.0, 0.3));
        let m = Measurement::map_pose(
            0.0,
            Vector3::new(1.0, 2.0, 0.3),
            Matrix3::identity() * 1e-4,
        );
        assert!(gate(&est, &m, &NoiseConfig::default()));
    }

    #[test]
    fn gate_rejects_four_sigma_scalar_innovation() {
        // 1-D analogue embedded in the encoder channel: zero state
        // covariance and R = I make S = I, so nu = (4, 0) gives d2 = 16,
        // beyond the 9.21 threshold (and beyond 9).
        let est = StateEstimate::new(0.0, State5::default(), Mat5::zeros());
        let m = Measurement::encoder_twist(0.0, Vector2::new(4.0, 0.0), Matrix2::identity());
        let noise = NoiseConfig { gate_encoder: 9.0, ..NoiseConfig::default() };
        assert!(!gate(&est, &m, &noise));
    }

    #[test]
    fn infinite_threshold_disables_the_gate() {
        let est = StateEstimate::new(0.0, State5::default(), Mat5::zeros());
        let m = Measurement::encoder_twist(0.0, Vector2::new(1e6, 0.0), Matrix2::identity());
        let noise = NoiseConfig { gate_encoder: f64::INFINITY, ..NoiseConfig::default() };
        assert!(gate(&est, &m, &noise));
    }

    #[test]
    fn gated_update_returns_prior_with_rejected_flag() {
        let est = StateEstimate::at_pose(0.0, Pose2D::default());
        let m = Measurement::map_pose(
            0.0,
            Vector3::new(100.0, 100.0, 0.0),
            Matrix3::identity() * 1e-6,
        );
        let out = update(&est, &m, &NoiseConfig::default()).unwrap();
        assert!(out.rejected);
        assert_eq!(out.estimate, est);
    }

    #[test]
    fn singular_innovation_covariance_is_an_error() {
        let est = StateEstimate::new(0.0, State5::default(), Mat5::zeros());
        let m = Measurement::encoder_twist(0.0, Vector2::new(0.1, 0.0), Matrix2::zeros());
        let err = update(&est, &m, &no_gating()).unwrap_err();
        assert_eq!(err, FusionError::SingularInnovation { source: Source::EncoderTwist });
    }

    #[test]
    fn run_filter_on_empty_log_is_empty() {
        let log = SensorLog::default();
        let init = StateEstimate::at_pose(0.0, Pose2D::default());
        let out = run_filter(&log, &init, &NoiseConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn run_filter_single_tight_map_fix_lands_on_it() {
        let z = Vector3::new(2.0, -1.0, 0.7);
        let log = SensorLog::merge([Record::Measurement(Measurement::map_pose(
            0.5,
            z,
            Matrix3::identity() * 1e-12,
        ))]);
        let init = StateEstimate::at_pose(0.0, Pose2D::default());
        let out = run_filter(&log, &init, &no_gating()).unwrap();
        assert_eq!(out.len(), 1);
        assert_abs_diff_eq!(out[0].mean.pose.x, 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out[0].mean.pose.y, -1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(out[0].mean.pose.theta, 0.7, epsilon = 1e-5);
        assert_eq!(out[0].t, 0.5);
    }

    #[test]
    fn run_filter_rejects_unsorted_log() {
        let records = alloc::vec![
            Record::Measurement(Measurement::compass_heading(
                1.0,
                Vector2::zeros(),
                Matrix2::identity(),
            )),
            Record::Measurement(Measurement::compass_heading(
                0.5,
                Vector2::zeros(),
                Matrix2::identity(),
            )),
        ];
        let log = SensorLog { records };
        let init = StateEstimate::at_pose(0.0, Pose2D::default());
        assert_eq!(
            run_filter(&log, &init, &NoiseConfig::default()),
            Err(FusionError::UnsortedLog { index: 1 })
        );
    }

    #[test]
    fn tied_timestamps_process_map_before_encoder() {
        // The log lists the encoder reading first; the pinned tie order
        // must still apply the map fix first, so the first emitted
        // estimate shows the pose jump but not the twist update.
        let log = SensorLog::merge([
            Record::Measurement(Measurement::encoder_twist(
                1.0,
                Vector2::new(0.8, 0.0),
                Matrix2::identity() * 1e-10,
            )),
            Record::Measurement(Measurement::map_pose(
                1.0,
                Vector3::new(5.0, 0.0, 0.0),
                Matrix3::identity() * 1e-10,
            )),
        ]);
        let init = StateEstimate::at_pose(1.0, Pose2D::default());
        let out = run_filter(&log, &init, &no_gating()).unwrap();
        assert_eq!(out.len(), 2);
        assert_abs_diff_eq!(out[0].mean.pose.x, 5.0, epsilon = 1e-4);
        assert_abs_diff_eq!(out[0].mean.twist.v, 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(out[1].mean.twist.v, 0.8, epsilon = 1e-4);
    }

    #[test]
    fn run_filter_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut records = Vec::new();
        for i in 0..200 {
            let t = i as f64 * 0.02;
            records.push(Record::Measurement(Measurement::compass_heading(
                t,
                Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-0.5..0.5)),
                Matrix2::identity() * 1e-4,
            )));
        }
        let log = SensorLog::merge(records);
        let init = StateEstimate::at_pose(0.0, Pose2D::default());
        let a = run_filter(&log, &init, &NoiseConfig::default()).unwrap();
        let b = run_filter(&log, &init, &NoiseConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn covariance_stays_symmetric_psd_and_contracts_measured_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let noise = NoiseConfig::default();
        let mut est = StateEstimate::at_pose(0.0, Pose2D::default());
        for step in 0..300 {
            est = predict(&est, 0.02, &noise);
            let prior = est.clone();
            let m = match step % 3 {
                0 => Measurement::map_pose(
                    est.t,
                    Vector3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.3..0.3),
                    ),
                    Matrix3::identity() * 1e-3,
                ),
                1 => Measurement::compass_heading(
                    est.t,
                    Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.2..0.2)),
                    Matrix2::identity() * 1e-4,
                ),
                _ => Measurement::encoder_twist(
                    est.t,
                    Vector2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)),
                    Matrix2::identity() * 1e-4,
                ),
            };
            let out = update(&est, &m, &noise).unwrap();
            est = out.estimate;

            let asym = (est.cov - est.cov.transpose()).abs().max();
            assert!(asym <= 1e-9, "asymmetry {asym} at step {step}");
            let min_eig = min_eigenvalue(&est.cov);
            assert!(min_eig >= -1e-9, "min eigenvalue {min_eig} at step {step}");
            let theta = est.mean.pose.theta;
            assert!(theta > -core::f64::consts::PI && theta <= core::f64::consts::PI);

            if !out.rejected {
                // Loewner contraction along the measured directions:
                // H P+ H^T must not exceed H P- H^T + 1e-12 I.
                fn contraction_margin<const M: usize>(
                    prior: &Mat5,
                    post: &Mat5,
                    h: &SMatrix<f64, M, 5>,
                ) -> f64 {
                    let slack = SMatrix::<f64, M, M>::identity() * 1e-12;
                    let diff = h * prior * h.transpose() + slack - h * post * h.transpose();
                    let sym = (diff + diff.transpose()) * 0.5;
                    sym.symmetric_eigen().eigenvalues.min()
                }
                let margin = match m.source() {
                    Source::MapPose => contraction_margin(&prior.cov, &est.cov, &H_MAP),
                    Source::CompassHeading => contraction_margin(&prior.cov, &est.cov, &H_COMPASS),
                    Source::EncoderTwist => contraction_margin(&prior.cov, &est.cov, &H_ENCODER),
                };
                assert!(margin >= -1e-12, "contraction violated: {margin} at step {step}");
            }
        }
    }
}
