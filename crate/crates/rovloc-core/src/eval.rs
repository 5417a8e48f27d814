//! Trajectory error metrics: RMSE of position and heading against a
//! reference, plus the per-axis error series behind them.
//!
//! The estimate is interpolated onto the reference timestamps (linear in
//! position, shortest-arc in heading); reference samples outside the
//! estimate's time span are skipped. Heading errors are computed
//! circularly before squaring and reported in degrees.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{angle_diff, rad_to_deg, wrap_angle, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalError {
    /// Reference or estimate series is empty.
    EmptySeries,
    /// The series do not overlap in time.
    NoOverlap,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptySeries => write!(f, "empty pose series"),
            EvalError::NoOverlap => write!(f, "pose series do not overlap in time"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Signed per-axis error at one reference timestamp
/// (estimate minus reference; heading in radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub ex: f64,
    pub ey: f64,
    pub e_theta: f64,
}

/// Aggregate evaluation result.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    /// Root-mean-square planar position error (m).
    pub rmse_position_m: f64,
    /// Root-mean-square heading error (deg).
    pub rmse_heading_deg: f64,
    pub max_err_x_m: f64,
    pub max_err_y_m: f64,
    pub max_err_heading_deg: f64,
    pub n_samples: usize,
    pub series: Vec<ErrorSample>,
}

/// Drop duplicate timestamps, keeping the last entry at each time (the
/// final posterior when a filter emitted several estimates at one tick).
fn dedup_by_time(series: &[(f64, Pose2D)]) -> Vec<(f64, Pose2D)> {
    let mut out: Vec<(f64, Pose2D)> = Vec::with_capacity(series.len());
    for &(t, pose) in series {
        if let Some(last) = out.last_mut() {
            debug_assert!(t >= last.0, "estimate series must be time-sorted");
            if last.0 == t {
                *last = (t, pose);
                continue;
            }
        }
        out.push((t, pose));
    }
    out
}

/// Interpolate a time-sorted, strictly increasing series at `t`; `None`
/// outside its span.
fn interp(series: &[(f64, Pose2D)], t: f64) -> Option<Pose2D> {
    let first = series.first()?;
    let last = series.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let i = series.partition_point(|s| s.0 < t);
    if i < series.len() && series[i].0 == t {
        return Some(series[i].1);
    }
    let (t0, p0) = series[i - 1];
    let (t1, p1) = series[i];
    let alpha = (t - t0) / (t1 - t0);
    Some(Pose2D::new(
        p0.x + alpha * (p1.x - p0.x),
        p0.y + alpha * (p1.y - p0.y),
        wrap_angle(p0.theta + alpha * angle_diff(p1.theta, p0.theta)),
    ))
}

/// Per-sample error series over the overlapping time range.
pub fn error_series(
    reference: &[(f64, Pose2D)],
    estimate: &[(f64, Pose2D)],
) -> Result<Vec<ErrorSample>, EvalError> {
    if reference.is_empty() || estimate.is_empty() {
        return Err(EvalError::EmptySeries);
    }
    let estimate = dedup_by_time(estimate);
    let mut series = Vec::new();
    for &(t, ref_pose) in reference {
        if let Some(est_pose) = interp(&estimate, t) {
            series.push(ErrorSample {
                t,
                ex: est_pose.x - ref_pose.x,
                ey: est_pose.y - ref_pose.y,
                e_theta: angle_diff(est_pose.theta, ref_pose.theta),
            });
        }
    }
    if series.is_empty() {
        return Err(EvalError::NoOverlap);
    }
    Ok(series)
}

/// Full evaluation: RMSE metrics, per-axis maxima, and the error series.
pub fn evaluate(
    reference: &[(f64, Pose2D)],
    estimate: &[(f64, Pose2D)],
) -> Result<EvalSummary, EvalError> {
    let series = error_series(reference, estimate)?;
    let n = series.len() as f64;
    let mut sum_pos = 0.0;
    let mut sum_theta = 0.0;
    let mut max_x = 0.0f64;
    let mut max_y = 0.0f64;
    let mut max_theta = 0.0f64;
    for s in &series {
        sum_pos += s.ex * s.ex + s.ey * s.ey;
        sum_theta += s.e_theta * s.e_theta;
        max_x = max_x.max(libm::fabs(s.ex));
        max_y = max_y.max(libm::fabs(s.ey));
        max_theta = max_theta.max(libm::fabs(s.e_theta));
    }
    Ok(EvalSummary {
        rmse_position_m: libm::sqrt(sum_pos / n),
        rmse_heading_deg: rad_to_deg(libm::sqrt(sum_theta / n)),
        max_err_x_m: max_x,
        max_err_y_m: max_y,
        max_err_heading_deg: rad_to_deg(max_theta),
        n_samples: series.len(),
        series,
    })
}

/// RMSE of planar position (m): `sqrt(mean((dx^2 + dy^2)))` over the
/// aligned series.
pub fn rmse_position(
    reference: &[(f64, Pose2D)],
    estimate: &[(f64, Pose2D)],
) -> Result<f64, EvalError> {
    evaluate(reference, estimate).map(|s| s.rmse_position_m)
}

/// RMSE of heading (deg), with circular differences taken before
/// squaring.
pub fn rmse_heading(
    reference: &[(f64, Pose2D)],
    estimate: &[(f64, Pose2D)],
) -> Result<f64, EvalError> {
    evaluate(reference, estimate).map(|s| s.rmse_heading_deg)
}
