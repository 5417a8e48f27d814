//! Per-sensor noise simulation over a ground-truth trajectory.
//!
//! Each simulator walks the truth samples at its own rate and emits
//! measurements with the covariance its noise model implies. Encoder
//! simulation runs the tick pipeline in reverse: mean twist over the
//! interval, ideal fractional ticks, slip noise, integer rounding, and
//! back through the forward kinematics.
//!
//! All generators are deterministic per seed; [`channel_rng`] derives an
//! independent stream per sensor so changing one sensor's parameters
//! cannot shift another's noise.

use alloc::vec::Vec;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::geometry::{angle_diff, deg_to_rad, wrap_angle, Pose2D, Twist2D};
use crate::mcl::{mcl_localize, MclConfig, ParticleSet};
use crate::sensors::{ticks_to_twist, twist_to_ticks, Measurement, Record, SensorLog, WheelGeometry};
use crate::traj::TruthSample;
use crate::world::{simulate_scan, OccupancyGrid, WorldError};

/// Variance floor keeping measurement covariances positive definite in
/// noise-free configurations.
const R_FLOOR: f64 = 1e-12;

/// Simulator noise parameters. Angles are radians; rates are Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct SimNoise {
    /// Encoder sampling rate.
    pub encoder_rate: f64,
    /// Fractional slip noise: 1-sigma tick error as a fraction of the
    /// ideal tick count.
    pub encoder_slip_sigma: f64,
    /// Round tick counts to whole ticks (the sensor's quantization).
    pub encoder_round_ticks: bool,
    /// Compass sampling rate.
    pub compass_rate: f64,
    /// Heading noise (rad, 1 sigma).
    pub compass_heading_sigma: f64,
    /// Heading quantization step (rad); zero disables quantization.
    pub compass_quant_step: f64,
    /// Yaw-rate noise (rad/s, 1 sigma).
    pub compass_gyro_sigma: f64,
    /// Laser range noise (m, 1 sigma), used by the full map pipeline.
    pub laser_range_sigma: f64,
    /// Map-fix rate.
    pub map_rate: f64,
    /// Shortcut-mode position noise (m, 1 sigma).
    pub map_sigma_xy: f64,
    /// Shortcut-mode heading noise (rad, 1 sigma).
    pub map_sigma_theta: f64,
}

impl Default for SimNoise {
    /// Defaults derived from the sensor suite: 500-count encoders with
    /// 1% slip, a 0.1-degree compass with 0.2-degree noise, 8 mm laser
    /// range noise, and 2 cm / 0.5 degree map fixes at 17 Hz.
    fn default() -> Self {
        SimNoise {
            encoder_rate: 50.0,
            encoder_slip_sigma: 0.01,
            encoder_round_ticks: true,
            compass_rate: 50.0,
            compass_heading_sigma: deg_to_rad(0.2),
            compass_quant_step: deg_to_rad(0.1),
            compass_gyro_sigma: 0.01,
            laser_range_sigma: 0.008,
            map_rate: 17.0,
            map_sigma_xy: 0.02,
            map_sigma_theta: deg_to_rad(0.5),
        }
    }
}

impl SimNoise {
    /// All noise sources disabled (including tick rounding); rates keep
    /// their defaults.
    pub fn noiseless() -> Self {
        SimNoise {
            encoder_slip_sigma: 0.0,
            encoder_round_ticks: false,
            compass_heading_sigma: 0.0,
            compass_quant_step: 0.0,
            compass_gyro_sigma: 0.0,
            laser_range_sigma: 0.0,
            map_sigma_xy: 0.0,
            map_sigma_theta: 0.0,
            ..SimNoise::default()
        }
    }
}

/// Independent deterministic RNG stream for one sensor channel.
pub fn channel_rng(seed: u64, channel: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over the (seed, channel) pair.
    let mut z = seed ^ channel.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    rand::SeedableRng::seed_from_u64(z ^ (z >> 31))
}

/// Interpolate the truth pose at `t`: linear in position, shortest-arc in
/// heading, clamped to the sampled range.
pub fn interp_pose(truth: &[TruthSample], t: f64) -> Pose2D {
    assert!(!truth.is_empty(), "interp_pose: empty truth");
    let first = &truth[0];
    let last = &truth[truth.len() - 1];
    if t <= first.t {
        return first.pose;
    }
    if t >= last.t {
        return last.pose;
    }
    let i = truth.partition_point(|s| s.t < t);
    let (a, b) = (&truth[i - 1], &truth[i]);
    if b.t == t {
        return b.pose;
    }
    let alpha = (t - a.t) / (b.t - a.t);
    Pose2D::new(
        a.pose.x + alpha * (b.pose.x - a.pose.x),
        a.pose.y + alpha * (b.pose.y - a.pose.y),
        a.pose.theta + alpha * angle_diff(b.pose.theta, a.pose.theta),
    )
}

/// Truth twist at `t` under a zero-order hold over the samples.
pub fn twist_at(truth: &[TruthSample], t: f64) -> Twist2D {
    assert!(!truth.is_empty(), "twist_at: empty truth");
    let i = truth.partition_point(|s| s.t <= t);
    truth[i.saturating_sub(1).min(truth.len() - 1)].twist
}

/// Mean twist over `[a, b)` under the zero-order hold.
fn mean_twist(truth: &[TruthSample], a: f64, b: f64) -> Twist2D {
    debug_assert!(b > a);
    let mut v = 0.0;
    let mut omega = 0.0;
    let start = truth.partition_point(|s| s.t <= a).saturating_sub(1);
    for (j, s) in truth.iter().enumerate().skip(start) {
        let seg_start = s.t.max(a);
        let seg_end = if j + 1 < truth.len() { truth[j + 1].t.min(b) } else { b };
        if seg_end <= seg_start {
            if s.t >= b {
                break;
            }
            continue;
        }
        let w = seg_end - seg_start;
        v += w * s.twist.v;
        omega += w * s.twist.omega;
    }
    Twist2D::new(v / (b - a), omega / (b - a))
}

fn sample_times(end: f64, rate: f64, include_zero: bool) -> impl Iterator<Item = f64> {
    let count = libm::floor(end * rate) as usize;
    let start = if include_zero { 0 } else { 1 };
    (start..=count).map(move |k| k as f64 / rate)
}

/// Simulate the encoder stream: ideal inverse-kinematic tick counts per
/// interval, slip noise, optional integer rounding, and conversion back
/// through [`ticks_to_twist`]. The covariance combines tick quantization
/// and the slip model.
pub fn simulate_encoder_log<R: Rng>(
    truth: &[TruthSample],
    geom: &WheelGeometry,
    noise: &SimNoise,
    rng: &mut R,
) -> Vec<Measurement> {
    assert!(!truth.is_empty(), "simulate_encoder_log: empty truth");
    assert!(noise.encoder_rate > 0.0);
    let dt = 1.0 / noise.encoder_rate;
    let end = truth[truth.len() - 1].t;
    let mut out = Vec::new();
    for t in sample_times(end, noise.encoder_rate, false) {
        let twist = mean_twist(truth, t - dt, t);
        let (mut dl, mut dr) = twist_to_ticks(&twist, dt, geom);
        if noise.encoder_slip_sigma > 0.0 {
            let zl: f64 = StandardNormal.sample(rng);
            let zr: f64 = StandardNormal.sample(rng);
            dl += zl * noise.encoder_slip_sigma * libm::fabs(dl);
            dr += zr * noise.encoder_slip_sigma * libm::fabs(dr);
        }
        if noise.encoder_round_ticks {
            dl = libm::round(dl);
            dr = libm::round(dr);
        }
        let measured = ticks_to_twist(dl, dr, dt, geom);

        // Per-wheel speed variance: uniform half-tick quantization plus
        // proportional slip.
        let tick_speed = geom.meters_per_tick() / dt;
        let quant_var = if noise.encoder_round_ticks { tick_speed * tick_speed / 12.0 } else { 0.0 };
        let half_track = 0.5 * geom.track_width;
        let slip_var = |wheel_speed: f64| {
            let s = noise.encoder_slip_sigma * libm::fabs(wheel_speed);
            s * s
        };
        let var_l = quant_var + slip_var(twist.v - twist.omega * half_track);
        let var_r = quant_var + slip_var(twist.v + twist.omega * half_track);
        let var_v = 0.25 * (var_l + var_r) + R_FLOOR;
        let var_w = (var_l + var_r) / (geom.track_width * geom.track_width) + R_FLOOR;

        out.push(Measurement::encoder_twist(
            t,
            Vector2::new(measured.v, measured.omega),
            Matrix2::from_diagonal(&Vector2::new(var_v, var_w)),
        ));
    }
    out
}

/// Simulate the compass stream: noisy quantized heading plus a noisy yaw
/// rate.
pub fn simulate_compass_log<R: Rng>(
    truth: &[TruthSample],
    noise: &SimNoise,
    rng: &mut R,
) -> Vec<Measurement> {
    assert!(!truth.is_empty(), "simulate_compass_log: empty truth");
    assert!(noise.compass_rate > 0.0);
    let end = truth[truth.len() - 1].t;
    let heading_noise =
        (noise.compass_heading_sigma > 0.0).then(|| Normal::new(0.0, noise.compass_heading_sigma).unwrap());
    let gyro_noise =
        (noise.compass_gyro_sigma > 0.0).then(|| Normal::new(0.0, noise.compass_gyro_sigma).unwrap());
    let step = noise.compass_quant_step;

    let var_theta = noise.compass_heading_sigma * noise.compass_heading_sigma
        + step * step / 12.0
        + R_FLOOR;
    let var_gyro = noise.compass_gyro_sigma * noise.compass_gyro_sigma + R_FLOOR;
    let r = Matrix2::from_diagonal(&Vector2::new(var_theta, var_gyro));

    let mut out = Vec::new();
    for t in sample_times(end, noise.compass_rate, true) {
        let mut theta = interp_pose(truth, t).theta;
        if let Some(d) = &heading_noise {
            theta += d.sample(rng);
        }
        if step > 0.0 {
            theta = libm::round(theta / step) * step;
        }
        let mut omega = twist_at(truth, t).omega;
        if let Some(d) = &gyro_noise {
            omega += d.sample(rng);
        }
        out.push(Measurement::compass_heading(
            t,
            Vector2::new(wrap_angle(theta), omega),
            r,
        ));
    }
    out
}

/// Parameters for the full map pipeline (scan simulation plus Monte
/// Carlo localization).
#[derive(Debug, Clone, PartialEq)]
pub struct FullMapParams {
    pub n_beams: usize,
    pub max_range: f64,
    pub n_particles: usize,
    /// Initial particle spread around the first truth pose (m).
    pub init_sigma_xy: f64,
    /// Initial heading spread (rad).
    pub init_sigma_theta: f64,
    pub mcl: MclConfig,
}

impl Default for FullMapParams {
    fn default() -> Self {
        FullMapParams {
            n_beams: 61,
            max_range: 10.0,
            n_particles: 500,
            init_sigma_xy: 0.1,
            init_sigma_theta: deg_to_rad(5.0),
            mcl: MclConfig::default(),
        }
    }
}

/// How map-pose fixes are produced.
#[derive(Debug, Clone)]
pub enum MapSimMode<'a> {
    /// Truth pose plus Gaussian noise with the matching covariance; the
    /// fast path for filter tests.
    Shortcut,
    /// Ray-cast scans matched against the grid by the Monte Carlo
    /// localizer.
    Full { grid: &'a OccupancyGrid, params: &'a FullMapParams },
}

/// Simulate the map-fix stream in either mode.
pub fn simulate_map_log<R: Rng>(
    truth: &[TruthSample],
    mode: MapSimMode<'_>,
    noise: &SimNoise,
    rng: &mut R,
) -> Result<Vec<Measurement>, WorldError> {
    assert!(!truth.is_empty(), "simulate_map_log: empty truth");
    assert!(noise.map_rate > 0.0);
    let end = truth[truth.len() - 1].t;
    match mode {
        MapSimMode::Shortcut => {
            let xy = (noise.map_sigma_xy > 0.0).then(|| Normal::new(0.0, noise.map_sigma_xy).unwrap());
            let th =
                (noise.map_sigma_theta > 0.0).then(|| Normal::new(0.0, noise.map_sigma_theta).unwrap());
            let r = Matrix3::from_diagonal(&Vector3::new(
                noise.map_sigma_xy * noise.map_sigma_xy + R_FLOOR,
                noise.map_sigma_xy * noise.map_sigma_xy + R_FLOOR,
                noise.map_sigma_theta * noise.map_sigma_theta + R_FLOOR,
            ));
            Ok(sample_times(end, noise.map_rate, true)
                .map(|t| {
                    let pose = interp_pose(truth, t);
                    let x = pose.x + xy.as_ref().map_or(0.0, |d| d.sample(rng));
                    let y = pose.y + xy.as_ref().map_or(0.0, |d| d.sample(rng));
                    let theta = wrap_angle(pose.theta + th.as_ref().map_or(0.0, |d| d.sample(rng)));
                    Measurement::map_pose(t, Vector3::new(x, y, theta), r)
                })
                .collect())
        }
        MapSimMode::Full { grid, params } => {
            let first_pose = interp_pose(truth, 0.0);
            let mut particles = ParticleSet::around(
                params.n_particles,
                &first_pose,
                params.init_sigma_xy,
                params.init_sigma_theta,
                rng,
            );
            let mut prev_pose = first_pose;
            let mut out = Vec::new();
            for t in sample_times(end, noise.map_rate, true) {
                let pose = interp_pose(truth, t);
                let delta = prev_pose.delta_to(&pose);
                let scan = simulate_scan(
                    grid,
                    &pose,
                    params.n_beams,
                    params.max_range,
                    noise.laser_range_sigma,
                    t,
                    rng,
                )?;
                let (next, meas) =
                    mcl_localize(&particles, &scan, grid, &delta, &params.mcl, rng)?;
                particles = next;
                out.extend(meas);
                prev_pose = pose;
            }
            Ok(out)
        }
    }
}

/// Simulate all three sensors over a truth trajectory and assemble the
/// merged, time-sorted log (truth records included).
///
/// Channel seeds are derived from `seed` per sensor: encoder 1,
/// compass 2, map 3.
pub fn simulate_log(
    truth: &[TruthSample],
    geom: &WheelGeometry,
    noise: &SimNoise,
    mode: MapSimMode<'_>,
    seed: u64,
) -> Result<SensorLog, WorldError> {
    let encoder = simulate_encoder_log(truth, geom, noise, &mut channel_rng(seed, 1));
    let compass = simulate_compass_log(truth, noise, &mut channel_rng(seed, 2));
    let map = simulate_map_log(truth, mode, noise, &mut channel_rng(seed, 3))?;
    let records = truth
        .iter()
        .map(|s| Record::Truth { t: s.t, pose: s.pose })
        .chain(map.into_iter().map(Record::Measurement))
        .chain(compass.into_iter().map(Record::Measurement))
        .chain(encoder.into_iter().map(Record::Measurement));
    Ok(SensorLog::merge(records))
}
