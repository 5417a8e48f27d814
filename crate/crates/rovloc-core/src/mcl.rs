//! Bootstrap Monte Carlo localization against a known occupancy grid.
//!
//! A fixed-size particle filter stands in for adaptive map matching: the
//! particle cloud is propagated by the commanded body-frame motion plus
//! Gaussian jitter, reweighted with a Gaussian beam likelihood against
//! ray-cast range predictions, and systematically resampled when the
//! effective sample size collapses. Each call condenses the cloud into a
//! map-pose measurement whose covariance is the weighted particle spread.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{angle_diff, wrap_angle, Pose2D};
use crate::sensors::Measurement;
use crate::world::{ray_cast, LaserScan, OccupancyGrid, WorldError};

/// One pose hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

/// Weighted pose hypotheses; weights are kept normalized to sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
}

impl ParticleSet {
    /// Equal-weight particles drawn uniformly over a pose box.
    pub fn uniform<R: Rng>(
        n: usize,
        x: (f64, f64),
        y: (f64, f64),
        theta: (f64, f64),
        rng: &mut R,
    ) -> Self {
        assert!(n > 0, "ParticleSet::uniform: need at least one particle");
        let draw = |range: (f64, f64), rng: &mut R| {
            if range.1 > range.0 {
                rng.random_range(range.0..range.1)
            } else {
                range.0
            }
        };
        let w = 1.0 / n as f64;
        let particles = (0..n)
            .map(|_| Particle {
                pose: Pose2D::new(draw(x, rng), draw(y, rng), wrap_angle(draw(theta, rng))),
                weight: w,
            })
            .collect();
        ParticleSet { particles }
    }

    /// Equal-weight particles scattered around a pose with Gaussian spread.
    pub fn around<R: Rng>(
        n: usize,
        center: &Pose2D,
        sigma_xy: f64,
        sigma_theta: f64,
        rng: &mut R,
    ) -> Self {
        assert!(n > 0, "ParticleSet::around: need at least one particle");
        let xy = (sigma_xy > 0.0).then(|| Normal::new(0.0, sigma_xy).unwrap());
        let th = (sigma_theta > 0.0).then(|| Normal::new(0.0, sigma_theta).unwrap());
        let w = 1.0 / n as f64;
        let particles = (0..n)
            .map(|_| {
                let dx = xy.as_ref().map_or(0.0, |d| d.sample(rng));
                let dy = xy.as_ref().map_or(0.0, |d| d.sample(rng));
                let dt = th.as_ref().map_or(0.0, |d| d.sample(rng));
                Particle {
                    pose: Pose2D::new(center.x + dx, center.y + dy, center.theta + dt),
                    weight: w,
                }
            })
            .collect();
        ParticleSet { particles }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Sum of weights (1 after normalization).
    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            for p in &mut self.particles {
                p.weight /= total;
            }
        }
    }

    /// Inverse sum of squared weights.
    pub fn effective_sample_size(&self) -> f64 {
        let sq: f64 = self.particles.iter().map(|p| p.weight * p.weight).sum();
        if sq > 0.0 {
            1.0 / sq
        } else {
            0.0
        }
    }

    /// Weighted mean pose; heading is the circular mean.
    pub fn mean_pose(&self) -> Pose2D {
        let mut x = 0.0;
        let mut y = 0.0;
        let mut sin_sum = 0.0;
        let mut cos_sum = 0.0;
        for p in &self.particles {
            x += p.weight * p.pose.x;
            y += p.weight * p.pose.y;
            sin_sum += p.weight * libm::sin(p.pose.theta);
            cos_sum += p.weight * libm::cos(p.pose.theta);
        }
        Pose2D::new(x, y, libm::atan2(sin_sum, cos_sum))
    }

    /// Weighted sample covariance of `(x, y, theta)` about `mean`, with
    /// circular heading deviations.
    pub fn covariance_about(&self, mean: &Pose2D) -> Matrix3<f64> {
        let mut cov = Matrix3::zeros();
        for p in &self.particles {
            let d = Vector3::new(
                p.pose.x - mean.x,
                p.pose.y - mean.y,
                angle_diff(p.pose.theta, mean.theta),
            );
            cov += p.weight * d * d.transpose();
        }
        cov
    }
}

/// Tuning for [`mcl_localize`].
#[derive(Debug, Clone, PartialEq)]
pub struct MclConfig {
    /// Per-step position jitter applied during propagation (m, 1 sigma).
    pub jitter_xy: f64,
    /// Per-step heading jitter (rad, 1 sigma).
    pub jitter_theta: f64,
    /// Beam-likelihood range sigma (m).
    pub sigma_hit: f64,
    /// Use every `beam_stride`-th beam for the likelihood.
    pub beam_stride: usize,
    /// Resample when the effective sample size drops below this fraction
    /// of the particle count.
    pub resample_frac: f64,
    /// Diagonal floor added to the output measurement covariance.
    pub cov_floor: f64,
}

impl Default for MclConfig {
    fn default() -> Self {
        MclConfig {
            jitter_xy: 0.02,
            jitter_theta: 0.02,
            sigma_hit: 0.15,
            beam_stride: 8,
            resample_frac: 0.5,
            cov_floor: 1e-4,
        }
    }
}

/// One localization step: propagate, reweight against the scan, resample
/// if degenerate, and condense the cloud into a map-pose measurement.
///
/// `motion_delta` is the body-frame pose increment since the previous
/// scan. When every particle has zero likelihood (for example the whole
/// cloud is off-grid) the propagated particles keep their prior weights
/// and no measurement is produced.
///
/// Identical inputs and RNG state give bit-identical results.
pub fn mcl_localize<R: Rng>(
    particles: &ParticleSet,
    scan: &LaserScan,
    grid: &OccupancyGrid,
    motion_delta: &Pose2D,
    cfg: &MclConfig,
    rng: &mut R,
) -> Result<(ParticleSet, Option<Measurement>), WorldError> {
    if particles.is_empty() {
        return Err(WorldError::EmptyParticleSet);
    }
    assert!(cfg.sigma_hit > 0.0, "mcl_localize: sigma_hit must be positive");
    assert!(cfg.beam_stride > 0, "mcl_localize: beam_stride must be positive");

    // Propagate by the commanded motion plus jitter.
    let xy = (cfg.jitter_xy > 0.0).then(|| Normal::new(0.0, cfg.jitter_xy).unwrap());
    let th = (cfg.jitter_theta > 0.0).then(|| Normal::new(0.0, cfg.jitter_theta).unwrap());
    let mut moved = ParticleSet {
        particles: particles
            .particles
            .iter()
            .map(|p| {
                let mut pose = p.pose.compose(motion_delta);
                if let Some(d) = &xy {
                    pose = Pose2D::new(pose.x + d.sample(rng), pose.y + d.sample(rng), pose.theta);
                }
                if let Some(d) = &th {
                    pose = Pose2D::new(pose.x, pose.y, pose.theta + d.sample(rng));
                }
                Particle { pose, weight: p.weight }
            })
            .collect(),
    };

    // Gaussian beam likelihood over subsampled beams, in log space.
    let inv_two_sigma2 = 1.0 / (2.0 * cfg.sigma_hit * cfg.sigma_hit);
    let log_liks: Vec<f64> = moved
        .particles
        .iter()
        .map(|p| {
            if !grid.contains(p.pose.x, p.pose.y) {
                return f64::NEG_INFINITY;
            }
            let mut ll = 0.0;
            let mut i = 0;
            while i < scan.n_beams() {
                let predicted = ray_cast(grid, &p.pose, scan.beam_angle(i), scan.max_range)
                    .expect("particle verified in bounds");
                let err = scan.ranges[i] - predicted;
                ll -= err * err * inv_two_sigma2;
                i += cfg.beam_stride;
            }
            ll
        })
        .collect();

    let max_lw = moved
        .particles
        .iter()
        .zip(&log_liks)
        .map(|(p, ll)| libm::log(p.weight) + ll)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_lw == f64::NEG_INFINITY || max_lw.is_nan() {
        // Unusable scan: keep the propagated cloud and prior weights.
        return Ok((moved, None));
    }
    for (p, ll) in moved.particles.iter_mut().zip(&log_liks) {
        p.weight = libm::exp(libm::log(p.weight) + ll - max_lw);
    }
    moved.normalize();

    // Condense into a measurement before resampling flattens the weights.
    let mean = moved.mean_pose();
    let mut cov = moved.covariance_about(&mean);
    for i in 0..3 {
        cov[(i, i)] += cfg.cov_floor;
    }
    let measurement = Measurement::map_pose(
        scan.t,
        Vector3::new(mean.x, mean.y, mean.theta),
        cov,
    );

    let n = moved.len();
    if moved.effective_sample_size() < cfg.resample_frac * n as f64 {
        moved = systematic_resample(&moved, rng);
    }
    Ok((moved, Some(measurement)))
}

/// Systematic (low-variance) resampling to equal weights.
fn systematic_resample<R: Rng>(set: &ParticleSet, rng: &mut R) -> ParticleSet {
    let n = set.len();
    let inv_n = 1.0 / n as f64;
    let mut target = rng.random::<f64>() * inv_n;
    let mut cumulative = 0.0;
    let mut out = Vec::with_capacity(n);
    for p in &set.particles {
        cumulative += p.weight;
        while target < cumulative && out.len() < n {
            out.push(Particle { pose: p.pose, weight: inv_n });
            target += inv_n;
        }
    }
    // Rounding can leave a slot unfilled; duplicate the heaviest tail.
    while out.len() < n {
        out.push(Particle { pose: set.particles[n - 1].pose, weight: inv_n });
    }
    ParticleSet { particles: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::Observation;
    use crate::world::simulate_scan;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn walled_room() -> OccupancyGrid {
        let mut grid = OccupancyGrid::empty(80, 80, 0.05, Pose2D::default(), 0.5).unwrap();
        grid.add_border_walls();
        // Off-center block breaks the room's rotational symmetry.
        grid.fill_rect(2.6, 0.9, 3.1, 1.4, 1.0);
        grid
    }

    fn zero_jitter() -> MclConfig {
        MclConfig { jitter_xy: 0.0, jitter_theta: 0.0, ..MclConfig::default() }
    }

    #[test]
    fn consensus_cloud_reports_the_true_pose() {
        let grid = walled_room();
        let truth = Pose2D::new(1.0, 2.0, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scan = simulate_scan(&grid, &truth, 41, 6.0, 0.0, 0.0, &mut rng).unwrap();
        let cloud = ParticleSet {
            particles: alloc::vec![Particle { pose: truth, weight: 0.25 }; 4],
        };
        let (out, meas) =
            mcl_localize(&cloud, &scan, &grid, &Pose2D::default(), &zero_jitter(), &mut rng)
                .unwrap();
        let m = meas.unwrap();
        let Observation::MapPose { z, r } = &m.obs else { panic!("wrong source") };
        assert_abs_diff_eq!(z[0], truth.x, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], truth.y, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2], truth.theta, epsilon = 1e-12);
        // Covariance collapses to the configured floor.
        assert_abs_diff_eq!(r[(0, 0)], 1e-4, epsilon = 1e-12);
        assert!(r.symmetric_eigen().eigenvalues.min() > 0.0);
        assert_abs_diff_eq!(out.total_weight(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_particle_set_is_an_error() {
        let grid = walled_room();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scan = simulate_scan(&grid, &Pose2D::new(1.0, 1.0, 0.0), 41, 6.0, 0.0, 0.0, &mut rng)
            .unwrap();
        let empty = ParticleSet { particles: alloc::vec![] };
        assert_eq!(
            mcl_localize(&empty, &scan, &grid, &Pose2D::default(), &zero_jitter(), &mut rng),
            Err(WorldError::EmptyParticleSet)
        );
    }

    #[test]
    fn off_grid_cloud_yields_no_measurement() {
        let grid = walled_room();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scan = simulate_scan(&grid, &Pose2D::new(1.0, 1.0, 0.0), 41, 6.0, 0.0, 0.0, &mut rng)
            .unwrap();
        let lost = ParticleSet {
            particles: alloc::vec![Particle { pose: Pose2D::new(-5.0, -5.0, 0.0), weight: 1.0 }],
        };
        let (kept, meas) =
            mcl_localize(&lost, &scan, &grid, &Pose2D::default(), &zero_jitter(), &mut rng)
                .unwrap();
        assert!(meas.is_none());
        assert_eq!(kept.particles[0].weight, 1.0);
    }

    #[test]
    fn weights_stay_normalized_and_evolution_is_deterministic() {
        let grid = walled_room();
        let truth = Pose2D::new(1.5, 1.5, 0.0);
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cloud =
                ParticleSet::uniform(200, (0.2, 3.8), (0.2, 3.8), (-3.1, 3.1), &mut rng);
            let mut sums = alloc::vec::Vec::new();
            for step in 0..5 {
                let scan = simulate_scan(&grid, &truth, 41, 6.0, 0.005, step as f64, &mut rng)
                    .unwrap();
                let (next, _meas) = mcl_localize(
                    &cloud,
                    &scan,
                    &grid,
                    &Pose2D::default(),
                    &MclConfig::default(),
                    &mut rng,
                )
                .unwrap();
                cloud = next;
                sums.push(cloud.total_weight());
            }
            (cloud, sums)
        };
        let (cloud_a, sums_a) = run(7);
        let (cloud_b, _) = run(7);
        assert_eq!(cloud_a, cloud_b);
        for s in sums_a {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn resampling_flattens_degenerate_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut particles: Vec<Particle> = (0..50)
            .map(|i| Particle {
                pose: Pose2D::new(i as f64 * 0.01, 0.0, 0.0),
                weight: if i == 0 { 1.0 } else { 0.0 },
            })
            .collect();
        particles[0].weight = 1.0;
        let set = ParticleSet { particles };
        let resampled = systematic_resample(&set, &mut rng);
        assert_eq!(resampled.len(), 50);
        for p in &resampled.particles {
            assert_eq!(p.pose, set.particles[0].pose);
            assert_abs_diff_eq!(p.weight, 0.02, epsilon = 1e-15);
        }
    }
}
