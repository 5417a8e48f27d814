//! Occupancy-grid world model and ray-cast laser simulation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Pose2D;

/// Laser field of view: 270 degrees, centered on the robot heading.
pub const SCAN_FOV: f64 = 1.5 * PI;

#[derive(Debug, Clone, PartialEq)]
pub enum WorldError {
    /// Grid construction parameters are inconsistent.
    BadGrid(&'static str),
    /// A pose that must lie inside the grid does not.
    OutOfBounds { x: f64, y: f64 },
    /// The particle set is empty.
    EmptyParticleSet,
}

impl fmt::Display for WorldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorldError::BadGrid(what) => write!(f, "invalid grid: {what}"),
            WorldError::OutOfBounds { x, y } => {
                write!(f, "pose ({x}, {y}) is outside the grid")
            }
            WorldError::EmptyParticleSet => write!(f, "particle set is empty"),
        }
    }
}

impl core::error::Error for WorldError {}

/// 2D occupancy grid.
///
/// Cell `(0, 0)` sits at `origin`; cell x grows along the origin heading
/// and cell y along its left normal. Cell values are occupancy in
/// `[0, 1]`, occupied when `>= occupied_threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    occupied_threshold: f64,
    cells: Vec<f64>,
}

impl OccupancyGrid {
    /// Build a grid from row-major cell values (`iy * width + ix`).
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        occupied_threshold: f64,
        cells: Vec<f64>,
    ) -> Result<Self, WorldError> {
        if width == 0 || height == 0 {
            return Err(WorldError::BadGrid("zero width or height"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(WorldError::BadGrid("resolution must be positive"));
        }
        if cells.len() != width * height {
            return Err(WorldError::BadGrid("cell count does not match width*height"));
        }
        if !cells.iter().all(|c| c.is_finite() && (0.0..=1.0).contains(c)) {
            return Err(WorldError::BadGrid("cell values must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&occupied_threshold) {
            return Err(WorldError::BadGrid("occupied threshold must lie in [0, 1]"));
        }
        Ok(OccupancyGrid { width, height, resolution, origin, occupied_threshold, cells })
    }

    /// All-free grid.
    pub fn empty(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        occupied_threshold: f64,
    ) -> Result<Self, WorldError> {
        Self::new(width, height, resolution, origin, occupied_threshold, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn occupied_threshold(&self) -> f64 {
        self.occupied_threshold
    }

    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        assert!(ix < self.width && iy < self.height, "cell index out of range");
        self.cells[iy * self.width + ix]
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, value: f64) {
        assert!(ix < self.width && iy < self.height, "cell index out of range");
        assert!(value.is_finite() && (0.0..=1.0).contains(&value));
        self.cells[iy * self.width + ix] = value;
    }

    /// Grid metric extents (m).
    pub fn size_m(&self) -> (f64, f64) {
        (self.width as f64 * self.resolution, self.height as f64 * self.resolution)
    }

    /// Map a world point to cell indices, `None` when outside.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let dx = x - self.origin.x;
        let dy = y - self.origin.y;
        let (s, c) = (libm::sin(self.origin.theta), libm::cos(self.origin.theta));
        let gx = (c * dx + s * dy) / self.resolution;
        let gy = (-s * dx + c * dy) / self.resolution;
        if gx < 0.0 || gy < 0.0 {
            return None;
        }
        let (ix, iy) = (libm::floor(gx) as usize, libm::floor(gy) as usize);
        (ix < self.width && iy < self.height).then_some((ix, iy))
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        let gx = (ix as f64 + 0.5) * self.resolution;
        let gy = (iy as f64 + 0.5) * self.resolution;
        let (s, c) = (libm::sin(self.origin.theta), libm::cos(self.origin.theta));
        (self.origin.x + c * gx - s * gy, self.origin.y + s * gx + c * gy)
    }

    /// Occupancy test at a world point, `None` when outside.
    pub fn occupied_at(&self, x: f64, y: f64) -> Option<bool> {
        self.world_to_cell(x, y)
            .map(|(ix, iy)| self.cell(ix, iy) >= self.occupied_threshold)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.world_to_cell(x, y).is_some()
    }

    /// Set every cell whose center falls inside the axis-aligned world
    /// rectangle `[x0, x1] x [y0, y1]`.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, value: f64) {
        for iy in 0..self.height {
            for ix in 0..self.width {
                let (cx, cy) = self.cell_center(ix, iy);
                if cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1 {
                    self.set_cell(ix, iy, value);
                }
            }
        }
    }

    /// Draw occupied walls one cell thick around the grid border.
    pub fn add_border_walls(&mut self) {
        for ix in 0..self.width {
            self.set_cell(ix, 0, 1.0);
            self.set_cell(ix, self.height - 1, 1.0);
        }
        for iy in 0..self.height {
            self.set_cell(0, iy, 1.0);
            self.set_cell(self.width - 1, iy, 1.0);
        }
    }
}

/// One simulated laser sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserScan {
    /// Acquisition time (s).
    pub t: f64,
    /// First beam angle relative to the robot heading (rad).
    pub angle_min: f64,
    /// Last beam angle relative to the robot heading (rad).
    pub angle_max: f64,
    /// Sensor range cap (m).
    pub max_range: f64,
    /// Measured range per beam (m), each in `[0, max_range]`.
    pub ranges: Vec<f64>,
}

impl LaserScan {
    pub fn n_beams(&self) -> usize {
        self.ranges.len()
    }

    /// Beam angle relative to the robot heading.
    pub fn beam_angle(&self, i: usize) -> f64 {
        debug_assert!(i < self.ranges.len());
        if self.ranges.len() < 2 {
            self.angle_min
        } else {
            self.angle_min
                + (self.angle_max - self.angle_min) * i as f64 / (self.ranges.len() - 1) as f64
        }
    }
}

/// Distance from `origin` to the first occupied cell along a beam, or
/// `max_range` when nothing is hit.
///
/// `beam_angle` is relative to `origin.theta`. The ray marches in steps
/// of half the grid resolution; leaving the grid counts as free space.
///
/// Errors when `origin` lies outside the grid.
pub fn ray_cast(
    grid: &OccupancyGrid,
    origin: &Pose2D,
    beam_angle: f64,
    max_range: f64,
) -> Result<f64, WorldError> {
    assert!(max_range >= 0.0 && max_range.is_finite(), "ray_cast: bad max_range {max_range}");
    if !grid.contains(origin.x, origin.y) {
        return Err(WorldError::OutOfBounds { x: origin.x, y: origin.y });
    }
    if grid.occupied_at(origin.x, origin.y) == Some(true) {
        return Ok(0.0);
    }
    let heading = origin.theta + beam_angle;
    let (dy, dx) = (libm::sin(heading), libm::cos(heading));
    let step = 0.5 * grid.resolution();
    let mut dist = step;
    while dist < max_range {
        let x = origin.x + dist * dx;
        let y = origin.y + dist * dy;
        if grid.occupied_at(x, y) == Some(true) {
            return Ok(dist);
        }
        dist += step;
    }
    Ok(max_range)
}

/// Simulate one laser sweep: `n_beams` evenly spaced over the 270-degree
/// field of view centered on the pose heading, each range a ray cast plus
/// Gaussian noise of `sigma_range`, clamped to `[0, max_range]`.
///
/// With `sigma_range == 0` no random numbers are drawn and the ranges are
/// the pure ray-cast distances.
pub fn simulate_scan<R: Rng>(
    grid: &OccupancyGrid,
    true_pose: &Pose2D,
    n_beams: usize,
    max_range: f64,
    sigma_range: f64,
    t: f64,
    rng: &mut R,
) -> Result<LaserScan, WorldError> {
    assert!(n_beams >= 2, "simulate_scan: need at least two beams");
    assert!(sigma_range >= 0.0, "simulate_scan: negative sigma_range");
    let angle_min = -0.5 * SCAN_FOV;
    let angle_max = 0.5 * SCAN_FOV;
    let noise = (sigma_range > 0.0).then(|| Normal::new(0.0, sigma_range).unwrap());
    let mut ranges = Vec::with_capacity(n_beams);
    for i in 0..n_beams {
        let angle = angle_min + SCAN_FOV * i as f64 / (n_beams - 1) as f64;
        let mut range = ray_cast(grid, true_pose, angle, max_range)?;
        if let Some(noise) = &noise {
            range += noise.sample(rng);
        }
        ranges.push(range.clamp(0.0, max_range));
    }
    Ok(LaserScan { t, angle_min, angle_max, max_range, ranges })
}
