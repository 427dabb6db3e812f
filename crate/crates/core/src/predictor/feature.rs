//! Yaw-aligned terrain feature extraction: bilinear-resampled elevation and
//! semantic patches centered on the robot footprint, plus per-wheel slope and
//! height samples for the physics priors.

use crate::physics::FootprintSample;
use crate::sim::{RobotParams, RobotState, Semantic, TerrainMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct FeatureConfig {
    /// Patch side length in cells.
    pub patch_cells: usize,
    /// Patch side length in meters.
    pub patch_extent: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            patch_cells: 5,
            patch_extent: 1.5,
        }
    }
}

impl FeatureConfig {
    /// Flattened network input width: elevation, semantic indicator and
    /// vegetation-height patches concatenated.
    pub fn input_dim(&self) -> usize {
        3 * self.patch_cells * self.patch_cells
    }

    /// Clearance needed around a pose so every patch and wheel sample stays
    /// on the map regardless of yaw.
    pub fn required_margin(&self, params: &RobotParams, map_resolution: f64) -> f64 {
        let patch_radius = self.patch_extent / 2.0 * std::f64::consts::SQRT_2;
        let wheel_radius =
            (params.wheelbase / 2.0).hypot(params.track / 2.0) + map_resolution;
        patch_radius.max(wheel_radius) + map_resolution
    }
}

/// One yaw-aligned terrain observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainFeature {
    /// Mean-centered elevation patch, row-major, meters.
    pub elev_patch: Vec<f64>,
    /// Vegetation indicator patch in {0, 1}.
    pub semantic_patch: Vec<f64>,
    /// Vegetation height patch, meters.
    pub veg_patch: Vec<f64>,
    pub footprint: FootprintSample,
    pub yaw: f64,
    /// Standard deviation of the (uncentered) elevation samples.
    pub unevenness: f64,
}

impl TerrainFeature {
    /// Flattened, concatenated patches as the network input vector.
    pub fn to_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(3 * self.elev_patch.len());
        v.extend_from_slice(&self.elev_patch);
        v.extend_from_slice(&self.semantic_patch);
        v.extend_from_slice(&self.veg_patch);
        v
    }
}

/// Per-wheel terrain measurements at a pose. The heading-aligned grade is a
/// symmetric finite difference over one cell; the semantic ratio comes from a
/// fixed 4x4 grid over the footprint rectangle.
pub fn footprint_at(
    map: &TerrainMap,
    pose: &RobotState,
    params: &RobotParams,
) -> Result<FootprintSample> {
    let (cos_y, sin_y) = (pose.yaw.cos(), pose.yaw.sin());
    let to_world = |bx: f64, by: f64| -> (f64, f64) {
        (
            pose.x + bx * cos_y - by * sin_y,
            pose.y + bx * sin_y + by * cos_y,
        )
    };

    let ds = map.resolution() / 2.0;
    let probe_margin = ds * 1.5;
    let mut slopes = [0.0; 4];
    let mut terrain_heights = [0.0; 4];
    let mut veg_heights = [0.0; 4];
    for (i, (bx, by)) in params.wheel_offsets().into_iter().enumerate() {
        let (wx, wy) = to_world(bx, by);
        if !map.in_bounds(wx, wy, probe_margin) {
            return Err(Error::domain(format!(
                "wheel {i} at ({wx:.2}, {wy:.2}) is off the map"
            )));
        }
        let (fx, fy) = (wx + cos_y * ds, wy + sin_y * ds);
        let (bx2, by2) = (wx - cos_y * ds, wy - sin_y * ds);
        slopes[i] = ((map.elevation_at(fx, fy) - map.elevation_at(bx2, by2)) / (2.0 * ds)).abs();
        terrain_heights[i] = map.elevation_at(wx, wy);
        veg_heights[i] = map.veg_height_at(wx, wy);
    }

    let mut veg_hits = 0usize;
    let mut samples = 0usize;
    for i in 0..4 {
        for j in 0..4 {
            let bx = params.wheelbase * (i as f64 / 3.0 - 0.5);
            let by = params.track * (j as f64 / 3.0 - 0.5);
            let (wx, wy) = to_world(bx, by);
            if map.semantic_at(wx, wy) == Semantic::Veg {
                veg_hits += 1;
            }
            samples += 1;
        }
    }
    let veg_ratio = veg_hits as f64 / samples as f64;

    Ok(FootprintSample {
        slopes,
        terrain_heights,
        veg_heights,
        roll_dists: [params.track; 2],
        pitch_dists: [params.wheelbase; 2],
        dirt_ratio: 1.0 - veg_ratio,
        veg_ratio,
    })
}

/// Extracts the yaw-aligned feature at a pose; fails with a domain error when
/// any sample point leaves the map.
pub fn extract_feature(
    map: &TerrainMap,
    pose: &RobotState,
    params: &RobotParams,
    cfg: &FeatureConfig,
) -> Result<TerrainFeature> {
    let p = cfg.patch_cells;
    let spacing = cfg.patch_extent / (p - 1) as f64;
    let (cos_y, sin_y) = (pose.yaw.cos(), pose.yaw.sin());
    let center = (p - 1) as f64 / 2.0;

    let mut elev = Vec::with_capacity(p * p);
    let mut sem = Vec::with_capacity(p * p);
    let mut veg = Vec::with_capacity(p * p);
    for row in 0..p {
        for col in 0..p {
            let bx = (col as f64 - center) * spacing;
            let by = (row as f64 - center) * spacing;
            let wx = pose.x + bx * cos_y - by * sin_y;
            let wy = pose.y + bx * sin_y + by * cos_y;
            if !map.in_bounds(wx, wy, 0.0) {
                return Err(Error::domain(format!(
                    "patch sample at ({wx:.2}, {wy:.2}) is off the map"
                )));
            }
            elev.push(map.elevation_at(wx, wy));
            veg.push(map.veg_height_at(wx, wy));
            sem.push(if map.semantic_at(wx, wy) == Semantic::Veg {
                1.0
            } else {
                0.0
            });
        }
    }

    let n = elev.len() as f64;
    let mean = elev.iter().sum::<f64>() / n;
    let unevenness =
        (elev.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
    elev.iter_mut().for_each(|e| *e -= mean);

    let footprint = footprint_at(map, pose, params)?;
    Ok(TerrainFeature {
        elev_patch: elev,
        semantic_patch: sem,
        veg_patch: veg,
        footprint,
        yaw: pose.yaw,
        unevenness,
    })
}
