//! Ground-truth traversability for the synthetic worlds.
//!
//! Tractions follow exponent-1.5 slope/height laws with clipped Beta noise,
//! intentionally different from the physics prior's linear laws so the prior
//! stays informative but imperfect; attitudes come from wheel-plane
//! trigonometry plus Gaussian noise.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

use crate::physics::{FootprintSample, PITCH_PAIRS, ROLL_PAIRS};
use crate::predictor::feature::footprint_at;
use crate::sim::{RobotParams, RobotState, Semantic, TerrainMap};
use crate::{Result, TraversabilitySample};

#[derive(Debug, Clone, Copy)]
pub struct GroundTruthConfig {
    /// Grade at which dirt traction reaches zero.
    pub s_max_lin: f64,
    pub s_max_ang: f64,
    /// Vegetation height at which traction reaches zero, meters.
    pub h_max: f64,
    /// Exponent of the normalized slope/height traction laws.
    pub exponent: f64,
    /// Beta concentration of traction noise; 0 disables noise.
    pub traction_conc: f64,
    /// Gaussian noise on attitude angles, radians; 0 disables noise.
    pub attitude_noise_std: f64,
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        GroundTruthConfig {
            s_max_lin: (30.0f64).to_radians().tan(),
            s_max_ang: (15.0f64).to_radians().tan(),
            h_max: 0.2,
            exponent: 1.5,
            traction_conc: 20.0,
            attitude_noise_std: 0.01,
        }
    }
}

impl GroundTruthConfig {
    fn traction_law(&self, normalized: f64) -> f64 {
        (1.0 - normalized.clamp(0.0, 1.0)).powf(self.exponent)
    }
}

/// Per-wheel mean traction for one parameter's slope scale: the slope law on
/// dirt, the vegetation-height law on vegetation.
fn mean_traction(
    fp: &FootprintSample,
    wheel_semantics: &[Semantic; 4],
    s_max: f64,
    cfg: &GroundTruthConfig,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        acc += match wheel_semantics[i] {
            Semantic::Dirt => cfg.traction_law(fp.slopes[i] / s_max),
            Semantic::Veg => cfg.traction_law(fp.veg_heights[i] / cfg.h_max),
        };
    }
    acc / 4.0
}

fn pair_angle_mean(fp: &FootprintSample, pairs: &[(usize, usize); 2], dists: &[f64; 2]) -> f64 {
    pairs
        .iter()
        .zip(dists)
        .map(|(&(i, j), &d)| ((fp.terrain_heights[i] - fp.terrain_heights[j]) / d).atan().abs())
        .sum::<f64>()
        / 2.0
}

fn sample_traction(mean: f64, conc: f64, rng: &mut impl Rng) -> f64 {
    if conc <= 0.0 {
        return mean.clamp(0.0, 1.0);
    }
    let mu = mean.clamp(1e-3, 1.0 - 1e-3);
    let beta = Beta::new(mu * conc, (1.0 - mu) * conc).expect("valid beta parameters");
    beta.sample(rng).clamp(0.0, 1.0)
}

fn sample_attitude(mean: f64, std: f64, rng: &mut impl Rng) -> f64 {
    let raw = if std <= 0.0 {
        mean
    } else {
        mean + Normal::new(0.0, std).expect("valid normal").sample(rng)
    };
    raw.abs().clamp(0.0, 1.2)
}

/// Draws one ground-truth traversability outcome at a pose. Deterministic
/// given the rng state; fails when the footprint leaves the map.
pub fn ground_truth_traversability(
    map: &TerrainMap,
    state: &RobotState,
    params: &RobotParams,
    cfg: &GroundTruthConfig,
    rng: &mut impl Rng,
) -> Result<TraversabilitySample> {
    let fp = footprint_at(map, state, params)?;

    let (cos_y, sin_y) = (state.yaw.cos(), state.yaw.sin());
    let mut wheel_semantics = [Semantic::Dirt; 4];
    for (i, (bx, by)) in params.wheel_offsets().into_iter().enumerate() {
        let wx = state.x + bx * cos_y - by * sin_y;
        let wy = state.y + bx * sin_y + by * cos_y;
        wheel_semantics[i] = map.semantic_at(wx, wy);
    }

    let mu_lin = mean_traction(&fp, &wheel_semantics, cfg.s_max_lin, cfg);
    let mu_ang = mean_traction(&fp, &wheel_semantics, cfg.s_max_ang, cfg);
    let roll_mean = pair_angle_mean(&fp, &ROLL_PAIRS, &fp.roll_dists);
    let pitch_mean = pair_angle_mean(&fp, &PITCH_PAIRS, &fp.pitch_dists);

    Ok(TraversabilitySample {
        lin_traction: sample_traction(mu_lin, cfg.traction_conc, rng),
        ang_traction: sample_traction(mu_ang, cfg.traction_conc, rng),
        roll: sample_attitude(roll_mean, cfg.attitude_noise_std, rng),
        pitch: sample_attitude(pitch_mean, cfg.attitude_noise_std, rng),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MapGenConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat_map() -> TerrainMap {
        TerrainMap::generate(&MapGenConfig {
            scale: 0.0,
            ..Default::default()
        })
    }

    #[test]
    fn flat_dirt_statistics() {
        let map = flat_map();
        let params = RobotParams::default();
        let cfg = GroundTruthConfig::default();
        let pose = RobotState { x: 12.0, y: 12.0, yaw: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 10_000;
        let mut sums = [0.0f64; 4];
        for _ in 0..n {
            let s = ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng).unwrap();
            for (acc, v) in sums.iter_mut().zip(s.values()) {
                *acc += v;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
        assert!(means[0] >= 0.95, "lin traction mean {}", means[0]);
        assert!(means[1] >= 0.95, "ang traction mean {}", means[1]);
        assert!(means[2] <= 0.01, "roll mean {}", means[2]);
        assert!(means[3] <= 0.01, "pitch mean {}", means[3]);
    }

    #[test]
    fn max_slope_kills_linear_traction() {
        // analytic planar world at exactly the true max grade
        let cfg = GroundTruthConfig::default();
        let base = flat_map();
        let dir = std::env::temp_dir().join("evtrav-gt-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("slope.tmap");
        let mut text = String::from("evtrav-terrain v1\n");
        text.push_str(&format!(
            "seed 0\nscale 1\nresolution {}\nrows {}\ncols {}\n",
            base.resolution(),
            base.rows(),
            base.cols()
        ));
        text.push_str("elevation\n");
        for r in 0..base.rows() {
            let _ = r;
            let row: Vec<String> = (0..base.cols())
                .map(|c| format!("{}", cfg.s_max_lin * c as f64 * base.resolution()))
                .collect();
            text.push_str(&row.join(" "));
            text.push('\n');
        }
        text.push_str("semantic\n");
        for _ in 0..base.rows() {
            text.push_str(&"d".repeat(base.cols()));
            text.push('\n');
        }
        text.push_str("veg_height\n");
        for _ in 0..base.rows() {
            text.push_str(&vec!["0"; base.cols()].join(" "));
            text.push('\n');
        }
        text.push_str("end\n");
        std::fs::write(&path, text).unwrap();
        let map = TerrainMap::load(&path).unwrap();

        let params = RobotParams::default();
        // heading straight up the grade
        let pose = RobotState { x: 12.0, y: 12.0, yaw: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng).unwrap();
            acc += s.lin_traction;
        }
        let mean = acc / n as f64;
        assert!(mean <= 0.05, "lin traction mean {mean}");
    }

    #[test]
    fn zero_noise_is_deterministic_mean_law() {
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 11,
            ..Default::default()
        });
        let params = RobotParams::default();
        let cfg = GroundTruthConfig {
            traction_conc: 0.0,
            attitude_noise_std: 0.0,
            ..Default::default()
        };
        let pose = RobotState { x: 11.3, y: 13.7, yaw: 1.1 };
        let mut rng_a = ChaCha8Rng::seed_from_u64(1);
        let mut rng_b = ChaCha8Rng::seed_from_u64(2);
        let a = ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng_a).unwrap();
        let b = ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng_b).unwrap();
        assert_eq!(a, b, "noise-free draws must not consume randomness");

        // matches an in-place recomputation of the mean laws
        let fp = footprint_at(&map, &pose, &params).unwrap();
        let expect_lin: f64 = fp
            .slopes
            .iter()
            .map(|&s| (1.0 - (s / cfg.s_max_lin).clamp(0.0, 1.0)).powf(1.5))
            .sum::<f64>()
            / 4.0;
        assert!((a.lin_traction - expect_lin).abs() < 1e-12);
    }

    #[test]
    fn off_map_state_is_rejected() {
        let map = flat_map();
        let params = RobotParams::default();
        let cfg = GroundTruthConfig::default();
        let pose = RobotState { x: -3.0, y: 5.0, yaw: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng).is_err());
    }

    #[test]
    fn tall_vegetation_slows_the_robot() {
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 4,
            scale: 0.0,
            veg_fraction: 0.999,
            veg_height_max: 0.2,
            ..Default::default()
        });
        let params = RobotParams::default();
        let cfg = GroundTruthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pose = RobotState { x: 12.0, y: 12.0, yaw: 0.0 };
        let n = 2000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = ground_truth_traversability(&map, &pose, &params, &cfg, &mut rng).unwrap();
            acc += s.lin_traction;
        }
        let flat = flat_map();
        let mut acc_flat = 0.0;
        for _ in 0..n {
            let s = ground_truth_traversability(&flat, &pose, &params, &cfg, &mut rng).unwrap();
            acc_flat += s.lin_traction;
        }
        assert!(acc / (n as f64) < acc_flat / (n as f64) - 0.05);
    }
}
