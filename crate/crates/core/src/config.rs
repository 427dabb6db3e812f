//! Declarative experiment configuration: one flat `key = value` file per
//! experiment plus command-line overrides. Every invented constant in the
//! other modules surfaces here with its default.

use std::collections::BTreeMap;
use std::path::Path;

use crate::predictor::{EvidenceMode, EvidentialConfig, PriorKind};
use crate::predictor::FeatureConfig;
use crate::physics::PriorConfig;
use crate::planner::PlannerConfig;
use crate::sim::{EpisodeConfig, GroundTruthConfig, MapGenConfig, RobotParams};
use crate::{Error, Result};

/// A parsed configuration: raw key/value pairs over built-in defaults.
#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Parses a `key = value` file; `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(
                    path.display().to_string(),
                    format!("line {}: expected 'key = value'", lineno + 1),
                )
            })?;
            cfg.values.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(cfg)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::domain(format!("override '{assignment}' is not 'key=value'"))
        })?;
        self.values.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::domain(format!("config '{key}': bad number '{v}'"))),
        }
    }

    fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::domain(format!("config '{key}': bad integer '{v}'"))),
        }
    }

    fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::domain(format!("config '{key}': bad integer '{v}'"))),
        }
    }

    pub fn get_str(&self, key: &str, default: &str) -> String {
        self.values.get(key).cloned().unwrap_or_else(|| default.to_string())
    }

    /// Comma-separated f64 list.
    pub fn get_f64_list(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.values.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::domain(format!("config '{key}': bad number '{t}'")))
                })
                .collect(),
        }
    }

    pub fn map_gen(&self, seed: u64, scale: f64) -> Result<MapGenConfig> {
        let d = MapGenConfig::default();
        Ok(MapGenConfig {
            seed,
            size_m: self.get_f64("maps.size_m", d.size_m)?,
            resolution: self.get_f64("maps.resolution", d.resolution)?,
            scale,
            base_std: self.get_f64("maps.base_std", d.base_std)?,
            veg_fraction: self.get_f64("maps.veg_fraction", d.veg_fraction)?,
            veg_height_max: self.get_f64("maps.veg_height_max", d.veg_height_max)?,
            roughness: self.get_f64("maps.roughness", d.roughness)?,
        })
    }

    pub fn robot(&self) -> Result<RobotParams> {
        let d = RobotParams::default();
        Ok(RobotParams {
            wheelbase: self.get_f64("robot.wheelbase", d.wheelbase)?,
            track: self.get_f64("robot.track", d.track)?,
            dt: self.get_f64("robot.dt", d.dt)?,
            max_speed: self.get_f64("robot.max_speed", d.max_speed)?,
            max_steer: self.get_f64("robot.max_steer_deg", 30.0)?.to_radians(),
        })
    }

    pub fn ground_truth(&self) -> Result<GroundTruthConfig> {
        let d = GroundTruthConfig::default();
        Ok(GroundTruthConfig {
            s_max_lin: self.get_f64("gt.s_max_lin", d.s_max_lin)?,
            s_max_ang: self.get_f64("gt.s_max_ang", d.s_max_ang)?,
            h_max: self.get_f64("gt.h_max", d.h_max)?,
            exponent: self.get_f64("gt.exponent", d.exponent)?,
            traction_conc: self.get_f64("gt.traction_conc", d.traction_conc)?,
            attitude_noise_std: self.get_f64("gt.attitude_noise_std", d.attitude_noise_std)?,
        })
    }

    pub fn episodes(&self) -> Result<EpisodeConfig> {
        let d = EpisodeConfig::default();
        Ok(EpisodeConfig {
            speed: self.get_f64("collect.speed", d.speed)?,
            steer_amp: self.get_f64("collect.steer_amp_deg", 25.0)?.to_radians(),
            steer_period: self.get_f64("collect.steer_period", d.steer_period)?,
            max_steps: self.get_usize("collect.max_steps", d.max_steps)?,
            rollover_limit: self.get_f64("collect.rollover_limit_deg", 30.0)?.to_radians(),
            immobilized_traction: self
                .get_f64("collect.immobilized_traction", d.immobilized_traction)?,
            immobilized_steps: self.get_usize("collect.immobilized_steps", d.immobilized_steps)?,
            spawn_margin: self.get_f64("collect.spawn_margin", d.spawn_margin)?,
        })
    }

    pub fn prior(&self) -> Result<PriorConfig> {
        let d = PriorConfig::default();
        Ok(PriorConfig {
            s_max_lin: self.get_f64("prior.s_max_lin", d.s_max_lin)?,
            s_max_ang: self.get_f64("prior.s_max_ang", d.s_max_ang)?,
            h_max: self.get_f64("prior.h_max", d.h_max)?,
            w_unif: self.get_f64("prior.w_unif", d.w_unif)?,
            n_phys: self.get_f64("prior.n_phys", d.n_phys)?,
        })
    }

    pub fn feature(&self) -> Result<FeatureConfig> {
        let d = FeatureConfig::default();
        Ok(FeatureConfig {
            patch_cells: self.get_usize("feature.patch_cells", d.patch_cells)?,
            patch_extent: self.get_f64("feature.patch_extent", d.patch_extent)?,
        })
    }

    /// Base evidential configuration before method flags are applied.
    pub fn evidential(&self) -> Result<EvidentialConfig> {
        let d = EvidentialConfig::default();
        let mut cfg = EvidentialConfig {
            bins: self.get_usize("net.bins", d.bins)?,
            angle_max: self.get_f64("net.angle_max_deg", 45.0)?.to_radians(),
            latent_dim: self.get_usize("net.latent_dim", d.latent_dim)?,
            certainty_budget: None,
            kappa: self.get_f64("train.kappa", d.kappa)?,
            entropy_weight: self.get_f64("train.entropy_weight", d.entropy_weight)?,
            learning_rate: self.get_f64("train.lr", d.learning_rate)?,
            epochs: self.get_usize("train.epochs", d.epochs)?,
            batch_size: self.get_usize("train.batch_size", d.batch_size)?,
            encoder_hidden: d.encoder_hidden.clone(),
            encoder_activation: match self.get_str("net.encoder_activation", "relu").as_str() {
                "tanh" => crate::nn::Activation::Tanh,
                "relu" => crate::nn::Activation::Relu,
                other => {
                    return Err(Error::domain(format!(
                        "config 'net.encoder_activation': unknown activation '{other}'"
                    )))
                }
            },
            decoder_hidden: self.get_usize("net.decoder_hidden", d.decoder_hidden)?,
            head_hidden: self.get_usize("net.head_hidden", d.head_hidden)?,
            flow_layers: self.get_usize("net.flow_layers", d.flow_layers)?,
            flow_hidden: self.get_usize("net.flow_hidden", d.flow_hidden)?,
            grad_clip: self.get_f64("train.grad_clip", d.grad_clip)?,
            flow_nll_weight: self.get_f64("train.flow_nll_weight", d.flow_nll_weight)?,
            prior_kind: PriorKind::Physics,
            evidence_mode: EvidenceMode::Flow,
            prior_evidence: 0.0,
            ood_quantile: self.get_f64("train.ood_quantile", d.ood_quantile)?,
            prior: self.prior()?,
            feature: self.feature()?,
        };
        if let Some(budget) = self.values.get("net.certainty_budget") {
            cfg.certainty_budget = Some(
                budget
                    .parse()
                    .map_err(|_| Error::domain("config 'net.certainty_budget': bad number"))?,
            );
        }
        cfg.prior_evidence = cfg.prior.n_phys;
        Ok(cfg)
    }

    pub fn planner(&self, alpha: f64) -> Result<PlannerConfig> {
        let d = PlannerConfig::default();
        Ok(PlannerConfig {
            horizon: self.get_usize("nav.horizon", d.horizon)?,
            n_rollouts: self.get_usize("nav.n_rollouts", d.n_rollouts)?,
            temperature: self.get_f64("nav.temperature", d.temperature)?,
            noise_speed: self.get_f64("nav.noise_speed", d.noise_speed)?,
            noise_steer: self.get_f64("nav.noise_steer_deg", 12.0)?.to_radians(),
            alpha,
            roll_limit: self.get_f64("nav.roll_limit_deg", 30.0)?.to_radians(),
            pitch_limit: self.get_f64("nav.pitch_limit_deg", 30.0)?.to_radians(),
            penalty_weight: self.get_f64("nav.penalty_weight", d.penalty_weight)?,
            oob_penalty: self.get_f64("nav.oob_penalty", d.oob_penalty)?,
            goal_radius: self.get_f64("nav.goal_radius", d.goal_radius)?,
            ood_cost: 0.0,
            mppi_iters: self.get_usize("nav.mppi_iters", d.mppi_iters)?,
            replan_every: self.get_usize("nav.replan_every", d.replan_every)?,
            max_steps: self.get_usize("nav.max_steps", d.max_steps)?,
        })
    }

    // orchestration knobs
    pub fn n_train_maps(&self) -> Result<usize> {
        self.get_usize("maps.n_train", 2)
    }
    pub fn n_val_maps(&self) -> Result<usize> {
        self.get_usize("maps.n_val", 2)
    }
    pub fn n_test_maps(&self) -> Result<usize> {
        self.get_usize("maps.n_test", 2)
    }
    pub fn map_seed(&self) -> Result<u64> {
        self.get_u64("maps.seed", 1)
    }
    pub fn train_scale(&self) -> Result<f64> {
        self.get_f64("maps.scale", 1.0)
    }
    pub fn test_scale_mult(&self) -> Result<f64> {
        self.get_f64("maps.test_scale_mult", 2.0)
    }
    pub fn episodes_per_map(&self) -> Result<usize> {
        self.get_usize("collect.episodes_per_map", 10)
    }
    pub fn collect_seed(&self) -> Result<u64> {
        self.get_u64("collect.seed", 77)
    }
    pub fn id_percentile(&self) -> Result<f64> {
        self.get_f64("split.percentile", 50.0)
    }
    pub fn train_seeds(&self) -> Result<usize> {
        self.get_usize("train.seeds", 3)
    }
    pub fn nav_alphas(&self) -> Result<Vec<f64>> {
        self.get_f64_list("nav.alphas", &[0.4, 0.6, 0.8])
    }
    pub fn nav_pairs(&self) -> Result<usize> {
        self.get_usize("nav.pairs", 5)
    }
    pub fn nav_seeds(&self) -> Result<usize> {
        self.get_usize("nav.seeds", 5)
    }
    pub fn nav_yaw_bins(&self) -> Result<usize> {
        self.get_usize("nav.yaw_bins", 8)
    }
    pub fn nav_min_goal_dist(&self) -> Result<f64> {
        self.get_f64("nav.min_goal_dist", 12.0)
    }
    pub fn ood_avoid_cost(&self) -> Result<f64> {
        self.get_f64("nav.ood_avoid_cost", 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_a_file() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.n_train_maps().unwrap(), 2);
        let e = cfg.evidential().unwrap();
        assert_eq!(e.bins, 12);
        assert_eq!(e.prior_evidence, 12.0);
        let p = cfg.planner(0.6).unwrap();
        assert_eq!(p.n_rollouts, 1024);
        assert_eq!(p.alpha, 0.6);
    }

    #[test]
    fn file_and_overrides_round_trip() {
        let dir = std::env::temp_dir().join("evtrav-config-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("exp.cfg");
        std::fs::write(
            &path,
            "# comment\nmaps.n_train = 4\ntrain.lr = 0.002 # inline comment\nnav.alphas = 0.3,0.5\n",
        )
        .unwrap();
        let mut cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.n_train_maps().unwrap(), 4);
        assert_eq!(cfg.evidential().unwrap().learning_rate, 0.002);
        assert_eq!(cfg.nav_alphas().unwrap(), vec![0.3, 0.5]);

        cfg.set("maps.n_train=6").unwrap();
        assert_eq!(cfg.n_train_maps().unwrap(), 6);
        assert!(cfg.set("garbage").is_err());
    }

    #[test]
    fn bad_values_are_reported_with_the_key() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("train.lr=not-a-number").unwrap();
        let err = cfg.evidential().unwrap_err();
        assert!(err.to_string().contains("train.lr"));
    }
}
