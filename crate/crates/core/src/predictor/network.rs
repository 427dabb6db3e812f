//! The evidential traversability network and its input-dependent posterior
//! update: a shared MLP encoder, per-parameter softmax decoders, a flow
//! density whose output scales a fixed certainty budget into evidence, and a
//! per-parameter evidence-downscaling head.
//!
//! The posterior concentration for each parameter is
//! `beta = prior_evidence * p_prior + n_lambda * p_learned`, so predictions
//! interpolate between the learned PMF (high evidence) and the prior (low
//! evidence).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::dist::{Discretization, DirichletParams, Pmf};
use crate::nn::{
    checkpoint, sigmoid, softmax, softmax_backward, Activation, FlowDensity, Mlp, Params, Tensor1,
};
use crate::physics::{physics_prior_pmf, PriorConfig};
use crate::predictor::feature::{FeatureConfig, TerrainFeature};
use crate::{Error, Result, TravParam};

/// Which PMF anchors the posterior update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Physics,
    Uniform,
}

/// Where predicted evidence comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvidenceMode {
    /// Certainty budget times flow density, downscaled per parameter.
    Flow,
    /// A constant (used by the non-evidential baselines).
    Fixed(f64),
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone)]
pub struct EvidentialConfig {
    pub bins: usize,
    /// Upper bound of the attitude discretization, radians.
    pub angle_max: f64,
    pub latent_dim: usize,
    /// Defaults to `exp(latent_dim)` when unset.
    pub certainty_budget: Option<f64>,
    /// Weight of the physics term in the training loss.
    pub kappa: f64,
    /// Weight of the Dirichlet entropy bonus.
    pub entropy_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub encoder_hidden: Vec<usize>,
    /// Encoder activation; magnitude-preserving relu keeps scaled-up
    /// (out-of-distribution) inputs separable in the latent space, which the
    /// flow-density fallback relies on.
    pub encoder_activation: Activation,
    pub decoder_hidden: usize,
    pub head_hidden: usize,
    pub flow_layers: usize,
    pub flow_hidden: usize,
    pub grad_clip: f64,
    /// Weight of the flow's density-estimation (negative log-likelihood)
    /// term on detached latents; keeps the flow an actual density estimator
    /// instead of an unconstrained evidence knob.
    pub flow_nll_weight: f64,
    pub prior_kind: PriorKind,
    pub evidence_mode: EvidenceMode,
    /// Evidence assigned to the posterior prior.
    pub prior_evidence: f64,
    /// Training-evidence quantile used as the OOD threshold.
    pub ood_quantile: f64,
    pub prior: PriorConfig,
    pub feature: FeatureConfig,
}

impl Default for EvidentialConfig {
    fn default() -> Self {
        let prior = PriorConfig::default();
        EvidentialConfig {
            bins: crate::dist::DEFAULT_BINS,
            angle_max: crate::dist::DEFAULT_ANGLE_MAX,
            latent_dim: 8,
            certainty_budget: None,
            kappa: 0.1,
            entropy_weight: 1e-4,
            learning_rate: 1e-4,
            epochs: 60,
            batch_size: 32,
            encoder_hidden: vec![64, 32],
            encoder_activation: Activation::Relu,
            decoder_hidden: 32,
            head_hidden: 16,
            flow_layers: 4,
            flow_hidden: 16,
            grad_clip: 10.0,
            flow_nll_weight: 0.1,
            prior_kind: PriorKind::Physics,
            evidence_mode: EvidenceMode::Flow,
            prior_evidence: prior.n_phys,
            ood_quantile: 0.05,
            prior,
            feature: FeatureConfig::default(),
        }
    }
}

impl EvidentialConfig {
    pub fn budget(&self) -> f64 {
        self.certainty_budget
            .unwrap_or_else(|| (self.latent_dim as f64).exp())
    }

    pub fn traction_disc(&self) -> Arc<Discretization> {
        Discretization::traction(self.bins)
    }

    pub fn angle_disc(&self) -> Arc<Discretization> {
        Discretization::angle(self.bins, self.angle_max)
    }

    pub fn disc_for(&self, param: TravParam) -> Arc<Discretization> {
        if param.is_traction() {
            self.traction_disc()
        } else {
            self.angle_disc()
        }
    }
}

/// Posterior prediction for all four traversability parameters.
#[derive(Debug, Clone)]
pub struct EvidentialPrediction {
    pub beta: Vec<DirichletParams>,
    /// Expected posterior PMF per parameter.
    pub expected: Vec<Pmf>,
    /// The decoder (learned) PMF per parameter.
    pub p_learned: Vec<Pmf>,
    /// The prior used in the posterior update per parameter.
    pub p_prior: Vec<Pmf>,
    /// Downscaled evidence per parameter.
    pub evidence: [f64; 4],
    /// Budget-scaled flow density before downscaling.
    pub raw_evidence: f64,
    pub log_density: f64,
}

#[derive(Debug, Clone)]
pub struct EvidentialNet {
    pub cfg: EvidentialConfig,
    pub encoder: Mlp,
    pub decoders: Vec<Mlp>,
    pub head: Mlp,
    pub flow: FlowDensity,
    /// Fixed random projection from encoder output to the flow latent; not
    /// trained (its gradients stay zero).
    proj: Tensor1,
    input_mean: Tensor1,
    input_std: Tensor1,
    /// Raw-evidence threshold below which inputs are flagged OOD.
    ood_threshold: Tensor1,
    tdisc: Arc<Discretization>,
    adisc: Arc<Discretization>,
    // training caches
    cached_enc: Vec<f64>,
    cached_z: Vec<f64>,
    cached_density: f64,
    cached_gates: [f64; 4],
    cached_pmfs: Vec<Vec<f64>>,
}

impl EvidentialNet {
    pub fn new(cfg: EvidentialConfig, rng: &mut impl Rng) -> Self {
        let input_dim = cfg.feature.input_dim();
        let mut enc_widths = vec![input_dim];
        enc_widths.extend_from_slice(&cfg.encoder_hidden);
        let encoder = Mlp::new(&enc_widths, cfg.encoder_activation, true, rng);
        let enc_out = *enc_widths.last().expect("encoder widths");

        let decoders = (0..4)
            .map(|_| Mlp::new(&[enc_out, cfg.decoder_hidden, cfg.bins], Activation::Tanh, false, rng))
            .collect();
        let head = Mlp::new(&[enc_out, cfg.head_hidden, 4], Activation::Tanh, false, rng);
        let flow = FlowDensity::identity_init(cfg.latent_dim, cfg.flow_layers, cfg.flow_hidden, rng);

        // fixed random projection with rows scaled for unit-variance outputs
        let limit = (3.0 / enc_out as f64).sqrt();
        let proj = Tensor1::uniform(&[cfg.latent_dim, enc_out], limit, rng);

        let mut input_mean = Tensor1::zeros(&[input_dim]);
        input_mean.values.iter_mut().for_each(|v| *v = 0.0);
        let mut input_std = Tensor1::zeros(&[input_dim]);
        input_std.values.iter_mut().for_each(|v| *v = 1.0);
        let mut ood_threshold = Tensor1::zeros(&[1]);
        ood_threshold.values[0] = 0.0;

        let tdisc = cfg.traction_disc();
        let adisc = cfg.angle_disc();
        EvidentialNet {
            cfg,
            encoder,
            decoders,
            head,
            flow,
            proj,
            input_mean,
            input_std,
            ood_threshold,
            tdisc,
            adisc,
            cached_enc: Vec::new(),
            cached_z: Vec::new(),
            cached_density: 0.0,
            cached_gates: [0.0; 4],
            cached_pmfs: Vec::new(),
        }
    }

    pub fn disc_for(&self, param: TravParam) -> &Arc<Discretization> {
        if param.is_traction() {
            &self.tdisc
        } else {
            &self.adisc
        }
    }

    pub fn set_input_stats(&mut self, mean: Vec<f64>, std: Vec<f64>) {
        self.input_mean.values = mean;
        self.input_std.values = std;
    }

    pub fn set_ood_threshold(&mut self, threshold: f64) {
        self.ood_threshold.values[0] = threshold;
    }

    pub fn ood_threshold(&self) -> f64 {
        self.ood_threshold.values[0]
    }

    fn standardize(&self, input: &[f64]) -> Vec<f64> {
        input
            .iter()
            .zip(&self.input_mean.values)
            .zip(&self.input_std.values)
            .map(|((x, m), s)| (x - m) / s.max(1e-8))
            .collect()
    }

    fn project(&self, e: &[f64]) -> Vec<f64> {
        let d = self.cfg.latent_dim;
        let n = e.len();
        (0..d)
            .map(|r| {
                let row = &self.proj.values[r * n..(r + 1) * n];
                row.iter().zip(e).map(|(a, b)| a * b).sum()
            })
            .collect()
    }

    /// One-hot targets for a traversability outcome.
    pub fn encode_target(&self, target: &crate::TraversabilitySample) -> [Pmf; 4] {
        TravParam::ALL.map(|p| Pmf::one_hot(target.get(p), self.disc_for(p).clone()))
    }

    /// Physics prior PMFs for a feature (always physics, independent of the
    /// posterior prior kind); these anchor the physics term of the loss.
    pub fn physics_pmfs(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]> {
        let mut out = Vec::with_capacity(4);
        for p in TravParam::ALL {
            out.push(physics_prior_pmf(
                &feature.footprint,
                p,
                &self.cfg.prior,
                self.disc_for(p),
            )?);
        }
        Ok(out.try_into().expect("four parameters"))
    }

    /// The PMFs anchoring the posterior update, per the configured prior.
    pub fn posterior_prior(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]> {
        match self.cfg.prior_kind {
            PriorKind::Physics => self.physics_pmfs(feature),
            PriorKind::Uniform => {
                Ok(TravParam::ALL.map(|p| Pmf::uniform(self.disc_for(p).clone())))
            }
        }
    }

    /// Full forward pass for a terrain feature.
    pub fn forward(&self, feature: &TerrainFeature) -> Result<EvidentialPrediction> {
        let prior = self.posterior_prior(feature)?;
        self.forward_with_prior(&feature.to_input(), &prior, None)
    }

    /// Forward pass with an explicit posterior prior; `evidence_override`
    /// forces the per-parameter evidence (used by the posterior-limit tests).
    pub fn forward_with_prior(
        &self,
        input: &[f64],
        prior: &[Pmf; 4],
        evidence_override: Option<f64>,
    ) -> Result<EvidentialPrediction> {
        let x = self.standardize(input);
        let e = self.encoder.forward(&x)?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite encoder activation".into()));
        }

        let (raw_evidence, log_density, gates) = match (evidence_override, self.cfg.evidence_mode)
        {
            (Some(v), _) => (v, 0.0, [1.0; 4]),
            (None, EvidenceMode::Fixed(v)) => (v, 0.0, [1.0; 4]),
            (None, EvidenceMode::Flow) => {
                let z = self.project(&e);
                let lp = self.flow.log_density(&z)?;
                let a = self.head.forward(&e)?;
                let gates = [
                    sigmoid(a[0]),
                    sigmoid(a[1]),
                    sigmoid(a[2]),
                    sigmoid(a[3]),
                ];
                (self.cfg.budget() * lp.exp(), lp, gates)
            }
        };
        if !raw_evidence.is_finite() {
            return Err(Error::Training(format!(
                "non-finite evidence (log density {log_density})"
            )));
        }

        let mut beta = Vec::with_capacity(4);
        let mut expected = Vec::with_capacity(4);
        let mut p_learned = Vec::with_capacity(4);
        let mut evidence = [0.0; 4];
        for (j, param) in TravParam::ALL.into_iter().enumerate() {
            let logits = self.decoders[j].forward(&e)?;
            let p = softmax(&logits);
            let n_j = raw_evidence * gates[j];
            evidence[j] = n_j;
            let disc = self.disc_for(param);
            let b: Vec<f64> = prior[j]
                .masses()
                .iter()
                .zip(&p)
                .map(|(pr, pl)| self.cfg.prior_evidence * pr + n_j * pl)
                .collect();
            let q = DirichletParams::new(b, disc.clone())?;
            expected.push(q.mean());
            beta.push(q);
            p_learned.push(Pmf::new(p, disc.clone())?);
        }

        Ok(EvidentialPrediction {
            beta,
            expected,
            p_learned,
            p_prior: prior.to_vec(),
            evidence,
            raw_evidence,
            log_density,
        })
    }

    /// Budget-scaled flow density for an input: the OOD score. Low scores
    /// mean the feature is out of distribution.
    pub fn ood_score(&self, feature: &TerrainFeature) -> Result<f64> {
        match self.cfg.evidence_mode {
            EvidenceMode::Fixed(v) => Ok(v),
            EvidenceMode::Flow => {
                let x = self.standardize(&feature.to_input());
                let e = self.encoder.forward(&x)?;
                let z = self.project(&e);
                Ok(self.cfg.budget() * self.flow.log_density(&z)?.exp())
            }
        }
    }

    pub fn is_ood(&self, feature: &TerrainFeature) -> Result<bool> {
        Ok(self.ood_score(feature)? < self.ood_threshold())
    }

    pub(crate) fn cached_log_density(&self) -> f64 {
        self.cached_density.max(1e-300).ln()
    }

    /// Training forward: caches intermediates for [`Self::backward_sample`]
    /// and returns the per-parameter posteriors.
    pub(crate) fn forward_train(
        &mut self,
        input: &[f64],
        prior: &[Pmf; 4],
    ) -> Result<Vec<DirichletParams>> {
        let x = self.standardize(input);
        let e = self.encoder.forward_train(&x)?;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Training("non-finite encoder activation".into()));
        }

        let (raw, gates) = match self.cfg.evidence_mode {
            EvidenceMode::Fixed(v) => {
                self.cached_density = v / self.cfg.budget();
                (v, [1.0; 4])
            }
            EvidenceMode::Flow => {
                let z = self.project(&e);
                let lp = self.flow.log_density_train(&z)?;
                let a = self.head.forward_train(&e)?;
                let gates = [sigmoid(a[0]), sigmoid(a[1]), sigmoid(a[2]), sigmoid(a[3])];
                self.cached_density = lp.exp();
                self.cached_z = z;
                (self.cfg.budget() * lp.exp(), gates)
            }
        };
        if !raw.is_finite() {
            return Err(Error::Training("non-finite evidence in training".into()));
        }

        self.cached_gates = gates;
        self.cached_pmfs.clear();
        let mut posts = Vec::with_capacity(4);
        for (j, param) in TravParam::ALL.into_iter().enumerate() {
            let logits = self.decoders[j].forward_train(&e)?;
            let p = softmax(&logits);
            let b: Vec<f64> = prior[j]
                .masses()
                .iter()
                .zip(&p)
                .map(|(pr, pl)| self.cfg.prior_evidence * pr + raw * gates[j] * pl)
                .collect();
            posts.push(DirichletParams::new(b, self.disc_for(param).clone())?);
            self.cached_pmfs.push(p);
        }
        self.cached_enc = e;
        Ok(posts)
    }

    /// Accumulates parameter gradients from per-parameter gradients on the
    /// posterior concentrations plus an extra scalar gradient on the flow
    /// log-density that stops at the latent (the detached density-estimation
    /// term). Must follow [`Self::forward_train`].
    pub(crate) fn backward_sample(&mut self, g_beta: &[Vec<f64>; 4], g_logp_detached: f64) {
        let raw = self.cfg.budget() * self.cached_density;
        let mut g_e = vec![0.0; self.cached_enc.len()];
        let mut g_n = [0.0; 4];
        for j in 0..4 {
            let p = &self.cached_pmfs[j];
            let n_j = raw * self.cached_gates[j];
            // d beta / d p = n_j; d beta / d n_j = p
            let g_p: Vec<f64> = g_beta[j].iter().map(|g| g * n_j).collect();
            g_n[j] = g_beta[j].iter().zip(p).map(|(g, pi)| g * pi).sum();
            let g_logits = softmax_backward(p, &g_p);
            let g = self.decoders[j].backward(&g_logits);
            for (a, b) in g_e.iter_mut().zip(&g) {
                *a += b;
            }
        }

        if let EvidenceMode::Flow = self.cfg.evidence_mode {
            // n_j = raw * gate_j with raw = budget * exp(log p)
            let g_raw: f64 = (0..4).map(|j| g_n[j] * self.cached_gates[j]).sum();
            let g_gates: Vec<f64> = (0..4)
                .map(|j| {
                    let gate = self.cached_gates[j];
                    g_n[j] * raw * gate * (1.0 - gate)
                })
                .collect();
            let g = self.head.backward(&g_gates);
            for (a, b) in g_e.iter_mut().zip(&g) {
                *a += b;
            }

            let g_logp = g_raw * raw;
            let g_z = self.flow.backward(g_logp);
            let d = self.cfg.latent_dim;
            let n = g_e.len();
            for r in 0..d {
                let row = &self.proj.values[r * n..(r + 1) * n];
                for (a, w) in g_e.iter_mut().zip(row) {
                    *a += w * g_z[r];
                }
            }

            if g_logp_detached != 0.0 {
                // second flow pass so the density term reaches only the flow
                // parameters, never the encoder
                let z = self.cached_z.clone();
                let _ = self.flow.log_density_train(&z).expect("cached latent is finite");
                let _ = self.flow.backward(g_logp_detached);
            }
        }

        self.encoder.backward(&g_e);
    }

    pub fn save(&mut self, path: &Path) -> Result<()> {
        let mut meta = BTreeMap::new();
        let cfg = &self.cfg;
        meta.insert("format".into(), "evidential-net".into());
        meta.insert("bins".into(), cfg.bins.to_string());
        meta.insert("angle_max".into(), cfg.angle_max.to_string());
        meta.insert("latent_dim".into(), cfg.latent_dim.to_string());
        meta.insert("certainty_budget".into(), cfg.budget().to_string());
        meta.insert("kappa".into(), cfg.kappa.to_string());
        meta.insert("entropy_weight".into(), cfg.entropy_weight.to_string());
        meta.insert("learning_rate".into(), cfg.learning_rate.to_string());
        meta.insert("epochs".into(), cfg.epochs.to_string());
        meta.insert("batch_size".into(), cfg.batch_size.to_string());
        meta.insert(
            "encoder_activation".into(),
            match cfg.encoder_activation {
                Activation::Tanh => "tanh".into(),
                Activation::Relu => "relu".into(),
            },
        );
        meta.insert(
            "encoder_hidden".into(),
            cfg.encoder_hidden
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        meta.insert("decoder_hidden".into(), cfg.decoder_hidden.to_string());
        meta.insert("head_hidden".into(), cfg.head_hidden.to_string());
        meta.insert("flow_layers".into(), cfg.flow_layers.to_string());
        meta.insert("flow_hidden".into(), cfg.flow_hidden.to_string());
        meta.insert("grad_clip".into(), cfg.grad_clip.to_string());
        meta.insert("flow_nll_weight".into(), cfg.flow_nll_weight.to_string());
        meta.insert(
            "prior_kind".into(),
            match cfg.prior_kind {
                PriorKind::Physics => "physics".into(),
                PriorKind::Uniform => "uniform".into(),
            },
        );
        meta.insert(
            "evidence_mode".into(),
            match cfg.evidence_mode {
                EvidenceMode::Flow => "flow".into(),
                EvidenceMode::Fixed(v) => format!("fixed {v}"),
            },
        );
        meta.insert("prior_evidence".into(), cfg.prior_evidence.to_string());
        meta.insert("ood_quantile".into(), cfg.ood_quantile.to_string());
        meta.insert("prior_s_max_lin".into(), cfg.prior.s_max_lin.to_string());
        meta.insert("prior_s_max_ang".into(), cfg.prior.s_max_ang.to_string());
        meta.insert("prior_h_max".into(), cfg.prior.h_max.to_string());
        meta.insert("prior_w_unif".into(), cfg.prior.w_unif.to_string());
        meta.insert("prior_n_phys".into(), cfg.prior.n_phys.to_string());
        meta.insert("patch_cells".into(), cfg.feature.patch_cells.to_string());
        meta.insert("patch_extent".into(), cfg.feature.patch_extent.to_string());
        checkpoint::save(path, &meta, self)
    }

    pub fn load(path: &Path) -> Result<EvidentialNet> {
        let (meta, _) = checkpoint::load_raw(path)?;
        let p = path.display().to_string();
        let get = |k: &str| -> Result<&String> {
            meta.get(k)
                .ok_or_else(|| Error::parse(&p, format!("missing meta '{k}'")))
        };
        let parse_f = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::parse(&p, format!("bad meta '{k}'")))
        };
        let parse_u = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::parse(&p, format!("bad meta '{k}'")))
        };

        let evidence_mode = {
            let raw = get("evidence_mode")?;
            if raw == "flow" {
                EvidenceMode::Flow
            } else if let Some(v) = raw.strip_prefix("fixed ") {
                EvidenceMode::Fixed(
                    v.parse().map_err(|_| Error::parse(&p, "bad fixed evidence"))?,
                )
            } else {
                return Err(Error::parse(&p, format!("bad evidence mode '{raw}'")));
            }
        };
        let cfg = EvidentialConfig {
            bins: parse_u("bins")?,
            angle_max: parse_f("angle_max")?,
            latent_dim: parse_u("latent_dim")?,
            certainty_budget: Some(parse_f("certainty_budget")?),
            kappa: parse_f("kappa")?,
            entropy_weight: parse_f("entropy_weight")?,
            learning_rate: parse_f("learning_rate")?,
            epochs: parse_u("epochs")?,
            batch_size: parse_u("batch_size")?,
            encoder_hidden: get("encoder_hidden")?
                .split(',')
                .map(|w| w.parse().map_err(|_| Error::parse(&p, "bad encoder widths")))
                .collect::<Result<_>>()?,
            encoder_activation: match get("encoder_activation")?.as_str() {
                "tanh" => Activation::Tanh,
                "relu" => Activation::Relu,
                other => return Err(Error::parse(&p, format!("bad activation '{other}'"))),
            },
            decoder_hidden: parse_u("decoder_hidden")?,
            head_hidden: parse_u("head_hidden")?,
            flow_layers: parse_u("flow_layers")?,
            flow_hidden: parse_u("flow_hidden")?,
            grad_clip: parse_f("grad_clip")?,
            flow_nll_weight: parse_f("flow_nll_weight")?,
            prior_kind: match get("prior_kind")?.as_str() {
                "physics" => PriorKind::Physics,
                "uniform" => PriorKind::Uniform,
                other => return Err(Error::parse(&p, format!("bad prior kind '{other}'"))),
            },
            evidence_mode,
            prior_evidence: parse_f("prior_evidence")?,
            ood_quantile: parse_f("ood_quantile")?,
            prior: PriorConfig {
                s_max_lin: parse_f("prior_s_max_lin")?,
                s_max_ang: parse_f("prior_s_max_ang")?,
                h_max: parse_f("prior_h_max")?,
                w_unif: parse_f("prior_w_unif")?,
                n_phys: parse_f("prior_n_phys")?,
            },
            feature: FeatureConfig {
                patch_cells: parse_u("patch_cells")?,
                patch_extent: parse_f("patch_extent")?,
            },
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        use rand::SeedableRng;
        let mut net = EvidentialNet::new(cfg, &mut rng);
        checkpoint::load_into(path, &mut net)?;
        Ok(net)
    }
}

impl Params for EvidentialNet {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor1)) {
        self.encoder.visit_params(&format!("{prefix}encoder"), f);
        for (i, d) in self.decoders.iter_mut().enumerate() {
            d.visit_params(&format!("{prefix}decoder{i}"), f);
        }
        self.head.visit_params(&format!("{prefix}head"), f);
        self.flow.visit_params(&format!("{prefix}flow"), f);
        // fixed/statistics tensors ride along with zero gradients so they
        // are never updated but round-trip through checkpoints
        f(format!("{prefix}proj"), &mut self.proj);
        f(format!("{prefix}input.mean"), &mut self.input_mean);
        f(format!("{prefix}input.std"), &mut self.input_std);
        f(format!("{prefix}calib.ood_threshold"), &mut self.ood_threshold);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{MapGenConfig, RobotParams, RobotState, TerrainMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn test_feature() -> TerrainFeature {
        let map = TerrainMap::generate(&MapGenConfig {
            seed: 5,
            ..Default::default()
        });
        crate::predictor::feature::extract_feature(
            &map,
            &RobotState { x: 12.0, y: 12.0, yaw: 0.4 },
            &RobotParams::default(),
            &FeatureConfig::default(),
        )
        .unwrap()
    }

    fn new_net(seed: u64) -> EvidentialNet {
        EvidentialNet::new(EvidentialConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn zero_evidence_reproduces_the_prior_exactly() {
        let net = new_net(1);
        let feat = test_feature();
        let prior = net.posterior_prior(&feat).unwrap();
        let pred = net.forward_with_prior(&feat.to_input(), &prior, Some(0.0)).unwrap();
        for j in 0..4 {
            for (a, b) in pred.expected[j].masses().iter().zip(prior[j].masses()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn dominant_evidence_reproduces_the_learned_pmf() {
        let net = new_net(2);
        let feat = test_feature();
        let prior = net.posterior_prior(&feat).unwrap();
        let n = net.cfg.prior_evidence * 1e6;
        let pred = net.forward_with_prior(&feat.to_input(), &prior, Some(n)).unwrap();
        for j in 0..4 {
            for (a, b) in pred.expected[j].masses().iter().zip(pred.p_learned[j].masses()) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn equal_evidence_splits_mass_evenly() {
        // one-hot prior at bin 1, forced evidence equal to the prior's, and a
        // near-one-hot learned pmf: expected mass is (1 + p_learned)/2
        let net = new_net(3);
        let feat = test_feature();
        let tdisc = net.cfg.traction_disc();
        let adisc = net.cfg.angle_disc();
        let prior: [Pmf; 4] = [
            Pmf::one_hot(0.1, tdisc.clone()),
            Pmf::one_hot(0.1, tdisc),
            Pmf::one_hot(0.01, adisc.clone()),
            Pmf::one_hot(0.01, adisc),
        ];
        let n = net.cfg.prior_evidence;
        let pred = net.forward_with_prior(&feat.to_input(), &prior, Some(n)).unwrap();
        for j in 0..4 {
            for b in 0..net.cfg.bins {
                let want = 0.5 * prior[j].masses()[b] + 0.5 * pred.p_learned[j].masses()[b];
                assert!((pred.expected[j].masses()[b] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn posterior_identity_holds_on_every_forward() {
        let net = new_net(4);
        let feat = test_feature();
        let pred = net.forward(&feat).unwrap();
        for j in 0..4 {
            let residual: Vec<f64> = pred.beta[j]
                .beta()
                .iter()
                .zip(pred.p_prior[j].masses())
                .map(|(b, pr)| b - net.cfg.prior_evidence * pr)
                .collect();
            assert!(residual.iter().all(|&r| r >= -1e-12));
            let total: f64 = residual.iter().sum();
            assert!((total - pred.evidence[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = new_net(5);
        let feat = test_feature();
        let a = net.forward(&feat).unwrap();
        let b = net.forward(&feat).unwrap();
        assert_eq!(a.raw_evidence, b.raw_evidence);
        for j in 0..4 {
            assert_eq!(a.expected[j].masses(), b.expected[j].masses());
        }
    }

    #[test]
    fn checkpoint_round_trips_the_whole_net() {
        let dir = std::env::temp_dir().join("evtrav-net-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");
        let mut net = new_net(6);
        net.set_ood_threshold(3.25);
        net.set_input_stats(
            vec![0.1; net.cfg.feature.input_dim()],
            vec![2.0; net.cfg.feature.input_dim()],
        );
        net.save(&path).unwrap();
        let restored = EvidentialNet::load(&path).unwrap();
        assert_eq!(restored.ood_threshold(), 3.25);

        let feat = test_feature();
        let a = net.forward(&feat).unwrap();
        let b = restored.forward(&feat).unwrap();
        assert_eq!(a.raw_evidence.to_bits(), b.raw_evidence.to_bits());
        for j in 0..4 {
            for (x, y) in a.expected[j].masses().iter().zip(b.expected[j].masses()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
