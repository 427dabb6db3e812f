//! Benchmark harness: method presets, the learning benchmark (per-method
//! EMD^2 over ID/OOD test splits with error-vs-unevenness bins), the
//! navigation benchmark, and deterministic CSV reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::dist::Pmf;
use crate::losses::emd2;
use crate::physics::physics_prior_pmf;
use crate::predictor::{EvidenceMode, EvidentialConfig, EvidentialNet, PriorKind};
use crate::predictor::{build_cvar_maps, train, PriorModel, TravModel, UniformModel};
use crate::sim::{
    label_ood, split_dataset, DatasetRecord, GroundTruthConfig, RobotParams, RobotState,
    TerrainMap,
};
use crate::planner::{run_navigation, EpisodeLog, PlannerConfig};
use crate::{Error, Result, TravParam};

/// Benchmark method presets expressed as configuration flags of the same
/// network, plus the two closed-form references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Evidential net with the physics prior and the physics-informed loss.
    PhysEvid,
    /// Evidential net with a uniform prior and the data loss only.
    Evid,
    /// `Evid` plus OOD-avoidance costs during planning.
    EvidOodAvoid,
    /// Physics prior in the posterior, no physics loss term (ablation).
    PhysPriorEvid,
    /// Uniform prior with the physics loss term (ablation).
    PhysLossEvid,
    /// Deterministic net trained with data plus physics loss.
    MlpPhys,
    /// Deterministic net trained with the data loss alone.
    Mlp,
    /// Physics prior PMFs used directly.
    Prior,
    /// Uniform PMFs used directly.
    Uniform,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::PhysEvid,
        Method::Evid,
        Method::EvidOodAvoid,
        Method::PhysPriorEvid,
        Method::PhysLossEvid,
        Method::MlpPhys,
        Method::Mlp,
        Method::Prior,
        Method::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PhysEvid => "phys-evid",
            Method::Evid => "evid",
            Method::EvidOodAvoid => "evid-ood-avoid",
            Method::PhysPriorEvid => "phys-prior-evid",
            Method::PhysLossEvid => "phys-loss-evid",
            Method::MlpPhys => "mlp-phys",
            Method::Mlp => "mlp",
            Method::Prior => "prior",
            Method::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::domain(format!("unknown method '{s}', expected one of {names:?}"))
            })
    }

    pub fn needs_training(self) -> bool {
        !matches!(self, Method::Prior | Method::Uniform)
    }

    /// Applies the method's flags to a base configuration.
    pub fn configure(self, base: &EvidentialConfig) -> EvidentialConfig {
        let mut cfg = base.clone();
        match self {
            Method::PhysEvid => {
                cfg.prior_kind = PriorKind::Physics;
                cfg.evidence_mode = EvidenceMode::Flow;
            }
            Method::Evid | Method::EvidOodAvoid => {
                cfg.prior_kind = PriorKind::Uniform;
                cfg.evidence_mode = EvidenceMode::Flow;
                cfg.kappa = 0.0;
            }
            Method::PhysPriorEvid => {
                cfg.prior_kind = PriorKind::Physics;
                cfg.evidence_mode = EvidenceMode::Flow;
                cfg.kappa = 0.0;
            }
            Method::PhysLossEvid => {
                cfg.prior_kind = PriorKind::Uniform;
                cfg.evidence_mode = EvidenceMode::Flow;
            }
            Method::MlpPhys => {
                cfg.prior_kind = PriorKind::Uniform;
                cfg.prior_evidence = 1e-6;
                cfg.evidence_mode = EvidenceMode::Fixed(1e6);
                cfg.entropy_weight = 0.0;
                cfg.flow_nll_weight = 0.0;
            }
            Method::Mlp => {
                cfg.prior_kind = PriorKind::Uniform;
                cfg.prior_evidence = 1e-6;
                cfg.evidence_mode = EvidenceMode::Fixed(1e6);
                cfg.kappa = 0.0;
                cfg.entropy_weight = 0.0;
                cfg.flow_nll_weight = 0.0;
            }
            Method::Prior | Method::Uniform => {}
        }
        cfg
    }

    /// OOD-avoidance auxiliary cost in the planner, when the method uses it.
    pub fn uses_ood_avoidance(self) -> bool {
        matches!(self, Method::EvidOodAvoid)
    }
}

/// Per-record prediction error: mean over the four parameters of the EMD^2
/// between the model's expected PMF and the one-hot target.
pub fn record_error(model: &dyn TravModel, cfg: &EvidentialConfig, r: &DatasetRecord) -> Result<f64> {
    let expected = model.predict_expected(&r.feature)?;
    let mut acc = 0.0;
    for (j, p) in TravParam::ALL.into_iter().enumerate() {
        let disc = cfg.disc_for(p);
        let y = Pmf::one_hot(r.target.get(p), disc);
        acc += emd2(&expected[j], &y)? / 4.0;
    }
    Ok(acc)
}

fn mean_error(model: &dyn TravModel, cfg: &EvidentialConfig, records: &[&DatasetRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::domain("empty evaluation subset"));
    }
    let mut acc = 0.0;
    for r in records {
        acc += record_error(model, cfg, r)?;
    }
    Ok(acc / records.len() as f64)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One learning-benchmark table row.
#[derive(Debug, Clone)]
pub struct LearningRow {
    pub method: String,
    pub seeds: usize,
    pub overall: (f64, f64),
    pub id: (f64, f64),
    pub ood: (f64, f64),
}

/// One error-vs-unevenness bin.
#[derive(Debug, Clone)]
pub struct BinRow {
    pub method: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_emd2: f64,
}

#[derive(Debug, Clone)]
pub struct LearningReport {
    pub threshold: f64,
    pub rows: Vec<LearningRow>,
    pub bins: Vec<BinRow>,
}

fn model_for_reference(method: Method, cfg: &EvidentialConfig) -> Box<dyn TravModel> {
    match method {
        Method::Prior => Box::new(PriorModel::new(cfg.prior, cfg.bins, cfg.angle_max)),
        Method::Uniform => Box::new(UniformModel::new(cfg.bins, cfg.angle_max)),
        _ => unreachable!("only reference methods"),
    }
}

/// Trains (method, seed) on the ID split and returns the network.
pub fn train_method(
    method: Method,
    train_records: &[DatasetRecord],
    val_records: &[DatasetRecord],
    base: &EvidentialConfig,
    seed: u64,
) -> Result<EvidentialNet> {
    let cfg = method.configure(base);
    let (net, _) = train(train_records, val_records, &cfg, seed)?;
    Ok(net)
}

/// Runs the learning benchmark: split the training pool at the unevenness
/// percentile, train each method over the seeds on ID data only, and report
/// overall/ID/OOD errors on the full test pool plus binned error curves.
pub fn eval_learning(
    train_pool: &[DatasetRecord],
    test_pool: &[DatasetRecord],
    methods: &[Method],
    seeds: usize,
    base: &EvidentialConfig,
    percentile: f64,
    n_bins: usize,
) -> Result<LearningReport> {
    let split = split_dataset(train_pool, percentile)?;
    let labeled = label_ood(test_pool, split.threshold);
    let all: Vec<&DatasetRecord> = labeled.iter().map(|(r, _)| r).collect();
    let id: Vec<&DatasetRecord> =
        labeled.iter().filter(|(_, ood)| !ood).map(|(r, _)| r).collect();
    let ood: Vec<&DatasetRecord> =
        labeled.iter().filter(|(_, ood)| *ood).map(|(r, _)| r).collect();
    if id.is_empty() || ood.is_empty() {
        return Err(Error::domain(
            "test pool must contain both ID and OOD records for the benchmark",
        ));
    }

    let max_unev = test_pool
        .iter()
        .map(|r| r.unevenness)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let bin_edges: Vec<f64> = (0..=n_bins)
        .map(|i| i as f64 / n_bins as f64 * max_unev)
        .collect();

    let mut rows = Vec::new();
    let mut bins = Vec::new();
    for &method in methods {
        if method == Method::EvidOodAvoid {
            // identical predictor to Evid; only the planner differs
            continue;
        }
        let mut overall = Vec::new();
        let mut id_errs = Vec::new();
        let mut ood_errs = Vec::new();
        let mut bin_acc: Vec<(usize, f64)> = vec![(0, 0.0); n_bins];

        let n_seeds = if method.needs_training() { seeds.max(1) } else { 1 };
        for seed in 0..n_seeds {
            let model: Box<dyn TravModel> = if method.needs_training() {
                Box::new(train_method(
                    method,
                    &split.train_id,
                    &split.val_id,
                    base,
                    seed as u64,
                )?)
            } else {
                model_for_reference(method, base)
            };
            overall.push(mean_error(model.as_ref(), base, &all)?);
            id_errs.push(mean_error(model.as_ref(), base, &id)?);
            ood_errs.push(mean_error(model.as_ref(), base, &ood)?);
            for (r, _) in &labeled {
                let e = record_error(model.as_ref(), base, r)?;
                let b = ((r.unevenness / max_unev * n_bins as f64) as usize).min(n_bins - 1);
                bin_acc[b].0 += 1;
                bin_acc[b].1 += e;
            }
        }

        rows.push(LearningRow {
            method: method.name().to_string(),
            seeds: n_seeds,
            overall: mean_std(&overall),
            id: mean_std(&id_errs),
            ood: mean_std(&ood_errs),
        });
        for (b, (count, total)) in bin_acc.into_iter().enumerate() {
            if count > 0 {
                bins.push(BinRow {
                    method: method.name().to_string(),
                    bin_lo: bin_edges[b],
                    bin_hi: bin_edges[b + 1],
                    count,
                    mean_emd2: total / count as f64,
                });
            }
        }
    }

    Ok(LearningReport {
        threshold: split.threshold,
        rows,
        bins,
    })
}

pub fn write_learning_csv(path: &Path, report: &LearningReport) -> Result<()> {
    let mut out = String::from("# schema=evtrav.learning.v1\n");
    writeln!(out, "# id_threshold={}", report.threshold).expect("string write");
    out.push_str("method,seeds,overall_mean,overall_std,id_mean,id_std,ood_mean,ood_std\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method, r.seeds, r.overall.0, r.overall.1, r.id.0, r.id.1, r.ood.0, r.ood.1
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_bins_csv(path: &Path, report: &LearningReport) -> Result<()> {
    let mut out = String::from("# schema=evtrav.bins.v1\n");
    out.push_str("method,bin_lo,bin_hi,count,mean_emd2\n");
    for b in &report.bins {
        writeln!(
            out,
            "{},{},{},{},{}",
            b.method, b.bin_lo, b.bin_hi, b.count, b.mean_emd2
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One navigation trial row.
#[derive(Debug, Clone)]
pub struct EpisodeRow {
    pub method: String,
    pub alpha: f64,
    pub map: usize,
    pub pair: usize,
    pub seed: u64,
    pub log: EpisodeLog,
}

#[derive(Debug, Clone)]
pub struct NavSummaryRow {
    pub method: String,
    pub alpha: f64,
    pub trials: usize,
    pub successes: usize,
    pub ttg_median: Option<f64>,
    pub ttg_mean: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NavReport {
    pub episodes: Vec<EpisodeRow>,
    pub summary: Vec<NavSummaryRow>,
}

/// Deterministic start/goal pairs on a map: poses sampled away from the
/// edges with at least `min_dist` separation.
pub fn start_goal_pairs(
    map: &TerrainMap,
    n_pairs: usize,
    min_dist: f64,
    seed: u64,
) -> Vec<(RobotState, (f64, f64))> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (xm, ym) = map.size_m();
    let margin = 3.0;
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut guard = 0;
    while pairs.len() < n_pairs && guard < 10_000 {
        guard += 1;
        let sx = rng.gen_range(margin..xm - margin);
        let sy = rng.gen_range(margin..ym - margin);
        let gx = rng.gen_range(margin..xm - margin);
        let gy = rng.gen_range(margin..ym - margin);
        let dist = (gx - sx).hypot(gy - sy);
        if dist < min_dist {
            continue;
        }
        let yaw = (gy - sy).atan2(gx - sx);
        pairs.push((RobotState { x: sx, y: sy, yaw }, (gx, gy)));
    }
    pairs
}

/// A navigation method: a model for CVaR stacks plus planner flags.
pub struct NavMethod {
    pub method: Method,
    pub model: Box<dyn TravModel>,
}

/// Runs the navigation benchmark over test maps, start/goal pairs, risk
/// tolerances and seeds. CVaR stacks are built once per (map, method, alpha)
/// since terrain is static.
#[allow(clippy::too_many_arguments)]
pub fn bench_nav(
    maps: &[TerrainMap],
    methods: &[NavMethod],
    alphas: &[f64],
    n_pairs: usize,
    nav_seeds: usize,
    params: &RobotParams,
    gt_cfg: &GroundTruthConfig,
    base_planner: &PlannerConfig,
    base_cfg: &EvidentialConfig,
    yaw_bins: usize,
    min_goal_dist: f64,
    ood_avoid_cost: f64,
    pair_seed: u64,
) -> Result<NavReport> {
    let mut episodes = Vec::new();
    for (map_idx, map) in maps.iter().enumerate() {
        let pairs = start_goal_pairs(map, n_pairs, min_goal_dist, pair_seed + map_idx as u64);
        for nav in methods {
            for &alpha in alphas {
                let stack = build_cvar_maps(
                    map,
                    nav.model.as_ref(),
                    params,
                    &base_cfg.feature,
                    base_cfg.angle_max,
                    alpha,
                    yaw_bins,
                )?;
                let mut cfg = *base_planner;
                cfg.alpha = alpha;
                cfg.ood_cost = if nav.method.uses_ood_avoidance() {
                    ood_avoid_cost
                } else {
                    0.0
                };
                for (pair_idx, (start, goal)) in pairs.iter().enumerate() {
                    for seed in 0..nav_seeds {
                        let trial_seed = seed as u64
                            + 1000 * pair_idx as u64
                            + 100_000 * map_idx as u64;
                        let log = run_navigation(
                            map,
                            &stack,
                            start,
                            *goal,
                            params,
                            gt_cfg,
                            &cfg,
                            cfg.roll_limit,
                            cfg.pitch_limit,
                            trial_seed,
                        )?;
                        episodes.push(EpisodeRow {
                            method: nav.method.name().to_string(),
                            alpha,
                            map: map_idx,
                            pair: pair_idx,
                            seed: trial_seed,
                            log,
                        });
                    }
                }
            }
        }
    }

    // summarize per (method, alpha) preserving input method order
    let mut summary = Vec::new();
    for nav in methods {
        for &alpha in alphas {
            let rows: Vec<&EpisodeRow> = episodes
                .iter()
                .filter(|e| e.method == nav.method.name() && e.alpha == alpha)
                .collect();
            let successes = rows
                .iter()
                .filter(|e| e.log.outcome == crate::planner::Outcome::Success)
                .count();
            let mut ttgs: Vec<f64> = rows.iter().filter_map(|e| e.log.time_to_goal).collect();
            ttgs.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
            let ttg_median = if ttgs.is_empty() {
                None
            } else {
                Some(ttgs[ttgs.len() / 2])
            };
            let ttg_mean = if ttgs.is_empty() {
                None
            } else {
                Some(ttgs.iter().sum::<f64>() / ttgs.len() as f64)
            };
            summary.push(NavSummaryRow {
                method: nav.method.name().to_string(),
                alpha,
                trials: rows.len(),
                successes,
                ttg_median,
                ttg_mean,
            });
        }
    }
    Ok(NavReport { episodes, summary })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "na".to_string(),
    }
}

pub fn write_nav_csv(path: &Path, report: &NavReport) -> Result<()> {
    let mut out = String::from("# schema=evtrav.nav.v1\n");
    out.push_str("method,alpha,trials,successes,success_rate,ttg_median,ttg_mean\n");
    for r in &report.summary {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            r.alpha,
            r.trials,
            r.successes,
            r.successes as f64 / r.trials.max(1) as f64,
            fmt_opt(r.ttg_median),
            fmt_opt(r.ttg_mean)
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_episodes_csv(path: &Path, report: &NavReport) -> Result<()> {
    let mut out = String::from("# schema=evtrav.episodes.v1\n");
    out.push_str("method,alpha,map,pair,seed,outcome,steps,path_length,time_to_goal\n");
    for e in &report.episodes {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.method,
            e.alpha,
            e.map,
            e.pair,
            e.seed,
            e.log.outcome.as_str(),
            e.log.steps,
            e.log.path_length,
            fmt_opt(e.log.time_to_goal)
        )
        .expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Builds the nav-bench model list, training networks where needed.
pub fn nav_methods(
    methods: &[Method],
    train_records: &[DatasetRecord],
    val_records: &[DatasetRecord],
    base: &EvidentialConfig,
    train_seed: u64,
) -> Result<Vec<NavMethod>> {
    let mut out = Vec::new();
    for &m in methods {
        let model: Box<dyn TravModel> = match m {
            Method::Prior => Box::new(PriorModel::new(base.prior, base.bins, base.angle_max)),
            Method::Uniform => Box::new(UniformModel::new(base.bins, base.angle_max)),
            _ => Box::new(train_method(m, train_records, val_records, base, train_seed)?),
        };
        out.push(NavMethod { method: m, model });
    }
    Ok(out)
}

/// Renders a plain-text report from the benchmark CSVs; a pure function of
/// its inputs.
pub fn render_report(
    learning_csv: Option<&Path>,
    bins_csv: Option<&Path>,
    nav_csv: Option<&Path>,
) -> Result<String> {
    let mut out = String::from("evtrav benchmark report\n");
    if let Some(path) = learning_csv {
        let rows = read_csv(path)?;
        out.push_str("\n== learning benchmark (EMD^2, lower is better) ==\n");
        writeln!(
            out,
            "{:<16} {:>6} {:>18} {:>18} {:>18}",
            "method", "seeds", "overall", "id", "ood"
        )
        .expect("string write");
        for r in rows {
            writeln!(
                out,
                "{:<16} {:>6} {:>18} {:>18} {:>18}",
                r["method"],
                r["seeds"],
                format!(
                    "{:.4} +/- {:.4}",
                    num(&r["overall_mean"])?,
                    num(&r["overall_std"])?
                ),
                format!("{:.4} +/- {:.4}", num(&r["id_mean"])?, num(&r["id_std"])?),
                format!("{:.4} +/- {:.4}", num(&r["ood_mean"])?, num(&r["ood_std"])?),
            )
            .expect("string write");
        }
    }
    if let Some(path) = bins_csv {
        let rows = read_csv(path)?;
        out.push_str("\n== prediction error by terrain unevenness ==\n");
        let mut methods: Vec<String> = Vec::new();
        for r in &rows {
            if !methods.contains(&r["method"]) {
                methods.push(r["method"].clone());
            }
        }
        for m in methods {
            writeln!(out, "{m}:").expect("string write");
            for r in rows.iter().filter(|r| r["method"] == m) {
                writeln!(
                    out,
                    "  [{:.3}, {:.3}) m  n={:<5} emd2={:.4}",
                    num(&r["bin_lo"])?,
                    num(&r["bin_hi"])?,
                    r["count"],
                    num(&r["mean_emd2"])?
                )
                .expect("string write");
            }
        }
    }
    if let Some(path) = nav_csv {
        let rows = read_csv(path)?;
        out.push_str("\n== navigation benchmark ==\n");
        writeln!(
            out,
            "{:<16} {:>6} {:>8} {:>14} {:>12} {:>12}",
            "method", "alpha", "trials", "success_rate", "ttg_median", "ttg_mean"
        )
        .expect("string write");
        for r in rows {
            writeln!(
                out,
                "{:<16} {:>6} {:>8} {:>14} {:>12} {:>12}",
                r["method"],
                r["alpha"],
                r["trials"],
                r["success_rate"],
                r["ttg_median"],
                r["ttg_mean"]
            )
            .expect("string write");
        }
    }
    Ok(out)
}

fn num(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::domain(format!("bad number '{s}' in csv")))
}

/// Reads one of this crate's CSVs: `#` comment lines, then a header row.
pub fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "missing header"))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row has {} fields, header has {}", fields.len(), header.len()),
            ));
        }
        rows.push(
            header
                .iter()
                .cloned()
                .zip(fields.iter().map(|f| f.to_string()))
                .collect(),
        );
    }
    Ok(rows)
}

/// Per-map summary line for generated maps.
pub fn write_maps_csv(path: &Path, entries: &[(String, u64, f64, f64, f64)]) -> Result<()> {
    let mut out = String::from("# schema=evtrav.maps.v1\n");
    out.push_str("file,seed,scale,elev_std,veg_fraction\n");
    for (file, seed, scale, std, veg) in entries {
        writeln!(out, "{file},{seed},{scale},{std},{veg}").expect("string write");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Convenience wrapper used by the fallback acceptance check: trains one
/// method on the split and returns (net, threshold).
pub fn train_on_pool(
    method: Method,
    train_pool: &[DatasetRecord],
    base: &EvidentialConfig,
    percentile: f64,
    seed: u64,
) -> Result<(EvidentialNet, f64)> {
    let split = split_dataset(train_pool, percentile)?;
    let net = train_method(method, &split.train_id, &split.val_id, base, seed)?;
    Ok((net, split.threshold))
}

/// Physics prior PMFs for a record under a configuration (used by reports
/// and acceptance checks).
pub fn prior_pmfs(cfg: &EvidentialConfig, r: &DatasetRecord) -> Result<[Pmf; 4]> {
    let mut out = Vec::with_capacity(4);
    for p in TravParam::ALL {
        out.push(physics_prior_pmf(
            &r.feature.footprint,
            p,
            &cfg.prior,
            &cfg.disc_for(p),
        )?);
    }
    Ok(out.try_into().expect("four parameters"))
}

/// End-to-end micro pipeline used by the CLI smoke test and the determinism
/// acceptance check: generates maps, collects data, runs a reduced learning
/// benchmark and navigation benchmark, and writes every CSV into `out_dir`.
pub fn run_micro_pipeline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let params = cfg.robot()?;
    let gt = cfg.ground_truth()?;
    let ep = cfg.episodes()?;
    let base = cfg.evidential()?;

    // maps
    let map_seed = cfg.map_seed()?;
    let train_scale = cfg.train_scale()?;
    let test_scale = train_scale * cfg.test_scale_mult()?;
    let mut train_maps = Vec::new();
    for i in 0..cfg.n_train_maps()? + cfg.n_val_maps()? {
        train_maps.push(TerrainMap::generate(&cfg.map_gen(map_seed + i as u64, train_scale)?));
    }
    let mut test_maps = Vec::new();
    for i in 0..cfg.n_test_maps()? {
        test_maps.push(TerrainMap::generate(
            &cfg.map_gen(map_seed + 1000 + i as u64, test_scale)?,
        ));
    }
    let mut map_entries = Vec::new();
    for (i, m) in train_maps.iter().chain(test_maps.iter()).enumerate() {
        let file = format!("map_{i:03}.tmap");
        m.save(&out_dir.join(&file))?;
        map_entries.push((file, m.seed(), m.scale(), m.elevation_std(), m.veg_cell_fraction()));
    }
    write_maps_csv(&out_dir.join("maps.csv"), &map_entries)?;

    // data
    let episodes_per_map = cfg.episodes_per_map()?;
    let collect_seed = cfg.collect_seed()?;
    let mut train_pool = Vec::new();
    for (i, m) in train_maps.iter().enumerate() {
        train_pool.extend(crate::sim::collect_episodes(
            m,
            &params,
            &gt,
            &ep,
            &base.feature,
            episodes_per_map,
            collect_seed + i as u64,
        ));
    }
    let mut test_pool = Vec::new();
    for (i, m) in test_maps.iter().enumerate() {
        test_pool.extend(crate::sim::collect_episodes(
            m,
            &params,
            &gt,
            &ep,
            &base.feature,
            episodes_per_map,
            collect_seed + 500 + i as u64,
        ));
    }
    crate::sim::save_records(&out_dir.join("train.ds"), &train_pool, base.feature.patch_cells)?;
    crate::sim::save_records(&out_dir.join("test.ds"), &test_pool, base.feature.patch_cells)?;

    // learning benchmark
    let methods = [Method::PhysEvid, Method::Evid, Method::Prior, Method::Uniform];
    let report = eval_learning(
        &train_pool,
        &test_pool,
        &methods,
        cfg.train_seeds()?,
        &base,
        cfg.id_percentile()?,
        6,
    )?;
    write_learning_csv(&out_dir.join("learning.csv"), &report)?;
    write_bins_csv(&out_dir.join("bins.csv"), &report)?;

    // navigation benchmark
    let split = split_dataset(&train_pool, cfg.id_percentile()?)?;
    let nav = nav_methods(
        &[Method::PhysEvid, Method::Prior],
        &split.train_id,
        &split.val_id,
        &base,
        0,
    )?;
    let nav_report = bench_nav(
        &test_maps,
        &nav,
        &cfg.nav_alphas()?,
        cfg.nav_pairs()?,
        cfg.nav_seeds()?,
        &params,
        &gt,
        &cfg.planner(0.6)?,
        &base,
        cfg.nav_yaw_bins()?,
        cfg.nav_min_goal_dist()?,
        cfg.ood_avoid_cost()?,
        map_seed + 9000,
    )?;
    write_nav_csv(&out_dir.join("nav.csv"), &nav_report)?;
    write_episodes_csv(&out_dir.join("episodes.csv"), &nav_report)?;

    let report_text = render_report(
        Some(&out_dir.join("learning.csv")),
        Some(&out_dir.join("bins.csv")),
        Some(&out_dir.join("nav.csv")),
    )?;
    std::fs::write(out_dir.join("report.txt"), report_text)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok(())
}
