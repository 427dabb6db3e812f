//! Grid x yaw-bin x parameter stacks of CVaR values for planner lookup:
//! left-tail CVaR for tractions (low is risky), right-tail CVaR for attitude
//! angles (high is risky), plus per-cell OOD flags.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dist::{Discretization, Pmf};
use crate::physics::{physics_prior_pmf, PriorConfig};
use crate::predictor::feature::{extract_feature, FeatureConfig, TerrainFeature};
use crate::predictor::network::EvidentialNet;
use crate::sim::{RobotParams, RobotState, TerrainMap};
use crate::{Error, Result, TravParam};

/// Anything that maps a terrain feature to four expected traversability PMFs.
pub trait TravModel: Sync {
    fn predict_expected(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]>;

    /// Whether the feature should be treated as out-of-distribution.
    fn is_ood(&self, _feature: &TerrainFeature) -> Result<bool> {
        Ok(false)
    }
}

impl TravModel for EvidentialNet {
    fn predict_expected(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]> {
        let pred = self.forward(feature)?;
        Ok(pred.expected.try_into().expect("four parameters"))
    }

    fn is_ood(&self, feature: &TerrainFeature) -> Result<bool> {
        EvidentialNet::is_ood(self, feature)
    }
}

/// Physics-prior-only model.
pub struct PriorModel {
    pub cfg: PriorConfig,
    pub tdisc: Arc<Discretization>,
    pub adisc: Arc<Discretization>,
}

impl PriorModel {
    pub fn new(cfg: PriorConfig, bins: usize, angle_max: f64) -> Self {
        PriorModel {
            cfg,
            tdisc: Discretization::traction(bins),
            adisc: Discretization::angle(bins, angle_max),
        }
    }
}

impl TravModel for PriorModel {
    fn predict_expected(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]> {
        let mut out = Vec::with_capacity(4);
        for p in TravParam::ALL {
            let disc = if p.is_traction() { &self.tdisc } else { &self.adisc };
            out.push(physics_prior_pmf(&feature.footprint, p, &self.cfg, disc)?);
        }
        Ok(out.try_into().expect("four parameters"))
    }
}

/// Uninformative uniform model.
pub struct UniformModel {
    pub tdisc: Arc<Discretization>,
    pub adisc: Arc<Discretization>,
}

impl UniformModel {
    pub fn new(bins: usize, angle_max: f64) -> Self {
        UniformModel {
            tdisc: Discretization::traction(bins),
            adisc: Discretization::angle(bins, angle_max),
        }
    }
}

impl TravModel for UniformModel {
    fn predict_expected(&self, feature: &TerrainFeature) -> Result<[Pmf; 4]> {
        let _ = feature;
        Ok([
            Pmf::uniform(self.tdisc.clone()),
            Pmf::uniform(self.tdisc.clone()),
            Pmf::uniform(self.adisc.clone()),
            Pmf::uniform(self.adisc.clone()),
        ])
    }
}

/// Worst-case CVaR values of one grid cell; the planner reads
/// `[lin, ang, roll, pitch]` at the nearest yaw bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarMapStack {
    pub rows: usize,
    pub cols: usize,
    pub n_yaw: usize,
    pub resolution: f64,
    pub alpha: f64,
    /// Attitude bound stored for cells where no feature can be extracted.
    pub angle_max: f64,
    /// Flattened `[row][col][yaw][param]`.
    pub values: Vec<f64>,
    /// Flattened `[row][col][yaw]`.
    pub ood: Vec<bool>,
    /// False where the feature window leaves the map (edge margin).
    pub valid: Vec<bool>,
}

impl CvarMapStack {
    fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        let c = (x / self.resolution).round();
        let r = (y / self.resolution).round();
        if c < 0.0 || r < 0.0 {
            return None;
        }
        let (c, r) = (c as usize, r as usize);
        if c >= self.cols || r >= self.rows {
            return None;
        }
        Some(r * self.cols + c)
    }

    pub fn yaw_bin(&self, yaw: f64) -> usize {
        let tau = std::f64::consts::TAU;
        let wrapped = yaw.rem_euclid(tau);
        ((wrapped / tau * self.n_yaw as f64).round() as usize) % self.n_yaw
    }

    /// CVaR values `[lin, ang, roll, pitch]` at a pose, or `None` off-grid.
    pub fn lookup(&self, x: f64, y: f64, yaw: f64) -> Option<[f64; 4]> {
        let cell = self.cell_index(x, y)?;
        let k = self.yaw_bin(yaw);
        let base = (cell * self.n_yaw + k) * 4;
        Some([
            self.values[base],
            self.values[base + 1],
            self.values[base + 2],
            self.values[base + 3],
        ])
    }

    pub fn lookup_ood(&self, x: f64, y: f64, yaw: f64) -> bool {
        match self.cell_index(x, y) {
            Some(cell) => self.ood[cell * self.n_yaw + self.yaw_bin(yaw)],
            None => false,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("evtrav-cvarstack v1\n");
        out.push_str(&format!("rows {}\n", self.rows));
        out.push_str(&format!("cols {}\n", self.cols));
        out.push_str(&format!("n_yaw {}\n", self.n_yaw));
        out.push_str("params 4\n");
        out.push_str(&format!("resolution {}\n", self.resolution));
        out.push_str(&format!("alpha {}\n", self.alpha));
        out.push_str(&format!("angle_max {}\n", self.angle_max));
        out.push_str("values\n");
        for chunk in self.values.chunks(self.n_yaw * 4) {
            let row: Vec<String> = chunk.iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out.push_str("ood\n");
        for chunk in self.ood.chunks(self.n_yaw) {
            let row: String = chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
            out.push_str(&row);
            out.push('\n');
        }
        out.push_str("valid\n");
        for chunk in self.valid.chunks(self.n_yaw) {
            let row: String = chunk.iter().map(|&b| if b { '1' } else { '0' }).collect();
            out.push_str(&row);
            out.push('\n');
        }
        out.push_str("end\n");
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<CvarMapStack> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let p = path.display().to_string();
        let mut lines = text.lines();
        if lines.next() != Some("evtrav-cvarstack v1") {
            return Err(Error::parse(&p, "expected header 'evtrav-cvarstack v1'"));
        }
        let mut header = std::collections::BTreeMap::new();
        for _ in 0..7 {
            let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated header"))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(&p, format!("bad header line '{line}'")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let get_u = |k: &str| -> Result<usize> {
            header
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(&p, format!("bad header '{k}'")))
        };
        let get_f = |k: &str| -> Result<f64> {
            header
                .get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(&p, format!("bad header '{k}'")))
        };
        let rows = get_u("rows")?;
        let cols = get_u("cols")?;
        let n_yaw = get_u("n_yaw")?;
        let params = get_u("params")?;
        if params != 4 {
            return Err(Error::parse(&p, "expected 4 parameters"));
        }
        let resolution = get_f("resolution")?;
        let alpha = get_f("alpha")?;
        let angle_max = get_f("angle_max")?;

        if lines.next() != Some("values") {
            return Err(Error::parse(&p, "expected 'values' section"));
        }
        let mut values = Vec::with_capacity(rows * cols * n_yaw * 4);
        for _ in 0..rows * cols {
            let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated values"))?;
            for tok in line.split_ascii_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::parse(&p, format!("bad value '{tok}'")))?,
                );
            }
        }
        if values.len() != rows * cols * n_yaw * 4 {
            return Err(Error::parse(&p, "values size mismatch"));
        }
        let read_flags = |tag: &str, lines: &mut std::str::Lines<'_>| -> Result<Vec<bool>> {
            if lines.next() != Some(tag) {
                return Err(Error::parse(&p, format!("expected '{tag}' section")));
            }
            let mut flags = Vec::with_capacity(rows * cols * n_yaw);
            for _ in 0..rows * cols {
                let line = lines.next().ok_or_else(|| Error::parse(&p, "truncated flags"))?;
                for ch in line.chars() {
                    flags.push(match ch {
                        '0' => false,
                        '1' => true,
                        other => return Err(Error::parse(&p, format!("bad flag '{other}'"))),
                    });
                }
            }
            Ok(flags)
        };
        let ood = read_flags("ood", &mut lines)?;
        let valid = read_flags("valid", &mut lines)?;
        if lines.next() != Some("end") {
            return Err(Error::parse(&p, "missing 'end'"));
        }
        Ok(CvarMapStack {
            rows,
            cols,
            n_yaw,
            resolution,
            alpha,
            angle_max,
            values,
            ood,
            valid,
        })
    }
}

/// Evaluates the model over every cell and yaw bin and stores the CVaR of
/// each parameter (left tail for tractions, right tail for attitudes).
/// Cells whose feature window leaves the map get worst-case values. Cell
/// evaluations run in parallel over frozen model parameters.
pub fn build_cvar_maps(
    map: &TerrainMap,
    model: &dyn TravModel,
    params: &RobotParams,
    feat_cfg: &FeatureConfig,
    angle_max: f64,
    alpha: f64,
    n_yaw: usize,
) -> Result<CvarMapStack> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must be in (0, 1], got {alpha}")));
    }
    if n_yaw == 0 {
        return Err(Error::domain("need at least one yaw bin"));
    }
    let rows = map.rows();
    let cols = map.cols();
    let margin = feat_cfg.required_margin(params, map.resolution());
    let tau = std::f64::consts::TAU;

    let mut values = vec![0.0; rows * cols * n_yaw * 4];
    let mut ood = vec![false; rows * cols * n_yaw];
    let mut valid = vec![false; rows * cols * n_yaw];

    let results: Result<Vec<()>> = values
        .par_chunks_mut(cols * n_yaw * 4)
        .zip(ood.par_chunks_mut(cols * n_yaw))
        .zip(valid.par_chunks_mut(cols * n_yaw))
        .enumerate()
        .map(|(r, ((val_row, ood_row), valid_row))| {
            for c in 0..cols {
                let x = c as f64 * map.resolution();
                let y = r as f64 * map.resolution();
                for k in 0..n_yaw {
                    let base = (c * n_yaw + k) * 4;
                    if !map.in_bounds(x, y, margin) {
                        val_row[base] = 0.0;
                        val_row[base + 1] = 0.0;
                        val_row[base + 2] = angle_max;
                        val_row[base + 3] = angle_max;
                        continue;
                    }
                    let pose = RobotState {
                        x,
                        y,
                        yaw: k as f64 / n_yaw as f64 * tau,
                    };
                    let feature = extract_feature(map, &pose, params, feat_cfg)?;
                    let pmfs = model.predict_expected(&feature)?;
                    for (j, param) in TravParam::ALL.into_iter().enumerate() {
                        val_row[base + j] = if param.is_traction() {
                            pmfs[j].cvar_left(alpha)?
                        } else {
                            pmfs[j].cvar_right(alpha)?
                        };
                    }
                    ood_row[c * n_yaw + k] = model.is_ood(&feature)?;
                    valid_row[c * n_yaw + k] = true;
                }
            }
            Ok(())
        })
        .collect();
    results?;

    Ok(CvarMapStack {
        rows,
        cols,
        n_yaw,
        resolution: map.resolution(),
        alpha,
        angle_max,
        values,
        ood,
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::MapGenConfig;

    fn flat_map() -> TerrainMap {
        TerrainMap::generate(&MapGenConfig {
            scale: 0.0,
            ..Default::default()
        })
    }

    fn prior_model() -> PriorModel {
        PriorModel::new(PriorConfig::default(), 12, crate::dist::DEFAULT_ANGLE_MAX)
    }

    #[test]
    fn stack_dimensions_match_request() {
        let map = flat_map();
        let stack = build_cvar_maps(
            &map,
            &prior_model(),
            &RobotParams::default(),
            &FeatureConfig::default(),
            crate::dist::DEFAULT_ANGLE_MAX,
            0.6,
            8,
        )
        .unwrap();
        assert_eq!(stack.rows, map.rows());
        assert_eq!(stack.cols, map.cols());
        assert_eq!(stack.values.len(), map.rows() * map.cols() * 8 * 4);
        assert_eq!(stack.ood.len(), map.rows() * map.cols() * 8);
    }

    #[test]
    fn alpha_one_equals_expected_pmf_means() {
        let map = flat_map();
        let model = prior_model();
        let params = RobotParams::default();
        let feat_cfg = FeatureConfig::default();
        let stack = build_cvar_maps(
            &map,
            &model,
            &params,
            &feat_cfg,
            crate::dist::DEFAULT_ANGLE_MAX,
            1.0,
            4,
        )
        .unwrap();
        let pose = RobotState { x: 12.0, y: 12.0, yaw: 0.0 };
        let feat = extract_feature(&map, &pose, &params, &feat_cfg).unwrap();
        let pmfs = model.predict_expected(&feat).unwrap();
        let got = stack.lookup(12.0, 12.0, 0.0).unwrap();
        for j in 0..4 {
            assert!((got[j] - pmfs[j].mean()).abs() < 1e-12, "param {j}");
        }
    }

    #[test]
    fn margin_cells_carry_worst_case_values() {
        let stack = build_cvar_maps(
            &flat_map(),
            &prior_model(),
            &RobotParams::default(),
            &FeatureConfig::default(),
            crate::dist::DEFAULT_ANGLE_MAX,
            0.5,
            4,
        )
        .unwrap();
        let edge = stack.lookup(0.0, 0.0, 0.0).unwrap();
        assert_eq!(edge[0], 0.0);
        assert_eq!(edge[2], crate::dist::DEFAULT_ANGLE_MAX);
        assert!(!stack.valid[0]);
    }

    #[test]
    fn yaw_bins_wrap_to_nearest() {
        let stack = build_cvar_maps(
            &flat_map(),
            &prior_model(),
            &RobotParams::default(),
            &FeatureConfig::default(),
            crate::dist::DEFAULT_ANGLE_MAX,
            0.5,
            8,
        )
        .unwrap();
        assert_eq!(stack.yaw_bin(0.0), 0);
        assert_eq!(stack.yaw_bin(std::f64::consts::TAU), 0);
        assert_eq!(stack.yaw_bin(-std::f64::consts::FRAC_PI_2), 6);
        assert_eq!(stack.yaw_bin(std::f64::consts::FRAC_PI_4 * 0.9), 1);
    }

    #[test]
    fn stack_round_trips_through_disk() {
        let dir = std::env::temp_dir().join("evtrav-stack-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stack.cvs");
        let stack = build_cvar_maps(
            &TerrainMap::generate(&MapGenConfig {
                seed: 12,
                size_m: 10.0,
                ..Default::default()
            }),
            &prior_model(),
            &RobotParams::default(),
            &FeatureConfig::default(),
            crate::dist::DEFAULT_ANGLE_MAX,
            0.4,
            4,
        )
        .unwrap();
        stack.save(&path).unwrap();
        let back = CvarMapStack::load(&path).unwrap();
        assert_eq!(stack, back);
    }
}
