//! Closed-form uncertainty-aware physics priors: slope-based dirt traction,
//! vegetation-height traction, trigonometric roll/pitch estimates from
//! per-wheel terrain heights, and semantic/uniform mixing into a single PMF.
//!
//! These hold in- and out-of-distribution alike, which is what lets the
//! evidential posterior fall back to them when learned evidence collapses.

use std::sync::Arc;

use crate::dist::{Discretization, Pmf};
use crate::{Error, Result, TravParam};

/// Wheel order used throughout: front-left, back-left, back-right,
/// front-right.
pub const WHEEL_FL: usize = 0;
pub const WHEEL_BL: usize = 1;
pub const WHEEL_BR: usize = 2;
pub const WHEEL_FR: usize = 3;

/// Lateral wheel pairs whose height differences estimate roll.
pub const ROLL_PAIRS: [(usize, usize); 2] = [(WHEEL_FL, WHEEL_FR), (WHEEL_BL, WHEEL_BR)];
/// Longitudinal wheel pairs whose height differences estimate pitch.
pub const PITCH_PAIRS: [(usize, usize); 2] = [(WHEEL_FL, WHEEL_BL), (WHEEL_FR, WHEEL_BR)];

/// Per-wheel terrain measurements under the robot footprint.
#[derive(Debug, Clone, PartialEq)]
pub struct FootprintSample {
    /// Absolute heading-aligned grade (rise/run) per wheel.
    pub slopes: [f64; 4],
    /// Terrain surface height per wheel, meters (used for attitude).
    pub terrain_heights: [f64; 4],
    /// Vegetation height per wheel, meters (used for vegetation traction).
    pub veg_heights: [f64; 4],
    /// Distances for the two [`ROLL_PAIRS`], meters.
    pub roll_dists: [f64; 2],
    /// Distances for the two [`PITCH_PAIRS`], meters.
    pub pitch_dists: [f64; 2],
    /// Fraction of the footprint covered by dirt; dirt + veg sums to 1.
    pub dirt_ratio: f64,
    pub veg_ratio: f64,
}

impl FootprintSample {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .slopes
            .iter()
            .chain(&self.terrain_heights)
            .chain(&self.veg_heights)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::domain("footprint values must be finite"));
        }
        if self.slopes.iter().any(|&s| s < 0.0) || self.veg_heights.iter().any(|&h| h < 0.0) {
            return Err(Error::domain("slopes and vegetation heights must be >= 0"));
        }
        if self.roll_dists.iter().chain(&self.pitch_dists).any(|&d| !(d > 0.0)) {
            return Err(Error::domain("wheel pair distances must be > 0"));
        }
        if (self.dirt_ratio + self.veg_ratio - 1.0).abs() > 1e-6 {
            return Err(Error::domain(format!(
                "semantic ratios must sum to 1, got {}",
                self.dirt_ratio + self.veg_ratio
            )));
        }
        Ok(())
    }
}

/// Physics prior configuration.
#[derive(Debug, Clone, Copy)]
pub struct PriorConfig {
    /// Max slope (grade) for the linear-traction model.
    pub s_max_lin: f64,
    /// Max slope (grade) for the angular-traction model.
    pub s_max_ang: f64,
    /// Max vegetation height, meters.
    pub h_max: f64,
    /// Weight of the uniform PMF mixed into the final prior, in [0, 1].
    pub w_unif: f64,
    /// Prior evidence assigned to the physics PMF in the posterior update.
    pub n_phys: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            // grades equivalent to 30 and 15 degrees
            s_max_lin: (30.0f64).to_radians().tan(),
            s_max_ang: (15.0f64).to_radians().tan(),
            h_max: 0.2,
            w_unif: 0.2,
            n_phys: crate::dist::DEFAULT_BINS as f64,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max_lin > 0.0 && self.s_max_ang > 0.0 && self.h_max > 0.0) {
            return Err(Error::domain("prior max slope/height must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.w_unif) {
            return Err(Error::domain("w_unif must lie in [0, 1]"));
        }
        if !(self.n_phys > 0.0) {
            return Err(Error::domain("prior evidence must be > 0"));
        }
        Ok(())
    }

    fn s_max(&self, param: TravParam) -> f64 {
        match param {
            TravParam::LinearTraction => self.s_max_lin,
            TravParam::AngularTraction => self.s_max_ang,
            _ => unreachable!("attitude parameters have no slope scale"),
        }
    }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Averages one-hot encodings of a per-wheel scalar law into one PMF.
fn four_wheel_mix(values: [f64; 4], disc: &Arc<Discretization>) -> Pmf {
    let mut masses = vec![0.0; disc.num_bins()];
    for v in values {
        masses[disc.bin_index_clamped(v)] += 0.25;
    }
    Pmf::new(masses, disc.clone()).expect("four-wheel mix is a valid pmf")
}

/// Dirt traction prior: per wheel, traction falls linearly with the absolute
/// heading-aligned slope, clipped to [0, 1]; the four wheels are fused as an
/// equal-weight PMF.
pub fn dirt_traction_prior(fp: &FootprintSample, s_max: f64, disc: &Arc<Discretization>) -> Pmf {
    let vals = fp.slopes.map(|s| clip01((s_max - s) / s_max));
    four_wheel_mix(vals, disc)
}

/// Vegetation traction prior: traction falls linearly with vegetation height.
pub fn veg_traction_prior(fp: &FootprintSample, h_max: f64, disc: &Arc<Discretization>) -> Pmf {
    let vals = fp.veg_heights.map(|h| clip01((h_max - h) / h_max));
    four_wheel_mix(vals, disc)
}

/// Roll or pitch prior: per wheel pair, the absolute inclination
/// `|arctan((h_i - h_j) / d_ij)|`, fused as an equal-weight PMF over the two
/// pairs.
pub fn attitude_prior(fp: &FootprintSample, param: TravParam, disc: &Arc<Discretization>) -> Pmf {
    let (pairs, dists) = match param {
        TravParam::Roll => (ROLL_PAIRS, fp.roll_dists),
        TravParam::Pitch => (PITCH_PAIRS, fp.pitch_dists),
        _ => unreachable!("traction parameters have no attitude prior"),
    };
    let mut masses = vec![0.0; disc.num_bins()];
    for ((i, j), d) in pairs.into_iter().zip(dists) {
        let angle = ((fp.terrain_heights[i] - fp.terrain_heights[j]) / d).atan().abs();
        masses[disc.bin_index_clamped(angle)] += 0.5;
    }
    Pmf::new(masses, disc.clone()).expect("attitude prior is a valid pmf")
}

/// Combines per-semantic priors by footprint ratio and mixes in the uniform
/// PMF with weight `w_unif`.
pub fn mix_semantic(
    dirt: &Pmf,
    veg: &Pmf,
    fp: &FootprintSample,
    cfg: &PriorConfig,
) -> Result<Pmf> {
    if (fp.dirt_ratio + fp.veg_ratio - 1.0).abs() > 1e-6 {
        return Err(Error::domain(format!(
            "semantic ratios must sum to 1, got {}",
            fp.dirt_ratio + fp.veg_ratio
        )));
    }
    let b = dirt.num_bins();
    let unif = 1.0 / b as f64;
    let masses = (0..b)
        .map(|i| {
            cfg.w_unif * unif
                + (1.0 - cfg.w_unif)
                    * (fp.dirt_ratio * dirt.masses()[i] + fp.veg_ratio * veg.masses()[i])
        })
        .collect();
    Pmf::new(masses, dirt.disc().clone())
}

/// Full physics prior for one traversability parameter: dispatches the
/// slope/height/trigonometry law by parameter and semantic type, then mixes.
/// Attitude parameters use the same trigonometric PMF for both semantic types
/// since heights come from the rigid terrain surface.
pub fn physics_prior_pmf(
    fp: &FootprintSample,
    param: TravParam,
    cfg: &PriorConfig,
    disc: &Arc<Discretization>,
) -> Result<Pmf> {
    cfg.validate()?;
    fp.validate()?;
    let (dirt, veg) = if param.is_traction() {
        (
            dirt_traction_prior(fp, cfg.s_max(param), disc),
            veg_traction_prior(fp, cfg.h_max, disc),
        )
    } else {
        let att = attitude_prior(fp, param, disc);
        (att.clone(), att)
    };
    mix_semantic(&dirt, &veg, fp, cfg)
}
