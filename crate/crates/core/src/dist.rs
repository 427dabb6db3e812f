//! Discrete traversability distributions: PMFs over equal-width bins,
//! Dirichlet distributions over PMFs, one-hot encoding, Dirichlet entropy,
//! and left/right-tail CVaR statistics.
//!
//! All types are immutable values after construction and every operation is
//! a pure function, so unrestricted parallel use is safe.

use std::sync::Arc;

use crate::special::{digamma, ln_multi_beta, trigamma};
use crate::{Error, Result};

/// PMF masses must sum to one within this tolerance after construction.
pub const MASS_TOL: f64 = 1e-9;
/// Constructors renormalize mass drift below this and reject anything worse.
const RENORM_TOL: f64 = 1e-6;

/// Default number of traversability bins.
pub const DEFAULT_BINS: usize = 12;
/// Default upper bound of the attitude-angle discretization (45 degrees).
pub const DEFAULT_ANGLE_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Equal-width binning of a traversability parameter's value range.
///
/// Bin `b` covers the half-open cell `[lo + b*w, lo + (b+1)*w)` with its
/// center at the cell midpoint; the last cell also includes `hi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    num_bins: usize,
    bin_lo: f64,
    bin_hi: f64,
    centers: Vec<f64>,
}

impl Discretization {
    pub fn new(num_bins: usize, bin_lo: f64, bin_hi: f64) -> Result<Self> {
        if num_bins < 2 {
            return Err(Error::domain(format!("need >= 2 bins, got {num_bins}")));
        }
        if !(bin_hi > bin_lo) || !bin_lo.is_finite() || !bin_hi.is_finite() {
            return Err(Error::domain(format!(
                "invalid bin range [{bin_lo}, {bin_hi}]"
            )));
        }
        let width = (bin_hi - bin_lo) / num_bins as f64;
        let centers = (0..num_bins)
            .map(|b| bin_lo + (b as f64 + 0.5) * width)
            .collect();
        Ok(Discretization {
            num_bins,
            bin_lo,
            bin_hi,
            centers,
        })
    }

    /// Unit-range traction bins over [0, 1].
    pub fn traction(num_bins: usize) -> Arc<Self> {
        Arc::new(Self::new(num_bins, 0.0, 1.0).expect("valid traction bins"))
    }

    /// Attitude-angle bins over [0, angle_max] radians.
    pub fn angle(num_bins: usize, angle_max: f64) -> Arc<Self> {
        Arc::new(Self::new(num_bins, 0.0, angle_max).expect("valid angle bins"))
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.bin_lo, self.bin_hi)
    }

    pub fn bin_width(&self) -> f64 {
        (self.bin_hi - self.bin_lo) / self.num_bins as f64
    }

    /// Index of the cell containing `value`; out-of-range values clamp to the
    /// boundary bins.
    pub fn bin_index_clamped(&self, value: f64) -> usize {
        let raw = ((value - self.bin_lo) / self.bin_width()).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(self.num_bins - 1)
        }
    }

    pub fn compatible(&self, other: &Self) -> bool {
        self == other
    }
}

/// Cumulative sum: `out[k] = sum of in[0..=k]`.
pub fn cumsum(xs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    xs.iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect()
}

/// A normalized probability mass function over the bins of a
/// [`Discretization`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    masses: Vec<f64>,
    disc: Arc<Discretization>,
}

impl Pmf {
    /// Builds a PMF, renormalizing mass drift below 1e-6 and rejecting
    /// negative masses or larger drift.
    pub fn new(mut masses: Vec<f64>, disc: Arc<Discretization>) -> Result<Self> {
        if masses.len() != disc.num_bins() {
            return Err(Error::domain(format!(
                "pmf has {} masses for {} bins",
                masses.len(),
                disc.num_bins()
            )));
        }
        for m in &mut masses {
            if !m.is_finite() || *m < -1e-12 {
                return Err(Error::domain(format!("invalid pmf mass {m}")));
            }
            if *m < 0.0 {
                *m = 0.0;
            }
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > RENORM_TOL {
            return Err(Error::domain(format!(
                "pmf mass sums to {total}, outside renormalization tolerance"
            )));
        }
        for m in &mut masses {
            *m /= total;
        }
        Ok(Pmf { masses, disc })
    }

    /// Uniform PMF over all bins.
    pub fn uniform(disc: Arc<Discretization>) -> Self {
        let b = disc.num_bins();
        Pmf {
            masses: vec![1.0 / b as f64; b],
            disc,
        }
    }

    /// One-hot encoding: all mass in the bin whose cell contains `value`,
    /// with out-of-range values clamped to the boundary bins.
    pub fn one_hot(value: f64, disc: Arc<Discretization>) -> Self {
        let b = disc.bin_index_clamped(value);
        let mut masses = vec![0.0; disc.num_bins()];
        masses[b] = 1.0;
        Pmf { masses, disc }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn num_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn cumsum(&self) -> Vec<f64> {
        cumsum(&self.masses)
    }

    /// Expected value under the bin centers.
    pub fn mean(&self) -> f64 {
        self.masses
            .iter()
            .zip(self.disc.centers())
            .map(|(m, c)| m * c)
            .sum()
    }

    /// Left-tail CVaR: expected value of the worst (lowest) `alpha` portion
    /// of probability mass, splitting the boundary bin fractionally.
    pub fn cvar_left(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mut remaining = alpha;
        let mut acc = 0.0;
        for (m, c) in self.masses.iter().zip(self.disc.centers()) {
            let take = m.min(remaining);
            acc += take * c;
            remaining -= take;
            if remaining <= 1e-15 {
                break;
            }
        }
        Ok(acc / alpha)
    }

    /// Right-tail CVaR: expected value of the worst (highest) `alpha` portion
    /// of probability mass.
    pub fn cvar_right(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let mut remaining = alpha;
        let mut acc = 0.0;
        for (m, c) in self.masses.iter().zip(self.disc.centers()).rev() {
            let take = m.min(remaining);
            acc += take * c;
            remaining -= take;
            if remaining <= 1e-15 {
                break;
            }
        }
        Ok(acc / alpha)
    }

    /// L1 distance to another PMF on the same discretization.
    pub fn l1_distance(&self, other: &Pmf) -> f64 {
        self.masses
            .iter()
            .zip(&other.masses)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must be in (0, 1], got {alpha}")))
    }
}

/// Dirichlet concentration parameters over the bins of a [`Discretization`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    beta: Vec<f64>,
    disc: Arc<Discretization>,
}

impl DirichletParams {
    pub fn new(beta: Vec<f64>, disc: Arc<Discretization>) -> Result<Self> {
        if beta.len() != disc.num_bins() {
            return Err(Error::domain(format!(
                "dirichlet has {} concentrations for {} bins",
                beta.len(),
                disc.num_bins()
            )));
        }
        if beta.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::domain(
                "dirichlet concentrations must be strictly positive and finite".to_string(),
            ));
        }
        Ok(DirichletParams { beta, disc })
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn disc(&self) -> &Arc<Discretization> {
        &self.disc
    }

    pub fn num_bins(&self) -> usize {
        self.beta.len()
    }

    /// Total evidence beta_0 = sum of concentrations.
    pub fn total_evidence(&self) -> f64 {
        self.beta.iter().sum()
    }

    /// The expected PMF beta / beta_0.
    pub fn mean(&self) -> Pmf {
        let b0 = self.total_evidence();
        let masses = self.beta.iter().map(|&b| b / b0).collect();
        Pmf::new(masses, self.disc.clone()).expect("dirichlet mean is a valid pmf")
    }

    /// Differential entropy of the Dirichlet distribution:
    /// ln B(beta) + (beta_0 - B) psi(beta_0) - sum (beta_b - 1) psi(beta_b).
    pub fn entropy(&self) -> f64 {
        let b0 = self.total_evidence();
        let b = self.beta.len() as f64;
        let cross: f64 = self
            .beta
            .iter()
            .map(|&bb| (bb - 1.0) * digamma(bb))
            .sum();
        ln_multi_beta(&self.beta) + (b0 - b) * digamma(b0) - cross
    }

    /// Gradient of [`Self::entropy`] with respect to each concentration:
    /// dH/dbeta_b = (beta_0 - B) psi'(beta_0) - (beta_b - 1) psi'(beta_b).
    pub fn entropy_grad(&self) -> Vec<f64> {
        let b0 = self.total_evidence();
        let b = self.beta.len() as f64;
        let common = (b0 - b) * trigamma(b0);
        self.beta
            .iter()
            .map(|&bb| common - (bb - 1.0) * trigamma(bb))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma};

    fn disc3() -> Arc<Discretization> {
        Arc::new(Discretization::new(3, 0.0, 1.0).unwrap())
    }

    fn unit_disc(b: usize) -> Arc<Discretization> {
        Arc::new(Discretization::new(b, 0.0, 1.0).unwrap())
    }

    #[test]
    fn cumsum_examples() {
        assert_eq!(cumsum(&[0.5, 0.5, 0.0]), vec![0.5, 1.0, 1.0]);
        assert_eq!(cumsum(&[1.0, 0.0, 0.0]), vec![1.0, 1.0, 1.0]);
        assert_eq!(cumsum(&[0.0, 0.0, 1.0]), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn dirichlet_mean_examples() {
        let d2 = unit_disc(2);
        let q = DirichletParams::new(vec![1.0, 1.0], d2.clone()).unwrap();
        assert_eq!(q.mean().masses(), &[0.5, 0.5]);
        let q = DirichletParams::new(vec![2.0, 6.0], d2).unwrap();
        assert_eq!(q.mean().masses(), &[0.25, 0.75]);
        let q = DirichletParams::new(vec![1.0, 1.0, 2.0], disc3()).unwrap();
        assert_eq!(q.mean().masses(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn pmf_mean_examples() {
        let d = Arc::new(Discretization::new(2, -0.5, 1.5).unwrap());
        // centers land exactly on {0, 1}
        assert_eq!(d.centers(), &[0.0, 1.0]);
        let p = Pmf::new(vec![0.5, 0.5], d.clone()).unwrap();
        assert_eq!(p.mean(), 0.5);
        let p = Pmf::new(vec![0.25, 0.75], d.clone()).unwrap();
        assert_eq!(p.mean(), 0.75);
        let one = Pmf::one_hot(1.0, d);
        assert_eq!(one.mean(), 1.0);
    }

    #[test]
    fn cvar_boundary_split() {
        let d = Arc::new(Discretization::new(2, -0.5, 1.5).unwrap());
        let p = Pmf::new(vec![0.5, 0.5], d).unwrap();
        assert!((p.cvar_left(0.5).unwrap() - 0.0).abs() < 1e-12);
        // fractional split of the boundary bin
        assert!((p.cvar_left(0.75).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.cvar_left(1.0).unwrap() - p.mean()).abs() < 1e-12);
        assert!((p.cvar_right(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((p.cvar_right(1.0).unwrap() - p.mean()).abs() < 1e-12);
        let p = Pmf::new(
            vec![0.25, 0.75],
            Arc::new(Discretization::new(2, -0.5, 1.5).unwrap()),
        )
        .unwrap();
        assert!((p.cvar_right(0.25).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cvar_rejects_bad_alpha() {
        let p = Pmf::uniform(disc3());
        assert!(p.cvar_left(0.0).is_err());
        assert!(p.cvar_left(1.5).is_err());
        assert!(p.cvar_right(-0.1).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let d = unit_disc(8);
        let p = Pmf::one_hot(d.centers()[3], d.clone());
        assert_eq!(p.masses()[3], 1.0);
        let lo = Pmf::one_hot(-5.0, d.clone());
        assert_eq!(lo.masses()[0], 1.0);
        let hi = Pmf::one_hot(99.0, d.clone());
        assert_eq!(hi.masses()[7], 1.0);
        // value exactly at the top of the range clamps into the last bin
        let top = Pmf::one_hot(1.0, d);
        assert_eq!(top.masses()[7], 1.0);
    }

    #[test]
    fn pmf_construction_tolerances() {
        let d = disc3();
        // small drift renormalizes
        let p = Pmf::new(vec![0.5, 0.5, 1e-7], d.clone()).unwrap();
        assert!((p.masses().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        // large drift rejected
        assert!(Pmf::new(vec![0.5, 0.4, 0.0], d.clone()).is_err());
        // negative mass rejected
        assert!(Pmf::new(vec![1.1, -0.1, 0.0], d).is_err());
    }

    #[test]
    fn dirichlet_entropy_examples() {
        let d2 = unit_disc(2);
        let q = DirichletParams::new(vec![1.0, 1.0], d2.clone()).unwrap();
        assert!(q.entropy().abs() < 1e-12);
        let q = DirichletParams::new(vec![1.0, 1.0, 1.0], disc3()).unwrap();
        assert!((q.entropy() + 2.0f64.ln()).abs() < 1e-12);
        // Dir(2, 2) is Beta(2, 2): H = -ln 6 + 5/3, cross-checked by Monte Carlo
        let q = DirichletParams::new(vec![2.0, 2.0], d2).unwrap();
        assert!((q.entropy() - (5.0 / 3.0 - 6.0f64.ln())).abs() < 1e-12);
    }

    /// Monte-Carlo entropy estimate: H = E[-ln q(p)] over p ~ Dir(beta).
    fn mc_entropy(beta: &[f64], n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let ln_b = ln_multi_beta(beta);
        let gammas: Vec<Gamma<f64>> = beta.iter().map(|&b| Gamma::new(b, 1.0).unwrap()).collect();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut draw = vec![0.0; beta.len()];
        for _ in 0..n {
            let mut total = 0.0;
            for (x, g) in draw.iter_mut().zip(&gammas) {
                *x = g.sample(rng).max(1e-300);
                total += *x;
            }
            let mut ln_pdf = -ln_b;
            for (x, &b) in draw.iter().zip(beta) {
                ln_pdf += (b - 1.0) * (x / total).ln();
            }
            sum += -ln_pdf;
            sum_sq += ln_pdf * ln_pdf;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn dirichlet_entropy_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..8 {
            let b = 2 + case % 4;
            let beta: Vec<f64> = (0..b).map(|_| rng.gen_range(0.5..10.0)).collect();
            let disc = unit_disc(b);
            let q = DirichletParams::new(beta.clone(), disc).unwrap();
            let (mc, se) = mc_entropy(&beta, 200_000, &mut rng);
            let diff = (q.entropy() - mc).abs();
            assert!(
                diff <= 3.0 * se + 1e-6,
                "beta={beta:?} closed={} mc={mc} se={se}",
                q.entropy()
            );
        }
    }

    #[test]
    fn entropy_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let b = 12;
            let beta: Vec<f64> = (0..b).map(|_| rng.gen_range(0.2..20.0)).collect();
            let disc = unit_disc(b);
            let q = DirichletParams::new(beta.clone(), disc.clone()).unwrap();
            let grad = q.entropy_grad();
            let h = 1e-6;
            for i in 0..b {
                let mut up = beta.clone();
                up[i] += h;
                let mut dn = beta.clone();
                dn[i] -= h;
                let fd = (DirichletParams::new(up, disc.clone()).unwrap().entropy()
                    - DirichletParams::new(dn, disc.clone()).unwrap().entropy())
                    / (2.0 * h);
                assert!((fd - grad[i]).abs() < 1e-6, "i={i} fd={fd} an={}", grad[i]);
            }
        }
    }

    /// Rockafellar-Uryasev variational form: an independent route to discrete
    /// CVaR that is exact for atomic distributions (the optimum is attained
    /// at an atom).
    fn cvar_left_variational(p: &Pmf, alpha: f64) -> f64 {
        p.disc()
            .centers()
            .iter()
            .map(|&tau| {
                let shortfall: f64 = p
                    .masses()
                    .iter()
                    .zip(p.disc().centers())
                    .map(|(m, &c)| m * (tau - c).max(0.0))
                    .sum();
                tau - shortfall / alpha
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn cvar_right_variational(p: &Pmf, alpha: f64) -> f64 {
        p.disc()
            .centers()
            .iter()
            .map(|&tau| {
                let excess: f64 = p
                    .masses()
                    .iter()
                    .zip(p.disc().centers())
                    .map(|(m, &c)| m * (c - tau).max(0.0))
                    .sum();
                tau + excess / alpha
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn arbitrary_pmf(b: usize) -> impl Strategy<Value = Pmf> {
        proptest::collection::vec(0.0f64..1.0, b).prop_filter_map("needs positive mass", move |w| {
            let total: f64 = w.iter().sum();
            if total < 1e-3 {
                return None;
            }
            let masses: Vec<f64> = w.iter().map(|x| x / total).collect();
            Some(Pmf::new(masses, unit_disc(b)).unwrap())
        })
    }

    proptest! {
        #[test]
        fn cumsum_monotone_ends_at_one(p in arbitrary_pmf(12)) {
            let cs = p.cumsum();
            for w in cs.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-15);
            }
            prop_assert!((cs[11] - 1.0).abs() < MASS_TOL);
        }

        #[test]
        fn cvar_brackets_mean(p in arbitrary_pmf(12), idx in 1usize..=10) {
            let alpha = idx as f64 / 10.0;
            let lo = p.cvar_left(alpha).unwrap();
            let hi = p.cvar_right(alpha).unwrap();
            let mean = p.mean();
            prop_assert!(lo <= mean + 1e-12);
            prop_assert!(hi >= mean - 1e-12);
        }

        #[test]
        fn cvar_monotone_in_alpha(p in arbitrary_pmf(12)) {
            let grid: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
            let lefts: Vec<f64> = grid.iter().map(|&a| p.cvar_left(a).unwrap()).collect();
            let rights: Vec<f64> = grid.iter().map(|&a| p.cvar_right(a).unwrap()).collect();
            for w in lefts.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            for w in rights.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }

        #[test]
        fn cvar_matches_variational_oracle(p in arbitrary_pmf(12), idx in 1usize..=10) {
            let alpha = idx as f64 / 10.0;
            prop_assert!((p.cvar_left(alpha).unwrap() - cvar_left_variational(&p, alpha)).abs() < 1e-9);
            prop_assert!((p.cvar_right(alpha).unwrap() - cvar_right_variational(&p, alpha)).abs() < 1e-9);
        }

        #[test]
        fn dirichlet_mean_is_valid_pmf(
            beta in proptest::collection::vec(0.01f64..50.0, 12)
        ) {
            let q = DirichletParams::new(beta, unit_disc(12)).unwrap();
            let m = q.mean();
            prop_assert!(m.masses().iter().all(|&x| x >= 0.0));
            prop_assert!((m.masses().iter().sum::<f64>() - 1.0).abs() < MASS_TOL);
        }
    }
}
