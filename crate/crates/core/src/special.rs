//! Log-gamma, digamma and trigamma via shift-up recurrence plus Stirling-type
//! asymptotic expansions. Accurate to ~1e-12 relative for arguments >= 1e-3,
//! which keeps the crate free of special-function dependencies.

/// Arguments are shifted above this before applying the asymptotic series.
const SHIFT_CUTOFF: f64 = 12.0;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    let mut z = x;
    let mut shift = 0.0;
    while z < SHIFT_CUTOFF {
        shift += z.ln();
        z += 1.0;
    }
    // Stirling series: (z - 1/2) ln z - z + ln sqrt(2 pi) + sum B_2n / (2n (2n-1) z^(2n-1))
    let w = 1.0 / (z * z);
    let series = (1.0 / 12.0
        + w * (-1.0 / 360.0
            + w * (1.0 / 1260.0
                + w * (-1.0 / 1680.0
                    + w * (1.0 / 1188.0 + w * (-691.0 / 360_360.0 + w * (1.0 / 156.0)))))))
        / z;
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series - shift
}

/// Digamma (psi) function for x > 0.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma requires x > 0, got {x}");
    let mut z = x;
    let mut shift = 0.0;
    while z < SHIFT_CUTOFF {
        shift += 1.0 / z;
        z += 1.0;
    }
    // psi(z) ~ ln z - 1/(2z) - sum B_2n / (2n z^2n)
    let w = 1.0 / (z * z);
    let series = w
        * (1.0 / 12.0
            + w * (-1.0 / 120.0
                + w * (1.0 / 252.0
                    + w * (-1.0 / 240.0
                        + w * (1.0 / 132.0 + w * (-691.0 / 32_760.0 + w * (1.0 / 12.0)))))));
    z.ln() - 0.5 / z - series - shift
}

/// Trigamma (psi') function for x > 0.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "trigamma requires x > 0, got {x}");
    let mut z = x;
    let mut shift = 0.0;
    while z < SHIFT_CUTOFF {
        shift += 1.0 / (z * z);
        z += 1.0;
    }
    // psi'(z) ~ 1/z + 1/(2z^2) + sum B_2n / z^(2n+1)
    let w = 1.0 / (z * z);
    let series = (1.0 / 6.0
        + w * (-1.0 / 30.0
            + w * (1.0 / 42.0
                + w * (-1.0 / 30.0
                    + w * (5.0 / 66.0 + w * (-691.0 / 2730.0 + w * (7.0 / 6.0)))))))
        * w
        / z;
    1.0 / z + 0.5 * w + series + shift
}

/// Log of the multivariate beta function: sum ln_gamma(a_i) - ln_gamma(sum a_i).
pub fn ln_multi_beta(a: &[f64]) -> f64 {
    let total: f64 = a.iter().sum();
    a.iter().map(|&x| ln_gamma(x)).sum::<f64>() - ln_gamma(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(2.0)).abs() < 1e-13);
        // Gamma(1/2) = sqrt(pi)
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        // Gamma(5) = 24
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        // Gamma(10) = 362880
        assert!((ln_gamma(10.0) - 362_880.0f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-12);
        // psi(1/2) = -gamma - 2 ln 2
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * 2.0f64.ln()).abs() < 1e-12);
        // psi(2) = 1 - gamma
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-12);
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-11);
        // psi'(1/2) = pi^2 / 2
        assert!((trigamma(0.5) - 3.0 * pi2_6).abs() < 1e-11);
        assert!((trigamma(2.0) - (pi2_6 - 1.0)).abs() < 1e-11);
    }

    #[test]
    fn recurrences_hold_down_to_tiny_arguments() {
        // psi(x+1) = psi(x) + 1/x, ln G(x+1) = ln G(x) + ln x, psi'(x+1) = psi'(x) - 1/x^2
        let mut x = 1e-3;
        while x < 50.0 {
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
            assert!(rel(ln_gamma(x + 1.0), ln_gamma(x) + x.ln()) < 1e-10, "x={x}");
            assert!(rel(digamma(x + 1.0), digamma(x) + 1.0 / x) < 1e-10, "x={x}");
            assert!(
                rel(trigamma(x + 1.0), trigamma(x) - 1.0 / (x * x)) < 1e-10,
                "x={x}"
            );
            x *= 2.3;
        }
    }

    #[test]
    fn digamma_matches_ln_gamma_derivative() {
        // Central finite difference of ln_gamma approximates digamma.
        for &x in &[0.05f64, 0.7, 1.3, 4.2, 9.0, 25.0] {
            let h = 1e-6 * x.max(1.0);
            let fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2.0 * h);
            assert!((fd - digamma(x)).abs() < 1e-7, "x={x}");
        }
    }

    #[test]
    fn trigamma_matches_digamma_derivative() {
        for &x in &[0.05f64, 0.7, 1.3, 4.2, 9.0, 25.0] {
            let h = 1e-6 * x.max(1.0);
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((fd - trigamma(x)).abs() < 1e-6, "x={x}");
        }
    }
}
