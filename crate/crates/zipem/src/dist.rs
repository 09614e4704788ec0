//! The zero-inflated Poisson distribution: mass function, moments,
//! distribution function and quantiles.
//!
//! All probabilities are accumulated in log space so that large means and
//! extreme mixing probabilities stay finite.

use crate::error::{Error, Result};
use statrs::function::gamma::ln_gamma;

/// Per-cell ZIP parameters: zero-inflation probability and Poisson mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pi: f64,
    lambda: f64,
}

impl CellParams {
    pub fn new(pi: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) || !pi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pi must lie in [0, 1], got {pi}"
            )));
        }
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { pi, lambda })
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// E[Y] = (1 - pi) * lambda.
    pub fn mean(&self) -> f64 {
        (1.0 - self.pi) * self.lambda
    }

    /// Var[Y] = (1 - pi) * lambda * (1 + pi * lambda).
    pub fn variance(&self) -> f64 {
        (1.0 - self.pi) * self.lambda * (1.0 + self.pi * self.lambda)
    }
}

/// ln(exp(a) + exp(b)) without overflow.
pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a > b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// ln(1 + exp(x)) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log of the ZIP probability mass at `y`.
pub fn zip_log_pmf(y: u32, cell: CellParams) -> f64 {
    let ln_pi = if cell.pi == 0.0 {
        f64::NEG_INFINITY
    } else {
        cell.pi.ln()
    };
    let ln_one_minus_pi = if cell.pi == 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - cell.pi).ln()
    };
    if y == 0 {
        log_sum_exp(ln_pi, ln_one_minus_pi - cell.lambda)
    } else {
        let y = f64::from(y);
        ln_one_minus_pi + y * cell.lambda.ln() - cell.lambda - ln_gamma(y + 1.0)
    }
}

/// ZIP probability mass at `y`.
pub fn zip_pmf(y: u32, cell: CellParams) -> f64 {
    zip_log_pmf(y, cell).exp()
}

/// P(Y <= y).
pub fn zip_cdf(y: u32, cell: CellParams) -> f64 {
    let mut acc = zip_log_pmf(0, cell);
    let mut lp = poisson_log_pmf0(cell);
    for k in 1..=y {
        lp += cell.lambda.ln() - f64::from(k).ln();
        acc = log_sum_exp(acc, lp);
    }
    acc.exp().min(1.0)
}

/// Smallest y with P(Y <= y) >= u, for u in [0, 1).
///
/// The search is capped well beyond the mean plus twenty standard
/// deviations; the residual mass there is below machine precision.
pub fn zip_quantile(u: f64, cell: CellParams) -> Result<u32> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!(
            "quantile level must lie in [0, 1), got {u}"
        )));
    }
    let ln_u = u.ln();
    let mut acc = zip_log_pmf(0, cell);
    if acc >= ln_u {
        return Ok(0);
    }
    let cap = (cell.lambda + 20.0 * cell.lambda.sqrt() + 100.0).ceil() as u32;
    let mut lp = poisson_log_pmf0(cell);
    for k in 1..=cap {
        lp += cell.lambda.ln() - f64::from(k).ln();
        acc = log_sum_exp(acc, lp);
        if acc >= ln_u {
            return Ok(k);
        }
    }
    Ok(cap)
}

/// Draw one ZIP variate by inverse transform.
pub fn zip_sample<R: rand::Rng + ?Sized>(rng: &mut R, cell: CellParams) -> u32 {
    let u: f64 = rng.random();
    zip_quantile(u, cell).expect("u in [0,1) by construction")
}

// ln P(Y = 0 | count component) + ln(1 - pi), the k = 0 anchor of the
// Poisson branch recurrence.
fn poisson_log_pmf0(cell: CellParams) -> f64 {
    let ln_one_minus_pi = if cell.pi == 1.0 {
        f64::NEG_INFINITY
    } else {
        (1.0 - cell.pi).ln()
    };
    ln_one_minus_pi - cell.lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pmf_reduces_to_poisson_when_pi_zero() {
        let cell = CellParams::new(0.0, 2.0).unwrap();
        assert_relative_eq!(zip_pmf(0, cell), (-2.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn pmf_mixture_at_zero() {
        let cell = CellParams::new(0.2, 1.0).unwrap();
        let expected = 0.2 + 0.8 * (-1.0f64).exp();
        assert_relative_eq!(zip_pmf(0, cell), expected, epsilon = 1e-14);
        assert!((zip_pmf(0, cell) - 0.49430).abs() < 5e-6);
    }

    #[test]
    fn pmf_degenerate_zero_mass() {
        let cell = CellParams::new(1.0, 5.0).unwrap();
        assert_eq!(zip_pmf(3, cell), 0.0);
        assert_eq!(zip_pmf(0, cell), 1.0);
    }

    #[test]
    fn pmf_positive_count_matches_direct_formula() {
        let cell = CellParams::new(0.3, 4.0).unwrap();
        let direct = 0.7 * 4.0f64.powi(3) * (-4.0f64).exp() / 6.0;
        assert_relative_eq!(zip_pmf(3, cell), direct, epsilon = 1e-13);
    }

    #[test]
    fn pmf_sums_to_one_over_bulk_support() {
        for &(pi, lambda) in &[(0.0, 0.5), (0.3, 2.0), (0.8, 10.0), (0.05, 40.0)] {
            let cell = CellParams::new(pi, lambda).unwrap();
            let upper = (lambda + 10.0 * lambda.sqrt()).ceil() as u32;
            let partial: f64 = (0..=upper).map(|y| zip_pmf(y, cell)).sum();
            assert!(partial >= 0.999, "partial sum {partial} at pi={pi}, lambda={lambda}");
            assert!(partial <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cdf_and_quantile_are_inverse() {
        let cell = CellParams::new(0.25, 3.0).unwrap();
        for y in 0..15 {
            let c = zip_cdf(y, cell);
            assert_eq!(zip_quantile(c - 1e-12, cell).unwrap(), y);
        }
        assert_eq!(zip_quantile(0.0, cell).unwrap(), 0);
    }

    #[test]
    fn quantile_rejects_unit_level() {
        let cell = CellParams::new(0.25, 3.0).unwrap();
        assert!(zip_quantile(1.0, cell).is_err());
    }

    #[test]
    fn monte_carlo_moments_match_formulas() {
        // The sampler's empirical mean and variance must agree
        // with (1-pi)lambda and (1-pi)lambda(1+pi lambda) within 3 SE.
        let cell = CellParams::new(0.4, 3.0).unwrap();
        let n = 100_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(991);
        let draws: Vec<f64> = (0..n).map(|_| f64::from(zip_sample(&mut rng, cell))).collect();
        let mean: f64 = draws.iter().sum::<f64>() / n as f64;
        let var: f64 = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se_mean = (cell.variance() / n as f64).sqrt();
        assert!(
            (mean - cell.mean()).abs() < 3.0 * se_mean,
            "mean {mean} vs {}",
            cell.mean()
        );
        // SE of the sample variance from the fourth central moment.
        let m4: f64 = draws.iter().map(|d| (d - mean).powi(4)).sum::<f64>() / n as f64;
        let se_var = ((m4 - var * var) / n as f64).sqrt();
        assert!(
            (var - cell.variance()).abs() < 3.0 * se_var,
            "variance {var} vs {}",
            cell.variance()
        );
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(CellParams::new(-0.1, 1.0).is_err());
        assert!(CellParams::new(1.1, 1.0).is_err());
        assert!(CellParams::new(0.5, 0.0).is_err());
        assert!(CellParams::new(0.5, f64::NAN).is_err());
    }
}
