//! Small estimators shared by the checks and the experiment commands.

use serde::Serialize;

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn new(value: f64, std_err: f64) -> Self {
        Self { value, std_err }
    }

    /// Number of standard errors between the estimate and `target`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_err == 0.0 {
            if self.value == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - target) / self.std_err
        }
    }
}

/// Fraction `k/n` with its binomial standard error.
pub fn proportion(k: u64, n: u64) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let p = k as f64 / n as f64;
    Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Standard deviation of a binomial fraction with true probability `p`.
pub fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Mean of ±1 samples: `sum` is Σ x_i, `n` the sample count.
pub fn signed_mean(sum: i64, n: u64) -> Estimate {
    if n == 0 {
        return Estimate::new(f64::NAN, f64::NAN);
    }
    let e = sum as f64 / n as f64;
    Estimate::new(e, ((1.0 - e * e).max(0.0) / n as f64).sqrt())
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0), 0.0);
        assert!((binary_entropy(0.5) - 1.0).abs() < 1e-15);
        assert!((binary_entropy(0.25) - 0.811_278_124_459_132_8).abs() < 1e-12);
    }

    #[test]
    fn signed_mean_error() {
        let e = signed_mean(0, 100);
        assert_eq!(e.value, 0.0);
        assert!((e.std_err - 0.1).abs() < 1e-15);
        assert_eq!(signed_mean(50, 50).std_err, 0.0);
    }

    #[test]
    fn z_score_with_zero_error() {
        assert_eq!(Estimate::new(0.0, 0.0).z_score(0.0), 0.0);
        assert!(Estimate::new(0.1, 0.0).z_score(0.0).is_infinite());
        assert!((proportion(1, 4).z_score(0.0) - 0.25 / (0.1875f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
