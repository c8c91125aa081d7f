//! Monte Carlo estimates, reproducible random streams and Gaussian helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Counter-style stream for replica `stream` of a run seeded with `seed`.
///
/// Each replica owns its own ChaCha stream, so results do not depend on how
/// replicas are scheduled across threads.
pub fn replica_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a stage label.
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Monte Carlo estimate of an expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// Natural log of `mean`; `-inf` when the mean is not positive.
    pub log_mean: f64,
}

/// Recursive pairwise summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    let shifted: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + pairwise_sum(&shifted).ln()
}

impl MomentEstimate {
    /// Sample mean and standard error of signed values.
    pub fn from_values(xs: &[f64]) -> Result<Self> {
        if xs.len() < 2 {
            return domain("an estimate needs at least two samples");
        }
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1.0);
        Ok(Self {
            mean,
            std_error: (var / n).sqrt(),
            n_samples: xs.len(),
            log_mean: if mean > 0.0 { mean.ln() } else { f64::NEG_INFINITY },
        })
    }

    /// Estimate from samples given as natural logs of non-negative values.
    ///
    /// Uses a max-shift so values far outside the double range still average
    /// correctly; `log_mean` stays finite even when `mean` would overflow.
    pub fn from_log_values(logs: &[f64]) -> Result<Self> {
        if logs.len() < 2 {
            return domain("an estimate needs at least two samples");
        }
        let n = logs.len() as f64;
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return Ok(Self { mean: 0.0, std_error: 0.0, n_samples: logs.len(), log_mean: m });
        }
        let scaled: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
        let mean_s = pairwise_sum(&scaled) / n;
        let dev: Vec<f64> = scaled.iter().map(|x| (x - mean_s) * (x - mean_s)).collect();
        let var_s = pairwise_sum(&dev) / (n - 1.0);
        let scale = m.exp();
        Ok(Self {
            mean: mean_s * scale,
            std_error: (var_s / n).sqrt() * scale,
            n_samples: logs.len(),
            log_mean: m + mean_s.ln(),
        })
    }

    /// Multiplies the estimate by `exp(log_factor)`.
    pub fn scaled_log(&self, log_factor: f64) -> Self {
        let f = log_factor.exp();
        Self {
            mean: self.mean * f,
            std_error: self.std_error * f,
            n_samples: self.n_samples,
            log_mean: self.log_mean + log_factor,
        }
    }

    pub fn relative_error(&self) -> f64 {
        self.std_error / self.mean.abs()
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log Φ(x)` for the standard normal CDF, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        let v = 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2);
        if x > 5.0 {
            return (-0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)).ln_1p();
        }
        return v.ln();
    }
    let z2 = 1.0 / (x * x);
    let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2 + 105.0 * z2.powi(4);
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// `log(Φ(b) - Φ(a))` for `a < b` (either end may be infinite).
pub fn log_norm_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if b <= 0.0 {
        let lb = log_norm_cdf(b);
        if lb == f64::NEG_INFINITY {
            return lb;
        }
        let la = log_norm_cdf(a);
        lb + (-(la - lb).exp()).ln_1p()
    } else if a >= 0.0 {
        log_norm_mass(-b, -a)
    } else {
        (1.0 - norm_cdf(a) - norm_cdf(-b)).ln()
    }
}

fn sample_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    // standard normal restricted to [a, b] with 0 <= a < b
    if (b - a) * (a + b) <= 2.0 {
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (0.5 * (a * a - x * x)).exp() {
                return x;
            }
        }
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - (1.0 - rng.random::<f64>()).ln() / alpha;
        if z > b {
            continue;
        }
        if rng.random::<f64>() <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
            return z;
        }
    }
}

/// Draws a standard normal variable conditioned on `[a, b]`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    debug_assert!(a < b);
    if b <= 0.0 {
        return -truncated_normal(rng, -b, -a);
    }
    if a >= 0.0 {
        return sample_tail(rng, a, b);
    }
    if b - a < 1.0 {
        loop {
            let x = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (-0.5 * x * x).exp() {
                return x;
            }
        }
    }
    loop {
        let x: f64 = rng.sample(StandardNormal);
        if x >= a && x <= b {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cdf_matches_direct_and_asymptotic() {
        for &x in &[-3.0, -10.0, -29.0] {
            let direct = norm_cdf(x).ln();
            assert!((log_norm_cdf(x) - direct).abs() < 1e-10 * direct.abs());
        }
        let a = log_norm_cdf(-29.999_999);
        let b = log_norm_cdf(-30.000_001);
        assert!((a - b).abs() < 1e-4);
        assert!(log_norm_cdf(8.0) < 0.0 && log_norm_cdf(8.0) > -1e-14);
    }

    #[test]
    fn truncated_samples_stay_in_range() {
        let mut rng = replica_rng(1, 0);
        for &(a, b) in &[(f64::NEG_INFINITY, -12.0), (-0.3, 0.2), (2.0, 2.01), (-1.0, f64::INFINITY), (1.0, 9.0)] {
            let mut acc = 0.0;
            for _ in 0..2000 {
                let x = truncated_normal(&mut rng, a, b);
                assert!(x >= a && x <= b);
                acc += x;
            }
            assert!(acc.is_finite());
        }
    }

    #[test]
    fn truncated_tail_mean() {
        // E[Z | Z < a] = -φ(a)/Φ(a)
        let a = -4.0;
        let mut rng = replica_rng(7, 3);
        let xs: Vec<f64> = (0..40_000).map(|_| truncated_normal(&mut rng, f64::NEG_INFINITY, a)).collect();
        let est = MomentEstimate::from_values(&xs).unwrap();
        let exact = -(-0.5 * a * a - LN_SQRT_2PI - log_norm_cdf(a)).exp();
        assert!((est.mean - exact).abs() < 4.0 * est.std_error);
    }

    #[test]
    fn log_values_agree_with_plain_values() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let logs: Vec<f64> = xs.iter().map(|x: &f64| x.ln()).collect();
        let a = MomentEstimate::from_values(&xs).unwrap();
        let b = MomentEstimate::from_log_values(&logs).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.std_error - b.std_error).abs() < 1e-12);
        assert!((b.log_mean - 3.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = replica_rng(5, 1).random();
        let b: u64 = replica_rng(5, 1).random();
        let c: u64 = replica_rng(5, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
