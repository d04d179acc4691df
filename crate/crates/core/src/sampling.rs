//! Seeded random streams and the variate generators used by the simulations.
//!
//! Every consumer of randomness gets its own ChaCha8 stream, derived from the
//! master seed and a fixed stream id, so adding draws to one stream never
//! shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;

pub type Stream = ChaCha8Rng;

/// Independent stream `id` under `seed`.
pub fn stream(seed: u64, id: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Means below this use inversion; above, transformed rejection.
const INVERSION_LIMIT: f64 = 10.0;

/// Draws a Poisson(`mean`) variate.
///
/// Small means use sequential-search inversion of the CDF. Larger means use
/// Hörmann's transformed rejection with squeeze (PTRS), which consumes two
/// uniforms per trial.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < INVERSION_LIMIT {
        poisson_inversion(mean, rng)
    } else {
        poisson_ptrs(mean, rng)
    }
}

fn poisson_inversion<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        if p < f64::MIN_POSITIVE {
            break;
        }
    }
    k
}

fn poisson_ptrs<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let invalpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + invalpha.ln() - (a / (us * us) + b).ln();
        if lhs <= -mean + k * loglam - log_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// `ln Γ(x)` for `x >= 1` via the Stirling series, shifting small arguments up.
pub fn log_gamma(x: f64) -> f64 {
    const A: [f64; 10] = [
        8.333333333333333e-02,
        -2.777777777777778e-03,
        7.936507936507937e-04,
        -5.952380952380952e-04,
        8.417508417508418e-04,
        -1.917526917526918e-03,
        6.41025641025641e-03,
        -2.955065359477124e-02,
        1.796443723688307e-01,
        -1.39243221690590e+00,
    ];
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    let shift = if x < 7.0 { (7.0 - x.floor()) as u32 } else { 0 };
    let mut x0 = x + shift as f64;
    let x2 = 1.0 / (x0 * x0);
    let mut series = A[9];
    for &c in A[..9].iter().rev() {
        series = series * x2 + c;
    }
    let mut gl = series / x0 + 0.5 * std::f64::consts::TAU.ln() + (x0 - 0.5) * x0.ln() - x0;
    for _ in 0..shift {
        x0 -= 1.0;
        gl -= x0.ln();
    }
    gl
}

/// Normal(`mean`, `std`) conditioned on being nonnegative.
///
/// `mean` and `std` are the parameters of the underlying normal, not the
/// moments after truncation. An infinite mean yields an infinite value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormalSpec {
    pub mean: f64,
    pub std: f64,
}

impl TruncatedNormalSpec {
    pub fn new(mean: f64, std: f64) -> Result<Self, ParamError> {
        let spec = TruncatedNormalSpec { mean, std };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.mean.is_nan() {
            return Err(ParamError::NotFinite {
                field: "mean",
                value: self.mean,
            });
        }
        if self.mean < 0.0 {
            return Err(ParamError::Negative {
                field: "mean",
                value: self.mean,
            });
        }
        if self.std.is_nan() || self.std <= 0.0 || self.std.is_infinite() {
            return Err(ParamError::NotPositive {
                field: "std",
                value: self.std,
            });
        }
        Ok(())
    }

    /// Rejection sampling: redraw until the normal variate is nonnegative.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mean.is_infinite() {
            return self.mean;
        }
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = self.mean + self.std * z;
            if x >= 0.0 {
                return x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(draws: &[f64]) -> (f64, f64) {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn poisson_zero_mean_is_zero() {
        let mut rng = stream(1, 0);
        assert!((0..100).all(|_| poisson(0.0, &mut rng) == 0));
    }

    #[test]
    fn poisson_moments_match_for_both_regimes() {
        for &mean in &[0.7, 4.0, 9.9, 10.0, 30.0, 90.0, 1000.0] {
            let mut rng = stream(7, 3);
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| poisson(mean, &mut rng) as f64).collect();
            let (m, v) = moments(&draws);
            let se = (mean / n as f64).sqrt();
            assert!((m - mean).abs() < 4.0 * se, "mean {mean}: sample mean {m}");
            assert!((v / mean - 1.0).abs() < 0.03, "mean {mean}: sample var {v}");
        }
    }

    #[test]
    fn poisson_pmf_matches_at_mean_thirty() {
        // Frequencies of each count against the exact pmf.
        let mean = 30.0;
        let n = 200_000;
        let mut rng = stream(11, 0);
        let mut counts = vec![0u32; 80];
        for _ in 0..n {
            let k = poisson(mean, &mut rng) as usize;
            if k < counts.len() {
                counts[k] += 1;
            }
        }
        for (k, &count) in counts.iter().enumerate().take(40).skip(20) {
            let pmf = (-mean + k as f64 * f64::ln(mean) - log_gamma(k as f64 + 1.0)).exp();
            let freq = count as f64 / n as f64;
            let se = (pmf * (1.0 - pmf) / n as f64).sqrt();
            assert!((freq - pmf).abs() < 5.0 * se, "k={k}: {freq} vs {pmf}");
        }
    }

    #[test]
    fn log_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..30u32 {
            fact *= n as f64;
            let expected = fact.ln();
            assert!((log_gamma(n as f64 + 1.0) - expected).abs() < 1e-10 * expected.max(1.0));
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..5).map(|_| stream(42, 1).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let mut s1 = stream(42, 1);
        let mut s2 = stream(42, 2);
        assert_ne!(s1.random::<u64>(), s2.random::<u64>());
    }

    #[test]
    fn truncated_normal_is_nonnegative_and_near_target() {
        let spec = TruncatedNormalSpec::new(7.0, 2.0).unwrap();
        let mut rng = stream(3, 0);
        let draws: Vec<f64> = (0..50_000).map(|_| spec.sample(&mut rng)).collect();
        assert!(draws.iter().all(|&x| x >= 0.0));
        let (m, _) = moments(&draws);
        assert!((m - 7.0).abs() < 0.05);
        assert!(TruncatedNormalSpec::new(1.0, 0.0).is_err());
        assert_eq!(
            TruncatedNormalSpec::new(f64::INFINITY, 1.0)
                .unwrap()
                .sample(&mut rng),
            f64::INFINITY
        );
    }
}
