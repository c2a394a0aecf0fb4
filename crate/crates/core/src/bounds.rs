//! Quantiles and the closed-form radii of the CSI uncertainty regions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_lr;

use crate::error::{CoordError, Result};
use crate::scenario::{sample_errors, ErrorSharing};

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Bisection on a monotone cdf over `[lo, hi]`.
fn invert(cdf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(CoordError::config("probability", format!("{p} not in (0, 1)")))
    }
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    check_prob(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // antisymmetric evaluation keeps upper-tail accuracy
    if p > 0.5 {
        Ok(-invert(normal_cdf, 1.0 - p, -40.0, 0.0))
    } else {
        Ok(invert(normal_cdf, p, -40.0, 0.0))
    }
}

pub fn chi_square_cdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(dof as f64 / 2.0, x / 2.0)
    }
}

fn upper_bracket(cdf: &impl Fn(f64) -> f64, p: f64, start: f64) -> f64 {
    let mut hi = start.max(1.0);
    while cdf(hi) < p {
        hi *= 2.0;
    }
    hi
}

pub fn chi_square_quantile(p: f64, dof: u32) -> Result<f64> {
    check_prob(p)?;
    if dof == 0 {
        return Err(CoordError::config("dof", "must be at least 1"));
    }
    let cdf = |x: f64| chi_square_cdf(x, dof);
    let hi = upper_bracket(&cdf, p, dof as f64);
    Ok(invert(cdf, p, 0.0, hi))
}

/// Quantile of `Gamma(shape, 1)`.
pub fn gamma_quantile(p: f64, shape: f64) -> Result<f64> {
    check_prob(p)?;
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { gamma_lr(shape, x) };
    let hi = upper_bracket(&cdf, p, shape);
    Ok(invert(cdf, p, 0.0, hi))
}

/// Distribution assumed for `||e||²/σ²` when sizing the error ball.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallLaw {
    /// Chi-square with `M` degrees of freedom.
    #[default]
    ChiSquareM,
    /// `Gamma(M, 1)`, the exact law for circular complex Gaussian entries.
    ExactGamma,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    pub delta: f64,
    pub m_antennas: usize,
    pub n_bs: usize,
    pub theta: f64,
    pub sigma: f64,
}

/// `ξ² = Φ⁻¹(δ)·√(M·N(1 + tan²θ))·σ`.
pub fn xi_squared(b: &BoundParams) -> Result<f64> {
    let t = b.theta.tan();
    Ok(normal_quantile(b.delta)?
        * ((b.m_antennas * b.n_bs) as f64 * (1.0 + t * t)).sqrt()
        * b.sigma)
}

/// `ρ² = Φ⁻¹(δ)·√(M(1 + tan²θ))·σ`.
pub fn rho_squared(b: &BoundParams) -> Result<f64> {
    xi_squared(&BoundParams { n_bs: 1, ..*b })
}

/// `ν² = Υ⁻¹(δ)·σ²` for a ball over `dof` complex entries.
pub fn ball_radius_squared(delta: f64, dof: usize, sigma: f64, law: BallLaw) -> Result<f64> {
    let q = match law {
        BallLaw::ChiSquareM => chi_square_quantile(delta, dof as u32)?,
        BallLaw::ExactGamma => gamma_quantile(delta, dof as f64)?,
    };
    Ok(q * sigma * sigma)
}

pub fn nu_squared(b: &BoundParams, law: BallLaw) -> Result<f64> {
    ball_radius_squared(b.delta, b.m_antennas, b.sigma, law)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundKind {
    /// Linear combination bounded by `ξ²`.
    Linear,
    /// Error energy bounded by `ν²`.
    Ball(BallLaw),
}

/// Fraction of `n_trials` error draws inside the bound. Linear-bound draws use an
/// independent error vector per BS term.
pub fn empirical_coverage(kind: BoundKind, b: &BoundParams, n_trials: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = b.theta.tan();
    let (bound, n_links) = match kind {
        BoundKind::Linear => (xi_squared(b)?, b.n_bs),
        BoundKind::Ball(law) => (nu_squared(b, law)?, 1),
    };
    let mut inside = 0usize;
    for _ in 0..n_trials {
        let e = sample_errors(&mut rng, &[b.sigma], None, n_links, b.m_antennas, ErrorSharing::PerLink);
        let value: f64 = match kind {
            BoundKind::Linear => e
                .h
                .iter()
                .flat_map(|l| l[0].iter())
                .map(|x| (1.0 + t) * x.im + (1.0 - t) * x.re)
                .sum(),
            BoundKind::Ball(_) => e.h[0][0].iter().map(|x| x.norm_sqr()).sum(),
        };
        if value <= bound {
            inside += 1;
        }
    }
    Ok(inside as f64 / n_trials as f64)
}

/// Two-sided Clopper–Pearson interval for `k` successes in `n` trials.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let a = (1.0 - confidence) / 2.0;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).map_or(0.0, |d| d.inverse_cdf(a))
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).map_or(1.0, |d| d.inverse_cdf(1.0 - a))
    };
    (lo, hi)
}

/// Standard error of a proportion `p` estimated from `n` trials.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_rejects_boundaries() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(chi_square_quantile(0.5, 0).is_err());
    }

    #[test]
    fn gamma_is_half_chi_square_with_double_dof() {
        let g = gamma_quantile(0.9, 4.0).unwrap();
        let c = chi_square_quantile(0.9, 8).unwrap();
        assert!((2.0 * g - c).abs() < 1e-9 * c);
    }

    #[test]
    fn clopper_pearson_brackets_the_estimate() {
        let (lo, hi) = clopper_pearson(80, 100, 0.95);
        assert!(lo < 0.8 && hi > 0.8);
        assert!((lo - 0.7082).abs() < 1e-3, "{lo}");
        assert_eq!(clopper_pearson(0, 10, 0.95).0, 0.0);
        assert_eq!(clopper_pearson(10, 10, 0.95).1, 1.0);
    }
}
