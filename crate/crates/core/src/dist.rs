//! Densities of the model families: skew-normal and the skew-normal scale
//! mixture (SNSM) under a finitely supported mixing distribution.

use crate::error::{Result, SnsmError};
use crate::special::{log_normal_cdf, normal_cdf, phi, LN_SQRT_2PI};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// Tolerance on the total mass of a mixing distribution.
pub const MASS_TOL: f64 = 1e-12;

/// Location, scale and shape of a skew-normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewNormalParams {
    pub mu: f64,
    pub sigma: f64,
    pub lambda: f64,
}

impl SkewNormalParams {
    pub fn new(mu: f64, sigma: f64, lambda: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() || !lambda.is_finite() {
            return Err(SnsmError::InvalidParams(format!(
                "skew-normal needs finite mu, lambda and sigma > 0 (got mu={mu}, sigma={sigma}, lambda={lambda})"
            )));
        }
        Ok(Self { mu, sigma, lambda })
    }
}

/// A finitely supported probability measure on scales `σ ≥ ell`.
///
/// Support points are kept strictly increasing and weights strictly
/// positive with unit total mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMixingDistribution {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMixingDistribution {
    /// Builds a mixing distribution, enforcing every invariant against the
    /// lower scale bound `ell`.
    pub fn new(support: Vec<f64>, weights: Vec<f64>, ell: f64) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(SnsmError::LengthMismatch {
                left: support.len(),
                right: weights.len(),
            });
        }
        if support.is_empty() {
            return Err(SnsmError::InvalidParams("empty support".into()));
        }
        if !(ell > 0.0) {
            return Err(SnsmError::InvalidParams(format!("lower scale bound {ell} must be positive")));
        }
        for w in support.windows(2) {
            if !(w[1] > w[0]) {
                return Err(SnsmError::InvalidParams(
                    "support must be strictly increasing".into(),
                ));
            }
        }
        if let Some(&s) = support.iter().find(|&&s| !(s >= ell) || !s.is_finite()) {
            return Err(SnsmError::InvalidParams(format!(
                "support point {s} below lower bound {ell}"
            )));
        }
        if let Some(&w) = weights.iter().find(|&&w| !(w > 0.0) || !w.is_finite()) {
            return Err(SnsmError::InvalidParams(format!("non-positive weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(SnsmError::InvalidParams(format!("weights sum to {total}")));
        }
        Ok(Self { support, weights })
    }

    /// Builds from arbitrary (unsorted, possibly repeated, unnormalised)
    /// atoms: merges duplicates, drops non-positive weights and renormalises.
    pub fn from_atoms(atoms: &[(f64, f64)], ell: f64) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.iter().copied().filter(|a| a.1 > 0.0).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (s, w) in atoms {
            if support.last() == Some(&s) {
                *weights.last_mut().unwrap() += w;
            } else {
                support.push(s);
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(SnsmError::InvalidParams("no positive weight".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(support, weights, ell)
    }

    /// Point mass at `sigma`.
    pub fn degenerate(sigma: f64, ell: f64) -> Result<Self> {
        Self::new(vec![sigma], vec![1.0], ell)
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    /// Mean of the scale distribution, `Σ wⱼ σⱼ`.
    pub fn mean_scale(&self) -> f64 {
        self.atoms().map(|(s, w)| s * w).sum()
    }
}

/// Log skew-normal density, `ln{(2/σ) φ(u) Φ(λu)}` with `u = (z − µ)/σ`.
#[inline]
pub fn ln_skew_normal_pdf(z: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    let u = (z - mu) / sigma;
    LN_2 - sigma.ln() - 0.5 * u * u - LN_SQRT_2PI + log_normal_cdf(lambda * u)
}

/// Skew-normal density `(2/σ) φ(u) Φ(λu)`.
pub fn skew_normal_pdf(z: f64, p: &SkewNormalParams) -> f64 {
    let u = (z - p.mu) / p.sigma;
    2.0 / p.sigma * phi(u) * normal_cdf(p.lambda * u)
}

/// Log SNSM density by log-sum-exp over the atoms of `g`.
pub fn ln_snsm_pdf(z: f64, mu: f64, lambda: f64, g: &DiscreteMixingDistribution) -> f64 {
    let mut acc = LogSumExp::default();
    for (s, w) in g.atoms() {
        acc.push(w.ln() + ln_skew_normal_pdf(z, mu, s, lambda));
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, t: f64) {
        if t == f64::NEG_INFINITY {
            return;
        }
        if t > self.max {
            self.scaled = self.scaled * (self.max - t).exp() + 1.0;
            self.max = t;
        } else {
            self.scaled += (t - self.max).exp();
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// SNSM density `Σⱼ wⱼ · SN(z; µ, σⱼ, λ)`.
pub fn snsm_pdf(z: f64, mu: f64, lambda: f64, g: &DiscreteMixingDistribution) -> Result<f64> {
    if g.is_empty() {
        return Err(SnsmError::domain("snsm_pdf", "empty support"));
    }
    Ok(g
        .atoms()
        .map(|(s, w)| {
            w * skew_normal_pdf(
                z,
                &SkewNormalParams {
                    mu,
                    sigma: s,
                    lambda,
                },
            )
        })
        .sum())
}

/// Stable `ln(eᵃ + eᵇ)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
