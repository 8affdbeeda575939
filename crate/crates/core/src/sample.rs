//! Samplers for the six simulation alternatives.
//!
//! Laplace uses scale `b = 1`; the Student-t alternative is a location-shifted
//! standard t without a separate scale.

use crate::error::{Result, SnsmError};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Skewness of the skew-normal and skew-t alternatives.
pub const CASE_SHAPE: f64 = 5.0;
/// Degrees of freedom of the t and skew-t alternatives.
pub const CASE_DOF: f64 = 10.0;

/// The alternative distributions `f1` of the simulation design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AltCase {
    /// `N(µ, 1)`
    I,
    /// `0.9 N(µ, 1) + 0.1 N(µ, 2²)`
    II,
    /// `Laplace(µ, 1)`
    III,
    /// `t₁₀` shifted by `µ`
    IV,
    /// `SN(µ, 1, λ = 5)`
    V,
    /// `Skew-t(µ, 1, λ = 5, ν = 10)`
    VI,
}

impl AltCase {
    pub const ALL: [AltCase; 6] = [AltCase::I, AltCase::II, AltCase::III, AltCase::IV, AltCase::V, AltCase::VI];

    pub fn index(self) -> u64 {
        match self {
            AltCase::I => 1,
            AltCase::II => 2,
            AltCase::III => 3,
            AltCase::IV => 4,
            AltCase::V => 5,
            AltCase::VI => 6,
        }
    }

    /// Draws one observation.
    pub fn draw<R: Rng + ?Sized>(self, mu: f64, rng: &mut R) -> f64 {
        match self {
            AltCase::I => mu + std_normal(rng),
            AltCase::II => {
                let scale = if rng.random::<f64>() < 0.9 { 1.0 } else { 2.0 };
                mu + scale * std_normal(rng)
            }
            AltCase::III => mu + std_laplace(rng),
            AltCase::IV => mu + std_normal(rng) / chi_scale(rng, CASE_DOF),
            AltCase::V => mu + std_skew_normal(rng, CASE_SHAPE),
            AltCase::VI => {
                let x = std_skew_normal(rng, CASE_SHAPE);
                mu + x / chi_scale(rng, CASE_DOF)
            }
        }
    }
}

impl fmt::Display for AltCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AltCase::I => "I",
            AltCase::II => "II",
            AltCase::III => "III",
            AltCase::IV => "IV",
            AltCase::V => "V",
            AltCase::VI => "VI",
        };
        f.write_str(s)
    }
}

impl FromStr for AltCase {
    type Err = SnsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(AltCase::I),
            "II" | "2" => Ok(AltCase::II),
            "III" | "3" => Ok(AltCase::III),
            "IV" | "4" => Ok(AltCase::IV),
            "V" | "5" => Ok(AltCase::V),
            "VI" | "6" => Ok(AltCase::VI),
            other => Err(SnsmError::InvalidInput(format!("unknown case tag {other:?}"))),
        }
    }
}

#[inline]
fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Inverse-CDF Laplace(0, 1).
fn std_laplace<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        if u > -0.5 {
            return -u.signum() * (-2.0 * u.abs()).ln_1p();
        }
    }
}

/// `sqrt(χ²_ν / ν)`.
fn chi_scale<R: Rng + ?Sized>(rng: &mut R, nu: f64) -> f64 {
    let chi = ChiSquared::new(nu).expect("positive degrees of freedom");
    (chi.sample(rng) / nu).sqrt()
}

/// Standard skew-normal via the conditioning representation: with
/// `u0, u1 ~ N(0,1)` and `δ = λ/√(1+λ²)`, `w = δu0 + √(1−δ²)u1` reflected
/// by the sign of `u0`.
fn std_skew_normal<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> f64 {
    let delta = lambda / (1.0 + lambda * lambda).sqrt();
    let u0 = std_normal(rng);
    let u1 = std_normal(rng);
    let w = delta * u0 + (1.0 - delta * delta).sqrt() * u1;
    if u0 >= 0.0 {
        w
    } else {
        -w
    }
}

/// `n` i.i.d. draws from the alternative `case` located at `mu`.
pub fn sample_alternative<R: Rng + ?Sized>(case: AltCase, mu: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SnsmError::InvalidInput("sample size must be at least 1".into()));
    }
    if !mu.is_finite() {
        return Err(SnsmError::InvalidInput(format!("non-finite location {mu}")));
    }
    Ok((0..n).map(|_| case.draw(mu, rng)).collect())
}
