//! Local FDR, MAP classification and the empirical-Bayes FDR/FNR curves.

use crate::ecm::TwoComponent;
use crate::error::{Result, SnsmError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Semiparametric,
    Parametric,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Semiparametric => "semiparametric",
            ModelKind::Parametric => "parametric",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = SnsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semiparametric" | "snsm" => Ok(ModelKind::Semiparametric),
            "parametric" | "gmm" => Ok(ModelKind::Parametric),
            other => Err(SnsmError::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Null,
    NonNull,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub gene_ids: Vec<String>,
    pub z: Vec<f64>,
    pub gamma_hat: Vec<f64>,
    pub model: ModelKind,
}

impl PosteriorTable {
    pub fn new(gene_ids: Vec<String>, z: Vec<f64>, gamma_hat: Vec<f64>, model: ModelKind) -> Result<Self> {
        if gene_ids.len() != z.len() || z.len() != gamma_hat.len() {
            return Err(SnsmError::LengthMismatch {
                left: gene_ids.len(),
                right: gamma_hat.len().min(z.len()),
            });
        }
        check_posteriors(&gamma_hat)?;
        Ok(Self {
            gene_ids,
            z,
            gamma_hat,
            model,
        })
    }

    /// Posteriors from a fitted model.
    pub fn from_model<M: TwoComponent>(gene_ids: Vec<String>, z: Vec<f64>, model: &M, kind: ModelKind) -> Result<Self> {
        let gamma_hat = z.iter().map(|&x| local_fdr(x, model)).collect();
        Self::new(gene_ids, z, gamma_hat, kind)
    }
}

fn check_posteriors(gamma: &[f64]) -> Result<()> {
    match gamma.iter().position(|g| !(0.0..=1.0).contains(g)) {
        Some(i) => Err(SnsmError::InvalidInput(format!(
            "posterior {} at position {i} is outside [0, 1]",
            gamma[i]
        ))),
        None => Ok(()),
    }
}

/// `γ(z) = π φ(z) / g(z)`; the same computation as the E-step.
pub fn local_fdr<M: TwoComponent>(z: f64, model: &M) -> f64 {
    model.local_fdr(z)
}

/// Non-null iff `γ̂ ≤ threshold`.
pub fn classify_map(gamma_hat: &[f64], threshold: f64) -> Result<Vec<Label>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(SnsmError::InvalidParams(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(gamma_hat
        .iter()
        .map(|&g| if g <= threshold { Label::NonNull } else { Label::Null })
        .collect())
}

/// Evenly spaced thresholds `0.01, 0.02, …, 0.99`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

/// FDR/FNR estimates per threshold; `None` where the denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub thresholds: Vec<f64>,
    pub fdr_hat: Vec<Option<f64>>,
    pub fnr_hat: Vec<Option<f64>>,
    pub n_selected: Vec<usize>,
}

pub fn fdr_curve(gamma_hat: &[f64], thresholds: &[f64]) -> Result<ErrorCurve> {
    if gamma_hat.is_empty() {
        return Err(SnsmError::InvalidInput("no posteriors".into()));
    }
    check_posteriors(gamma_hat)?;
    let alt_total: f64 = gamma_hat.iter().map(|g| 1.0 - g).sum();
    let mut curve = ErrorCurve {
        thresholds: thresholds.to_vec(),
        fdr_hat: Vec::with_capacity(thresholds.len()),
        fnr_hat: Vec::with_capacity(thresholds.len()),
        n_selected: Vec::with_capacity(thresholds.len()),
    };
    for &c in thresholds {
        let mut selected = 0usize;
        let mut null_mass = 0.0;
        let mut missed = 0.0;
        for &g in gamma_hat {
            if g <= c {
                selected += 1;
                null_mass += g;
            } else {
                missed += 1.0 - g;
            }
        }
        curve.n_selected.push(selected);
        curve
            .fdr_hat
            .push((selected > 0).then(|| null_mass / selected as f64));
        curve.fnr_hat.push((alt_total > 0.0).then(|| missed / alt_total));
    }
    Ok(curve)
}
