//! EM for `π φ(z) + (1 − π) φ(z; µ₁, σ₁²)` with the null fixed at N(0, 1).

use crate::ecm::{
    cm_step_pi, e_step, observed_loglik, upper_tail_summary, FitFlag, FitTrace, IterationRecord, StepTimings,
    TwoComponent, ASCENT_SLACK, PI_CLIP, START_MU_SCALE,
};
use crate::error::{Result, SnsmError};
use crate::special::ln_normal_pdf;
use serde::{Deserialize, Serialize};

/// Smallest admissible alternative standard deviation.
pub const SIGMA1_FLOOR: f64 = 1e-4;
/// Floor applied when projecting `µ₁` onto the positive half-line.
pub const MU1_FLOOR: f64 = 1e-6;
pub const GMM_MIN_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub pi: f64,
    pub mu1: f64,
    pub sigma1: f64,
}

impl GmmParams {
    pub fn new(pi: f64, mu1: f64, sigma1: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(SnsmError::InvalidParams(format!("pi must lie in (0, 1), got {pi}")));
        }
        if !(mu1 > 0.0 && mu1.is_finite()) {
            return Err(SnsmError::InvalidParams(format!("mu1 must be positive, got {mu1}")));
        }
        if !(sigma1 > 0.0 && sigma1.is_finite()) {
            return Err(SnsmError::InvalidParams(format!("sigma1 must be positive, got {sigma1}")));
        }
        Ok(Self { pi, mu1, sigma1 })
    }
}

impl TwoComponent for GmmParams {
    fn ln_components(&self, z: f64) -> (f64, f64) {
        let u = (z - self.mu1) / self.sigma1;
        (
            self.pi.ln() + ln_normal_pdf(z),
            (-self.pi).ln_1p() + ln_normal_pdf(u) - self.sigma1.ln(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Number of EM starts; the highest final log-likelihood wins.
    pub starts: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 500,
            starts: 2,
        }
    }
}

/// Closed-form M-step for `(µ₁, σ₁)` given posterior null probabilities.
/// `µ₁` is projected to be positive.
pub fn m_step(z: &[f64], gamma: &[f64]) -> Result<(f64, f64)> {
    let w: Vec<f64> = gamma.iter().map(|g| 1.0 - g).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(SnsmError::Degenerate("alternative component has no weight".into()));
    }
    let mu = z.iter().zip(&w).map(|(x, wi)| wi * x).sum::<f64>() / total;
    let mu = mu.max(MU1_FLOOR);
    let var = z.iter().zip(&w).map(|(x, wi)| wi * (x - mu).powi(2)).sum::<f64>() / total;
    let sigma = var.sqrt();
    if !(sigma >= SIGMA1_FLOOR) {
        return Err(SnsmError::Degenerate(format!("alternative scale collapsed to {sigma:e}")));
    }
    Ok((mu, sigma))
}

fn record(it: usize, loglik: f64, p: &GmmParams) -> IterationRecord {
    IterationRecord {
        iteration: it,
        loglik,
        pi: p.pi,
        mu: p.mu1,
        lambda: None,
        support: None,
        weights: None,
        sigma1: Some(p.sigma1),
        max_dd: None,
        alt_mass: None,
        npmle_converged: None,
        timings: StepTimings::default(),
    }
}

impl GmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.max_iter == 0 || self.starts == 0 {
            return Err(SnsmError::InvalidParams("invalid EM settings".into()));
        }
        Ok(())
    }
}

/// Start `k`: the upper-tail start shared with the semiparametric fit, then
/// a start from the pooled sample moments with a small null weight, then
/// upper-tail starts with a rescaled mean.
fn start_params(z: &[f64], k: usize) -> Result<GmmParams> {
    let (m, sd) = upper_tail_summary(z);
    if k == 1 {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        return GmmParams::new(0.1, mean.max(0.1), var.sqrt().max(0.05));
    }
    let scale = if k == 0 { 1.0 } else { START_MU_SCALE[(k - 1) % START_MU_SCALE.len()] };
    GmmParams::new(0.5, (m * scale).max(0.1), sd.max(0.05))
}

fn fit_from(z: &[f64], cfg: &GmmConfig, mut p: GmmParams) -> Result<(GmmParams, FitTrace)> {
    let mut ll = observed_loglik(z, &p)?;
    let mut trace = FitTrace::default();
    trace.iterations.push(record(0, ll, &p));
    for it in 1..=cfg.max_iter {
        let gamma = e_step(z, &p);
        let pi = cm_step_pi(&gamma)?;
        let (mu1, sigma1) = m_step(z, &gamma)?;
        p = GmmParams::new(pi, mu1, sigma1)?;
        let ll_new = observed_loglik(z, &p)?;
        if ll_new < ll - ASCENT_SLACK {
            trace.flag(FitFlag::AscentViolation);
        }
        trace.iterations.push(record(it, ll_new, &p));
        let change = (ll_new - ll).abs() / (ll.abs() + 1.0);
        ll = ll_new;
        if change < cfg.rel_tol {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        trace.flag(FitFlag::NotConverged);
    }
    if p.pi <= PI_CLIP.0 || p.pi >= PI_CLIP.1 {
        trace.flag(FitFlag::PiAtBoundary);
    }
    Ok((p, trace))
}

/// EM fit of the Gaussian two-component mixture. Starts that fail (a
/// collapsed component) are skipped unless every start fails.
pub fn fit_gmm(z: &[f64], cfg: &GmmConfig) -> Result<(GmmParams, FitTrace)> {
    if z.len() < GMM_MIN_N {
        return Err(SnsmError::InvalidInput(format!(
            "need at least {GMM_MIN_N} observations, got {}",
            z.len()
        )));
    }
    cfg.validate()?;
    let mut best: Option<(GmmParams, FitTrace)> = None;
    let mut first_err = None;
    for k in 0..cfg.starts {
        match start_params(z, k).and_then(|p| fit_from(z, cfg, p)) {
            Ok((p, mut trace)) => {
                trace.start = k;
                if best.as_ref().is_none_or(|(_, t)| trace.final_loglik() > t.final_loglik()) {
                    best = Some((p, trace));
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => unreachable!("at least one start"),
    }
}
