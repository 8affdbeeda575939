//! ECM fit of `π φ(z) + (1 − π) f_SNSM(z; µ, λ, G)`.
//!
//! One cycle is: posterior null probabilities (E-step), the weighted NPMLE
//! of `G` with weights `1 − γᵢ` (CM-1), then `π` as the mean posterior and
//! `(µ, λ)` by BFGS on `(ln µ, √λ)` with `G` held at its new value (CM-2).

use crate::dist::{ln_skew_normal_pdf, ln_snsm_pdf, DiscreteMixingDistribution, LogSumExp};
use crate::error::{Result, SnsmError};
use crate::npmle::{fit_npmle, NpmleConfig, WeightedSample};
use crate::optim::{minimize, BfgsConfig};
use crate::special::{inverse_mills, ln_normal_pdf};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Clip range for the null proportion.
pub const PI_CLIP: (f64, f64) = (1e-6, 1.0 - 1e-6);

/// Shape values below this get a second CM-2 start at `λ = 1`.
pub const LAMBDA_RESTART: f64 = 0.5;

/// Below this many observations a fit still runs but is flagged.
pub const MIN_RECOMMENDED_N: usize = 50;

/// Allowed log-likelihood decrease between cycles before a step is
/// recorded as an ascent violation.
pub const ASCENT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub pi: f64,
    pub mu: f64,
    pub lambda: f64,
    pub g: DiscreteMixingDistribution,
}

impl MixtureParams {
    pub fn new(pi: f64, mu: f64, lambda: f64, g: DiscreteMixingDistribution) -> Result<Self> {
        let p = Self { pi, mu, lambda, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pi > 0.0 && self.pi < 1.0) {
            return Err(SnsmError::InvalidParams(format!("pi must lie in (0, 1), got {}", self.pi)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(SnsmError::InvalidParams(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SnsmError::InvalidParams(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Density of the alternative component on the log scale.
    pub fn ln_alt_pdf(&self, z: f64) -> f64 {
        ln_snsm_pdf(z, self.mu, self.lambda, &self.g)
    }
}

/// Models with a fixed `N(0, 1)` null component.
pub trait TwoComponent {
    /// `(ln π φ(z), ln (1 − π) f₁(z))`.
    fn ln_components(&self, z: f64) -> (f64, f64);

    /// Posterior null probability of a single observation.
    fn local_fdr(&self, z: f64) -> f64 {
        let (a, b) = self.ln_components(z);
        posterior_null(a, b)
    }

    fn ln_density(&self, z: f64) -> f64 {
        let (a, b) = self.ln_components(z);
        crate::dist::log_add_exp(a, b)
    }
}

impl TwoComponent for MixtureParams {
    fn ln_components(&self, z: f64) -> (f64, f64) {
        (
            self.pi.ln() + ln_normal_pdf(z),
            (-self.pi).ln_1p() + self.ln_alt_pdf(z),
        )
    }
}

/// `a/(a + b)` from logs.
pub(crate) fn posterior_null(ln_a: f64, ln_b: f64) -> f64 {
    let d = ln_a - ln_b;
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

fn check_data(z: &[f64]) -> Result<()> {
    if z.is_empty() {
        return Err(SnsmError::InvalidInput("no observations".into()));
    }
    if let Some((i, v)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(SnsmError::Numeric {
            index: i,
            detail: format!("non-finite observation {v}"),
        });
    }
    Ok(())
}

/// Observed log-likelihood `Σᵢ ln{π φ(zᵢ) + (1 − π) f_SNSM(zᵢ)}`.
pub fn observed_loglik<M: TwoComponent>(z: &[f64], p: &M) -> Result<f64> {
    check_data(z)?;
    Ok(z.iter().map(|&x| p.ln_density(x)).sum())
}

/// Posterior null probabilities.
pub fn e_step<M: TwoComponent>(z: &[f64], p: &M) -> Vec<f64> {
    z.iter().map(|&x| p.local_fdr(x)).collect()
}

/// Posterior alternative probabilities `1 − γᵢ`, evaluated directly so
/// they keep relative precision when `γᵢ` is close to one.
pub fn alt_weights<M: TwoComponent>(z: &[f64], p: &M) -> Vec<f64> {
    z.iter()
        .map(|&x| {
            let (a, b) = p.ln_components(x);
            posterior_null(b, a)
        })
        .collect()
}

/// Mean posterior null probability, clipped to [`PI_CLIP`].
pub fn cm_step_pi(gamma: &[f64]) -> Result<f64> {
    if gamma.is_empty() {
        return Err(SnsmError::InvalidInput("no posteriors".into()));
    }
    let m = gamma.iter().sum::<f64>() / gamma.len() as f64;
    Ok(m.clamp(PI_CLIP.0, PI_CLIP.1))
}

/// `Σᵢ wᵢ ln f_SNSM(zᵢ; µ, λ, G)` and its gradient in `(µ, λ)`.
pub fn shape_loglik_grad(
    z: &[f64],
    w: &[f64],
    g: &DiscreteMixingDistribution,
    mu: f64,
    lambda: f64,
) -> (f64, [f64; 2]) {
    let atoms: Vec<(f64, f64)> = g.atoms().map(|(s, p)| (s, p.ln())).collect();
    let mut terms = vec![0.0; atoms.len()];
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for (&x, &wi) in z.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        let mut acc = LogSumExp::default();
        for (t, &(s, lp)) in terms.iter_mut().zip(&atoms) {
            *t = lp + ln_skew_normal_pdf(x, mu, s, lambda);
            acc.push(*t);
        }
        let lf = acc.value();
        value += wi * lf;
        let (mut dmu, mut dlam) = (0.0, 0.0);
        for (t, &(s, _)) in terms.iter().zip(&atoms) {
            let rho = (t - lf).exp();
            let u = (x - mu) / s;
            let r = inverse_mills(lambda * u);
            dmu += rho * (u - lambda * r) / s;
            dlam += rho * u * r;
        }
        grad[0] += wi * dmu;
        grad[1] += wi * dlam;
    }
    (value, grad)
}

/// Outcome of the `(µ, λ)` update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeStep {
    pub mu: f64,
    pub lambda: f64,
    /// Weighted log-likelihood at the returned point.
    pub value: f64,
    pub converged: bool,
}

/// CM-2 shape update: maximises the weighted SNSM log-likelihood over
/// `µ > 0`, `λ ≥ 0` by BFGS on `a = ln µ`, `b = √λ`. With `fix_lambda`
/// only `µ` moves. Never returns a point worse than `start`.
pub fn cm_step_shape(
    z: &[f64],
    gamma: &[f64],
    g: &DiscreteMixingDistribution,
    start: (f64, f64),
    cfg: &BfgsConfig,
    fix_lambda: bool,
) -> Result<ShapeStep> {
    if z.len() != gamma.len() {
        return Err(SnsmError::LengthMismatch {
            left: z.len(),
            right: gamma.len(),
        });
    }
    let w: Vec<f64> = gamma.iter().map(|g| 1.0 - g).collect();
    cm_step_shape_weighted(z, &w, g, start, cfg, fix_lambda)
}

/// [`cm_step_shape`] with the alternative weights `1 − γᵢ` given directly.
pub fn cm_step_shape_weighted(
    z: &[f64],
    w: &[f64],
    g: &DiscreteMixingDistribution,
    start: (f64, f64),
    cfg: &BfgsConfig,
    fix_lambda: bool,
) -> Result<ShapeStep> {
    if z.len() != w.len() {
        return Err(SnsmError::LengthMismatch {
            left: z.len(),
            right: w.len(),
        });
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(SnsmError::InvalidInput("alternative weights sum to zero".into()));
    }
    let (mu0, lambda0) = start;
    if !(mu0 > 0.0) || !(lambda0 >= 0.0) {
        return Err(SnsmError::InvalidParams(format!("bad shape start ({mu0}, {lambda0})")));
    }
    let (start_value, _) = shape_loglik_grad(z, w, g, mu0, lambda0);
    let run = |b0: f64| {
        let eval = |x: &[f64], grad: &mut [f64]| -> f64 {
            let mu = x[0].exp();
            let b = if fix_lambda { b0 } else { x[1] };
            let lambda = b * b;
            if !mu.is_finite() || !lambda.is_finite() {
                return f64::NAN;
            }
            let (v, gr) = shape_loglik_grad(z, w, g, mu, lambda);
            grad[0] = -mu * gr[0] / total;
            if !fix_lambda {
                grad[1] = -2.0 * b * gr[1] / total;
            }
            -v / total
        };
        let x0 = if fix_lambda { vec![mu0.ln()] } else { vec![mu0.ln(), b0] };
        let res = minimize(eval, &x0, cfg);
        let lambda = if fix_lambda { lambda0 } else { res.x[1] * res.x[1] };
        ShapeStep {
            mu: res.x[0].exp(),
            lambda,
            value: -res.value * total,
            converged: res.converged,
        }
    };
    let mut best = run(lambda0.sqrt());
    // λ = 0 is stationary in b = √λ, so a small λ gets a second start at 1
    if !fix_lambda && lambda0 < LAMBDA_RESTART {
        let other = run(1.0);
        if other.value > best.value {
            best = other;
        }
    }
    if !(best.value >= start_value) || !(best.mu > 0.0) {
        return Ok(ShapeStep {
            mu: mu0,
            lambda: lambda0,
            value: start_value,
            converged: best.converged,
        });
    }
    Ok(best)
}

/// Starting values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitPolicy {
    /// `π = 0.5`, `µ` the mean above the 60th percentile, `λ = 1`, `G` a
    /// point mass at the standard deviation of that upper tail.
    #[default]
    UpperTail,
    /// Caller-supplied start with a degenerate `G`.
    Fixed { pi: f64, mu: f64, lambda: f64, sigma: f64 },
}

/// Restrictions used to reproduce the Gaussian two-component model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Restriction {
    /// Hold `λ` at its starting value (zero gives a normal kernel).
    pub fix_lambda_zero: bool,
    /// Restrict `G` to a single atom.
    pub degenerate_g: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcmConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub init: InitPolicy,
    /// Number of starts; extra starts scale the initial `µ`.
    pub starts: usize,
    /// Also fit with `λ` held at zero, then free `λ` from that optimum.
    pub boundary_start: bool,
    pub shape: BfgsConfig,
    pub npmle: NpmleConfig,
    pub restrict: Restriction,
}

impl Default for EcmConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iter: 500,
            init: InitPolicy::UpperTail,
            starts: 1,
            boundary_start: true,
            shape: BfgsConfig::default(),
            npmle: NpmleConfig::default(),
            restrict: Restriction::default(),
        }
    }
}

impl EcmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(SnsmError::InvalidParams("rel_tol must be positive".into()));
        }
        if self.max_iter == 0 || self.starts == 0 {
            return Err(SnsmError::InvalidParams("max_iter and starts must be positive".into()));
        }
        if !(self.shape.grad_tol > 0.0) || self.shape.max_line_search == 0 {
            return Err(SnsmError::InvalidParams("invalid shape optimiser settings".into()));
        }
        self.npmle.validate()
    }
}

/// Multipliers applied to the initial `µ` for successive starts.
pub const START_MU_SCALE: [f64; 5] = [1.0, 0.7, 1.4, 0.5, 2.0];

/// Diagnostics attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    SmallSample,
    NotConverged,
    PiAtBoundary,
    NpmleNotConverged,
    ShapeNotConverged,
    AscentViolation,
}

/// Wall-clock time per step; left out of serialised traces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTimings {
    pub e_step: Duration,
    pub cm1: Duration,
    pub cm2: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loglik: f64,
    pub pi: f64,
    pub mu: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub support: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma1: Option<f64>,
    /// Largest directional derivative after the `G` update.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_dd: Option<f64>,
    /// `Σ(1 − γ)`, the scale of the certificate `max_dd ≤ tol · Σ(1 − γ)`.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alt_mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub npmle_converged: Option<bool>,
    #[serde(skip)]
    pub timings: StepTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitTrace {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub flags: Vec<FitFlag>,
    /// Index of the winning start when several were run.
    pub start: usize,
}

impl FitTrace {
    pub fn final_loglik(&self) -> f64 {
        self.iterations.last().map_or(f64::NEG_INFINITY, |r| r.loglik)
    }

    /// Largest decrease of the log-likelihood between consecutive records.
    pub fn worst_descent(&self) -> f64 {
        self.iterations
            .windows(2)
            .map(|w| w[0].loglik - w[1].loglik)
            .fold(0.0, f64::max)
    }

    pub fn has_flag(&self, f: FitFlag) -> bool {
        self.flags.contains(&f)
    }

    pub(crate) fn flag(&mut self, f: FitFlag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }
}

/// Certificate of one `G` update.
#[derive(Debug, Clone, Copy)]
struct Certificate {
    max_dd: f64,
    alt_mass: f64,
    converged: bool,
}

fn record(it: usize, loglik: f64, p: &MixtureParams, cert: Option<Certificate>, timings: StepTimings) -> IterationRecord {
    IterationRecord {
        iteration: it,
        loglik,
        pi: p.pi,
        mu: p.mu,
        lambda: Some(p.lambda),
        support: Some(p.g.support().to_vec()),
        weights: Some(p.g.weights().to_vec()),
        sigma1: None,
        max_dd: cert.map(|c| c.max_dd),
        alt_mass: cert.map(|c| c.alt_mass),
        npmle_converged: cert.map(|c| c.converged),
        timings,
    }
}

/// Mean and standard deviation of the observations above the empirical
/// 60th percentile.
pub(crate) fn upper_tail_summary(z: &[f64]) -> (f64, f64) {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((0.6 * n as f64).ceil() as usize).min(n - 1);
    let tail = &sorted[k..];
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    let sd = if tail.len() > 1 {
        (tail.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

fn initial_params(z: &[f64], cfg: &EcmConfig, mu_scale: f64) -> Result<MixtureParams> {
    let (pi, mu, lambda, sigma) = match cfg.init {
        InitPolicy::UpperTail => {
            let (m, sd) = upper_tail_summary(z);
            let lambda = if cfg.restrict.fix_lambda_zero { 0.0 } else { 1.0 };
            (0.5, m.max(0.1), lambda, sd)
        }
        InitPolicy::Fixed { pi, mu, lambda, sigma } => (pi, mu, lambda, sigma),
    };
    let mu = mu * mu_scale;
    let upper = cfg.npmle.upper_bound(z, mu);
    let sigma = sigma.max(cfg.npmle.ell).min(upper);
    MixtureParams::new(pi, mu, lambda, DiscreteMixingDistribution::degenerate(sigma, cfg.npmle.ell)?)
}

/// Single-atom CM-1: the best scale for a degenerate `G`.
fn degenerate_scale(z: &[f64], w: &[f64], mu: f64, lambda: f64, current: f64, lo: f64, hi: f64) -> f64 {
    let objective = |s: f64| -> f64 {
        z.iter()
            .zip(w)
            .map(|(&x, &wi)| wi * ln_skew_normal_pdf(x, mu, s, lambda))
            .sum()
    };
    let candidate = if lambda == 0.0 {
        let total: f64 = w.iter().sum();
        let ss: f64 = z.iter().zip(w).map(|(&x, &wi)| wi * (x - mu).powi(2)).sum();
        (ss / total).sqrt().clamp(lo, hi)
    } else {
        // golden section on ln σ
        let (mut a, mut b) = (lo.ln(), hi.ln());
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (objective(c.exp()), objective(d.exp()));
        while b - a > 1e-10 {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = objective(c.exp());
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = objective(d.exp());
            }
        }
        (0.5 * (a + b)).exp().clamp(lo, hi)
    };
    if objective(candidate) >= objective(current) {
        candidate
    } else {
        current
    }
}

/// Upper end of the scale grid for a fit started at `p`.
fn grid_upper(z: &[f64], cfg: &EcmConfig, p: &MixtureParams) -> f64 {
    let top = *p.g.support().last().expect("non-empty support");
    cfg.npmle.upper_bound(z, p.mu).max(top)
}

fn fit_from(z: &[f64], cfg: &EcmConfig, mut p: MixtureParams, upper: f64) -> Result<(MixtureParams, FitTrace)> {
    let mut trace = FitTrace::default();
    if z.len() < MIN_RECOMMENDED_N {
        trace.flag(FitFlag::SmallSample);
    }
    // the scale grid is fixed for the whole fit so warm starts stay on it
    let npmle_cfg = NpmleConfig {
        sigma_max: upper,
        adaptive_upper: false,
        ..cfg.npmle
    };
    let mut ll = observed_loglik(z, &p)?;
    trace.iterations.push(record(0, ll, &p, None, StepTimings::default()));
    let mut npmle_ok = true;
    let mut shape_ok = true;

    for it in 1..=cfg.max_iter {
        let t0 = Instant::now();
        let gamma = e_step(z, &p);
        let w = alt_weights(z, &p);
        let t1 = Instant::now();

        let (g_new, cert) = if cfg.restrict.degenerate_g {
            let current = p.g.support()[0];
            let s = degenerate_scale(z, &w, p.mu, p.lambda, current, npmle_cfg.ell, npmle_cfg.sigma_max);
            npmle_ok = true;
            (DiscreteMixingDistribution::degenerate(s, cfg.npmle.ell)?, None)
        } else {
            let sample = WeightedSample::new(z, &w)?;
            let fit = fit_npmle(&sample, p.mu, p.lambda, &npmle_cfg, Some(&p.g))?;
            npmle_ok = fit.converged;
            let cert = Certificate {
                max_dd: fit.max_dd,
                alt_mass: sample.total_weight(),
                converged: fit.converged,
            };
            (fit.g, Some(cert))
        };
        let t2 = Instant::now();

        let pi = cm_step_pi(&gamma)?;
        let step = cm_step_shape_weighted(
            z,
            &w,
            &g_new,
            (p.mu, p.lambda),
            &cfg.shape,
            cfg.restrict.fix_lambda_zero,
        )?;
        shape_ok = step.converged;
        let t3 = Instant::now();

        p = MixtureParams::new(pi, step.mu, step.lambda, g_new)?;
        let ll_new = observed_loglik(z, &p)?;
        if ll_new < ll - ASCENT_SLACK {
            trace.flag(FitFlag::AscentViolation);
        }
        let timings = StepTimings {
            e_step: t1 - t0,
            cm1: t2 - t1,
            cm2: t3 - t2,
        };
        trace.iterations.push(record(it, ll_new, &p, cert, timings));
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
    if !npmle_ok {
        trace.flag(FitFlag::NpmleNotConverged);
    }
    if !shape_ok {
        trace.flag(FitFlag::ShapeNotConverged);
    }
    if p.pi <= PI_CLIP.0 || p.pi >= PI_CLIP.1 {
        trace.flag(FitFlag::PiAtBoundary);
    }
    Ok((p, trace))
}

/// Fit with `λ` held at zero, continued with `λ` free. Close to `λ = 0` the
/// likelihood is nearly flat along a curve on which `µ` and `λ` trade off,
/// and the ascent from a skewed start can stop on it well short of the
/// boundary. The returned trace holds both phases.
fn fit_boundary(z: &[f64], cfg: &EcmConfig) -> Result<(MixtureParams, FitTrace)> {
    let held = EcmConfig {
        restrict: Restriction {
            fix_lambda_zero: true,
            ..cfg.restrict
        },
        ..cfg.clone()
    };
    let mut p0 = initial_params(z, &held, 1.0)?;
    p0.lambda = 0.0;
    let upper = grid_upper(z, &held, &p0);
    let (p1, first) = fit_from(z, &held, p0, upper)?;
    let (p, second) = fit_from(z, cfg, p1, upper)?;
    let offset = first.iterations.len();
    let mut trace = FitTrace {
        converged: second.converged,
        ..FitTrace::default()
    };
    trace.iterations = first.iterations;
    trace.iterations.extend(second.iterations.into_iter().skip(1).map(|mut r| {
        r.iteration += offset - 1;
        r
    }));
    for f in first.flags.into_iter().filter(|&f| f != FitFlag::NotConverged).chain(second.flags) {
        trace.flag(f);
    }
    Ok((p, trace))
}

/// Fits the semiparametric mixture. With several starts the one with the
/// highest final log-likelihood wins (earliest on ties); the boundary start,
/// when enabled, has index `starts`.
pub fn fit(z: &[f64], cfg: &EcmConfig) -> Result<(MixtureParams, FitTrace)> {
    cfg.validate()?;
    check_data(z)?;
    if z.len() < 2 {
        return Err(SnsmError::InvalidInput("at least two observations are required".into()));
    }
    let boundary = cfg.boundary_start && !cfg.restrict.fix_lambda_zero;
    let mut best: Option<(MixtureParams, FitTrace)> = None;
    for k in 0..cfg.starts + boundary as usize {
        let (p, mut trace) = if k < cfg.starts {
            let scale = START_MU_SCALE[k % START_MU_SCALE.len()] * (1.0 + (k / START_MU_SCALE.len()) as f64);
            let p0 = initial_params(z, cfg, scale)?;
            fit_from(z, cfg, p0.clone(), grid_upper(z, cfg, &p0))?
        } else {
            fit_boundary(z, cfg)?
        };
        trace.start = k;
        let better = best
            .as_ref()
            .is_none_or(|(_, t)| trace.final_loglik() > t.final_loglik());
        if better {
            best = Some((p, trace));
        }
    }
    Ok(best.expect("at least one start"))
}
