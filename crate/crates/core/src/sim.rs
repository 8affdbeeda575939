//! Monte Carlo scenarios: generate labelled z-scores, fit each method,
//! classify by the MAP rule and score against the truth.

use crate::ecm::{fit, EcmConfig, FitFlag, TwoComponent};
use crate::error::{Result, SnsmError};
use crate::gmm::{fit_gmm, GmmConfig};
use crate::inference::{classify_map, Label, ModelKind};
use crate::metrics::{adjusted_mutual_information, adjusted_rand_index};
use crate::sample::AltCase;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MU: f64 = 1.645;
pub const MIN_SCENARIO_N: usize = 100;

fn default_mu() -> f64 {
    DEFAULT_MU
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub case: AltCase,
    pub pi: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    pub n: usize,
    pub replications: usize,
    pub base_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(SnsmError::InvalidParams(format!("pi {} outside [0, 1]", self.pi)));
        }
        if !self.mu.is_finite() {
            return Err(SnsmError::InvalidParams(format!("non-finite mu {}", self.mu)));
        }
        if self.n < MIN_SCENARIO_N {
            return Err(SnsmError::InvalidParams(format!(
                "n must be at least {MIN_SCENARIO_N}, got {}",
                self.n
            )));
        }
        if self.replications == 0 {
            return Err(SnsmError::InvalidParams("replications must be at least 1".into()));
        }
        Ok(())
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of one replication, independent of scheduling.
pub fn replication_seed(spec: &ScenarioSpec, rep: usize) -> u64 {
    [spec.case.index(), spec.pi.to_bits(), spec.n as u64, rep as u64]
        .iter()
        .fold(splitmix(spec.base_seed), |h, &v| splitmix(h ^ v))
}

/// Draws one dataset: each point is null with probability `π`.
pub fn generate_dataset(spec: &ScenarioSpec, rep: usize) -> Result<(Vec<f64>, Vec<Label>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(spec, rep));
    let mut z = Vec::with_capacity(spec.n);
    let mut truth = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        if rng.random::<f64>() < spec.pi {
            z.push(StandardNormal.sample(&mut rng));
            truth.push(Label::Null);
        } else {
            z.push(spec.case.draw(spec.mu, &mut rng));
            truth.push(Label::NonNull);
        }
    }
    Ok((z, truth))
}

/// Scores of one method on one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub method: ModelKind,
    pub ari: Option<f64>,
    pub ami: Option<f64>,
    pub pi_hat: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub seed: u64,
    /// The truth has a single class, so agreement scores are degenerate.
    pub degenerate_truth: bool,
    pub scores: Vec<MethodScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: ModelKind,
    pub mean_ari: f64,
    pub sd_ari: f64,
    pub se_ari: f64,
    pub mean_ami: f64,
    pub sd_ami: f64,
    pub se_ami: f64,
    /// Replications that produced scores.
    pub n_scored: usize,
    pub n_failed: usize,
    pub n_not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub spec: ScenarioSpec,
    pub replications: Vec<ReplicationOutcome>,
    pub summaries: Vec<MethodSummary>,
}

impl ScenarioResult {
    pub fn summary(&self, method: ModelKind) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Per-replication scores of one method, in replication order.
    pub fn scores(&self, method: ModelKind) -> impl Iterator<Item = &MethodScore> {
        self.replications
            .iter()
            .flat_map(move |r| r.scores.iter().filter(move |s| s.method == method))
    }
}

/// Settings for the fits inside a scenario.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub ecm: EcmConfig,
    pub gmm: GmmConfig,
}

fn score_method(z: &[f64], truth: &[Label], method: ModelKind, cfg: &BenchConfig) -> MethodScore {
    let fitted: Result<(Vec<f64>, f64, bool)> = match method {
        ModelKind::Semiparametric => fit(z, &cfg.ecm).map(|(p, t)| {
            let gamma = z.iter().map(|&x| p.local_fdr(x)).collect();
            (gamma, p.pi, t.converged && !t.has_flag(FitFlag::NpmleNotConverged))
        }),
        ModelKind::Parametric => fit_gmm(z, &cfg.gmm).map(|(p, t)| {
            let gamma = z.iter().map(|&x| p.local_fdr(x)).collect();
            (gamma, p.pi, t.converged)
        }),
    };
    let scored = fitted.and_then(|(gamma, pi_hat, converged)| {
        let labels = classify_map(&gamma, 0.5)?;
        let ari = adjusted_rand_index(truth, &labels)?;
        let ami = adjusted_mutual_information(truth, &labels)?;
        Ok((ari, ami, pi_hat, converged))
    });
    match scored {
        Ok((ari, ami, pi_hat, converged)) => MethodScore {
            method,
            ari: Some(ari),
            ami: Some(ami),
            pi_hat: Some(pi_hat),
            converged,
            error: None,
        },
        Err(e) => MethodScore {
            method,
            ari: None,
            ami: None,
            pi_hat: None,
            converged: false,
            error: Some(e.to_string()),
        },
    }
}

/// Runs one replication for every method.
pub fn run_replication(
    spec: &ScenarioSpec,
    rep: usize,
    methods: &[ModelKind],
    cfg: &BenchConfig,
) -> Result<ReplicationOutcome> {
    let (z, truth) = generate_dataset(spec, rep)?;
    let degenerate_truth = truth.iter().all(|&l| l == truth[0]);
    let scores = methods.iter().map(|&m| score_method(&z, &truth, m, cfg)).collect();
    Ok(ReplicationOutcome {
        rep,
        seed: replication_seed(spec, rep),
        degenerate_truth,
        scores,
    })
}

fn mean_sd(x: &[f64]) -> (f64, f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (m, f64::NAN, f64::NAN);
    }
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd, sd / n.sqrt())
}

fn summarise(method: ModelKind, reps: &[ReplicationOutcome]) -> MethodSummary {
    let scores: Vec<&MethodScore> = reps
        .iter()
        .flat_map(|r| r.scores.iter().filter(|s| s.method == method))
        .collect();
    let ari: Vec<f64> = scores.iter().filter_map(|s| s.ari).collect();
    let ami: Vec<f64> = scores.iter().filter_map(|s| s.ami).collect();
    let (mean_ari, sd_ari, se_ari) = mean_sd(&ari);
    let (mean_ami, sd_ami, se_ami) = mean_sd(&ami);
    MethodSummary {
        method,
        mean_ari,
        sd_ari,
        se_ari,
        mean_ami,
        sd_ami,
        se_ami,
        n_scored: ari.len(),
        n_failed: scores.iter().filter(|s| s.error.is_some()).count(),
        n_not_converged: scores.iter().filter(|s| s.error.is_none() && !s.converged).count(),
    }
}

/// All replications of a scenario, run in parallel and collected in
/// replication order.
pub fn run_scenario(spec: &ScenarioSpec, methods: &[ModelKind], cfg: &BenchConfig) -> Result<ScenarioResult> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(SnsmError::InvalidInput("no methods selected".into()));
    }
    let replications = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replication(spec, rep, methods, cfg))
        .collect::<Result<Vec<_>>>()?;
    let summaries = methods.iter().map(|&m| summarise(m, &replications)).collect();
    Ok(ScenarioResult {
        spec: *spec,
        replications,
        summaries,
    })
}
