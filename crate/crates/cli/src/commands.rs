use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{finish, num, opt_num, read_column, read_expression, read_labels, write_row, write_zscores, writer};
use serde::Serialize;
use snsm::ecm::{fit, FitFlag, FitTrace, MixtureParams, MIN_RECOMMENDED_N};
use snsm::gmm::{fit_gmm, GmmParams};
use snsm::inference::{default_thresholds, fdr_curve, ModelKind, PosteriorTable};
use snsm::preprocess::{preprocess_matrix, ExclusionReason, PValueConvention, PreprocessOptions};
use snsm::sim::{run_scenario, BenchConfig};
use snsm::special::ln_normal_pdf;
use std::fs;
use std::path::{Path, PathBuf};

/// Completed run; warnings turn the exit status into "warn".
#[derive(Debug, Default)]
pub struct Outcome {
    pub warnings: Vec<String>,
}

fn require_file(p: &Path) -> CliResult<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("input file {} does not exist", p.display())))
    }
}

fn prepare_dir(p: &Path) -> CliResult<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn prepare_parent(p: &Path) -> CliResult<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => prepare_dir(d),
        _ => Ok(()),
    }
}

pub struct PreprocessArgs {
    pub expression: PathBuf,
    pub labels: PathBuf,
    pub out: PathBuf,
    pub top_k: Option<usize>,
    pub signed_pvalue: bool,
}

pub fn preprocess(a: &PreprocessArgs) -> CliResult<Outcome> {
    require_file(&a.expression)?;
    require_file(&a.labels)?;
    prepare_parent(&a.out)?;
    let labels = read_labels(&a.labels)?;
    let m = read_expression(&a.expression, &labels)?;
    let opts = PreprocessOptions {
        top_k: a.top_k,
        convention: if a.signed_pvalue {
            PValueConvention::Signed
        } else {
            PValueConvention::Symmetric
        },
    };
    let set = preprocess_matrix(&m, &opts)?;
    write_zscores(&a.out, &set)?;
    println!(
        "genes {} retained {} degenerate_variance {} null_degenerate {}",
        set.records.len(),
        set.n_retained(),
        set.count_excluded(ExclusionReason::DegenerateVariance),
        set.count_excluded(ExclusionReason::NullDegenerate)
    );
    Ok(Outcome::default())
}

pub struct FitArgs {
    pub zscores: PathBuf,
    pub method: ModelKind,
    pub out_dir: PathBuf,
    pub config: Option<PathBuf>,
    pub starts: Option<usize>,
    pub max_iter: Option<usize>,
    pub curve_points: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Fitted {
    Semiparametric(MixtureParams),
    Parametric(GmmParams),
}

#[derive(Serialize)]
struct ModelReport<'a> {
    method: ModelKind,
    n: usize,
    loglik: f64,
    converged: bool,
    flags: &'a [FitFlag],
    params: &'a Fitted,
}

impl Fitted {
    fn pi(&self) -> f64 {
        match self {
            Fitted::Semiparametric(p) => p.pi,
            Fitted::Parametric(p) => p.pi,
        }
    }

    fn alt_pdf(&self, z: f64) -> f64 {
        match self {
            Fitted::Semiparametric(p) => p.ln_alt_pdf(z).exp(),
            Fitted::Parametric(p) => (ln_normal_pdf((z - p.mu1) / p.sigma1) - p.sigma1.ln()).exp(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn fit_cmd(a: &FitArgs) -> CliResult<Outcome> {
    require_file(&a.zscores)?;
    if let Some(c) = &a.config {
        require_file(c)?;
    }
    if a.curve_points < 2 {
        return Err(CliError::Config("curve points must be at least 2".into()));
    }
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(s) = a.starts {
        cfg.ecm.starts = s;
    }
    if let Some(m) = a.max_iter {
        cfg.ecm.max_iter = m;
        cfg.gmm.max_iter = m;
    }
    cfg.ecm.validate().map_err(|e| CliError::Config(e.to_string()))?;
    prepare_dir(&a.out_dir)?;

    let (ids, z) = read_column(&a.zscores, "z")?;
    let mut out = Outcome::default();
    if z.len() < MIN_RECOMMENDED_N {
        out.warnings.push(format!(
            "only {} z-scores; at least {MIN_RECOMMENDED_N} are recommended",
            z.len()
        ));
    }
    let (fitted, trace): (Fitted, FitTrace) = match a.method {
        ModelKind::Semiparametric => {
            let (p, t) = fit(&z, &cfg.ecm)?;
            (Fitted::Semiparametric(p), t)
        }
        ModelKind::Parametric => {
            let (p, t) = fit_gmm(&z, &cfg.gmm)?;
            (Fitted::Parametric(p), t)
        }
    };
    if !trace.converged {
        out.warnings.push("fit did not converge".into());
    }
    for f in &trace.flags {
        if *f != FitFlag::NotConverged && *f != FitFlag::SmallSample {
            out.warnings.push(format!("fit flag {f:?}"));
        }
    }

    let table = match &fitted {
        Fitted::Semiparametric(p) => PosteriorTable::from_model(ids, z.clone(), p, a.method)?,
        Fitted::Parametric(p) => PosteriorTable::from_model(ids, z.clone(), p, a.method)?,
    };
    let report = ModelReport {
        method: a.method,
        n: z.len(),
        loglik: trace.final_loglik(),
        converged: trace.converged,
        flags: &trace.flags,
        params: &fitted,
    };
    write_json(&a.out_dir.join("model.json"), &report)?;
    write_json(&a.out_dir.join("trace.json"), &trace)?;

    let path = a.out_dir.join("posterior.csv");
    let mut w = writer(&path)?;
    write_row(&mut w, &path, &["gene_id", "z", "gamma_hat", "selected_at_0.5"].map(String::from))?;
    for ((id, &x), &g) in table.gene_ids.iter().zip(&table.z).zip(&table.gamma_hat) {
        write_row(&mut w, &path, &[id.clone(), num(x), num(g), (g <= 0.5).to_string()])?;
    }
    finish(w, &path)?;

    let path = a.out_dir.join("density.csv");
    let mut w = writer(&path)?;
    write_row(&mut w, &path, &["z", "null", "alternative", "mixture"].map(String::from))?;
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let pi = fitted.pi();
    for k in 0..a.curve_points {
        let x = lo + (hi - lo) * k as f64 / (a.curve_points - 1) as f64;
        let null = ln_normal_pdf(x).exp();
        let alt = fitted.alt_pdf(x);
        let mix = pi * null + (1.0 - pi) * alt;
        write_row(&mut w, &path, &[num(x), num(null), num(alt), num(mix)])?;
    }
    finish(w, &path)?;
    println!(
        "method {} n {} loglik {} pi {} converged {} iterations {}",
        a.method,
        z.len(),
        num(trace.final_loglik()),
        num(pi),
        trace.converged,
        trace.iterations.len().saturating_sub(1)
    );
    Ok(out)
}

pub struct FdrArgs {
    pub posterior: PathBuf,
    pub out: PathBuf,
    pub thresholds: Option<Vec<f64>>,
}

pub fn fdr(a: &FdrArgs) -> CliResult<Outcome> {
    require_file(&a.posterior)?;
    let thresholds = a.thresholds.clone().unwrap_or_else(default_thresholds);
    if thresholds.is_empty() || thresholds.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(CliError::Config("thresholds must lie in [0, 1]".into()));
    }
    prepare_parent(&a.out)?;
    let (_, gamma) = read_column(&a.posterior, "gamma_hat")?;
    if gamma.is_empty() {
        return Err(CliError::parse(&a.posterior, "posterior file has no rows"));
    }
    let curve = fdr_curve(&gamma, &thresholds)?;
    let mut w = writer(&a.out)?;
    write_row(&mut w, &a.out, &["c", "n_selected", "fdr_hat", "fnr_hat", "note"].map(String::from))?;
    for i in 0..thresholds.len() {
        let mut note = Vec::new();
        if curve.fdr_hat[i].is_none() {
            note.push("no_selection");
        }
        if curve.fnr_hat[i].is_none() {
            note.push("no_alternative_mass");
        }
        write_row(
            &mut w,
            &a.out,
            &[
                num(thresholds[i]),
                curve.n_selected[i].to_string(),
                opt_num(curve.fdr_hat[i]),
                opt_num(curve.fnr_hat[i]),
                note.join(";"),
            ],
        )?;
    }
    finish(w, &a.out)?;
    Ok(Outcome::default())
}

pub struct SimulateArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub methods: Vec<ModelKind>,
}

pub fn simulate(a: &SimulateArgs) -> CliResult<Outcome> {
    require_file(&a.config)?;
    let cfg = RunConfig::load(Some(&a.config))?;
    if cfg.scenario.is_empty() {
        return Err(CliError::Config("no [[scenario]] entries".into()));
    }
    let mut methods = a.methods.clone();
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(CliError::Config("no methods selected".into()));
    }
    prepare_dir(&a.out_dir)?;
    let bench = BenchConfig {
        ecm: cfg.ecm.clone(),
        gmm: cfg.gmm,
    };

    let sum_path = a.out_dir.join("summary.csv");
    let rep_path = a.out_dir.join("replications.csv");
    let mut sw = writer(&sum_path)?;
    let mut rw = writer(&rep_path)?;
    let sum_head = [
        "case", "pi", "n", "method", "replications", "n_scored", "n_failed", "n_not_converged", "mean_ari", "sd_ari",
        "se_ari", "mean_ami", "sd_ami", "se_ami", "error",
    ];
    let rep_head = [
        "case", "pi", "n", "rep", "seed", "method", "ari", "ami", "pi_hat", "converged", "degenerate_truth", "error",
    ];
    write_row(&mut sw, &sum_path, &sum_head.map(String::from))?;
    write_row(&mut rw, &rep_path, &rep_head.map(String::from))?;

    let mut out = Outcome::default();
    for entry in &cfg.scenario {
        let spec = entry.spec(a.seed);
        let key = [spec.case.to_string(), num(spec.pi), spec.n.to_string()];
        let result = match run_scenario(&spec, &methods, &bench) {
            Ok(r) => r,
            Err(e) => {
                out.warnings.push(format!("scenario {} pi {} n {}: {e}", spec.case, spec.pi, spec.n));
                for m in &methods {
                    let mut row = key.to_vec();
                    row.push(m.to_string());
                    row.push(spec.replications.to_string());
                    row.extend(std::iter::repeat_n(String::new(), 9));
                    row.push(e.to_string());
                    write_row(&mut sw, &sum_path, &row)?;
                }
                continue;
            }
        };
        for r in &result.replications {
            for s in &r.scores {
                let mut row = key.to_vec();
                row.extend([
                    r.rep.to_string(),
                    r.seed.to_string(),
                    s.method.to_string(),
                    opt_num(s.ari),
                    opt_num(s.ami),
                    opt_num(s.pi_hat),
                    s.converged.to_string(),
                    r.degenerate_truth.to_string(),
                    s.error.clone().unwrap_or_default(),
                ]);
                write_row(&mut rw, &rep_path, &row)?;
            }
        }
        for s in &result.summaries {
            if s.n_failed > 0 {
                out.warnings.push(format!(
                    "scenario {} pi {} n {}: {} {} fits failed",
                    spec.case, spec.pi, spec.n, s.n_failed, s.method
                ));
            }
            let mut row = key.to_vec();
            row.extend([
                s.method.to_string(),
                spec.replications.to_string(),
                s.n_scored.to_string(),
                s.n_failed.to_string(),
                s.n_not_converged.to_string(),
            ]);
            row.extend([s.mean_ari, s.sd_ari, s.se_ari, s.mean_ami, s.sd_ami, s.se_ami].map(|v| opt_num(Some(v))));
            row.push(String::new());
            write_row(&mut sw, &sum_path, &row)?;
            println!(
                "case {} pi {} n {} {}: mean ARI {:.4} mean AMI {:.4} ({} scored)",
                spec.case, spec.pi, spec.n, s.method, s.mean_ari, s.mean_ami, s.n_scored
            );
        }
        if result.replications.iter().any(|r| r.degenerate_truth) {
            out.warnings.push(format!(
                "scenario {} pi {} n {}: truth has a single class; scores are degenerate",
                spec.case, spec.pi, spec.n
            ));
        }
    }
    finish(sw, &sum_path)?;
    finish(rw, &rep_path)?;
    Ok(out)
}
