//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL
//! line; the process exits non-zero if any fails.
//!
//! Run with `cargo test --release -p snsm-core --test acceptance`.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use snsm::dist::DiscreteMixingDistribution;
use snsm::ecm::{alt_weights, fit, shape_loglik_grad, EcmConfig, FitFlag, FitTrace, MixtureParams};
use snsm::inference::{classify_map, fdr_curve, local_fdr, Label, ModelKind};
use snsm::metrics::{adjusted_mutual_information, adjusted_rand_index};
use snsm::npmle::{fit_npmle, NpmleConfig, WeightedSample};
use snsm::preprocess::{preprocess_matrix, ExpressionMatrix, PreprocessOptions};
use snsm::sample::AltCase;
use snsm::sim::{generate_dataset, run_scenario, BenchConfig, ScenarioResult, ScenarioSpec, DEFAULT_MU};
use snsm::special::student_t_cdf;
use std::collections::HashMap;
use std::time::Instant;

const BASE_SEED: u64 = 20_240_601;
const BOTH: [ModelKind; 2] = [ModelKind::Semiparametric, ModelKind::Parametric];

struct Report {
    failed: Vec<String>,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        println!("{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed.push(id.to_string());
        }
    }
}

fn scenario(case: AltCase, pi: f64, n: usize, reps: usize, methods: &[ModelKind]) -> ScenarioResult {
    let spec = ScenarioSpec {
        case,
        pi,
        mu: DEFAULT_MU,
        n,
        replications: reps,
        base_seed: BASE_SEED,
    };
    let t = Instant::now();
    let r = run_scenario(&spec, methods, &BenchConfig::default()).expect("scenario runs");
    eprintln!("  scenario {case} pi {pi} n {n} x{reps}: {:.1?}", t.elapsed());
    r
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ari_values(r: &ScenarioResult, m: ModelKind) -> Vec<Option<f64>> {
    r.scores(m).map(|s| s.ari).collect()
}

fn table1_case_v(rep: &mut Report, case_v: &ScenarioResult) {
    let s = case_v.summary(ModelKind::Semiparametric).unwrap();
    let ok = s.n_failed == 0 && (s.mean_ari - 0.8312).abs() <= 0.05 && (s.mean_ami - 0.7567).abs() <= 0.05;
    rep.check(
        "1",
        ok,
        format!(
            "Case V pi 0.5 N 1000 x{}: semiparametric mean ARI {:.4} (target 0.8312 +/- 0.05), mean AMI {:.4} (target 0.7567 +/- 0.05)",
            s.n_scored, s.mean_ari, s.mean_ami
        ),
    );
}

fn case_iv_failure(rep: &mut Report) {
    let r = scenario(AltCase::IV, 0.3, 5000, 20, &BOTH);
    let sp = r.summary(ModelKind::Semiparametric).unwrap();
    let pm = r.summary(ModelKind::Parametric).unwrap();
    rep.check(
        "2",
        sp.n_failed == 0 && pm.n_failed == 0 && pm.mean_ari <= 0.05 && sp.mean_ari >= 0.30,
        format!(
            "Case IV pi 0.3 N 5000 x20: parametric mean ARI {:.4} (<= 0.05), semiparametric mean ARI {:.4} (>= 0.30)",
            pm.mean_ari, sp.mean_ari
        ),
    );
}

fn dominance(rep: &mut Report, case_v: &ScenarioResult) {
    let mut parts = Vec::new();
    let mut ok = true;
    for case in [AltCase::II, AltCase::III, AltCase::V, AltCase::VI] {
        let owned;
        let r = if case == AltCase::V {
            case_v
        } else {
            owned = scenario(case, 0.5, 1000, 30, &BOTH);
            &owned
        };
        // paired by replication seed, first 30 replications
        let sp = ari_values(r, ModelKind::Semiparametric);
        let pm = ari_values(r, ModelKind::Parametric);
        let pairs: Vec<(f64, f64)> = sp
            .iter()
            .zip(&pm)
            .take(30)
            .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
            .collect();
        let ms = mean(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let mp = mean(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let wins = pairs.iter().filter(|p| p.0 >= p.1).count();
        ok &= pairs.len() == 30 && ms >= mp;
        parts.push(format!("{case}: {ms:.4} vs {mp:.4} ({wins}/{} seeds)", pairs.len()));
    }
    rep.check(
        "3",
        ok,
        format!("semiparametric >= parametric mean ARI, pi 0.5 N 1000 x30: {}", parts.join("; ")),
    );
}

/// Independent certificate at the final `G` of a semiparametric trace: the
/// weights come from the previous record's parameters, as in the E-step
/// that preceded the last `G` update.
fn final_certificate(z: &[f64], trace: &FitTrace) -> Option<(f64, f64)> {
    let n = trace.iterations.len();
    if n < 2 {
        return None;
    }
    let params = |i: usize| {
        let r = &trace.iterations[i];
        let g = DiscreteMixingDistribution::new(r.support.clone()?, r.weights.clone()?, 0.05).ok()?;
        MixtureParams::new(r.pi, r.mu, r.lambda?, g).ok()
    };
    let prev = params(n - 2)?;
    let last = &trace.iterations[n - 1];
    let w = alt_weights(z, &prev);
    let first = &trace.iterations[0];
    let cfg = NpmleConfig::default();
    let upper = cfg.upper_bound(z, first.mu).max(first.support.as_ref()?[0]);
    let atoms: Vec<(f64, f64)> = last.support.clone()?.into_iter().zip(last.weights.clone()?).collect();
    let max_d = cfg
        .grid_to(upper)
        .iter()
        .map(|&s| common::dd(s, z, &w, prev.mu, prev.lambda, &atoms))
        .fold(f64::NEG_INFINITY, f64::max);
    Some((max_d, w.iter().sum()))
}

fn ascent_and_certificate(rep: &mut Report) {
    let cases = [AltCase::I, AltCase::II, AltCase::III, AltCase::IV, AltCase::V, AltCase::VI];
    let pis = [0.3, 0.5, 0.7];
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    let mut reported = 0usize;
    let mut reported_bad = 0usize;
    let mut checked = 0usize;
    let mut recomputed_bad = 0usize;
    let mut worst_ratio: f64 = f64::NEG_INFINITY;
    let mut not_certified = 0usize;
    for i in 0..100 {
        let spec = ScenarioSpec {
            case: cases[i % 6],
            pi: pis[(i / 6) % 3],
            mu: DEFAULT_MU,
            n: 500,
            replications: 1,
            base_seed: BASE_SEED + i as u64,
        };
        let (z, _) = generate_dataset(&spec, 0).unwrap();
        let (_, trace) = fit(&z, &EcmConfig::default()).expect("fit succeeds");
        let d = trace.worst_descent();
        worst = worst.max(d);
        if d > 1e-8 || trace.has_flag(FitFlag::AscentViolation) {
            violations += 1;
        }
        for r in &trace.iterations {
            if r.npmle_converged == Some(true) {
                reported += 1;
                if r.max_dd.unwrap() > 1e-6 * r.alt_mass.unwrap() {
                    reported_bad += 1;
                }
            } else if r.npmle_converged == Some(false) {
                not_certified += 1;
            }
        }
        if trace.iterations.last().and_then(|r| r.npmle_converged) == Some(true) {
            if let Some((max_d, total)) = final_certificate(&z, &trace) {
                checked += 1;
                worst_ratio = worst_ratio.max(max_d / total);
                if max_d > 1e-6 * total {
                    recomputed_bad += 1;
                }
            }
        }
    }
    eprintln!("  100 ECM fits: {:.1?}", t.elapsed());
    rep.check(
        "4",
        violations == 0,
        format!("100 fits N 500: {violations} ascent violations, worst descent {worst:.3e}"),
    );
    rep.check(
        "5",
        reported_bad == 0 && recomputed_bad == 0 && checked > 0,
        format!(
            "{reported} certified G updates with max D <= 1e-6 sum(1-gamma), {reported_bad} exceed; \
             {checked} final G re-checked by an independent double loop, {recomputed_bad} exceed, worst max D / sum(1-gamma) {worst_ratio:.3e}; \
             {not_certified} updates hit the iteration cap"
        ),
    );
}

fn npmle_grid_oracle(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let cfg = NpmleConfig {
        grid_size: 200,
        ..NpmleConfig::default()
    };
    let mut worst: f64 = f64::INFINITY;
    let mut ok = true;
    for _ in 0..20 {
        let mu: f64 = rng.random_range(0.5..3.0);
        let noise = Normal::new(mu, 2.0).unwrap();
        let z: Vec<f64> = (0..10).map(|_| noise.sample(&mut rng)).collect();
        let w = vec![1.0; 10];
        let s = WeightedSample::new(&z, &w).unwrap();
        let f = fit_npmle(&s, mu, 0.0, &cfg, None).unwrap();
        let atoms: Vec<(f64, f64)> = f.g.atoms().collect();
        let ll = common::weighted_ll(&z, &w, mu, 0.0, &atoms);
        let grid = cfg.grid_to(cfg.upper_bound(&z, mu));
        let (lower, _) = common::grid_optimum(&z, &w, mu, 0.0, &grid, 20_000);
        worst = worst.min(ll - lower);
        ok &= f.converged && ll >= lower - 1e-6;
    }
    rep.check(
        "6a",
        ok,
        format!("20 instances: NPMLE log-likelihood minus 200-point grid optimum >= {worst:.3e} (>= -1e-6)"),
    );
}

fn student_t_oracle(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 1);
    let mut worst: f64 = 0.0;
    for k in 0..50 {
        let nu: u32 = if k % 2 == 0 { [1, 2, 3, 5, 10, 30, 100][(k / 2) % 7] } else { rng.random_range(1..200) };
        let t: f64 = rng.random_range(-12.0..12.0);
        let err = (student_t_cdf(t, nu).unwrap() - common::t_cdf_quadrature(t, nu as f64)).abs();
        worst = worst.max(err);
    }
    rep.check("6b", worst <= 1e-10, format!("50 (t, nu) points: max |error| {worst:.3e} (<= 1e-10)"));
}

fn metric_oracles(rep: &mut Report) {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut emi_cache: HashMap<(Vec<usize>, Vec<usize>), f64> = HashMap::new();
    for n in 2..=6 {
        let parts = common::set_partitions(n);
        for a in &parts {
            for b in &parts {
                let key = (common::margins(a), common::margins(b));
                let emi = *emi_cache
                    .entry(key)
                    .or_insert_with(|| common::emi_exhaustive(a, b));
                let ari = adjusted_rand_index(a, b).unwrap();
                let ami = adjusted_mutual_information(a, b).unwrap();
                worst = worst.max((ari - common::ari_pairs(a, b)).abs());
                worst = worst.max((ami - common::ami_with_emi(a, b, emi)).abs());
                count += 1;
            }
        }
    }
    rep.check(
        "6c",
        worst <= 1e-10,
        format!("ARI and AMI on all {count} labeling pairs of 2..6 points: max |error| {worst:.3e}"),
    );
}

fn gradient_oracle(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let mu: f64 = rng.random_range(0.3..3.0);
        let lambda: f64 = rng.random_range(0.0..6.0);
        let k = rng.random_range(1..4);
        let atoms: Vec<(f64, f64)> = (0..k).map(|_| (rng.random_range(0.3..3.0), rng.random_range(0.1..1.0))).collect();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        let atoms: Vec<(f64, f64)> = atoms.iter().map(|&(s, p)| (s, p / total)).collect();
        let g = DiscreteMixingDistribution::from_atoms(&atoms, 0.05).unwrap();
        let atoms: Vec<(f64, f64)> = g.atoms().collect();
        let z: Vec<f64> = (0..60).map(|_| rng.random_range(-2.0..6.0)).collect();
        let w: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, grad) = shape_loglik_grad(&z, &w, &g, mu, lambda);
        let f = |m: f64, l: f64| common::weighted_ll(&z, &w, m, l, &atoms);
        let h = 1e-5;
        let fd_mu = (f(mu + h, lambda) - f(mu - h, lambda)) / (2.0 * h);
        let fd_lam = (f(mu, lambda + h) - f(mu, lambda - h)) / (2.0 * h);
        for (a, b) in [(grad[0], fd_mu), (grad[1], fd_lam)] {
            worst = worst.max((a - b).abs() / b.abs().max(1e-8));
        }
    }
    rep.check(
        "6d",
        worst <= 1e-5,
        format!("10 random points: max relative gradient error {worst:.3e} (<= 1e-5)"),
    );
}

fn gaussian_recovery(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 3);
    let null = Normal::new(0.0, 1.0).unwrap();
    let alt = Normal::new(2.0, 1.0).unwrap();
    let z: Vec<f64> = (0..5000)
        .map(|_| {
            if rng.random::<f64>() < 0.5 {
                null.sample(&mut rng)
            } else {
                alt.sample(&mut rng)
            }
        })
        .collect();
    let (p, _) = fit(&z, &EcmConfig::default()).expect("fit succeeds");
    let scale = p.g.mean_scale();
    let ok = (p.pi - 0.5).abs() <= 0.05 && (p.mu - 2.0).abs() <= 0.15 && p.lambda <= 0.5 && (scale - 1.0).abs() <= 0.15;
    rep.check(
        "7",
        ok,
        format!(
            "Gaussian mixture (0.5, 2, 1) N 5000: pi {:.4}, mu {:.4}, lambda {:.4}, mean scale {:.4}",
            p.pi, p.mu, p.lambda, scale
        ),
    );
}

fn consistency_trend(rep: &mut Report) {
    let only = [ModelKind::Semiparametric];
    let mae = |r: &ScenarioResult| {
        let e: Vec<f64> = r.scores(ModelKind::Semiparametric).filter_map(|s| s.pi_hat).map(|p| (p - 0.5).abs()).collect();
        (mean(&e), e.len())
    };
    let (small, n_small) = mae(&scenario(AltCase::I, 0.5, 1000, 30, &only));
    let (large, n_large) = mae(&scenario(AltCase::I, 0.5, 5000, 30, &only));
    rep.check(
        "8",
        n_small == 30 && n_large == 30 && large <= small,
        format!("Case I pi 0.5 x30: mean |pi_hat - pi| {small:.4} at N 1000, {large:.4} at N 5000"),
    );
}

fn fdr_oracle(rep: &mut Report) {
    let c = fdr_curve(&[0.1, 0.2, 0.6, 0.9], &[0.5]).unwrap();
    let (f, n) = (c.fdr_hat[0].unwrap(), c.fnr_hat[0].unwrap());
    rep.check(
        "9",
        (f - 0.15).abs() <= 1e-12 && (n - 0.5 / 2.2).abs() <= 1e-12,
        format!("4-gene instance: FDR(0.5) = {f:.15}, FNR(0.5) = {n:.15}"),
    );
}

fn planted_signal(rep: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED + 4);
    let (genes, planted, per_group) = (2000, 200, 10);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let groups: Vec<u8> = (0..2 * per_group).map(|j| if j < per_group { 1 } else { 2 }).collect();
    let values: Vec<Vec<f64>> = (0..genes)
        .map(|g| {
            let shift = if g < planted { rng.random_range(2.5..4.0) } else { 0.0 };
            groups
                .iter()
                .map(|&k| 8.0 + noise.sample(&mut rng) + if k == 2 { shift } else { 0.0 })
                .collect()
        })
        .collect();
    let ids: Vec<String> = (0..genes).map(|g| format!("gene{g}")).collect();
    let m = ExpressionMatrix::new(values, ids, groups).unwrap();
    let set = preprocess_matrix(&m, &PreprocessOptions::default()).unwrap();
    let retained: Vec<(String, f64)> = set.retained().map(|(g, z)| (g.to_string(), z)).collect();
    let z: Vec<f64> = retained.iter().map(|r| r.1).collect();
    let (p, _) = fit(&z, &EcmConfig::default()).expect("fit succeeds");
    let mut ranked: Vec<(f64, f64, usize)> = retained
        .iter()
        .map(|(g, x)| (local_fdr(*x, &p), -x, g[4..].parse::<usize>().unwrap()))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let decile = ranked.len() / 10;
    let hits = ranked[..decile].iter().filter(|r| r.2 < planted).count();
    // best achievable by any ranking of the z-scores
    let mut by_z: Vec<(f64, usize)> = ranked.iter().map(|r| (r.1, r.2)).collect();
    by_z.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ceiling = by_z[..decile].iter().filter(|r| r.1 < planted).count();
    let selected = classify_map(&ranked.iter().map(|r| r.0).collect::<Vec<_>>(), 0.5).unwrap();
    rep.check(
        "planted",
        hits as f64 >= 0.9 * planted as f64,
        format!(
            "{hits}/{planted} planted genes in the top decile of the gamma ranking (top-z ranking {ceiling}; {} genes selected at 0.5)",
            selected.iter().filter(|l| **l == Label::NonNull).count()
        ),
    );
}

fn main() {
    let t = Instant::now();
    let mut rep = Report { failed: Vec::new() };
    fdr_oracle(&mut rep);
    student_t_oracle(&mut rep);
    metric_oracles(&mut rep);
    gradient_oracle(&mut rep);
    npmle_grid_oracle(&mut rep);
    gaussian_recovery(&mut rep);
    planted_signal(&mut rep);
    ascent_and_certificate(&mut rep);
    let case_v = scenario(AltCase::V, 0.5, 1000, 50, &BOTH);
    table1_case_v(&mut rep, &case_v);
    dominance(&mut rep, &case_v);
    consistency_trend(&mut rep);
    case_iv_failure(&mut rep);
    eprintln!("acceptance finished in {:.1?}", t.elapsed());
    if !rep.failed.is_empty() {
        println!("failed: {}", rep.failed.join(", "));
        std::process::exit(1);
    }
}
