//! Weighted nonparametric maximum likelihood for the scale mixing
//! distribution `G` of the SNSM alternative, with `(µ, λ)` held fixed.
//!
//! The objective is `L(G) = Σᵢ wᵢ ln ∫ SN(zᵢ; µ, σ, λ) dG(σ)`, concave in
//! `G`. The solver follows the constrained Newton method: scan a geometric
//! candidate grid on `[ell, sigma_max]` for local maxima of the directional
//! derivative `D_G(σ) = Σᵢ wᵢ SN(zᵢ; σ)/f_G(zᵢ) − Σᵢ wᵢ`, add them to the
//! support, take a nonnegative least-squares Newton step for the weights,
//! backtrack until the objective rises, and drop atoms whose weight
//! vanished. It stops once `D_G(σ) ≤ dd_tol·Σw` on the whole grid and
//! `|D_G| ≤ dd_tol·Σw` on the support, which is the grid surrogate of the
//! optimality conditions `D ≤ 0` everywhere with equality on the support.

use crate::dist::{ln_skew_normal_pdf, DiscreteMixingDistribution, LogSumExp};
use crate::error::{Result, SnsmError};
use nalgebra::{DMatrix, DVector};

/// Mass given to the upper-bound atom added to warm starts.
const SAFETY_MASS: f64 = 1e-10;
use serde::{Deserialize, Serialize};

/// Observations with per-observation weights (the `1 − γᵢ` values).
#[derive(Debug, Clone, Copy)]
pub struct WeightedSample<'a> {
    z: &'a [f64],
    w: &'a [f64],
}

impl<'a> WeightedSample<'a> {
    pub fn new(z: &'a [f64], w: &'a [f64]) -> Result<Self> {
        if z.len() != w.len() {
            return Err(SnsmError::LengthMismatch {
                left: z.len(),
                right: w.len(),
            });
        }
        if let Some(&bad) = w.iter().find(|&&x| !(0.0..=1.0).contains(&x)) {
            return Err(SnsmError::InvalidInput(format!("weight {bad} outside [0, 1]")));
        }
        if let Some(&bad) = z.iter().find(|x| !x.is_finite()) {
            return Err(SnsmError::InvalidInput(format!("non-finite observation {bad}")));
        }
        Ok(Self { z, w })
    }

    pub fn z(&self) -> &'a [f64] {
        self.z
    }

    pub fn w(&self) -> &'a [f64] {
        self.w
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NpmleConfig {
    /// Lower bound on support points.
    pub ell: f64,
    /// Upper bound on support points.
    pub sigma_max: f64,
    /// Widen the upper bound to `2·max|zᵢ − µ|` when that is larger.
    pub adaptive_upper: bool,
    /// Number of geometric candidate scales on `[ell, sigma_max]`.
    pub grid_size: usize,
    /// Optimality tolerance, relative to the total weight.
    pub dd_tol: f64,
    /// Atoms lighter than this are dropped.
    pub prune_tol: f64,
    pub max_iter: usize,
}

impl Default for NpmleConfig {
    fn default() -> Self {
        Self {
            ell: 0.05,
            sigma_max: 10.0,
            adaptive_upper: true,
            grid_size: 100,
            dd_tol: 1e-6,
            prune_tol: 1e-8,
            max_iter: 500,
        }
    }
}

impl NpmleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ell > 0.0 && self.ell < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(SnsmError::InvalidParams(format!(
                "scale bounds must satisfy 0 < ell < sigma_max (got {}, {})",
                self.ell, self.sigma_max
            )));
        }
        if self.grid_size < 2 {
            return Err(SnsmError::InvalidParams("grid_size must be at least 2".into()));
        }
        if !(self.dd_tol > 0.0) || !(self.prune_tol > 0.0) {
            return Err(SnsmError::InvalidParams("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(SnsmError::InvalidParams("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Upper scale bound used for the sample `z` at location `mu`.
    pub fn upper_bound(&self, z: &[f64], mu: f64) -> f64 {
        if self.adaptive_upper {
            let spread = z.iter().fold(0.0f64, |m, &x| m.max((x - mu).abs()));
            self.sigma_max.max(2.0 * spread)
        } else {
            self.sigma_max
        }
    }

    /// Geometric candidate grid on `[ell, sigma_max]`, endpoints included.
    pub fn grid(&self) -> Vec<f64> {
        self.grid_to(self.sigma_max)
    }

    /// Geometric candidate grid on `[ell, upper]`.
    pub fn grid_to(&self, upper: f64) -> Vec<f64> {
        let n = self.grid_size;
        let ratio = (upper / self.ell).ln() / (n - 1) as f64;
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    upper
                } else {
                    self.ell * (ratio * k as f64).exp()
                }
            })
            .collect()
    }
}

/// Result of a weighted NPMLE solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NpmleFit {
    pub g: DiscreteMixingDistribution,
    /// Largest directional derivative over the candidate grid and support.
    pub max_dd: f64,
    /// Largest `|D|` over the retained support points.
    pub support_dd: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted log-likelihood `Σ wᵢ ln f_G(zᵢ)` at the returned `G`.
    pub loglik: f64,
    /// Objective value after every solver iteration.
    pub history: Vec<f64>,
}

/// Weighted log-likelihood `Σᵢ wᵢ ln f_SNSM(zᵢ; µ, λ, G)`.
pub fn weighted_loglik(s: &WeightedSample<'_>, mu: f64, lambda: f64, g: &DiscreteMixingDistribution) -> f64 {
    let ln_w: Vec<(f64, f64)> = g.atoms().map(|(sig, w)| (sig, w.ln())).collect();
    s.z.iter()
        .zip(s.w)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&z, &w)| {
            let mut acc = LogSumExp::default();
            for &(sig, lw) in &ln_w {
                acc.push(lw + ln_skew_normal_pdf(z, mu, sig, lambda));
            }
            w * acc.value()
        })
        .sum()
}

/// Directional derivative of the weighted log-likelihood at `G` towards a
/// point mass at `sigma`.
pub fn directional_derivative(
    sigma: f64,
    g: &DiscreteMixingDistribution,
    s: &WeightedSample<'_>,
    mu: f64,
    lambda: f64,
) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(SnsmError::domain("directional_derivative", format!("scale {sigma}")));
    }
    let mut total = 0.0;
    let mut mass = 0.0;
    for (i, (&z, &w)) in s.z.iter().zip(s.w).enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut acc = LogSumExp::default();
        for (sig, p) in g.atoms() {
            acc.push(p.ln() + ln_skew_normal_pdf(z, mu, sig, lambda));
        }
        let ln_f = acc.value();
        if !ln_f.is_finite() {
            return Err(SnsmError::Numeric {
                index: i,
                detail: format!("mixture log-density {ln_f}"),
            });
        }
        total += w * (ln_skew_normal_pdf(z, mu, sigma, lambda) - ln_f).exp();
        mass += w;
    }
    Ok(total - mass)
}

/// Row-scaled kernel matrix over the candidate scales:
/// `scaled[i][c] = exp(ln SN(zᵢ; σ_c) − row_max[i])`.
struct KernelTable {
    scales: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    row_max: Vec<f64>,
    scaled: Vec<f64>,
    mu: f64,
    lambda: f64,
}

impl KernelTable {
    fn build(s: &WeightedSample<'_>, mu: f64, lambda: f64, scales: Vec<f64>) -> Self {
        let (z, w): (Vec<f64>, Vec<f64>) = s.z.iter().zip(s.w).filter(|(_, &w)| w > 0.0).map(|(&z, &w)| (z, w)).unzip();
        let nc = scales.len();
        let mut scaled = vec![0.0; z.len() * nc];
        let mut row_max = vec![0.0; z.len()];
        for (i, &zi) in z.iter().enumerate() {
            let row = &mut scaled[i * nc..(i + 1) * nc];
            let mut m = f64::NEG_INFINITY;
            for (slot, &sig) in row.iter_mut().zip(&scales) {
                *slot = ln_skew_normal_pdf(zi, mu, sig, lambda);
                m = m.max(*slot);
            }
            for slot in row.iter_mut() {
                *slot = (*slot - m).exp();
            }
            row_max[i] = m;
        }
        Self {
            scales,
            z,
            w,
            row_max,
            scaled,
            mu,
            lambda,
        }
    }

    fn n_cols(&self) -> usize {
        self.scales.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        let nc = self.n_cols();
        &self.scaled[i * nc..(i + 1) * nc]
    }

    /// Per-row `ln f(zᵢ)` and the factor `exp(row_max − ln f)` that turns a
    /// scaled kernel entry into the ratio `SN(zᵢ; σ_c)/f(zᵢ)`. Rows whose
    /// scaled mixture underflows are evaluated on the log scale.
    fn mixture(&self, atoms: &[(usize, f64)]) -> Result<(Vec<f64>, Vec<RowFactor>)> {
        let mut ln_f = Vec::with_capacity(self.z.len());
        let mut factors = Vec::with_capacity(self.z.len());
        for i in 0..self.z.len() {
            let row = self.row(i);
            let f: f64 = atoms.iter().map(|&(c, p)| p * row[c]).sum();
            if f > 1e-250 {
                ln_f.push(self.row_max[i] + f.ln());
                factors.push(RowFactor::Scaled(1.0 / f));
            } else {
                let mut acc = LogSumExp::default();
                for &(c, p) in atoms {
                    acc.push(p.ln() + ln_skew_normal_pdf(self.z[i], self.mu, self.scales[c], self.lambda));
                }
                let v = acc.value();
                if !v.is_finite() {
                    return Err(SnsmError::Numeric {
                        index: i,
                        detail: format!("mixture log-density {v}"),
                    });
                }
                ln_f.push(v);
                factors.push(RowFactor::Log(v));
            }
        }
        Ok((ln_f, factors))
    }

    fn ratio(&self, i: usize, c: usize, factor: &RowFactor) -> f64 {
        match *factor {
            RowFactor::Scaled(inv) => self.row(i)[c] * inv,
            RowFactor::Log(ln_f) => (ln_skew_normal_pdf(self.z[i], self.mu, self.scales[c], self.lambda) - ln_f).exp(),
        }
    }

    /// Directional derivatives at every candidate column.
    fn derivatives(&self, factors: &[RowFactor]) -> Vec<f64> {
        let nc = self.n_cols();
        let mut d = vec![0.0; nc];
        let mut mass = 0.0;
        for (i, factor) in factors.iter().enumerate() {
            let w = self.w[i];
            mass += w;
            match *factor {
                RowFactor::Scaled(inv) => {
                    let coef = w * inv;
                    for (dc, &k) in d.iter_mut().zip(self.row(i)) {
                        *dc += coef * k;
                    }
                }
                RowFactor::Log(_) => {
                    for (c, dc) in d.iter_mut().enumerate() {
                        *dc += w * self.ratio(i, c, factor);
                    }
                }
            }
        }
        d.iter_mut().for_each(|x| *x -= mass);
        d
    }

    fn objective(&self, ln_f: &[f64]) -> f64 {
        ln_f.iter().zip(&self.w).map(|(l, w)| w * l).sum()
    }
}

#[derive(Debug, Clone, Copy)]
enum RowFactor {
    Scaled(f64),
    Log(f64),
}

/// Minimises `½ xᵀHx − gᵀx` over the simplex `{x ≥ 0, Σx = 1}` by a
/// primal active-set method started from the feasible point `x0`.
pub(crate) fn simplex_qp(h: &DMatrix<f64>, g: &DVector<f64>, x0: &[f64]) -> Option<DVector<f64>> {
    let n = g.len();
    let mut x = DVector::from_column_slice(x0);
    let mut free: Vec<bool> = x0.iter().map(|&v| v > 0.0).collect();
    if !free.iter().any(|&f| f) {
        return None;
    }
    let scale = (0..n).map(|j| h[(j, j)].abs()).fold(0.0, f64::max).max(g.amax()).max(1e-300);
    let tol = 1e-13 * scale;
    for _ in 0..(5 * n + 20) {
        let idx: Vec<usize> = (0..n).filter(|&j| free[j]).collect();
        if idx.is_empty() {
            return None;
        }
        let y = solve_sub(h, g, &idx)?;
        let ones = DVector::from_element(idx.len(), 1.0);
        let u = solve_sub_rhs(h, &ones, &idx)?;
        let su: f64 = u.iter().sum();
        if !(su.abs() > 0.0) {
            return None;
        }
        let nu = (y.iter().sum::<f64>() - 1.0) / su;
        let target: Vec<f64> = (0..idx.len()).map(|a| y[a] - nu * u[a]).collect();
        if target.iter().all(|&v| v >= 0.0) {
            for (&j, &v) in idx.iter().zip(&target) {
                x[j] = v;
            }
            // Lagrangian gradient at the fixed coordinates
            let q = h * &x - g;
            let release = (0..n)
                .filter(|&j| !free[j])
                .map(|j| (j, q[j] + nu))
                .filter(|&(_, m)| m < -tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match release {
                Some((j, _)) => free[j] = true,
                None => return Some(x),
            }
        } else {
            // move towards the target until a coordinate reaches zero
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (a, &j) in idx.iter().enumerate() {
                if target[a] < 0.0 {
                    let t = x[j] / (x[j] - target[a]);
                    if t < alpha {
                        alpha = t;
                        blocking = Some(j);
                    }
                }
            }
            for (a, &j) in idx.iter().enumerate() {
                x[j] += alpha * (target[a] - x[j]);
                if x[j] <= 0.0 {
                    x[j] = 0.0;
                }
            }
            if let Some(j) = blocking {
                x[j] = 0.0;
                free[j] = false;
            }
            for &j in &idx {
                if x[j] == 0.0 {
                    free[j] = false;
                }
            }
            if !free.iter().any(|&f| f) {
                return None;
            }
        }
    }
    Some(x)
}

fn solve_sub(h: &DMatrix<f64>, g: &DVector<f64>, idx: &[usize]) -> Option<DVector<f64>> {
    let rhs = DVector::from_fn(idx.len(), |a, _| g[idx[a]]);
    solve_sub_rhs(h, &rhs, idx)
}

/// Solves `H[idx, idx] v = rhs`, falling back to a pseudo-inverse when the
/// block is numerically singular.
fn solve_sub_rhs(h: &DMatrix<f64>, rhs: &DVector<f64>, idx: &[usize]) -> Option<DVector<f64>> {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| h[(idx[a], idx[b])]);
    if let Some(ch) = sub.clone().cholesky() {
        let v = ch.solve(rhs);
        if v.iter().all(|x| x.is_finite()) {
            return Some(v);
        }
    }
    let svd = sub.svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    svd.solve(rhs, eps).ok().filter(|v| v.iter().all(|x| x.is_finite()))
}

/// Grid optimality: `D ≤ tol` everywhere and `D ≥ −tol` on the support.
fn certified(d: &[f64], atoms: &[(usize, f64)], tol: f64) -> bool {
    let max_d = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_support = atoms.iter().map(|&(c, _)| d[c]).fold(f64::INFINITY, f64::min);
    max_d <= tol && min_support >= -tol
}

fn locate(scales: &[f64], s: f64) -> Option<usize> {
    scales.iter().position(|&x| x == s)
}

/// Weighted NPMLE of the scale distribution for fixed `(µ, λ)`.
///
/// A warm start seeds the support; otherwise the solver starts from the
/// best single grid atom. Hitting `max_iter` returns the best iterate with
/// `converged = false`.
pub fn fit_npmle(
    s: &WeightedSample<'_>,
    mu: f64,
    lambda: f64,
    cfg: &NpmleConfig,
    warm: Option<&DiscreteMixingDistribution>,
) -> Result<NpmleFit> {
    cfg.validate()?;
    let total_w = s.total_weight();
    if !(total_w > 0.0) {
        return Err(SnsmError::InvalidInput("total weight must be positive".into()));
    }
    let mut upper = cfg.upper_bound(s.z, mu);
    if let Some(g0) = warm {
        // atoms placed under an earlier, wider bound stay admissible
        upper = upper.max(*g0.support().last().expect("non-empty support"));
    }
    let mut scales = cfg.grid_to(upper);
    let grid_len = scales.len();
    if let Some(g0) = warm {
        for &sig in g0.support() {
            if !(sig >= cfg.ell && sig <= upper) {
                return Err(SnsmError::InvalidParams(format!(
                    "warm-start atom {sig} outside [{}, {upper}]",
                    cfg.ell
                )));
            }
            if locate(&scales, sig).is_none() {
                scales.push(sig);
            }
        }
    }
    let table = KernelTable::build(s, mu, lambda, scales);

    let tol = cfg.dd_tol * total_w;
    let warm_atoms: Option<Vec<(usize, f64)>> = warm.map(|g0| {
        g0.atoms()
            .map(|(sig, p)| (locate(&table.scales, sig).expect("warm atom present"), p))
            .collect()
    });
    let mut warm_obj = None;

    // atoms as (column, weight)
    let mut atoms: Vec<(usize, f64)> = match &warm_atoms {
        Some(a0) => {
            let (lf, fac) = table.mixture(a0)?;
            warm_obj = Some(table.objective(&lf));
            let d0 = table.derivatives(&fac);
            let mut a = a0.clone();
            let top = grid_len - 1;
            if !certified(&d0, a0, tol) && !a.iter().any(|x| x.0 == top) {
                // a negligible atom at the upper bound keeps every observation
                // covered, so no kernel ratio can overflow
                a.iter_mut().for_each(|x| x.1 *= 1.0 - SAFETY_MASS);
                a.push((top, SAFETY_MASS));
            }
            a
        }
        None => {
            let best = (0..grid_len)
                .map(|c| {
                    let ll: f64 = (0..table.z.len())
                        .map(|i| table.w[i] * (table.row_max[i] + table.row(i)[c].ln()))
                        .sum();
                    (c, ll)
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(c, _)| c)
                .unwrap_or(0);
            vec![(best, 1.0)]
        }
    };

    let (mut ln_f, mut factors) = table.mixture(&atoms)?;
    let mut obj = table.objective(&ln_f);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut d = table.derivatives(&factors);

    for it in 0..cfg.max_iter {
        iterations = it;
        if certified(&d, &atoms, tol) {
            converged = true;
            break;
        }

        // augment the support with local maxima of D on the grid
        let mut cand: Vec<usize> = atoms.iter().map(|a| a.0).collect();
        for c in 0..grid_len {
            let left = if c == 0 { f64::NEG_INFINITY } else { d[c - 1] };
            let right = if c + 1 == grid_len { f64::NEG_INFINITY } else { d[c + 1] };
            if d[c] > tol && d[c] >= left && d[c] >= right && !cand.contains(&c) {
                cand.push(c);
            }
        }
        let k = cand.len();

        // Newton step: nonnegative least squares on the ratio matrix
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut r = vec![0.0; k];
        for (i, factor) in factors.iter().enumerate() {
            let w = table.w[i];
            for (a, &c) in cand.iter().enumerate() {
                r[a] = table.ratio(i, c, factor);
            }
            for a in 0..k {
                let wa = w * r[a];
                for b in a..k {
                    h[(a, b)] += wa * r[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let rhs = DVector::from_fn(k, |a, _| 2.0 * (d[cand[a]] + total_w));
        let current: Vec<f64> = cand
            .iter()
            .map(|&c| atoms.iter().find(|a| a.0 == c).map_or(0.0, |a| a.1))
            .collect();
        let newton: Option<Vec<f64>> = simplex_qp(&h, &rhs, &current).and_then(|x| {
            let sx: f64 = x.iter().map(|v| v.max(0.0)).sum();
            // an ill-conditioned system can return no usable mass
            (sx > 0.0 && sx.is_finite()).then(|| x.iter().map(|v| v.max(0.0) / sx).collect())
        });
        // multiplicative EM update over the augmented support; new atoms get a
        // small seed mass since the update keeps zeros at zero
        let em: Vec<f64> = {
            let seed = 1e-3 / k as f64;
            let mut t: Vec<f64> = current
                .iter()
                .zip(&cand)
                .map(|(&p, &c)| if p > 0.0 { p } else { seed } * (d[c] + total_w) / total_w)
                .collect();
            let st: f64 = t.iter().sum();
            t.iter_mut().for_each(|v| *v /= st);
            t
        };

        // backtracking until the objective strictly rises; the Newton target
        // first, then the EM target
        let mut accepted = None;
        for target in newton.iter().chain(std::iter::once(&em)) {
            let mut alpha = 1.0;
            for _ in 0..50 {
                let trial: Vec<(usize, f64)> = cand
                    .iter()
                    .zip(target.iter().zip(&current))
                    .map(|(&c, (&t, &p))| (c, p + alpha * (t - p)))
                    .filter(|&(_, p)| p > 0.0)
                    .collect();
                if trial.is_empty() {
                    break;
                }
                let (lf, fac) = table.mixture(&trial)?;
                let o = table.objective(&lf);
                if o > obj {
                    accepted = Some((trial, lf, fac, o));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((mut trial, lf, fac, o)) = accepted else {
            // no ascent possible at working precision
            break;
        };

        // prune vanishing atoms and renormalise, unless that gives back the
        // gain of this iteration
        let mut kept: Vec<(usize, f64)> = trial.iter().copied().filter(|&(_, p)| p > cfg.prune_tol).collect();
        let mut pruned = None;
        if kept.len() != trial.len() && !kept.is_empty() {
            let m: f64 = kept.iter().map(|a| a.1).sum();
            kept.iter_mut().for_each(|a| a.1 /= m);
            let (lf2, fac2) = table.mixture(&kept)?;
            let o2 = table.objective(&lf2);
            if o2 > obj {
                pruned = Some((kept, lf2, fac2, o2));
            }
        }
        match pruned {
            Some((kept, lf2, fac2, o2)) => {
                trial = kept;
                ln_f = lf2;
                factors = fac2;
                obj = o2;
            }
            None => {
                ln_f = lf;
                factors = fac;
                obj = o;
            }
        }
        atoms = trial;
        history.push(obj);
        d = table.derivatives(&factors);
        iterations = it + 1;
    }
    let _ = ln_f;
    if let (Some(w0), Some(a0)) = (warm_obj, warm_atoms) {
        if w0 > obj {
            // never hand back something worse than the warm start
            atoms = a0;
            factors = table.mixture(&atoms)?.1;
            d = table.derivatives(&factors);
            obj = w0;
            converged = certified(&d, &atoms, tol);
        }
    }

    let max_dd = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let support_dd = atoms.iter().map(|&(c, _)| d[c].abs()).fold(0.0, f64::max);
    atoms.sort_by(|a, b| table.scales[a.0].total_cmp(&table.scales[b.0]));
    let pairs: Vec<(f64, f64)> = atoms.iter().map(|&(c, p)| (table.scales[c], p)).collect();
    let g = DiscreteMixingDistribution::from_atoms(&pairs, cfg.ell)?;
    Ok(NpmleFit {
        g,
        max_dd,
        support_dd,
        converged,
        iterations,
        loglik: obj,
        history,
    })
}
