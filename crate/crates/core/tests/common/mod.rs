//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerical code except where noted.

#![allow(dead_code)]

use std::f64::consts::PI;

pub fn norm_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / std::f64::consts::SQRT_2)
}

/// `(2/σ) φ(u) Φ(λu)` by the textbook formula.
pub fn sn_pdf(z: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    let u = (z - mu) / sigma;
    2.0 / sigma * norm_pdf(u) * norm_cdf(lambda * u)
}

pub fn mix_pdf(z: f64, mu: f64, lambda: f64, atoms: &[(f64, f64)]) -> f64 {
    atoms.iter().map(|&(s, p)| p * sn_pdf(z, mu, s, lambda)).sum()
}

pub fn weighted_ll(z: &[f64], w: &[f64], mu: f64, lambda: f64, atoms: &[(f64, f64)]) -> f64 {
    z.iter()
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&x, &wi)| wi * mix_pdf(x, mu, lambda, atoms).ln())
        .sum()
}

/// Double-loop directional derivative towards a point mass at `sigma`.
pub fn dd(sigma: f64, z: &[f64], w: &[f64], mu: f64, lambda: f64, atoms: &[(f64, f64)]) -> f64 {
    z.iter()
        .zip(w)
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&x, &wi)| wi * (sn_pdf(x, mu, sigma, lambda) / mix_pdf(x, mu, lambda, atoms) - 1.0))
        .sum()
}

/// Optimum of the weighted log-likelihood over distributions on `grid`,
/// bracketed by plain EM: returns `(lower, upper)` where `lower` is the EM
/// iterate's value and `upper` adds the largest directional derivative
/// (concavity bound).
pub fn grid_optimum(z: &[f64], w: &[f64], mu: f64, lambda: f64, grid: &[f64], iters: usize) -> (f64, f64) {
    let k = grid.len();
    let dens: Vec<Vec<f64>> = z.iter().map(|&x| grid.iter().map(|&s| sn_pdf(x, mu, s, lambda)).collect()).collect();
    let total: f64 = w.iter().sum();
    let mut p = vec![1.0 / k as f64; k];
    let mut next = vec![0.0; k];
    for _ in 0..iters {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (row, &wi) in dens.iter().zip(w) {
            let f: f64 = row.iter().zip(&p).map(|(d, q)| d * q).sum();
            for j in 0..k {
                next[j] += wi * row[j] * p[j] / f;
            }
        }
        for j in 0..k {
            p[j] = next[j] / total;
        }
    }
    let atoms: Vec<(f64, f64)> = grid.iter().copied().zip(p.iter().copied()).collect();
    let ll = weighted_ll(z, w, mu, lambda, &atoms);
    let gap = grid
        .iter()
        .map(|&s| dd(s, z, w, mu, lambda, &atoms))
        .fold(0.0f64, f64::max);
    (ll, ll + gap)
}

/// Student-t density from the gamma-function normaliser.
pub fn t_pdf(t: f64, nu: f64) -> f64 {
    let c = libm::lgamma(0.5 * (nu + 1.0)) - libm::lgamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (c - 0.5 * (nu + 1.0) * (1.0 + t * t / nu).ln()).exp()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `F(t)` by adaptive quadrature of the density, using the symmetry of the
/// distribution and the substitution `t = tan θ` for the tail.
pub fn t_cdf_quadrature(t: f64, nu: f64) -> f64 {
    let upper_tail = |x: f64| {
        // P(T > x) for x ≥ 0 on θ ∈ [atan x, π/2)
        let g = |th: f64| {
            let c = th.cos();
            if c <= 0.0 {
                0.0
            } else {
                t_pdf(th.tan(), nu) / (c * c)
            }
        };
        integrate(&g, x.atan(), 0.5 * PI, 1e-15)
    };
    if t >= 0.0 {
        1.0 - upper_tail(t)
    } else {
        upper_tail(-t)
    }
}

/// All labelings of `n` points as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |m| m + 1);
        for l in 0..=next {
            prefix.push(l);
            rec(prefix, n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), n, &mut out);
    out
}

/// Rand index corrected for chance by counting agreeing pairs directly.
pub fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1.0;
            in_a += sa as u8 as f64;
            in_b += sb as u8 as f64;
            both += (sa && sb) as u8 as f64;
        }
    }
    let expected = in_a * in_b / pairs;
    let max = 0.5 * (in_a + in_b);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

fn mi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut c = vec![vec![0.0; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        c[x][y] += 1.0;
    }
    let ra: Vec<f64> = c.iter().map(|r| r.iter().sum()).collect();
    let rb: Vec<f64> = (0..kb).map(|j| c.iter().map(|r| r[j]).sum()).collect();
    let mut v = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            if c[i][j] > 0.0 {
                v += c[i][j] / n * (n * c[i][j] / (ra[i] * rb[j])).ln();
            }
        }
    }
    v
}

fn entropy(a: &[usize]) -> f64 {
    let n = a.len() as f64;
    let k = a.iter().max().unwrap() + 1;
    (0..k)
        .map(|l| a.iter().filter(|&&x| x == l).count() as f64 / n)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Expected mutual information averaged over every permutation of the
/// second labeling.
pub fn emi_exhaustive(a: &[usize], b: &[usize]) -> f64 {
    let perms = permutations(a.len());
    perms
        .iter()
        .map(|p| {
            let bp: Vec<usize> = p.iter().map(|&i| b[i]).collect();
            mi(a, &bp)
        })
        .sum::<f64>()
        / perms.len() as f64
}

/// Cluster sizes in decreasing order; the expected mutual information
/// depends on nothing else.
pub fn margins(a: &[usize]) -> Vec<usize> {
    let k = a.iter().max().unwrap() + 1;
    let mut m: Vec<usize> = (0..k).map(|l| a.iter().filter(|&&x| x == l).count()).collect();
    m.sort_unstable_by(|x, y| y.cmp(x));
    m
}

pub fn ami_with_emi(a: &[usize], b: &[usize], emi: f64) -> f64 {
    let denom = 0.5 * (entropy(a) + entropy(b)) - emi;
    if denom.abs() < 1e-12 {
        return 1.0;
    }
    (mi(a, b) - emi) / denom
}
