//! Partition agreement: adjusted Rand index and adjusted mutual information.
//!
//! AMI uses the arithmetic mean of the two entropies as normaliser and the
//! permutation-model expected mutual information. Both scores are 1 when
//! both partitions are a single cluster.

use crate::error::{Result, SnsmError};
use std::collections::BTreeMap;

/// Dense contingency table of two labelings.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub counts: Vec<Vec<u64>>,
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(SnsmError::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        if a.len() < 2 {
            return Err(SnsmError::InvalidInput("at least two labels are required".into()));
        }
        let ia = dense(a);
        let ib = dense(b);
        let r = ia.iter().max().map_or(0, |m| m + 1);
        let c = ib.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; c]; r];
        for (&i, &j) in ia.iter().zip(&ib) {
            counts[i][j] += 1;
        }
        let rows = counts.iter().map(|row| row.iter().sum()).collect();
        let cols = (0..c).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
        Ok(Self {
            counts,
            rows,
            cols,
            n: a.len() as u64,
        })
    }
}

fn dense<T: Ord>(x: &[T]) -> Vec<usize> {
    let mut ids = BTreeMap::new();
    x.iter()
        .map(|v| {
            let next = ids.len();
            *ids.entry(v).or_insert(next)
        })
        .collect()
}

fn pairs(k: u64) -> f64 {
    (k * k.saturating_sub(1) / 2) as f64
}

pub fn adjusted_rand_index<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let index: f64 = t.counts.iter().flatten().map(|&k| pairs(k)).sum();
    let sa: f64 = t.rows.iter().map(|&k| pairs(k)).sum();
    let sb: f64 = t.cols.iter().map(|&k| pairs(k)).sum();
    let expected = sa * sb / pairs(t.n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(margins: &[u64], n: u64) -> f64 {
    let n = n as f64;
    margins
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let p = k as f64 / n;
            -p * p.ln()
        })
        .sum()
}

pub fn mutual_information(t: &Contingency) -> f64 {
    let n = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &k) in row.iter().enumerate() {
            if k > 0 {
                let k = k as f64;
                mi += k / n * (n * k / (t.rows[i] as f64 * t.cols[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

fn ln_fact(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// Expected mutual information under random permutations with the
/// observed margins fixed.
pub fn expected_mutual_information(t: &Contingency) -> f64 {
    let n = t.n;
    let nf = n as f64;
    let ln_n = ln_fact(n);
    let mut emi = 0.0;
    for &a in &t.rows {
        for &b in &t.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = ln_fact(a) + ln_fact(b) + ln_fact(n - a) + ln_fact(n - b) - ln_n;
            for k in lo..=hi {
                let kf = k as f64;
                let ln_p = fixed - ln_fact(k) - ln_fact(a - k) - ln_fact(b - k) - ln_fact(n + k - a - b);
                emi += kf / nf * (nf * kf / (a as f64 * b as f64)).ln() * ln_p.exp();
            }
        }
    }
    emi
}

pub fn adjusted_mutual_information<A: Ord, B: Ord>(a: &[A], b: &[B]) -> Result<f64> {
    let t = Contingency::new(a, b)?;
    let (ka, kb) = (t.rows.len(), t.cols.len());
    if (ka == 1 && kb == 1) || (ka as u64 == t.n && kb as u64 == t.n) {
        return Ok(1.0);
    }
    let mi = mutual_information(&t);
    let emi = expected_mutual_information(&t);
    let normaliser = 0.5 * (entropy(&t.rows, t.n) + entropy(&t.cols, t.n));
    let mut denom = normaliser - emi;
    if denom < 0.0 {
        denom = denom.min(-f64::EPSILON);
    } else {
        denom = denom.max(f64::EPSILON);
    }
    Ok((mi - emi) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_partitions() {
        let a = [0, 0, 1, 1, 2, 2, 2];
        let b = ["x", "x", "y", "y", "z", "z", "z"];
        assert!((adjusted_rand_index(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((adjusted_mutual_information(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_conventions() {
        let one = [0; 6];
        let b = [0, 1, 0, 1, 1, 0];
        assert_eq!(adjusted_mutual_information(&one, &b).unwrap(), 0.0);
        assert_eq!(adjusted_rand_index(&one, &b).unwrap(), 0.0);
        assert_eq!(adjusted_mutual_information(&one, &one).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&one, &one).unwrap(), 1.0);
    }

    #[test]
    fn four_point_example() {
        // pairs: agreements on 'same' = 0; the closed form gives -0.5
        let v = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!((v + 0.5).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
        assert!(adjusted_mutual_information(&[0], &[0]).is_err());
    }
}
