//! Gene-expression matrix to z-scores: pooled two-sample t-statistic,
//! two-sided p-value and probit transform `z = Φ⁻¹(1 − P)`.
//!
//! Genes with zero pooled variance, and genes whose `1 − P` vanishes
//! (`z = −∞`), are flagged and excluded rather than clamped.

use crate::error::{Result, SnsmError};
use crate::special::{normal_quantile, student_t_two_sided};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Expression levels, one row per gene, with a group label in `{1, 2}` per
/// sample column.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    values: Vec<Vec<f64>>,
    gene_ids: Vec<String>,
    groups: Vec<u8>,
}

impl ExpressionMatrix {
    pub fn new(values: Vec<Vec<f64>>, gene_ids: Vec<String>, groups: Vec<u8>) -> Result<Self> {
        if values.is_empty() {
            return Err(SnsmError::InvalidInput("expression matrix has no genes".into()));
        }
        if values.len() != gene_ids.len() {
            return Err(SnsmError::LengthMismatch {
                left: values.len(),
                right: gene_ids.len(),
            });
        }
        if let Some(&g) = groups.iter().find(|&&g| g != 1 && g != 2) {
            return Err(SnsmError::InvalidInput(format!("group label {g} not in {{1, 2}}")));
        }
        let m1 = groups.iter().filter(|&&g| g == 1).count();
        let m2 = groups.len() - m1;
        if m1 < 2 || m2 < 2 {
            return Err(SnsmError::InvalidInput(format!(
                "each group needs at least 2 samples (got {m1} and {m2})"
            )));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != groups.len() {
                return Err(SnsmError::InvalidInput(format!(
                    "gene {} has {} values, expected {}",
                    gene_ids[i],
                    row.len(),
                    groups.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(SnsmError::InvalidInput(format!(
                    "gene {} has non-finite value {v}",
                    gene_ids[i]
                )));
            }
        }
        Ok(Self {
            values,
            gene_ids,
            groups,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.values.len()
    }

    pub fn n_samples(&self) -> usize {
        self.groups.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Indices of the `k` genes with the highest minimal intensity, in input
    /// order. Ties go to the earlier gene.
    pub fn top_k_by_min_intensity(&self, k: usize) -> Result<Vec<usize>> {
        if k > self.n_genes() {
            return Err(SnsmError::InvalidInput(format!(
                "top-k {k} exceeds gene count {}",
                self.n_genes()
            )));
        }
        let mut order: Vec<(usize, f64)> = self
            .values
            .iter()
            .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
            .enumerate()
            .collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut keep: Vec<usize> = order.into_iter().take(k).map(|(i, _)| i).collect();
        keep.sort_unstable();
        Ok(keep)
    }
}

/// Why a gene was left out of the z-score set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Pooled within-group variance is zero.
    DegenerateVariance,
    /// `1 − P` underflows, so `z = −∞`.
    NullDegenerate,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::DegenerateVariance => "degenerate_variance",
            ExclusionReason::NullDegenerate => "null_degenerate",
        })
    }
}

/// How the p-value is formed from the t-statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueConvention {
    /// `P = P(|T| ≥ |t|)`, symmetric in the sign of `t`.
    #[default]
    Symmetric,
    /// `P = 1 − F₀(t) + F₀(−t)` taken literally: exceeds one for `t < 0`,
    /// which then has no finite z-score and is excluded.
    Signed,
}

/// Pooled two-sample t-statistic with its degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledT {
    pub t: f64,
    pub nu: u32,
}

fn mean_and_ss(mut xs: Vec<f64>) -> (f64, f64) {
    // sorted summation makes the result independent of column order
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss)
}

/// Pooled t-statistic of group 1 versus group 2 for one gene.
///
/// Returns [`SnsmError::Degenerate`] when the pooled variance is zero at
/// the working precision.
pub fn pooled_t_statistic(row: &[f64], groups: &[u8]) -> Result<PooledT> {
    if row.len() != groups.len() {
        return Err(SnsmError::LengthMismatch {
            left: row.len(),
            right: groups.len(),
        });
    }
    let g1: Vec<f64> = row.iter().zip(groups).filter(|(_, &g)| g == 1).map(|(&x, _)| x).collect();
    let g2: Vec<f64> = row.iter().zip(groups).filter(|(_, &g)| g == 2).map(|(&x, _)| x).collect();
    let (m1, m2) = (g1.len(), g2.len());
    if m1 == 0 || m2 == 0 || m1 + m2 < 3 {
        return Err(SnsmError::InvalidInput(format!(
            "pooled t needs both groups non-empty and at least 3 samples (got {m1}, {m2})"
        )));
    }
    let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let (mean1, ss1) = mean_and_ss(g1);
    let (mean2, ss2) = mean_and_ss(g2);
    let nu = m1 + m2 - 2;
    let s2 = (ss1 + ss2) / nu as f64;
    let noise = 16.0 * f64::EPSILON * scale;
    if !(s2 > noise * noise) {
        return Err(SnsmError::Degenerate(format!("pooled variance {s2:e}")));
    }
    let t = (mean1 - mean2) / (s2.sqrt() * (1.0 / m1 as f64 + 1.0 / m2 as f64).sqrt());
    Ok(PooledT { t, nu: nu as u32 })
}

/// Two-sided p-value `P(|T_ν| ≥ |t|)`.
pub fn two_sided_pvalue(t: f64, nu: u32) -> Result<f64> {
    Ok(student_t_two_sided(t, nu)?.0)
}

/// `z = Φ⁻¹(1 − P)`, evaluated as `−Φ⁻¹(P)`. `Ok(None)` flags the
/// null-degenerate case where `1 − P` vanishes.
pub fn z_transform(p: f64) -> Result<Option<f64>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SnsmError::domain("z_transform", format!("p-value {p} outside (0, 1]")));
    }
    if p == 1.0 {
        return Ok(None);
    }
    Ok(Some(-normal_quantile(p)?))
}

/// z-score from a p-value and its separately computed complement.
fn z_from_pair(p: f64, q: f64) -> Result<Option<f64>> {
    if !(q > 0.0) {
        return Ok(None);
    }
    if p < 0.5 {
        Ok(Some(-normal_quantile(p)?))
    } else {
        Ok(Some(normal_quantile(q)?))
    }
}

/// One gene's entry in a [`ZScoreSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreRecord {
    pub gene_id: String,
    pub t: Option<f64>,
    pub nu: u32,
    pub p_value: Option<f64>,
    pub z: Option<f64>,
    pub excluded: Option<ExclusionReason>,
}

/// Per-gene z-scores with exclusion flags, in input gene order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ZScoreSet {
    pub records: Vec<ZScoreRecord>,
}

impl ZScoreSet {
    /// Retained `(gene_id, z)` pairs.
    pub fn retained(&self) -> impl Iterator<Item = (&str, f64)> {
        self.records
            .iter()
            .filter_map(|r| r.z.filter(|_| r.excluded.is_none()).map(|z| (r.gene_id.as_str(), z)))
    }

    pub fn retained_z(&self) -> Vec<f64> {
        self.retained().map(|(_, z)| z).collect()
    }

    pub fn count_excluded(&self, reason: ExclusionReason) -> usize {
        self.records.iter().filter(|r| r.excluded == Some(reason)).count()
    }

    pub fn n_retained(&self) -> usize {
        self.records.iter().filter(|r| r.excluded.is_none()).count()
    }
}

/// Options for [`preprocess_matrix`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PreprocessOptions {
    /// Keep only the `k` genes with the highest minimal intensity.
    pub top_k: Option<usize>,
    pub convention: PValueConvention,
}

fn score_gene(gene_id: &str, row: &[f64], groups: &[u8], convention: PValueConvention) -> Result<ZScoreRecord> {
    let nu = (groups.len() - 2) as u32;
    let stat = match pooled_t_statistic(row, groups) {
        Ok(s) => s,
        Err(SnsmError::Degenerate(_)) => {
            return Ok(ZScoreRecord {
                gene_id: gene_id.to_string(),
                t: None,
                nu,
                p_value: None,
                z: None,
                excluded: Some(ExclusionReason::DegenerateVariance),
            })
        }
        Err(e) => return Err(e),
    };
    let (mut p, mut q) = student_t_two_sided(stat.t, stat.nu)?;
    if convention == PValueConvention::Signed && stat.t < 0.0 {
        // 1 − F0(t) + F0(−t) = 1 + (1 − P_sym) for negative t
        p = 1.0 + q;
        q = -q;
    }
    let z = z_from_pair(p, q)?;
    Ok(ZScoreRecord {
        gene_id: gene_id.to_string(),
        t: Some(stat.t),
        nu: stat.nu,
        p_value: Some(p),
        excluded: if z.is_none() {
            Some(ExclusionReason::NullDegenerate)
        } else {
            None
        },
        z,
    })
}

/// Full preprocessing: optional top-K filter, then per-gene t-statistic,
/// p-value and z-score. Per-gene exclusions never abort the batch.
pub fn preprocess_matrix(m: &ExpressionMatrix, opts: &PreprocessOptions) -> Result<ZScoreSet> {
    let keep: Vec<usize> = match opts.top_k {
        Some(k) => m.top_k_by_min_intensity(k)?,
        None => (0..m.n_genes()).collect(),
    };
    let records = keep
        .par_iter()
        .map(|&i| score_gene(&m.gene_ids[i], &m.values[i], &m.groups, opts.convention))
        .collect::<Result<Vec<_>>>()?;
    Ok(ZScoreSet { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_cdf;

    fn groups(m1: usize, m2: usize) -> Vec<u8> {
        std::iter::repeat(1).take(m1).chain(std::iter::repeat(2).take(m2)).collect()
    }

    #[test]
    fn t_is_zero_for_equal_means_and_antisymmetric() {
        let row = [1.0, 2.0, 3.0, 3.0, 2.0, 1.0];
        let s = pooled_t_statistic(&row, &groups(3, 3)).unwrap();
        assert_eq!(s.t, 0.0);
        assert_eq!(s.nu, 4);
        let row = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let a = pooled_t_statistic(&row, &groups(3, 4)).unwrap();
        let swapped: Vec<u8> = groups(3, 4).iter().map(|g| 3 - g).collect();
        let b = pooled_t_statistic(&row, &swapped).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.nu, b.nu);
    }

    #[test]
    fn t_matches_hand_formula() {
        // group 1 {1,2,3}: mean 2, s² = 1; group 2 {4,5,6,7}: mean 5.5, s² = 5/3
        // s_p² = (2·1 + 3·5/3)/5 = 7/5; t = −3.5 / sqrt(7/5 · (1/3 + 1/4))
        let row = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let s = pooled_t_statistic(&row, &groups(3, 4)).unwrap();
        let expected = -3.5 / (1.4f64 * (1.0 / 3.0 + 0.25)).sqrt();
        assert!((s.t - expected).abs() < 1e-14);
        assert_eq!(s.nu, 5);
    }

    #[test]
    fn flat_gene_is_degenerate() {
        let row = [0.1; 6];
        assert!(matches!(
            pooled_t_statistic(&row, &groups(3, 3)),
            Err(SnsmError::Degenerate(_))
        ));
    }

    #[test]
    fn pvalue_edge_cases() {
        assert_eq!(two_sided_pvalue(0.0, 8).unwrap(), 1.0);
        assert_eq!(two_sided_pvalue(2.1, 12).unwrap(), two_sided_pvalue(-2.1, 12).unwrap());
        let p = two_sided_pvalue(2.0, 10).unwrap();
        assert!((p - 0.073_388_034_770_740_39).abs() < 1e-12);
    }

    #[test]
    fn z_transform_cases() {
        assert_eq!(z_transform(0.5).unwrap(), Some(0.0));
        assert!((z_transform(0.05).unwrap().unwrap() - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert_eq!(z_transform(1.0).unwrap(), None);
        assert!(z_transform(0.0).is_err());
        assert!(z_transform(1.5).is_err());
        assert!(z_transform(1e-300).unwrap().unwrap() > 37.0);
    }

    #[test]
    fn single_gene_with_equal_means_is_null_degenerate() {
        let m = ExpressionMatrix::new(vec![vec![1.0, 2.0, 2.0, 1.0]], vec!["g".into()], groups(2, 2)).unwrap();
        let set = preprocess_matrix(&m, &PreprocessOptions::default()).unwrap();
        assert_eq!(set.records[0].t, Some(0.0));
        assert_eq!(set.records[0].excluded, Some(ExclusionReason::NullDegenerate));
    }

    #[test]
    fn retained_genes_satisfy_cdf_identity() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| (0..8).map(|j| ((i * 7 + j * 13) % 11) as f64 + if j < 4 { 0.1 * i as f64 } else { 0.0 }).collect())
            .collect();
        let ids = (0..40).map(|i| format!("g{i}")).collect();
        let m = ExpressionMatrix::new(rows, ids, groups(4, 4)).unwrap();
        let set = preprocess_matrix(&m, &PreprocessOptions::default()).unwrap();
        for r in &set.records {
            if r.excluded.is_none() {
                let z = r.z.unwrap();
                assert!((normal_cdf(z) - (1.0 - r.p_value.unwrap())).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn signed_convention_drops_negative_statistics() {
        let m = ExpressionMatrix::new(
            vec![vec![5.0, 6.0, 1.0, 2.0, 1.5], vec![1.0, 2.0, 5.0, 6.0, 5.5]],
            vec!["up".into(), "down".into()],
            vec![1, 1, 2, 2, 2],
        )
        .unwrap();
        let opts = PreprocessOptions {
            top_k: None,
            convention: PValueConvention::Signed,
        };
        let set = preprocess_matrix(&m, &opts).unwrap();
        assert!(set.records[0].excluded.is_none());
        assert_eq!(set.records[1].excluded, Some(ExclusionReason::NullDegenerate));
        assert!(set.records[1].p_value.unwrap() > 1.0);
    }

    #[test]
    fn top_k_filter() {
        let m = ExpressionMatrix::new(
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 9.0], vec![0.0, 9.0, 9.0, 9.0]],
            vec!["a".into(), "b".into(), "c".into()],
            groups(2, 2),
        )
        .unwrap();
        assert_eq!(m.top_k_by_min_intensity(3).unwrap(), vec![0, 1, 2]);
        assert_eq!(m.top_k_by_min_intensity(2).unwrap(), vec![0, 1]);
        assert_eq!(m.top_k_by_min_intensity(1).unwrap(), vec![1]);
        assert!(m.top_k_by_min_intensity(4).is_err());
    }

    #[test]
    fn matrix_validation() {
        assert!(ExpressionMatrix::new(vec![vec![1.0, 2.0, 3.0]], vec!["a".into()], vec![1, 2, 2]).is_err());
        assert!(ExpressionMatrix::new(vec![vec![1.0, f64::NAN, 3.0, 4.0]], vec!["a".into()], groups(2, 2)).is_err());
        assert!(ExpressionMatrix::new(vec![vec![1.0, 2.0, 3.0, 4.0]], vec!["a".into()], vec![1, 1, 2, 3]).is_err());
        assert!(ExpressionMatrix::new(vec![], vec![], groups(2, 2)).is_err());
    }
}
