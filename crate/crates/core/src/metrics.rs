//! Evaluation instruments: accuracy, corruption error, pointwise importance,
//! ensemble diversity and corruption uniformity.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::corruptions::Family;
use crate::ensemble::PredictionMatrix;
use crate::error::{Error, Result};
use crate::geometry::{dist2, PointCloud};

/// Fraction of positions where `predicted == labels`.
pub fn overall_accuracy(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: labels.len() });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyEval);
    }
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Error rates per family, indexed by severity 1..=5.
pub type FamilyErrors = BTreeMap<Family, [f64; 5]>;

/// Per-family corruption error and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionError {
    pub ce: BTreeMap<Family, f64>,
    pub mce: f64,
}

/// `CE_f = sum_s err_model(f, s) / sum_s err_ref(f, s)`, `mCE` = mean of
/// `CE_f` over the families present in `model`.
pub fn corruption_error(model: &FamilyErrors, reference: &FamilyErrors) -> Result<CorruptionError> {
    if model.is_empty() {
        return Err(Error::EmptyEval);
    }
    let mut ce = BTreeMap::new();
    for (&family, errs) in model {
        let reference_sum: f64 = reference
            .get(&family)
            .ok_or_else(|| Error::BadConfig(format!("reference has no errors for {family}")))?
            .iter()
            .sum();
        if reference_sum <= 0.0 {
            return Err(Error::ZeroReferenceError(family.name().into()));
        }
        ce.insert(family, errs.iter().sum::<f64>() / reference_sum);
    }
    let mce = ce.values().sum::<f64>() / ce.len() as f64;
    Ok(CorruptionError { ce, mce })
}

/// `Imp(j)`: how many feature columns attain their maximum at row `j`
/// (lowest row wins ties), so the counts sum to the column count.
pub fn pointwise_importance(features: &Array2<f64>) -> Vec<usize> {
    let mut imp = vec![0; features.nrows()];
    if features.nrows() == 0 {
        return imp;
    }
    for col in features.columns() {
        let mut best = 0;
        for (j, &v) in col.iter().enumerate() {
            if v > col[best] {
                best = j;
            }
        }
        imp[best] += 1;
    }
    imp
}

/// Pearson correlation between the rows of `matrix`, computed across the
/// class dimension. A constant row has correlation 0 with every other row
/// and 1 with itself.
pub fn correlation_matrix(matrix: &PredictionMatrix) -> Array2<f64> {
    let rows = matrix.rows();
    let k = rows.len();
    let centered: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let p = r.probs();
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            p.iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centered.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut out = Array2::eye(k);
    for i in 0..k {
        for j in i + 1..k {
            let r = if norms[i] > 0.0 && norms[j] > 0.0 {
                let dot: f64 = centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            out[[i, j]] = r;
            out[[j, i]] = r;
        }
    }
    out
}

/// Inverse diversity `c = mean_i ||C_i - I||_F^2 / (K^2 - K)` over samples,
/// where `C_i` is the member correlation matrix of sample `i`.
pub fn diversity_c(matrices: &[PredictionMatrix]) -> Result<f64> {
    let first = matrices.first().ok_or(Error::EmptyEval)?;
    let k = first.len();
    if k < 2 {
        return Err(Error::BadK { k, n: k, min: 2, max: usize::MAX });
    }
    let mut total = 0.0;
    for m in matrices {
        if m.len() != k {
            return Err(Error::LengthMismatch { left: m.len(), right: k });
        }
        let c = correlation_matrix(m);
        let off: f64 = c.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v * v).sum();
        total += off / (k * k - k) as f64;
    }
    Ok(total / matrices.len() as f64)
}

/// Element-wise mean of the member correlation matrices.
pub fn mean_correlation(matrices: &[PredictionMatrix]) -> Result<Array2<f64>> {
    let first = matrices.first().ok_or(Error::EmptyEval)?;
    let mut acc = Array2::zeros((first.len(), first.len()));
    for m in matrices {
        if m.len() != first.len() {
            return Err(Error::LengthMismatch { left: m.len(), right: first.len() });
        }
        acc += &correlation_matrix(m);
    }
    Ok(acc / matrices.len() as f64)
}

/// Number of clean points matched to a distinct corrupted point within
/// `epsilon`, pairing nearest pairs first. `epsilon = 0` requires equal
/// coordinates.
pub fn matched_points(clean: &PointCloud, corrupted: &PointCloud, epsilon: f64) -> usize {
    let eps2 = epsilon * epsilon;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in clean.points().iter().enumerate() {
        for (j, q) in corrupted.points().iter().enumerate() {
            let d = dist2(p, q);
            if d <= eps2 {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_clean = vec![false; clean.len()];
    let mut used_corrupt = vec![false; corrupted.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_clean[i] && !used_corrupt[j] {
            used_clean[i] = true;
            used_corrupt[j] = true;
            matched += 1;
        }
    }
    matched
}

/// `u = 1 - |matched| / max(N, M)`.
pub fn uniformity(clean: &PointCloud, corrupted: &PointCloud, epsilon: f64) -> f64 {
    let matched = matched_points(clean, corrupted, epsilon);
    1.0 - matched as f64 / clean.len().max(corrupted.len()) as f64
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or the lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// Evaluation summary for one model or aggregation rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub overall_accuracy: f64,
    /// Error rate per family and severity (index 0 is severity 1); `null`
    /// for severities that were not evaluated.
    pub error_rates: BTreeMap<String, [Option<f64>; 5]>,
    pub ce: BTreeMap<String, f64>,
    pub mce: f64,
    pub diversity_c: Option<f64>,
    pub metadata: BTreeMap<String, String>,
}

impl EvalReport {
    /// One CSV row per evaluated family and severity.
    pub fn csv_rows(&self) -> Vec<String> {
        let mut rows = Vec::new();
        for (family, errs) in &self.error_rates {
            for (s, e) in errs.iter().enumerate() {
                if let Some(e) = e {
                    rows.push(format!("{},{},{},{}", self.model, family, s + 1, e));
                }
            }
        }
        rows
    }

    pub fn family_errors(&self) -> Result<FamilyErrors> {
        self.error_rates
            .iter()
            .map(|(f, errs)| Ok((f.parse::<Family>()?, errs.map(|e| e.unwrap_or(0.0)))))
            .collect()
    }
}

pub const CSV_HEADER: &str = "model,family,severity,error_rate";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::PredictionVector;
    use ndarray::array;

    fn matrix(rows: &[&[f64]]) -> PredictionMatrix {
        PredictionMatrix::new(rows.iter().map(|r| PredictionVector(r.to_vec())).collect()).unwrap()
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(overall_accuracy(&[0, 1], &[0, 1]).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[0, 0], &[0, 1]).unwrap(), 0.5);
        assert!(matches!(overall_accuracy(&[], &[]), Err(Error::EmptyEval)));
        assert!(matches!(overall_accuracy(&[1], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ce_self_and_half() {
        let reference: FamilyErrors = Family::ALL.iter().map(|&f| (f, [0.1, 0.2, 0.3, 0.4, 0.5])).collect();
        let r = corruption_error(&reference, &reference).unwrap();
        assert_eq!(r.mce, 1.0);
        assert!(r.ce.values().all(|&v| v == 1.0));
        let half: FamilyErrors = reference.iter().map(|(&f, e)| (f, e.map(|v| v / 2.0))).collect();
        assert!((corruption_error(&half, &reference).unwrap().mce - 0.5).abs() < 1e-12);
        let mut zero = reference.clone();
        zero.insert(Family::Jitter, [0.0; 5]);
        assert!(matches!(corruption_error(&reference, &zero), Err(Error::ZeroReferenceError(_))));
    }

    #[test]
    fn importance_by_hand() {
        let f = array![[1.0, 5.0], [2.0, 3.0], [0.0, 4.0]];
        assert_eq!(pointwise_importance(&f), vec![1, 1, 0]);
        let single = array![[0.3, -1.0, 2.0]];
        assert_eq!(pointwise_importance(&single), vec![3]);
        let ties = array![[1.0, 1.0], [1.0, 1.0]];
        assert_eq!(pointwise_importance(&ties), vec![2, 0]);
    }

    #[test]
    fn diversity_cases() {
        let same = matrix(&[&[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1], &[0.7, 0.2, 0.1]]);
        assert!((diversity_c(&[same]).unwrap() - 1.0).abs() < 1e-12);
        let anti = matrix(&[&[0.6, 0.4], &[0.4, 0.6]]);
        assert!((correlation_matrix(&anti)[[0, 1]] + 1.0).abs() < 1e-12);
        assert!((diversity_c(&[anti]).unwrap() - 1.0).abs() < 1e-12);
        let flat = matrix(&[&[0.5, 0.5], &[0.6, 0.4]]);
        assert_eq!(diversity_c(&[flat]).unwrap(), 0.0);
        let one = matrix(&[&[1.0, 0.0]]);
        assert!(matches!(diversity_c(&[one]), Err(Error::BadK { .. })));
    }

    #[test]
    fn uniformity_cases() {
        let pts: Vec<_> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        let clean = PointCloud::new(pts.clone()).unwrap();
        assert_eq!(uniformity(&clean, &clean, 0.0), 0.0);
        let moved = PointCloud::new(pts.iter().map(|p| [p[0], 1.0, 0.0]).collect()).unwrap();
        assert_eq!(uniformity(&clean, &moved, 0.0), 1.0);
        let dropped = PointCloud::new(pts[4..].to_vec()).unwrap();
        assert!((uniformity(&clean, &dropped, 0.0) - 0.4).abs() < 1e-12);
        // one corrupted point can only match one clean point
        let dup = PointCloud::new(vec![[0.0; 3], [0.0; 3]]).unwrap();
        let single = PointCloud::new(vec![[0.0; 3]]).unwrap();
        assert_eq!(uniformity(&dup, &single, 0.0), 0.5);
        assert_eq!(uniformity(&clean, &moved, 1.0), 0.0);
    }

    #[test]
    fn spearman_cases() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 3.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }
}
