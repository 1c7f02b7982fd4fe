//! Volume-under-the-surface metrics.
//!
//! For each buffer width `l` in `0..=max_buffer`, the binary labels are
//! softened by a linear ramp of width `l` at each anomaly-segment boundary
//! (positions `k` steps outside a segment get `1 - k/(l+1)`, overlaps take
//! the max). ROC/PR areas are computed over the continuous labels at every
//! distinct threshold, and the volume is the mean of the per-width areas.
//! Width 0 reuses the plain AUC code paths, so V at L=0 equals A exactly.

use crate::numerics::Real;
use crate::{Error, Result};

use super::{auc_pr, auc_roc};

/// Soften binary labels with ramps of width `l` around each segment.
pub fn soften_labels(labels: &[u8], l: usize) -> Vec<Real> {
    let n = labels.len();
    let mut y: Vec<Real> = labels.iter().map(|&v| v as Real).collect();
    if l == 0 {
        return y;
    }
    let mut t = 0;
    while t < n {
        if labels[t] == 1 {
            let start = t;
            while t < n && labels[t] == 1 {
                t += 1;
            }
            let end = t; // exclusive
            for k in 1..=l {
                let ramp = 1.0 - k as Real / (l + 1) as Real;
                if start >= k {
                    let idx = start - k;
                    y[idx] = y[idx].max(ramp);
                }
                if end + k - 1 < n {
                    let idx = end + k - 1;
                    y[idx] = y[idx].max(ramp);
                }
            }
        } else {
            t += 1;
        }
    }
    y
}

/// Threshold groups in descending score order: (tp_cum, count_cum) after
/// each distinct threshold, with continuous relevance `y`.
fn descending_groups(scores: &[Real], y: &[Real]) -> Vec<(Real, Real)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut out = Vec::new();
    let (mut tp, mut count) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            tp += y[idx];
            count += 1.0;
        }
        out.push((tp, count));
        i = j + 1;
    }
    out
}

/// ROC area with continuous labels: trapezoid over the threshold sweep.
pub(super) fn roc_area_continuous(scores: &[Real], y: &[Real]) -> Result<Real> {
    let total_pos: Real = y.iter().sum();
    let total_neg: Real = y.iter().map(|v| 1.0 - v).sum();
    if total_pos <= 0.0 || total_neg <= 0.0 {
        return Err(Error::MetricUndefined("ROC needs mass in both classes".into()));
    }
    let (mut prev_fpr, mut prev_tpr, mut area) = (0.0, 0.0, 0.0);
    for (tp, count) in descending_groups(scores, y) {
        let fp = count - tp;
        let tpr = tp / total_pos;
        let fpr = fp / total_neg;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_fpr = fpr;
        prev_tpr = tpr;
    }
    Ok(area)
}

/// PR area with continuous labels: step-wise, each recall increment scored
/// at the precision measured after including its threshold group. (The
/// conventional (0, 1) start point when the top group is all positive does
/// not change the stepped area.)
pub(super) fn pr_area_continuous(scores: &[Real], y: &[Real]) -> Real {
    let total_pos: Real = y.iter().sum();
    let (mut prev_recall, mut area) = (0.0, 0.0);
    for (tp, count) in descending_groups(scores, y) {
        let precision = tp / count;
        let recall = tp / total_pos;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    area
}

/// (V-PR, V-ROC) with buffer widths `0..=max_buffer`.
pub fn vus(scores: &[Real], labels: &[u8], max_buffer: usize) -> Result<(Real, Real)> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "length mismatch: {} vs {}",
            scores.len(),
            labels.len()
        )));
    }
    let mut pr_sum = 0.0;
    let mut roc_sum = 0.0;
    for l in 0..=max_buffer {
        if l == 0 {
            pr_sum += auc_pr(scores, labels)?;
            roc_sum += auc_roc(scores, labels)?;
        } else {
            let y = soften_labels(labels, l);
            pr_sum += pr_area_continuous(scores, &y);
            roc_sum += roc_area_continuous(scores, &y)?;
        }
    }
    let denom = (max_buffer + 1) as Real;
    Ok((pr_sum / denom, roc_sum / denom))
}
