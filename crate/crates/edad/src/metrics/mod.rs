//! Evaluation metrics: precision/recall/F1, AUC-ROC (Mann-Whitney with
//! midrank tie correction), AUC-PR (step-wise threshold sweep), and the
//! buffered volume-under-the-surface variants.

mod vus;

pub use vus::{soften_labels, vus};

use crate::numerics::Real;
use crate::{Error, Result};

/// The seven metrics for one (scores, labels) pair plus the raw confusion
/// counts and the buffer range used for the volume metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub precision: Real,
    pub recall: Real,
    pub f1: Real,
    pub auc_pr: Real,
    pub auc_roc: Real,
    pub vus_pr: Real,
    pub vus_roc: Real,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub vus_buffer: usize,
}

impl EvalReport {
    pub fn compute(
        scores: &[Real],
        preds: &[u8],
        labels: &[u8],
        vus_buffer: usize,
    ) -> Result<EvalReport> {
        let (precision, recall, f1) = prf1(preds, labels)?;
        let (tp, fp, fn_, tn) = confusion(preds, labels);
        let auc_roc = auc_roc(scores, labels)?;
        let auc_pr = auc_pr(scores, labels)?;
        let (vus_pr, vus_roc) = vus(scores, labels, vus_buffer)?;
        Ok(EvalReport {
            precision,
            recall,
            f1,
            auc_pr,
            auc_roc,
            vus_pr,
            vus_roc,
            tp,
            fp,
            fn_,
            tn,
            vus_buffer,
        })
    }

    /// Flat `key value` block, one metric per line.
    pub fn to_text(&self) -> String {
        format!(
            "precision {}\nrecall {}\nf1 {}\nauc_pr {}\nauc_roc {}\nvus_pr {}\nvus_roc {}\ntp {}\nfp {}\nfn {}\ntn {}\nvus_buffer {}\n",
            self.precision,
            self.recall,
            self.f1,
            self.auc_pr,
            self.auc_roc,
            self.vus_pr,
            self.vus_roc,
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            self.vus_buffer
        )
    }

    pub const CSV_HEADER: &'static str =
        "precision,recall,f1,auc_pr,auc_roc,vus_pr,vus_roc,tp,fp,fn,tn,vus_buffer";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.precision,
            self.recall,
            self.f1,
            self.auc_pr,
            self.auc_roc,
            self.vus_pr,
            self.vus_roc,
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            self.vus_buffer
        )
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Contract(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn confusion(preds: &[u8], labels: &[u8]) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    (tp, fp, fn_, tn)
}

/// Precision, recall, F1 with the zero conventions: P = 0 when nothing is
/// predicted positive, R = 0 when no true positives exist, F1 = 0 when
/// P + R = 0.
pub fn prf1(preds: &[u8], labels: &[u8]) -> Result<(Real, Real, Real)> {
    check_lengths(preds.len(), labels.len())?;
    let (tp, fp, fn_, _) = confusion(preds, labels);
    let precision = if tp + fp == 0 { 0.0 } else { tp as Real / (tp + fp) as Real };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as Real / (tp + fn_) as Real };
    let f1 = f1_from(precision, recall);
    Ok((precision, recall, f1))
}

pub fn f1_from(precision: Real, recall: Real) -> Real {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// AUC-ROC via the Mann-Whitney rank statistic with midrank tie correction.
pub fn auc_roc(scores: &[Real], labels: &[u8]) -> Result<Real> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::MetricUndefined(
            "ROC needs both classes in the labels".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank for the tie group [i, j]
        let midrank = (i + j) as Real / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let np = n_pos as Real;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as Real))
}

/// AUC-PR via a step sweep over all distinct thresholds (predict positive
/// when score >= threshold). The curve starts at recall 0 with precision 1
/// when the top-scored group is all positive, otherwise at the measured
/// first precision; the area steps with the right-hand precision.
pub fn auc_pr(scores: &[Real], labels: &[u8]) -> Result<Real> {
    check_lengths(scores.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    if n_pos == 0 {
        return Err(Error::MetricUndefined("PR needs at least one positive label".into()));
    }
    let y: Vec<Real> = labels.iter().map(|&l| l as Real).collect();
    Ok(vus::pr_area_continuous(scores, &y))
}
