//! Central finite-difference gradient checking.
//!
//! The reference derivative of each parameter element is
//! `(f(p+h) - f(p-h)) / 2h` with the loss recomputed from scratch, so the
//! check is independent of the tape's backward pass. Elements whose
//! perturbation flips a relu/clamp branch (kink crossing, where a finite
//! difference is not a valid derivative estimate) are skipped and counted.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::{ParamStore, Real};

/// Loss evaluation: returns the scalar value and the activation-pattern
/// signature of the forward pass (see `Graph::activation_signature`).
pub type LossFn<'a> = dyn FnMut(&ParamStore) -> (Real, u64) + 'a;

#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: Real,
    pub worst_param: String,
    pub checked: usize,
    pub skipped_kinks: usize,
}

impl FdReport {
    pub fn ok(&self, tol: Real) -> bool {
        self.checked > 0 && self.max_rel_err < tol
    }
}

/// Compare analytic gradients against central differences of `f`.
pub fn check_grads(
    f: &mut LossFn,
    params: &ParamStore,
    analytic: &BTreeMap<String, Tensor>,
    h: Real,
) -> FdReport {
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        checked: 0,
        skipped_kinks: 0,
    };
    let mut work = params.clone();
    for name in params.names() {
        let n = params.get(&name).expect("name from store").numel();
        for i in 0..n {
            let base = params.get(&name).unwrap().data()[i];

            work.get_mut(&name).unwrap().data_mut()[i] = base + h;
            let (fp, sig_p) = f(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = base - h;
            let (fm, sig_m) = f(&work);
            work.get_mut(&name).unwrap().data_mut()[i] = base;

            if sig_p != sig_m {
                report.skipped_kinks += 1;
                continue;
            }
            let fd = (fp - fm) / (2.0 * h);
            let ad = analytic
                .get(&name)
                .map(|t| t.data()[i])
                .unwrap_or(0.0);
            let denom = ad.abs().max(fd.abs()).max(1e-4);
            let rel = (ad - fd).abs() / denom;
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = format!("{name}[{i}]");
            }
        }
    }
    report
}
