//! Adam with bias correction over named parameter stores.

use std::collections::BTreeMap;

use crate::{Error, Result};

use super::tensor::Tensor;
use super::{ParamStore, Real};

pub const BETA1: Real = 0.9;
pub const BETA2: Real = 0.999;
pub const EPS: Real = 1e-8;

/// First/second moment accumulators plus the step counter. Accumulator
/// shapes mirror the parameters they track.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&BTreeMap<String, Tensor>, &BTreeMap<String, Tensor>) {
        (&self.m, &self.v)
    }

    /// Rebuild state from checkpointed tensors.
    pub fn from_parts(
        m: BTreeMap<String, Tensor>,
        v: BTreeMap<String, Tensor>,
        step: u64,
    ) -> Self {
        AdamState { m, v, step }
    }
}

/// One bias-corrected Adam update. Every parameter must have a gradient
/// entry; accumulators are created lazily at zero.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: Real,
) -> Result<()> {
    for name in params.names() {
        if !grads.contains_key(&name) {
            return Err(Error::Contract(format!(
                "adam_step: missing gradient for parameter '{name}'"
            )));
        }
    }
    state.step += 1;
    let t = state.step as Real;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);

    for (name, p) in params.iter_mut() {
        let g = &grads[name];
        if g.shape() != p.shape() {
            return Err(Error::Contract(format!(
                "adam_step: gradient shape {:?} does not match parameter '{name}' {:?}",
                g.shape(),
                p.shape()
            )));
        }
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(p.shape().to_vec()));
        let (pd, md, vd, gd) = (p.data_mut(), m.data_mut(), v.data_mut(), g.data());
        for i in 0..pd.len() {
            md[i] = BETA1 * md[i] + (1.0 - BETA1) * gd[i];
            vd[i] = BETA2 * vd[i] + (1.0 - BETA2) * gd[i] * gd[i];
            let mhat = md[i] / bc1;
            let vhat = vd[i] / bc2;
            pd[i] -= lr * mhat / (vhat.sqrt() + EPS);
        }
    }
    Ok(())
}
