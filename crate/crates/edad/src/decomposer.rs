//! Latent decomposition into stable and auxiliary halves.
//!
//! The auxiliary branch keeps the stable half and shuffles the auxiliary
//! half along time before projecting through W_p; its loss pulls the
//! projection toward the equally-shuffled full latent. The stable branch
//! shuffles only the stable half (with an independent permutation) and its
//! loss combines reconstruction of the unshuffled latent with a
//! mutual-information term that stops the stable half from collapsing into
//! a copy of the input.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::mi::{self, CriticKind, EstimateOut, EstimatorForm};
use crate::numerics::rng::random_perm;
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

/// Fresh projection parameters: one shared d x d matrix under `prefix`.
pub fn init_params(prefix: &str, d: usize, seed: u64) -> ParamStore {
    let mut rng = crate::numerics::rng::stream(seed, crate::numerics::rng::domain::INIT, 2, 0);
    let mut store = ParamStore::new();
    store.insert(&format!("{prefix}.w_p"), Tensor::uniform_fan_in(&mut rng, d, d));
    store
}

/// Column halves of the latent: `(Y_sta, Y_aux)`. Requires even width.
pub fn split(g: &mut Graph, y: Var) -> Result<(Var, Var)> {
    let d = g.cols(y);
    if d % 2 != 0 {
        return Err(Error::Config(format!("latent width {d} must be even to split")));
    }
    let sta = g.slice_cols(y, 0, d / 2)?;
    let aux = g.slice_cols(y, d / 2, d)?;
    Ok((sta, aux))
}

/// Random shuffling along the time dimension: row `i` of the output is row
/// `perm[i]` of the input, all columns moving together.
pub fn shuffle(g: &mut Graph, x: Var, perm: &[usize]) -> Result<Var> {
    g.permute_rows(x, perm)
}

/// Fresh uniform permutation for one branch pass.
pub fn draw_perm(rng: &mut ChaCha8Rng, b: usize) -> Vec<usize> {
    random_perm(rng, b)
}

/// Auxiliary branch: `concat(identity(Y_sta), shuffle(Y_aux)) * W_p`.
pub fn aux_branch(g: &mut Graph, y_sta: Var, y_aux: Var, perm: &[usize], w_p: Var) -> Result<Var> {
    let shuffled = shuffle(g, y_aux, perm)?;
    let cat = g.concat_cols(y_sta, shuffled)?;
    g.matmul(cat, w_p)
}

/// Auxiliary loss: `||shuffle(Y) - Y_hat_aux||_F^2` with the same
/// permutation the branch used.
pub fn aux_loss(g: &mut Graph, y: Var, y_hat_aux: Var, perm: &[usize]) -> Result<Var> {
    let target = shuffle(g, y, perm)?;
    g.frob_sq_diff(target, y_hat_aux)
}

/// Stable branch: `concat(shuffle(Y_sta), identity(Y_aux)) * W_p` with a
/// permutation drawn independently of the auxiliary branch.
pub fn sta_branch(g: &mut Graph, y_sta: Var, y_aux: Var, perm: &[usize], w_p: Var) -> Result<Var> {
    let shuffled = shuffle(g, y_sta, perm)?;
    let cat = g.concat_cols(shuffled, y_aux)?;
    g.matmul(cat, w_p)
}

/// Stable-loss terms, all on the tape so critic parameters train jointly.
pub struct StaLoss {
    /// reconstruction - mi_estimate
    pub total: Var,
    pub reconstruction: Var,
    pub mi_estimate: EstimateOut,
}

/// Stable loss: `||Y - Y_hat_sta||_F^2 - I(Y, Y_sta)` under the configured
/// critic and estimator form.
#[allow(clippy::too_many_arguments)]
pub fn sta_loss(
    g: &mut Graph,
    y: Var,
    y_hat_sta: Var,
    y_sta: Var,
    critic_vars: &BTreeMap<String, Var>,
    critic_prefix: &str,
    critic_kind: CriticKind,
    form: EstimatorForm,
    mine_ema: Real,
    clamp: Real,
) -> Result<StaLoss> {
    let reconstruction = g.frob_sq_diff(y, y_hat_sta)?;
    let f = mi::critic_scores(g, y, y_sta, critic_vars, critic_prefix, critic_kind)?;
    let mi_estimate = mi::estimate(g, form, f, mine_ema, clamp)?;
    let total = g.sub(reconstruction, mi_estimate.value)?;
    Ok(StaLoss { total, reconstruction, mi_estimate })
}
