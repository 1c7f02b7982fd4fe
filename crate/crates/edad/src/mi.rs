//! Critic functions and variational mutual-information estimators.
//!
//! A critic scores all pairs of rows of two matrices into a B x B matrix F:
//! the diagonal holds joint (aligned-timestamp) pairs, the off-diagonal the
//! marginal (cross-timestamp) pairs within the same window. Estimators turn
//! F into a scalar bound; the point-wise decomposition splits that bound
//! into one contribution per timestamp for anomaly scoring.
//!
//! The default InfoNCE is implemented in its non-log form
//! `E[f] - E[E[e^f]]`; `StandardInfoNce` provides the familiar
//! `mean_i(F_ii - ln mean_j e^{F_ij})` for comparison.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::numerics::rng::{domain, stream};
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

/// Scores are clamped to this magnitude before exponentiation.
pub const DEFAULT_CLAMP: Real = 50.0;

/// Decay of MINE's running partition average.
pub const MINE_DECAY: Real = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticKind {
    Separable,
    Bilinear,
    Concatenated,
}

impl CriticKind {
    pub const ALL: [CriticKind; 3] =
        [CriticKind::Separable, CriticKind::Bilinear, CriticKind::Concatenated];

    pub fn name(&self) -> &'static str {
        match self {
            CriticKind::Separable => "separable",
            CriticKind::Bilinear => "bilinear",
            CriticKind::Concatenated => "concatenated",
        }
    }
}

impl FromStr for CriticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separable" => Ok(CriticKind::Separable),
            "bilinear" => Ok(CriticKind::Bilinear),
            "concatenated" => Ok(CriticKind::Concatenated),
            other => Err(Error::Config(format!("unknown critic kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    InfoNce,
    Nwj,
    Mine,
    Jsd,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::InfoNce,
        EstimatorKind::Nwj,
        EstimatorKind::Mine,
        EstimatorKind::Jsd,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::InfoNce => "infonce",
            EstimatorKind::Nwj => "nwj",
            EstimatorKind::Mine => "mine",
            EstimatorKind::Jsd => "jsd",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "infonce" => Ok(EstimatorKind::InfoNce),
            "nwj" => Ok(EstimatorKind::Nwj),
            "mine" => Ok(EstimatorKind::Mine),
            "jsd" => Ok(EstimatorKind::Jsd),
            other => Err(Error::Config(format!("unknown estimator kind '{other}'"))),
        }
    }
}

/// Estimator kind resolved against the `standard_infonce` flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorForm {
    InfoNceAsWritten,
    StandardInfoNce,
    Nwj,
    Mine,
    Jsd,
}

impl EstimatorForm {
    pub fn resolve(kind: EstimatorKind, standard_infonce: bool) -> Self {
        match kind {
            EstimatorKind::InfoNce if standard_infonce => EstimatorForm::StandardInfoNce,
            EstimatorKind::InfoNce => EstimatorForm::InfoNceAsWritten,
            EstimatorKind::Nwj => EstimatorForm::Nwj,
            EstimatorKind::Mine => EstimatorForm::Mine,
            EstimatorKind::Jsd => EstimatorForm::Jsd,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorForm::InfoNceAsWritten => "infonce",
            EstimatorForm::StandardInfoNce => "infonce-standard",
            EstimatorForm::Nwj => "nwj",
            EstimatorForm::Mine => "mine",
            EstimatorForm::Jsd => "jsd",
        }
    }
}

/// Fresh critic parameters under `prefix` for arguments of width `d_a` and
/// `d_b`. The separable critic is a per-argument width adapter into a
/// shared relu layer; bilinear is one d_a x d_b matrix; concatenated is a
/// two-layer network on the concatenated pair.
pub fn init_critic_params(
    prefix: &str,
    kind: CriticKind,
    d_a: usize,
    d_b: usize,
    hidden: usize,
    out_width: usize,
    seed: u64,
) -> ParamStore {
    let mut rng = stream(seed, domain::INIT, 1, 0);
    let mut store = ParamStore::new();
    match kind {
        CriticKind::Separable => {
            store.insert(&format!("{prefix}.phi_a"), Tensor::uniform_fan_in(&mut rng, d_a, hidden));
            store.insert(&format!("{prefix}.phi_b"), Tensor::uniform_fan_in(&mut rng, d_b, hidden));
            store.insert(
                &format!("{prefix}.shared"),
                Tensor::uniform_fan_in(&mut rng, hidden, out_width),
            );
        }
        CriticKind::Bilinear => {
            store.insert(&format!("{prefix}.w"), Tensor::uniform_fan_in(&mut rng, d_a, d_b));
        }
        CriticKind::Concatenated => {
            store.insert(
                &format!("{prefix}.w1"),
                Tensor::uniform_fan_in(&mut rng, d_a + d_b, hidden),
            );
            store.insert(&format!("{prefix}.w2"), Tensor::uniform_fan_in(&mut rng, hidden, 1));
        }
    }
    store
}

fn var(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("missing critic parameter '{name}'")))
}

/// All-pairs critic scores: `F[i,j]` scores (row i of `a`, row j of `z`).
pub fn critic_scores(
    g: &mut Graph,
    a: Var,
    z: Var,
    vars: &BTreeMap<String, Var>,
    prefix: &str,
    kind: CriticKind,
) -> Result<Var> {
    let b = g.rows(a);
    if g.rows(z) != b {
        return Err(Error::Dimension {
            op: "critic_scores",
            detail: format!("{} vs {} rows", b, g.rows(z)),
        });
    }
    match kind {
        CriticKind::Separable => {
            let phi_a = var(vars, &format!("{prefix}.phi_a"))?;
            let phi_b = var(vars, &format!("{prefix}.phi_b"))?;
            let shared = var(vars, &format!("{prefix}.shared"))?;
            let ha = g.matmul(a, phi_a)?;
            let ra = g.relu(ha);
            let fa = g.matmul(ra, shared)?;
            let hb = g.matmul(z, phi_b)?;
            let rb = g.relu(hb);
            let fb = g.matmul(rb, shared)?;
            g.matmul_nt(fa, fb)
        }
        CriticKind::Bilinear => {
            let w = var(vars, &format!("{prefix}.w"))?;
            let aw = g.matmul(a, w)?;
            g.matmul_nt(aw, z)
        }
        CriticKind::Concatenated => {
            let w1 = var(vars, &format!("{prefix}.w1"))?;
            let w2 = var(vars, &format!("{prefix}.w2"))?;
            let left = g.repeat_each_row(a, b);
            let right = g.tile_rows(z, b);
            let pairs = g.concat_cols(left, right)?;
            let hidden = g.matmul(pairs, w1)?;
            let act = g.relu(hidden);
            let scores = g.matmul(act, w2)?;
            g.reshape(scores, b, b)
        }
    }
}

fn masks(b: usize) -> (Tensor, Tensor) {
    let mut eye = vec![0.0; b * b];
    let mut off = vec![1.0; b * b];
    for i in 0..b {
        eye[i * b + i] = 1.0;
        off[i * b + i] = 0.0;
    }
    (
        Tensor::new(vec![b, b], eye).expect("mask shape"),
        Tensor::new(vec![b, b], off).expect("mask shape"),
    )
}

/// Estimator output. `partition` is the current batch's off-diagonal
/// partition mean, reported for MINE state bookkeeping; `clamped` counts
/// scores saturated by the pre-exponentiation clamp.
pub struct EstimateOut {
    pub value: Var,
    pub partition: Option<Real>,
    pub clamped: usize,
}

/// Variational bound from a square score matrix. Joint expectation = mean
/// of the diagonal; marginal expectation = mean over all i != j pairs.
/// `mine_ema` is the running partition average (ignored by other forms).
pub fn estimate(
    g: &mut Graph,
    form: EstimatorForm,
    f: Var,
    mine_ema: Real,
    clamp: Real,
) -> Result<EstimateOut> {
    let b = g.rows(f);
    if g.cols(f) != b {
        return Err(Error::Dimension {
            op: "estimate",
            detail: format!("score matrix must be square, got {}x{}", b, g.cols(f)),
        });
    }
    if b < 2 {
        return Err(Error::Contract("estimate needs at least 2 samples".into()));
    }
    let (eye_t, off_t) = masks(b);
    let eye = g.constant(&eye_t);
    let off = g.constant(&off_t);
    let inv_b = 1.0 / b as Real;
    let inv_off = 1.0 / (b * (b - 1)) as Real;
    let clamp_before = g.clamp_events();

    // One clamp over the whole score matrix, used by every term. Clamping
    // only the exponentiated path would leave the linear joint term with an
    // unbounded incentive once scores saturate.
    let fc = g.clamp(f, -clamp, clamp);

    let diag_masked = g.mul_elem(fc, eye)?;
    let diag_sum = g.sum_all(diag_masked);
    let diag_mean = g.scale(diag_sum, inv_b);

    let out = match form {
        EstimatorForm::InfoNceAsWritten | EstimatorForm::Nwj | EstimatorForm::Mine => {
            let ef = g.exp(fc)?;
            let off_masked = g.mul_elem(ef, off)?;
            let off_sum = g.sum_all(off_masked);
            let off_mean = g.scale(off_sum, inv_off);
            match form {
                EstimatorForm::InfoNceAsWritten => {
                    let value = g.sub(diag_mean, off_mean)?;
                    EstimateOut { value, partition: None, clamped: 0 }
                }
                EstimatorForm::Nwj => {
                    let scaled = g.scale(off_mean, (-1.0 as Real).exp());
                    let value = g.sub(diag_mean, scaled)?;
                    EstimateOut { value, partition: None, clamped: 0 }
                }
                EstimatorForm::Mine => {
                    // running average folded with the live batch partition:
                    // ema' = decay * ema + (1 - decay) * batch
                    let partition = g.scalar_value(off_mean)?;
                    let fresh = g.scale(off_mean, 1.0 - MINE_DECAY);
                    let ema_new = g.add_const(fresh, MINE_DECAY * mine_ema);
                    let log_part = g.ln(ema_new)?;
                    let value = g.sub(diag_mean, log_part)?;
                    EstimateOut { value, partition: Some(partition), clamped: 0 }
                }
                _ => unreachable!(),
            }
        }
        EstimatorForm::StandardInfoNce => {
            let ef = g.exp(fc)?;
            let ones = g.constant(&Tensor::full(vec![b, 1], 1.0));
            let row_sum = g.matmul(ef, ones)?;
            let row_mean = g.scale(row_sum, inv_b);
            let log_rm = g.ln(row_mean)?;
            let diag_col = g.matmul(diag_masked, ones)?;
            let contrib = g.sub(diag_col, log_rm)?;
            let value = g.mean_all(contrib);
            EstimateOut { value, partition: None, clamped: 0 }
        }
        EstimatorForm::Jsd => {
            let neg_f = g.scale(fc, -1.0);
            let sp_neg = g.softplus(neg_f);
            let sp_neg_diag = g.mul_elem(sp_neg, eye)?;
            let joint_sum = g.sum_all(sp_neg_diag);
            let joint = g.scale(joint_sum, -inv_b);
            let sp = g.softplus(fc);
            let sp_off = g.mul_elem(sp, off)?;
            let marg_sum = g.sum_all(sp_off);
            let marg = g.scale(marg_sum, inv_off);
            let value = g.sub(joint, marg)?;
            EstimateOut { value, partition: None, clamped: 0 }
        }
    };
    let clamped = g.clamp_events() - clamp_before;
    Ok(EstimateOut { clamped, ..out })
}

/// Per-timestamp contributions `c_i` such that (MINE aside) the estimator
/// value equals `mean_i(c_i)`. Anomaly scores negate these. For MINE the
/// row partition uses the current batch instead of the running average, so
/// the exact mean identity holds only for the other forms.
pub fn pointwise_scores(form: EstimatorForm, f: &Tensor, clamp: Real) -> Result<Vec<Real>> {
    let b = f.rows();
    if f.cols() != b {
        return Err(Error::Dimension {
            op: "pointwise_scores",
            detail: format!("score matrix must be square, got {}x{}", b, f.cols()),
        });
    }
    if b < 2 {
        return Err(Error::Contract("pointwise_scores needs at least 2 samples".into()));
    }
    let data = f.data();
    let softplus = |v: Real| v.max(0.0) + (-(v.abs())).exp().ln_1p();

    let mut out = Vec::with_capacity(b);
    for i in 0..b {
        // Same single clamp over scores as `estimate`.
        let fii = data[i * b + i].clamp(-clamp, clamp);
        let mut off_exp = 0.0;
        let mut off_sp = 0.0;
        for j in 0..b {
            if j != i {
                let v = data[i * b + j].clamp(-clamp, clamp);
                off_exp += v.exp();
                off_sp += softplus(v);
            }
        }
        let off_exp_mean = off_exp / (b - 1) as Real;
        let off_sp_mean = off_sp / (b - 1) as Real;
        let c = match form {
            EstimatorForm::InfoNceAsWritten => fii - off_exp_mean,
            EstimatorForm::Nwj => fii - (-1.0 as Real).exp() * off_exp_mean,
            EstimatorForm::Mine => fii - off_exp_mean.ln(),
            EstimatorForm::StandardInfoNce => {
                let all_mean = (off_exp + fii.exp()) / b as Real;
                fii - all_mean.ln()
            }
            EstimatorForm::Jsd => -softplus(-fii) - off_sp_mean,
        };
        out.push(c);
    }
    Ok(out)
}
