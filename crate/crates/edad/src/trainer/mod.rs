//! Training loop: the three-term objective, teacher-student consistency,
//! Adam steps over shuffled window batches, and early stopping.
//!
//! Window forward/backward passes fan out to a worker pool (one gradient
//! tape per window); gradients reduce in window order on the caller's
//! thread, so results are byte-identical regardless of thread count.

pub mod baseline;
mod model;

pub use baseline::{train_reconstruction_baseline, BaselineConfig, BaselineModel};
pub use model::{Model, ModelConfig};

use std::collections::BTreeMap;
use std::time::Instant;

use once_cell::sync::Lazy;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::data::WindowBatch;
use crate::decomposer;
use crate::encoder;
use crate::mi::MINE_DECAY;
use crate::numerics::rng::{domain, random_perm, stream};
use crate::numerics::{adam_step, AdamState, Graph, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

/// Worker pool capped by the `EDAD_THREADS` environment variable
/// (default: available parallelism, at most 8).
pub static POOL: Lazy<ThreadPool> = Lazy::new(|| {
    let threads = std::env::var("EDAD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(8)
        });
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("worker pool")
});

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: Real,
    pub max_epochs: usize,
    pub patience: usize,
    /// Minimum epoch-mean improvement that resets the patience counter.
    pub min_improvement: Real,
    pub batch_size: usize,
    pub ema_decay: Real,
    pub lambda1: Real,
    pub lambda2: Real,
    pub lambda3: Real,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            lr: 5e-4,
            max_epochs: 10,
            patience: 3,
            min_improvement: 1e-4,
            batch_size: 64,
            ema_decay: 0.99,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 || self.lambda3 < 0.0 {
            return Err(Error::Config("lambda weights must be non-negative".into()));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Config(format!("ema_decay {} not in (0,1)", self.ema_decay)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Teacher-student consistency: `||Y_student W_p - Y_teacher W_p||_F^2`.
/// The teacher latent must come from outside the tape (a constant), so
/// gradients reach only the student path and W_p.
pub fn consistency_loss(g: &mut Graph, y_student: Var, y_teacher: Var, w_p: Var) -> Result<Var> {
    let proj_s = g.matmul(y_student, w_p)?;
    let proj_t = g.matmul(y_teacher, w_p)?;
    g.frob_sq_diff(proj_s, proj_t)
}

/// One EMA step: `teacher = decay * teacher + (1 - decay) * student`.
pub fn ema_update(teacher: &mut ParamStore, student: &ParamStore, decay: Real) {
    teacher.ema_from(student, decay);
}

/// Permutations for one window pass (auxiliary and stable branches draw
/// independently).
#[derive(Debug, Clone)]
pub struct BranchPerms {
    pub aux: Vec<usize>,
    pub sta: Vec<usize>,
}

impl BranchPerms {
    pub fn draw(seed: u64, epoch: usize, slot: usize, b: usize) -> BranchPerms {
        let mut rng_aux = stream(seed, domain::PERM_AUX, epoch as u64, slot as u64);
        let mut rng_sta = stream(seed, domain::PERM_STA, epoch as u64, slot as u64);
        BranchPerms { aux: random_perm(&mut rng_aux, b), sta: random_perm(&mut rng_sta, b) }
    }

    pub fn identity(b: usize) -> BranchPerms {
        BranchPerms { aux: (0..b).collect(), sta: (0..b).collect() }
    }
}

/// Per-window loss terms on the tape.
pub struct WindowTerms {
    pub sta: Var,
    pub aux: Var,
    pub reg: Var,
    pub partition: Option<Real>,
    pub clamped: usize,
}

/// Forward one window through encoder, decomposer branches, and the
/// consistency regularizer. `svars` are student parameters (tracked),
/// `tvars` the teacher encoder registered as constants.
pub fn window_terms(
    g: &mut Graph,
    window: &[Real],
    svars: &BTreeMap<String, Var>,
    tvars: &BTreeMap<String, Var>,
    cfg: &ModelConfig,
    perms: &BranchPerms,
    mine_ema: Real,
) -> Result<WindowTerms> {
    let enc_cfg = cfg.encoder_config();
    let y = encoder::encode(g, window, svars, "enc", &enc_cfg)?;
    let w_p = *svars
        .get("dec.w_p")
        .ok_or_else(|| Error::Contract("missing parameter 'dec.w_p'".into()))?;

    // Reconstruction terms are scaled to per-element means so they stay
    // commensurate with the O(1) mutual-information bound; otherwise the
    // B*d-element squared norms drown the critic's training signal.
    let reduction = 1.0 / (window.len() * cfg.d) as Real;

    let (y_sta, y_aux) = decomposer::split(g, y)?;
    let aux_hat = decomposer::aux_branch(g, y_sta, y_aux, &perms.aux, w_p)?;
    let aux_sum = decomposer::aux_loss(g, y, aux_hat, &perms.aux)?;
    let aux = g.scale(aux_sum, reduction);

    let sta_hat = decomposer::sta_branch(g, y_sta, y_aux, &perms.sta, w_p)?;
    let sta_out = decomposer::sta_loss(
        g,
        y,
        sta_hat,
        y_sta,
        svars,
        "critic",
        cfg.critic,
        cfg.estimator_form(),
        mine_ema,
        cfg.clamp,
    )?;
    let recon_mean = g.scale(sta_out.reconstruction, reduction);
    let sta = g.sub(recon_mean, sta_out.mi_estimate.value)?;

    let y_teacher = encoder::encode(g, window, tvars, "enc", &enc_cfg)?;
    let reg_sum = consistency_loss(g, y, y_teacher, w_p)?;
    let reg = g.scale(reg_sum, reduction);

    Ok(WindowTerms {
        sta,
        aux,
        reg,
        partition: sta_out.mi_estimate.partition,
        clamped: sta_out.mi_estimate.clamped,
    })
}

/// The batch objective on one tape, with the per-term breakdown.
pub struct TotalLoss {
    pub total: Var,
    pub sta_mean: Var,
    pub aux_mean: Var,
    pub reg_mean: Var,
    pub partition: Option<Real>,
    pub clamped: usize,
}

/// `lambda1 * mean(L_sta) + lambda2 * mean(L_aux) + lambda3 * mean(L_reg)`
/// over a batch of windows, every term on the tape.
pub fn total_loss(
    g: &mut Graph,
    windows: &[&[Real]],
    perms: &[BranchPerms],
    svars: &BTreeMap<String, Var>,
    tvars: &BTreeMap<String, Var>,
    cfg: &TrainConfig,
    mine_ema: Real,
) -> Result<TotalLoss> {
    if windows.is_empty() || windows.len() != perms.len() {
        return Err(Error::Contract("total_loss needs one perm set per window".into()));
    }
    let mut sums: Option<(Var, Var, Var)> = None;
    let mut partitions = Vec::new();
    let mut clamped = 0;
    for (window, perm) in windows.iter().zip(perms) {
        let t = window_terms(g, window, svars, tvars, &cfg.model, perm, mine_ema)?;
        if let Some(p) = t.partition {
            partitions.push(p);
        }
        clamped += t.clamped;
        sums = Some(match sums {
            None => (t.sta, t.aux, t.reg),
            Some((s, a, r)) => (g.add(s, t.sta)?, g.add(a, t.aux)?, g.add(r, t.reg)?),
        });
    }
    let (s, a, r) = sums.expect("non-empty batch");
    let inv = 1.0 / windows.len() as Real;
    let sta_mean = g.scale(s, inv);
    let aux_mean = g.scale(a, inv);
    let reg_mean = g.scale(r, inv);
    let ws = g.scale(sta_mean, cfg.lambda1);
    let wa = g.scale(aux_mean, cfg.lambda2);
    let wr = g.scale(reg_mean, cfg.lambda3);
    let partial = g.add(ws, wa)?;
    let total = g.add(partial, wr)?;
    let partition = if partitions.is_empty() {
        None
    } else {
        Some(partitions.iter().sum::<Real>() / partitions.len() as Real)
    };
    Ok(TotalLoss { total, sta_mean, aux_mean, reg_mean, partition, clamped })
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: Real,
    pub sta: Real,
    pub aux: Real,
    pub reg: Real,
    pub seconds: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters at the best epoch-mean loss.
    pub model: Model,
    /// Parameters at the end of training (last executed epoch).
    pub final_model: Model,
    pub adam: AdamState,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_loss: Real,
    pub clamp_events: usize,
    pub stopped_early: bool,
}

struct TrainWindow {
    data: Vec<Real>,
}

struct WindowOut {
    grads: BTreeMap<String, Tensor>,
    sta: Real,
    aux: Real,
    reg: Real,
    partition: Option<Real>,
    clamped: usize,
}

fn run_window(
    model: &Model,
    cfg: &TrainConfig,
    window: &[Real],
    perms: &BranchPerms,
    mine_ema: Real,
) -> Result<WindowOut> {
    let mut g = Graph::new();
    let svars = model.params.register(&mut g);
    let tvars = model.teacher.register_constant(&mut g);
    let t = window_terms(&mut g, window, &svars, &tvars, &cfg.model, perms, mine_ema)?;
    let ws = g.scale(t.sta, cfg.lambda1);
    let wa = g.scale(t.aux, cfg.lambda2);
    let wr = g.scale(t.reg, cfg.lambda3);
    let partial = g.add(ws, wa)?;
    let total = g.add(partial, wr)?;
    let sta = g.scalar_value(t.sta)?;
    let aux = g.scalar_value(t.aux)?;
    let reg = g.scalar_value(t.reg)?;
    let grads = g.gradient(total)?;
    Ok(WindowOut { grads, sta, aux, reg, partition: t.partition, clamped: t.clamped })
}

fn check_term(value: Real, name: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Train(format!("non-finite {name}; training aborted")))
    }
}

/// Train on the windows of all channels. Deterministic given the seed:
/// window shuffling, branch permutations, and initialization all derive
/// from it. Stops early when the epoch-mean loss fails to improve by more
/// than `min_improvement` for `max(patience, 1)` consecutive epochs, and
/// returns the parameters of the best epoch.
pub fn train(batches: &[WindowBatch], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let windows: Vec<TrainWindow> = batches
        .iter()
        .flat_map(|wb| wb.windows.iter().map(|w| TrainWindow { data: w.clone() }))
        .collect();
    if windows.is_empty() {
        return Err(Error::Train("no training windows".into()));
    }
    for w in &windows {
        if w.data.len() != cfg.model.window {
            return Err(Error::Train(format!(
                "window of {} samples does not match configured length {}",
                w.data.len(),
                cfg.model.window
            )));
        }
    }

    let mut model = Model::new(cfg.model, cfg.seed)?;
    model.sync_teacher();
    let mut adam = AdamState::new();
    let mut mine_ema: Real = 1.0;
    let mut clamp_events = 0usize;

    let mut log = Vec::new();
    let mut best_loss = Real::INFINITY;
    let mut best_epoch = 0;
    let mut best_snapshot = (model.params.clone(), model.teacher.clone(), adam.clone());
    let mut fail_streak = 0usize;
    let mut stopped_early = false;

    for epoch in 0..cfg.max_epochs {
        let t0 = Instant::now();
        let order = {
            let mut rng = stream(cfg.seed, domain::EPOCH_SHUFFLE, epoch as u64, 0);
            random_perm(&mut rng, windows.len())
        };

        let (mut e_total, mut e_sta, mut e_aux, mut e_reg) = (0.0, 0.0, 0.0, 0.0);
        let mut seen = 0usize;

        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let jobs: Vec<(usize, usize)> = chunk
                .iter()
                .enumerate()
                .map(|(i, &w)| (batch_idx * cfg.batch_size + i, w))
                .collect();
            let ema_now = mine_ema;
            let model_ref = &model;
            let outs: Result<Vec<WindowOut>> = POOL.install(|| {
                jobs.par_iter()
                    .map(|&(slot, widx)| {
                        let perms =
                            BranchPerms::draw(cfg.seed, epoch, slot, cfg.model.window);
                        run_window(model_ref, cfg, &windows[widx].data, &perms, ema_now)
                    })
                    .collect()
            });
            let outs = outs?;

            // Ordered reduction: results indexed by slot, reduced serially.
            let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
            let (mut b_sta, mut b_aux, mut b_reg) = (0.0, 0.0, 0.0);
            let mut partitions = Vec::new();
            for out in &outs {
                for (name, gt) in &out.grads {
                    match grads.get_mut(name) {
                        Some(acc) => {
                            for (a, v) in acc.data_mut().iter_mut().zip(gt.data()) {
                                *a += v;
                            }
                        }
                        None => {
                            grads.insert(name.clone(), gt.clone());
                        }
                    }
                }
                b_sta += out.sta;
                b_aux += out.aux;
                b_reg += out.reg;
                if let Some(p) = out.partition {
                    partitions.push(p);
                }
                clamp_events += out.clamped;
            }
            let inv = 1.0 / outs.len() as Real;
            for t in grads.values_mut() {
                for v in t.data_mut() {
                    *v *= inv;
                }
            }
            check_term(b_sta * inv, "L_sta")?;
            check_term(b_aux * inv, "L_aux")?;
            check_term(b_reg * inv, "L_reg")?;

            adam_step(&mut model.params, &grads, &mut adam, cfg.lr)?;
            let student = model.params.clone_encoder();
            ema_update(&mut model.teacher, &student, cfg.ema_decay);
            if !partitions.is_empty() {
                let batch_partition =
                    partitions.iter().sum::<Real>() / partitions.len() as Real;
                mine_ema = MINE_DECAY * mine_ema + (1.0 - MINE_DECAY) * batch_partition;
            }

            let b_total =
                cfg.lambda1 * b_sta * inv + cfg.lambda2 * b_aux * inv + cfg.lambda3 * b_reg * inv;
            check_term(b_total, "total loss")?;
            e_total += b_total * outs.len() as Real;
            e_sta += b_sta;
            e_aux += b_aux;
            e_reg += b_reg;
            seen += outs.len();
        }

        let n = seen as Real;
        let row = EpochLog {
            epoch,
            total: e_total / n,
            sta: e_sta / n,
            aux: e_aux / n,
            reg: e_reg / n,
            seconds: t0.elapsed().as_secs_f64(),
        };
        let epoch_mean = row.total;
        log.push(row);

        if epoch_mean < best_loss - cfg.min_improvement {
            best_loss = epoch_mean;
            best_epoch = epoch;
            best_snapshot = (model.params.clone(), model.teacher.clone(), adam.clone());
            fail_streak = 0;
        } else {
            if epoch_mean < best_loss {
                // Still the best seen, just not by margin; keep the params.
                best_loss = epoch_mean;
                best_epoch = epoch;
                best_snapshot = (model.params.clone(), model.teacher.clone(), adam.clone());
            }
            fail_streak += 1;
            if fail_streak >= cfg.patience.max(1) {
                stopped_early = true;
                break;
            }
        }
    }

    let (params, teacher, adam) = best_snapshot;
    Ok(TrainOutcome {
        model: Model { cfg: cfg.model, params, teacher },
        final_model: model,
        adam,
        log,
        best_epoch,
        best_loss,
        clamp_events,
        stopped_early,
    })
}
