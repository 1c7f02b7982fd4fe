//! Minimal compress-then-reconstruct baseline: a linear bottleneck
//! autoencoder over whole windows, scored by per-timestamp squared
//! reconstruction error. Used as the comparison arm of the contamination
//! robustness experiment.

use std::collections::BTreeMap;

use crate::data::WindowBatch;
use crate::numerics::rng::{domain, random_perm, stream};
use crate::numerics::{adam_step, AdamState, Graph, ParamStore, Real, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub window: usize,
    /// Bottleneck width; `window / 4` when 0 is passed to `new`.
    pub bottleneck: usize,
    pub lr: Real,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_improvement: Real,
    pub batch_size: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(window: usize, seed: u64) -> Self {
        BaselineConfig {
            window,
            bottleneck: (window / 4).max(1),
            lr: 5e-4,
            max_epochs: 10,
            patience: 3,
            min_improvement: 1e-4,
            batch_size: 64,
            seed,
        }
    }
}

/// Linear autoencoder `x -> (x W_e + b_e) W_d + b_d`.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub cfg: BaselineConfig,
    pub params: ParamStore,
}

impl BaselineModel {
    pub fn new(cfg: BaselineConfig) -> BaselineModel {
        let mut rng = stream(cfg.seed, domain::INIT, 7, 0);
        let mut params = ParamStore::new();
        params.insert("ae.w_e", Tensor::uniform_fan_in(&mut rng, cfg.window, cfg.bottleneck));
        params.insert("ae.b_e", Tensor::zeros(vec![1, cfg.bottleneck]));
        params.insert("ae.w_d", Tensor::uniform_fan_in(&mut rng, cfg.bottleneck, cfg.window));
        params.insert("ae.b_d", Tensor::zeros(vec![1, cfg.window]));
        BaselineModel { cfg, params }
    }

    /// Reconstruction of a stack of windows (rows).
    fn reconstruct(&self, g: &mut Graph, x: crate::numerics::Var) -> Result<crate::numerics::Var> {
        let vars = self.params.register(g);
        let hidden = g.matmul(x, vars["ae.w_e"])?;
        let hidden = g.add_row_vec(hidden, vars["ae.b_e"])?;
        let recon = g.matmul(hidden, vars["ae.w_d"])?;
        g.add_row_vec(recon, vars["ae.b_d"])
    }

    /// Per-timestamp squared reconstruction error of one window.
    pub fn score_window(&self, window: &[Real]) -> Result<Vec<Real>> {
        if window.len() != self.cfg.window {
            return Err(Error::Scoring(format!(
                "window of {} samples does not match configured length {}",
                window.len(),
                self.cfg.window
            )));
        }
        let mut g = Graph::new();
        let x = g.constant(&Tensor::row(window));
        let recon = self.reconstruct(&mut g, x)?;
        Ok(window
            .iter()
            .zip(g.data(recon))
            .map(|(a, b)| (a - b) * (a - b))
            .collect())
    }
}

/// Train the baseline on window batches with the same early-stopping rule
/// as the main trainer. Deterministic given the seed.
pub fn train_reconstruction_baseline(
    batches: &[WindowBatch],
    cfg: &BaselineConfig,
) -> Result<BaselineModel> {
    let windows: Vec<&Vec<Real>> = batches.iter().flat_map(|wb| wb.windows.iter()).collect();
    if windows.is_empty() {
        return Err(Error::Train("no training windows".into()));
    }
    let mut model = BaselineModel::new(*cfg);
    let mut adam = AdamState::new();
    let mut best = (Real::INFINITY, model.params.clone());
    let mut streak = 0usize;

    for epoch in 0..cfg.max_epochs {
        let order = {
            let mut rng = stream(cfg.seed, domain::EPOCH_SHUFFLE, 1000 + epoch as u64, 0);
            random_perm(&mut rng, windows.len())
        };
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<Vec<Real>> = chunk.iter().map(|&i| windows[i].clone()).collect();
            let x_t = Tensor::from_rows(&rows)?;
            let mut g = Graph::new();
            let x = g.constant(&x_t);
            let recon = model.reconstruct(&mut g, x)?;
            let err = g.frob_sq_diff(x, recon)?;
            let loss = g.scale(err, 1.0 / chunk.len() as Real);
            let value = g.scalar_value(loss)?;
            if !value.is_finite() {
                return Err(Error::Train("non-finite baseline loss".into()));
            }
            let grads: BTreeMap<String, Tensor> = g.gradient(loss)?;
            adam_step(&mut model.params, &grads, &mut adam, cfg.lr)?;
            epoch_loss += value * chunk.len() as Real;
            seen += chunk.len();
        }
        let mean = epoch_loss / seen as Real;
        if mean < best.0 - cfg.min_improvement {
            best = (mean, model.params.clone());
            streak = 0;
        } else {
            if mean < best.0 {
                best = (mean, model.params.clone());
            }
            streak += 1;
            if streak >= cfg.patience.max(1) {
                break;
            }
        }
    }
    model.params = best.1;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{flat_series, sine_series, standardize, windowize, TimeSeries};

    #[test]
    fn constant_series_reaches_near_zero_error() {
        // Standardized constant series is all zeros; zero belongs to the
        // model class, so training drives the error to ~0.
        let series = flat_series("c", 200, 5.0);
        let (std, _) = standardize(&series, None).unwrap();
        let wb = windowize(&std, 20, 10).unwrap();
        let cfg = BaselineConfig { max_epochs: 20, ..BaselineConfig::new(20, 1) };
        let model = train_reconstruction_baseline(&[wb], &cfg).unwrap();
        let scores = model.score_window(&vec![0.0; 20]).unwrap();
        assert!(scores.iter().all(|&s| s < 1e-6), "max {:?}", scores.iter().cloned().fold(0.0, Real::max));
    }

    #[test]
    fn identity_sized_bottleneck_can_reach_exact_zero() {
        // Testing hook: with bottleneck == window, identity weights give
        // exactly zero loss without any training.
        let window = 6;
        let cfg = BaselineConfig { bottleneck: window, ..BaselineConfig::new(window, 2) };
        let mut model = BaselineModel::new(cfg);
        let eye = {
            let mut t = Tensor::zeros(vec![window, window]);
            for i in 0..window {
                t.data_mut()[i * window + i] = 1.0;
            }
            t
        };
        *model.params.get_mut("ae.w_e").unwrap() = eye.clone();
        *model.params.get_mut("ae.w_d").unwrap() = eye;
        let w: Vec<Real> = (0..window).map(|t| (t as Real) * 0.3 - 1.0).collect();
        let scores = model.score_window(&w).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn injected_spike_scores_above_median_after_training_on_clean_data() {
        let series = sine_series("s", 600, 50.0, 1.0, 0.05, 3);
        let (std, stats) = standardize(&series, None).unwrap();
        let wb = windowize(&std, 50, 25).unwrap();
        let cfg = BaselineConfig::new(50, 4);
        let model = train_reconstruction_baseline(&[wb], &cfg).unwrap();

        // Score a window with one global spike in the middle.
        let mut window = std.values()[100..150].to_vec();
        window[25] = (series.values()[125] + 3.0) / stats.effective_std() - stats.mean / stats.effective_std()
            + 3.0; // push it far out in standardized units
        let scores = model.score_window(&window).unwrap();
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[25];
        assert!(scores[25] > median, "spike {} median {median}", scores[25]);
    }

    #[test]
    fn baseline_training_is_deterministic() {
        let series = sine_series("s", 300, 25.0, 1.0, 0.1, 6);
        let (std, _) = standardize(&series, None).unwrap();
        let mk = || {
            let wb = windowize(&std, 30, 15).unwrap();
            let cfg = BaselineConfig { max_epochs: 3, ..BaselineConfig::new(30, 9) };
            train_reconstruction_baseline(&[wb], &cfg).unwrap()
        };
        assert_eq!(mk().params, mk().params);
    }

    #[test]
    fn window_length_mismatch_is_scoring_error() {
        let model = BaselineModel::new(BaselineConfig::new(10, 1));
        assert!(model.score_window(&[0.0; 4]).is_err());
        let _ = TimeSeries::univariate("x", vec![0.0; 4], None).unwrap();
    }
}
