//! Attention encoder: instance normalization, linear embedding, and a stack
//! of multi-head self-attention layers producing one d-wide latent row per
//! timestamp. No positional encoding and no temporal compression: the
//! decomposer's shuffle semantics needs per-timestamp identity to survive
//! through values.

use std::collections::BTreeMap;

use crate::numerics::rng::{domain, stream};
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    /// Model width; must be divisible by `heads`.
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// MLP hidden width (4*d unless configured).
    pub d_ff: usize,
    /// Stability constant inside every normalization.
    pub eps: Real,
    /// When set, use the conventional residual (normalize(x + sublayer(x)))
    /// instead of the literal form (sublayer + normalized(sublayer)).
    pub conventional_addnorm: bool,
}

impl EncoderConfig {
    pub fn new(d: usize, layers: usize, heads: usize) -> Self {
        EncoderConfig {
            d,
            layers,
            heads,
            d_ff: 4 * d,
            eps: 1e-5,
            conventional_addnorm: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "model width {} must be a positive multiple of heads {}",
                self.d, self.heads
            )));
        }
        if self.d % 2 != 0 {
            return Err(Error::Config(format!(
                "model width {} must be even for the stable/auxiliary split",
                self.d
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be positive".into()));
        }
        Ok(())
    }
}

fn init_weight(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::uniform_fan_in(rng, rows, cols)
}

/// Fresh encoder parameters under the given name prefix (e.g. `enc`).
/// Weights are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)); scale vectors
/// start at 1, shifts at 0.
pub fn init_params(prefix: &str, cfg: &EncoderConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut rng = stream(seed, domain::INIT, 0, 0);
    let mut store = ParamStore::new();
    store.insert(&format!("{prefix}.gamma1"), Tensor::scalar(1.0));
    store.insert(&format!("{prefix}.beta1"), Tensor::scalar(0.0));
    store.insert(&format!("{prefix}.w_emb"), init_weight(&mut rng, 1, cfg.d));
    for l in 0..cfg.layers {
        let p = format!("{prefix}.l{l}");
        store.insert(&format!("{p}.w_q"), init_weight(&mut rng, cfg.d, cfg.d));
        store.insert(&format!("{p}.w_k"), init_weight(&mut rng, cfg.d, cfg.d));
        store.insert(&format!("{p}.w_v"), init_weight(&mut rng, cfg.d, cfg.d));
        store.insert(&format!("{p}.w_mult"), init_weight(&mut rng, cfg.d, cfg.d));
        store.insert(&format!("{p}.gamma2"), Tensor::full(vec![1, cfg.d], 1.0));
        store.insert(&format!("{p}.beta2"), Tensor::zeros(vec![1, cfg.d]));
        store.insert(&format!("{p}.w1"), init_weight(&mut rng, cfg.d, cfg.d_ff));
        store.insert(&format!("{p}.w2"), init_weight(&mut rng, cfg.d_ff, cfg.d));
    }
    Ok(store)
}

fn var(vars: &BTreeMap<String, Var>, name: &str) -> Result<Var> {
    vars.get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("missing parameter '{name}'")))
}

/// Per-window instance normalization with learnable scalar scale/shift:
/// `(x - E[x]) / sqrt(Var[x] + eps) * gamma + beta`, statistics over the
/// window. The input is data, so only gamma/beta are differentiated.
pub fn instance_norm(
    g: &mut Graph,
    window: &[Real],
    gamma1: Var,
    beta1: Var,
    eps: Real,
) -> Result<Var> {
    if window.len() < 2 {
        return Err(Error::Config("instance_norm needs at least 2 samples".into()));
    }
    let n = window.len() as Real;
    let mean = window.iter().sum::<Real>() / n;
    let v = window.iter().map(|x| (x - mean) * (x - mean)).sum::<Real>() / n;
    let inv = 1.0 / (v + eps).sqrt();
    let normalized: Vec<Real> = window.iter().map(|x| (x - mean) * inv).collect();
    let h = g.constant(&Tensor::col(&normalized));
    let scaled = g.broadcast_mul_scalar(h, gamma1)?;
    g.broadcast_add_scalar(scaled, beta1)
}

/// Matrix-statistic affine normalization:
/// `(x - E[x]) / sqrt(Var[x] + eps) * gamma + beta`, the statistics taken
/// over the whole matrix, gamma/beta broadcast columnwise.
fn affine_norm(g: &mut Graph, x: Var, gamma: Var, beta: Var, eps: Real) -> Result<Var> {
    let mean = g.mean_all(x);
    let neg_mean = g.scale(mean, -1.0);
    let centered = g.broadcast_add_scalar(x, neg_mean)?;
    let sq = g.mul_elem(centered, centered)?;
    let variance = g.mean_all(sq);
    let var_eps = g.add_const(variance, eps);
    let inv_std = g.pow_const(var_eps, -0.5)?;
    let normalized = g.broadcast_mul_scalar(centered, inv_std)?;
    let scaled = g.mul_row_vec(normalized, gamma)?;
    g.add_row_vec(scaled, beta)
}

fn add_norm(
    g: &mut Graph,
    sublayer_out: Var,
    sublayer_in: Var,
    gamma: Var,
    beta: Var,
    cfg: &EncoderConfig,
) -> Result<Var> {
    if cfg.conventional_addnorm {
        let summed = g.add(sublayer_in, sublayer_out)?;
        affine_norm(g, summed, gamma, beta, cfg.eps)
    } else {
        // Literal form: the sublayer output plus its own normalization;
        // the sublayer input does not re-enter.
        let normed = affine_norm(g, sublayer_out, gamma, beta, cfg.eps)?;
        g.add(sublayer_out, normed)
    }
}

/// One attention layer: per-head scaled dot-product attention over head
/// slices of a single d x d projection per role, concatenation, output
/// projection, add&norm, two-layer relu MLP, add&norm.
pub fn attention_layer(
    g: &mut Graph,
    x: Var,
    vars: &BTreeMap<String, Var>,
    layer_prefix: &str,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let d = cfg.d;
    let dh = d / cfg.heads;
    let w_q = var(vars, &format!("{layer_prefix}.w_q"))?;
    let w_k = var(vars, &format!("{layer_prefix}.w_k"))?;
    let w_v = var(vars, &format!("{layer_prefix}.w_v"))?;
    let w_mult = var(vars, &format!("{layer_prefix}.w_mult"))?;
    let gamma2 = var(vars, &format!("{layer_prefix}.gamma2"))?;
    let beta2 = var(vars, &format!("{layer_prefix}.beta2"))?;
    let w1 = var(vars, &format!("{layer_prefix}.w1"))?;
    let w2 = var(vars, &format!("{layer_prefix}.w2"))?;

    let q = g.matmul(x, w_q)?;
    let k = g.matmul(x, w_k)?;
    let v = g.matmul(x, w_v)?;

    let mut concat: Option<Var> = None;
    for m in 0..cfg.heads {
        let (from, to) = (m * dh, (m + 1) * dh);
        let qm = g.slice_cols(q, from, to)?;
        let km = g.slice_cols(k, from, to)?;
        let vm = g.slice_cols(v, from, to)?;
        let logits = g.matmul_nt(qm, km)?;
        let scaled = g.scale(logits, 1.0 / (dh as Real).sqrt());
        let s = g.softmax_rows(scaled);
        let head = g.matmul(s, vm)?;
        concat = Some(match concat {
            None => head,
            Some(c) => g.concat_cols(c, head)?,
        });
    }
    let heads_out = concat.expect("at least one head");
    let y1 = g.matmul(heads_out, w_mult)?;

    let y2 = add_norm(g, y1, x, gamma2, beta2, cfg)?;

    let hidden = g.matmul(y2, w1)?;
    let act = g.relu(hidden);
    let y3 = g.matmul(act, w2)?;

    add_norm(g, y3, y2, gamma2, beta2, cfg)
}

/// Full encoder pass: instance norm, embedding, `layers` attention layers.
/// Output is B x d for a window of B samples.
pub fn encode(
    g: &mut Graph,
    window: &[Real],
    vars: &BTreeMap<String, Var>,
    prefix: &str,
    cfg: &EncoderConfig,
) -> Result<Var> {
    let gamma1 = var(vars, &format!("{prefix}.gamma1"))?;
    let beta1 = var(vars, &format!("{prefix}.beta1"))?;
    let w_emb = var(vars, &format!("{prefix}.w_emb"))?;
    let h = instance_norm(g, window, gamma1, beta1, cfg.eps)?;
    let mut y = g.matmul(h, w_emb)?;
    for l in 0..cfg.layers {
        y = attention_layer(g, y, vars, &format!("{prefix}.l{l}"), cfg)?;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_cfg(d: usize, layers: usize, heads: usize) -> EncoderConfig {
        EncoderConfig::new(d, layers, heads)
    }

    fn register(g: &mut Graph, store: &ParamStore) -> BTreeMap<String, Var> {
        store.register(g)
    }

    #[test]
    fn instance_norm_constant_window_is_shift() {
        let mut g = Graph::new();
        let gamma = g.constant(&Tensor::scalar(1.0));
        let beta = g.constant(&Tensor::scalar(0.0));
        let out = instance_norm(&mut g, &[4.0; 8], gamma, beta, 1e-5).unwrap();
        for &v in g.data(out) {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn instance_norm_already_normalized() {
        let mut g = Graph::new();
        let gamma = g.constant(&Tensor::scalar(1.0));
        let beta = g.constant(&Tensor::scalar(0.0));
        let out = instance_norm(&mut g, &[-1.0, 1.0], gamma, beta, 0.0).unwrap();
        assert!((g.data(out)[0] + 1.0).abs() < 1e-12);
        assert!((g.data(out)[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instance_norm_hand_values_with_affine() {
        let mut g = Graph::new();
        let gamma = g.constant(&Tensor::scalar(2.0));
        let beta = g.constant(&Tensor::scalar(1.0));
        let out = instance_norm(&mut g, &[0.0, 2.0, 4.0], gamma, beta, 1e-5).unwrap();
        let expected = [-1.224744871, 0.0, 1.224744871].map(|z: Real| 2.0 * z + 1.0);
        for (a, e) in g.data(out).iter().zip(expected) {
            assert!((a - e).abs() < 1e-3, "{a} vs {e}");
        }
    }

    #[test]
    fn zero_weights_reduce_to_addnorm_paths() {
        // All layer weights zero: attention and MLP output zero, so the
        // literal add&norm of a zero matrix gives rows equal to beta2.
        let cfg = test_cfg(4, 1, 2);
        let mut store = init_params("enc", &cfg, 1).unwrap();
        for name in store.names() {
            if name.contains(".w_") || name.ends_with(".w1") || name.ends_with(".w2") {
                let t = store.get_mut(&name).unwrap();
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let beta2 = vec![0.5, -0.25, 2.0, 0.0];
        store
            .get_mut("enc.l0.beta2")
            .unwrap()
            .data_mut()
            .copy_from_slice(&beta2);

        let mut g = Graph::new();
        let vars = register(&mut g, &store);
        let x = g.constant(&Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]]).unwrap());
        let out = attention_layer(&mut g, x, &vars, "enc.l0", &cfg).unwrap();
        // y1 = 0 -> y2 = 0 + norm(0)*gamma + beta = beta rows;
        // y3 = 0 (MLP weights zero) -> out = 0 + norm(0)*gamma + beta = beta rows.
        for i in 0..2 {
            for j in 0..4 {
                assert!(
                    (g.data(out)[i * 4 + j] - beta2[j]).abs() < 1e-12,
                    "row {i} col {j}"
                );
            }
        }
    }

    #[test]
    fn single_timestamp_attention_is_value_row() {
        // B=1: softmax over one key is 1, so the attention head output is
        // exactly the value row. Checked against a direct computation.
        let cfg = test_cfg(4, 1, 1);
        let store = init_params("enc", &cfg, 3).unwrap();
        let mut g = Graph::new();
        let vars = register(&mut g, &store);
        let xrow = vec![0.3, -1.0, 0.7, 0.2];
        let x = g.constant(&Tensor::from_rows(&[xrow.clone()]).unwrap());
        let q = g.matmul(x, vars["enc.l0.w_q"]).unwrap();
        let k = g.matmul(x, vars["enc.l0.w_k"]).unwrap();
        let logits = g.matmul_nt(q, k).unwrap();
        let s = g.softmax_rows(logits);
        assert!((g.data(s)[0] - 1.0).abs() < 1e-12);
        let v = g.matmul(x, vars["enc.l0.w_v"]).unwrap();
        let head = g.matmul(s, v).unwrap();
        for j in 0..4 {
            assert!((g.data(head)[j] - g.data(v)[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_matches_straight_line_reimplementation() {
        // Independent oracle: the same math written as plain loops.
        let (b, d, heads) = (8, 16, 4);
        let cfg = test_cfg(d, 1, heads);
        let store = init_params("enc", &cfg, 42).unwrap();
        let mut rng = stream(7, domain::TEST, 0, 0);
        let x_t = init_weight(&mut rng, b, d);

        let mut g = Graph::new();
        let vars = register(&mut g, &store);
        let x = g.constant(&x_t);
        let out = attention_layer(&mut g, x, &vars, "enc.l0", &cfg).unwrap();

        let w = |n: &str| store.get(&format!("enc.l0.{n}")).unwrap().data().to_vec();
        let (w_q, w_k, w_v, w_mult) = (w("w_q"), w("w_k"), w("w_v"), w("w_mult"));
        let (gamma2, beta2, w1, w2) = (w("gamma2"), w("beta2"), w("w1"), w("w2"));
        let mm = |a: &[Real], bm: &[Real], m: usize, kk: usize, n: usize| -> Vec<Real> {
            let mut o = vec![0.0; m * n];
            for i in 0..m {
                for p in 0..kk {
                    for j in 0..n {
                        o[i * n + j] += a[i * kk + p] * bm[p * n + j];
                    }
                }
            }
            o
        };
        let q = mm(x_t.data(), &w_q, b, d, d);
        let k = mm(x_t.data(), &w_k, b, d, d);
        let v = mm(x_t.data(), &w_v, b, d, d);
        let dh = d / heads;
        let mut heads_cat = vec![0.0; b * d];
        for m in 0..heads {
            for i in 0..b {
                // logits over keys for this query row
                let mut logits = vec![0.0; b];
                for j in 0..b {
                    let mut acc = 0.0;
                    for p in 0..dh {
                        acc += q[i * d + m * dh + p] * k[j * d + m * dh + p];
                    }
                    logits[j] = acc / (dh as Real).sqrt();
                }
                let mx = logits.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
                let exps: Vec<Real> = logits.iter().map(|l| (l - mx).exp()).collect();
                let sum: Real = exps.iter().sum();
                for p in 0..dh {
                    let mut acc = 0.0;
                    for j in 0..b {
                        acc += exps[j] / sum * v[j * d + m * dh + p];
                    }
                    heads_cat[i * d + m * dh + p] = acc;
                }
            }
        }
        let y1 = mm(&heads_cat, &w_mult, b, d, d);
        let addnorm = |m: &[Real]| -> Vec<Real> {
            let n = m.len() as Real;
            let mean = m.iter().sum::<Real>() / n;
            let varv = m.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
            let inv = 1.0 / (varv + cfg.eps).sqrt();
            m.iter()
                .enumerate()
                .map(|(idx, &val)| val + (val - mean) * inv * gamma2[idx % d] + beta2[idx % d])
                .collect()
        };
        let y2 = addnorm(&y1);
        let hidden = mm(&y2, &w1, b, d, cfg.d_ff);
        let act: Vec<Real> = hidden.iter().map(|&h| h.max(0.0)).collect();
        let y3 = mm(&act, &w2, b, cfg.d_ff, d);
        let expected = addnorm(&y3);

        for (a, e) in g.data(out).iter().zip(&expected) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn encode_without_layers_is_embedding_of_normalized_window() {
        let cfg = test_cfg(6, 0, 2);
        let store = init_params("enc", &cfg, 5).unwrap();
        let window = [1.0, 3.0, -2.0, 0.5];
        let mut g = Graph::new();
        let vars = register(&mut g, &store);
        let y = encode(&mut g, &window, &vars, "enc", &cfg).unwrap();
        assert_eq!((g.rows(y), g.cols(y)), (4, 6));

        let mut g2 = Graph::new();
        let vars2 = register(&mut g2, &store);
        let h = instance_norm(&mut g2, &window, vars2["enc.gamma1"], vars2["enc.beta1"], cfg.eps)
            .unwrap();
        let emb = g2.matmul(h, vars2["enc.w_emb"]).unwrap();
        assert_eq!(g.data(y), g2.data(emb));
    }

    #[test]
    fn encode_output_shape_is_b_by_d() {
        let cfg = test_cfg(8, 2, 2);
        let store = init_params("enc", &cfg, 1).unwrap();
        for b in [2usize, 5, 17] {
            let window: Vec<Real> = (0..b).map(|t| (t as Real * 0.7).sin()).collect();
            let mut g = Graph::new();
            let vars = register(&mut g, &store);
            let y = encode(&mut g, &window, &vars, "enc", &cfg).unwrap();
            assert_eq!((g.rows(y), g.cols(y)), (b, 8));
        }
    }

    #[test]
    fn encode_is_permutation_equivariant() {
        // No positional signal anywhere: permuting the window permutes the
        // latent rows identically (up to fp summation order).
        let cfg = test_cfg(8, 2, 4);
        let store = init_params("enc", &cfg, 9).unwrap();
        let window: Vec<Real> = (0..10).map(|t| (t as Real * 1.3).sin() + 0.1 * t as Real).collect();
        let perm = [3usize, 0, 7, 1, 9, 4, 2, 8, 5, 6];
        let permuted: Vec<Real> = perm.iter().map(|&i| window[i]).collect();

        let run = |w: &[Real]| -> Vec<Real> {
            let mut g = Graph::new();
            let vars = register(&mut g, &store);
            let y = encode(&mut g, w, &vars, "enc", &cfg).unwrap();
            g.data(y).to_vec()
        };
        let y = run(&window);
        let y_perm = run(&permuted);
        for (i, &src) in perm.iter().enumerate() {
            for j in 0..8 {
                assert!(
                    (y_perm[i * 8 + j] - y[src * 8 + j]).abs() < 1e-9,
                    "row {i} col {j}"
                );
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EncoderConfig::new(6, 1, 4).validate().is_err()); // 6 % 4 != 0
        assert!(EncoderConfig::new(7, 1, 7).validate().is_err()); // odd d
        assert!(EncoderConfig::new(8, 1, 4).validate().is_ok());
    }
}
