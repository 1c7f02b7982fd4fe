//! Temporary diagnostic: inspect the score decomposition at anomalies.

use edad::data::{
    channel_split, contaminate, inject_anomalies, sine_series, standardize, windowize,
    AnomalyKind, InjectionSpec,
};
use edad::numerics::{Graph, Real};
use edad::trainer::{train, ModelConfig, TrainConfig};

fn main() -> edad::Result<()> {
    let seed: u64 = std::env::var("DIAG_SEED").ok().and_then(|v| v.parse().ok()).unwrap_or(7);
    let n: usize = std::env::var("DIAG_N").ok().and_then(|v| v.parse().ok()).unwrap_or(4000);
    let series = sine_series("sine", n, 50.0, 1.0, 0.1, seed);
    let (train_split, test_split) = series.split_train_test(0.7)?;
    let contaminated = contaminate(&train_split, std::env::var("DIAG_CR").ok().and_then(|v| v.parse().ok()).unwrap_or(0.05), seed)?;

    let cfg = TrainConfig {
        model: ModelConfig {
            d: 64,
            layers: 2,
            heads: 8,
            d_ff: 256,
            window: 100,
            standard_infonce: std::env::var("DIAG_STD").map(|v| v == "1").unwrap_or(false),
            stride: std::env::var("DIAG_STRIDE").ok().and_then(|v| v.parse().ok()).unwrap_or(25),
            ..Default::default()
        },
        max_epochs: std::env::var("DIAG_EPOCHS").ok().and_then(|v| v.parse().ok()).unwrap_or(5),
        seed,
        ..Default::default()
    };

    let (standardized, stats) = standardize(&channel_split(&contaminated)[0], None)?;
    let batch = windowize(&standardized, cfg.model.window, cfg.model.stride)?;
    let outcome = train(&[batch], &cfg)?;
    for row in &outcome.log {
        println!(
            "epoch {}: total {:.3} sta {:.3} aux {:.3} reg {:.3}",
            row.epoch, row.total, row.sta, row.aux, row.reg
        );
    }
    let model = outcome.model;

    let spec = InjectionSpec { kind: AnomalyKind::Global, ratio: 0.02, magnitude: 3.0, seed: seed + 1 };
    let injected = inject_anomalies(&test_split, &spec)?;
    let labels = injected.labels.clone().unwrap();
    let (test_std, _) = standardize(&channel_split(&injected)[0], Some(stats))?;

    // Examine one window containing an anomaly.
    let b = cfg.model.window;
    let first_anom = labels.iter().position(|&l| l == 1).unwrap();
    let start = first_anom.saturating_sub(b / 2).min(test_std.len() - b);
    let window = &test_std.values()[start..start + b];
    let wlabels = &labels[start..start + b];

    let enc_cfg = model.cfg.encoder_config();
    let mut g = Graph::new();
    let vars = model.params.register_constant(&mut g);
    let y = edad::encoder::encode(&mut g, window, &vars, "enc", &enc_cfg)?;
    let (y_sta, y_aux) = edad::decomposer::split(&mut g, y)?;
    let f = edad::mi::critic_scores(&mut g, y, y_aux, &vars, "critic", model.cfg.critic)?;
    let f_t = g.tensor(f);

    // Y row norms at anomalies vs normal
    let y_t = g.tensor(y);
    let row_norm = |t: &edad::numerics::Tensor, i: usize| -> Real {
        let c = t.cols();
        t.data()[i * c..(i + 1) * c].iter().map(|v| v * v).sum::<Real>().sqrt()
    };
    let mut stats_norm = (0.0, 0usize, 0.0, 0usize); // (anom sum, anom n, norm sum, norm n)
    let mut stats_fii = (0.0, 0.0);
    let mut stats_off = (0.0, 0.0);
    for i in 0..b {
        let fii = f_t.at(i, i);
        let off: Real = (0..b)
            .filter(|&j| j != i)
            .map(|j| f_t.at(i, j).clamp(-50.0, 50.0).exp())
            .sum::<Real>()
            / (b - 1) as Real;
        if wlabels[i] == 1 {
            stats_norm.0 += row_norm(&y_t, i);
            stats_norm.1 += 1;
            stats_fii.0 += fii;
            stats_off.0 += off;
        } else {
            stats_norm.2 += row_norm(&y_t, i);
            stats_norm.3 += 1;
            stats_fii.1 += fii;
            stats_off.1 += off;
        }
    }
    let (an, nn) = (stats_norm.1 as Real, stats_norm.3 as Real);
    println!("\nwindow [{start}..{}], {} anomalies", start + b, stats_norm.1);
    println!("mean |Y row|: anomalous {:.4}, normal {:.4}", stats_norm.0 / an, stats_norm.2 / nn);
    println!("mean F_ii:    anomalous {:.4}, normal {:.4}", stats_fii.0 / an, stats_fii.1 / nn);
    println!("mean offexp:  anomalous {:.4}, normal {:.4}", stats_off.0 / an, stats_off.1 / nn);

    // Separability of (y_sta vs y_aux) halves
    let sta_t = g.tensor(y_sta);
    let aux_t = g.tensor(y_aux);
    let mn = |t: &edad::numerics::Tensor| -> (Real, Real) {
        let mut s = 0.0;
        let mut sq: Real = 0.0;
        for v in t.data() {
            s += v;
            sq += v * v;
        }
        let n = t.numel() as Real;
        (s / n, (sq / n - (s / n) * (s / n)).sqrt())
    };
    println!("y_sta mean/std {:?}  y_aux mean/std {:?}", mn(&sta_t), mn(&aux_t));

    // Trained MI estimate on a training window (InfoNCE-as-written).
    {
        let twin = &standardized.values()[0..b];
        let mut g2 = Graph::new();
        let vars2 = model.params.register_constant(&mut g2);
        let y2 = edad::encoder::encode(&mut g2, twin, &vars2, "enc", &enc_cfg)?;
        let (y_sta2, _) = edad::decomposer::split(&mut g2, y2)?;
        let f2 = edad::mi::critic_scores(&mut g2, y2, y_sta2, &vars2, "critic", model.cfg.critic)?;
        let est = edad::mi::estimate(
            &mut g2,
            model.cfg.estimator_form(),
            f2,
            1.0,
            model.cfg.clamp,
        )?;
        println!("trained I(Y, Y_sta) on a train window: {:.4}", g2.scalar_value(est.value)?);
    }

    // Full test-split A-ROC at this training depth.
    let test_batch = windowize(&test_std, cfg.model.window, cfg.model.stride)?;
    let window_scores = edad::scoring::score_windows(&model, &test_batch)?;
    let scored = edad::scoring::aggregate(
        &[(test_batch.offsets.clone(), window_scores)],
        cfg.model.window,
        injected.len(),
        edad::scoring::AggMode::Mean,
    )?;
    let aroc = edad::metrics::auc_roc(&scored.scores, &labels)?;
    println!("test A-ROC: {aroc:.4}");

    // Where do anomalies rank in raw aggregated scores?
    let mut anom_scores: Vec<Real> = Vec::new();
    let mut norm_scores: Vec<Real> = Vec::new();
    for (s, &l) in scored.scores.iter().zip(&labels) {
        if l == 1 {
            anom_scores.push(*s);
        } else {
            norm_scores.push(*s);
        }
    }
    let mean = |v: &[Real]| v.iter().sum::<Real>() / v.len() as Real;
    println!(
        "aggregated score mean: anomalous {:.4}, normal {:.4}",
        mean(&anom_scores),
        mean(&norm_scores)
    );

    // Window-level view: does a window's mean score track its anomaly count?
    let window_scores2 = edad::scoring::score_windows(&model, &test_batch)?;
    println!("\nper-window: anomaly_count, window mean score, spike rank in window");
    for (k, (offset, scores)) in test_batch
        .offsets
        .iter()
        .zip(&window_scores2)
        .enumerate()
        .map(|(k, p)| (k, p))
        .take(12)
    {
        let wl = &labels[*offset..*offset + b];
        let count: usize = wl.iter().map(|&l| l as usize).sum();
        let wmean = mean(scores);
        // rank of the highest-scoring anomalous timestamp
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by(|&x, &y| scores[y].partial_cmp(&scores[x]).unwrap());
        let best_rank = order
            .iter()
            .position(|&i| wl[i] == 1)
            .map(|r| r.to_string())
            .unwrap_or_else(|| "-".into());
        println!("w{k}: {count} anomalies, mean {wmean:.4}, best anomaly rank {best_rank}");
    }
    Ok(())
}
