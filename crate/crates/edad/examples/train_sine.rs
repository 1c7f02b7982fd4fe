//! End-to-end run on a synthetic seasonal series: contaminate the training
//! split, train, score the independently-injected test split, and report
//! detection metrics.
//!
//!     cargo run --release --example train_sine

use edad::data::{
    channel_split, contaminate, inject_anomalies, sine_series, standardize, windowize,
    AnomalyKind, InjectionSpec,
};
use edad::metrics::EvalReport;
use edad::scoring::{self, AggMode};
use edad::trainer::{train, ModelConfig, TrainConfig};

fn main() -> edad::Result<()> {
    let seed = 7;
    let series = sine_series("sine", 10_000, 50.0, 1.0, 0.1, seed);
    let (train_split, test_split) = series.split_train_test(0.7)?;

    // Contaminate the training data; labels are bookkeeping only.
    let contaminated = contaminate(&train_split, 0.05, seed)?;

    let cfg = TrainConfig {
        model: ModelConfig {
            d: 64,
            layers: 2,
            heads: 8,
            d_ff: 256,
            window: 100,
            stride: 10,
            ..Default::default()
        },
        seed,
        ..Default::default()
    };

    let (standardized, stats) = standardize(&channel_split(&contaminated)[0], None)?;
    let batch = windowize(&standardized, cfg.model.window, cfg.model.stride)?;
    println!("training on {} windows", batch.windows.len());
    let t0 = std::time::Instant::now();
    let outcome = train(&[batch], &cfg)?;
    println!(
        "trained {} epochs in {:.1}s (best epoch {}), clamp events: {}",
        outcome.log.len(),
        t0.elapsed().as_secs_f64(),
        outcome.best_epoch,
        outcome.clamp_events
    );
    for row in &outcome.log {
        println!(
            "epoch {}: total {:.4}  sta {:.4}  aux {:.4}  reg {:.6}  ({:.1}s)",
            row.epoch, row.total, row.sta, row.aux, row.reg, row.seconds
        );
    }

    // Independent global anomalies in the test split.
    let spec = InjectionSpec {
        kind: AnomalyKind::Global,
        ratio: 0.02,
        magnitude: 3.0,
        seed: seed + 1,
    };
    let injected = inject_anomalies(&test_split, &spec)?;
    let labels = injected.labels.clone().expect("injected labels");

    let (test_std, _) = standardize(&channel_split(&injected)[0], Some(stats))?;
    let test_batch = windowize(&test_std, cfg.model.window, cfg.model.stride)?;
    let window_scores = scoring::score_windows(&outcome.model, &test_batch)?;
    let scored = scoring::aggregate(
        &[(test_batch.offsets.clone(), window_scores)],
        cfg.model.window,
        injected.len(),
        AggMode::Mean,
    )?;
    let preds = scoring::threshold(&scored.scores, 0.02)?;
    let report = EvalReport::compute(&scored.scores, &preds, &labels, 50)?;
    println!("\ntest-split detection:");
    print!("{}", report.to_text());
    Ok(())
}
