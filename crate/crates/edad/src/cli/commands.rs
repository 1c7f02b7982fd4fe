//! The five batch commands: inject, train, score, eval, bench.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::{
    channel_split, contaminate, inject_anomalies, load_csv, sine_series, standardize, windowize,
    write_csv, ChannelStats, InjectionSpec, TimeSeries, WindowBatch,
};
use crate::metrics::EvalReport;
use crate::mi::{CriticKind, EstimatorKind};
use crate::numerics::{Real, Tensor};
use crate::scoring::{self, AnomalyScoreSeries};
use crate::trainer::{self, BaselineConfig, Model};
use crate::{Error, Result};

use super::config::{RunConfig, ScoreSplit, SynthKind};

fn load_or_synth(cfg: &RunConfig) -> Result<TimeSeries> {
    match &cfg.input {
        Some(path) => load_csv(path),
        None => Ok(match cfg.synth {
            SynthKind::Sine => sine_series(
                "synth-sine",
                cfg.synth_n,
                cfg.synth_period,
                cfg.synth_amplitude,
                cfg.synth_noise,
                cfg.seed,
            ),
            SynthKind::Flat => crate::data::flat_series("synth-flat", cfg.synth_n, cfg.synth_value),
        }),
    }
}

/// inject: corrupt a (possibly synthesized) univariate series and write it
/// with labels.
pub fn cmd_inject(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.write_snapshot()?;
    let base = load_or_synth(cfg)?;
    if base.dims() != 1 {
        return Err(Error::Config(format!(
            "inject expects a univariate series, got {} channels",
            base.dims()
        )));
    }
    let spec = InjectionSpec {
        kind: cfg.inject_kind,
        ratio: cfg.inject_ratio,
        magnitude: cfg.inject_magnitude,
        seed: cfg.seed,
    };
    let injected = inject_anomalies(&base, &spec)?;
    let path = cfg.out.join("injected.csv");
    write_csv(&path, &injected)?;
    Ok(path)
}

struct Prepared {
    batches: Vec<WindowBatch>,
    stats: Vec<ChannelStats>,
}

/// Split off the training part, optionally contaminate it, standardize per
/// channel, and windowize. Labels never reach training.
fn prepare_training(cfg: &RunConfig, series: &TimeSeries) -> Result<Prepared> {
    let (train, _test) = series.split_train_test(cfg.split)?;
    let channels = channel_split(&train);
    let mut batches = Vec::new();
    let mut stats = Vec::new();
    for (j, channel) in channels.iter().enumerate() {
        let channel = if cfg.contaminate_ratio > 0.0 {
            contaminate(channel, cfg.contaminate_ratio, cfg.seed.wrapping_add(j as u64))?
        } else {
            channel.clone()
        };
        let (standardized, ch_stats) = standardize(&channel, None)?;
        let mut wb = windowize(&standardized, cfg.window, cfg.stride)?;
        wb.channel = j;
        batches.push(wb);
        stats.push(ch_stats);
    }
    Ok(Prepared { batches, stats })
}

fn stats_tensors(stats: &[ChannelStats]) -> BTreeMap<String, Tensor> {
    let means: Vec<Real> = stats.iter().map(|s| s.mean).collect();
    let stds: Vec<Real> = stats.iter().map(|s| s.std).collect();
    let mut map = BTreeMap::new();
    map.insert("stats.mean".to_string(), Tensor::row(&means));
    map.insert("stats.std".to_string(), Tensor::row(&stds));
    map
}

fn stats_from_tensors(extra: &BTreeMap<String, Tensor>) -> Result<Vec<ChannelStats>> {
    let means = extra
        .get("stats.mean")
        .ok_or_else(|| Error::Checkpoint("missing 'extra.stats.mean'".into()))?;
    let stds = extra
        .get("stats.std")
        .ok_or_else(|| Error::Checkpoint("missing 'extra.stats.std'".into()))?;
    Ok(means
        .data()
        .iter()
        .zip(stds.data())
        .map(|(&mean, &std)| ChannelStats { mean, std })
        .collect())
}

pub struct TrainPaths {
    pub checkpoint: PathBuf,
    pub checkpoint_final: PathBuf,
    pub log: PathBuf,
}

/// train: fit the model on the training split and write best/final
/// checkpoints plus the per-epoch log.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainPaths> {
    cfg.write_snapshot()?;
    let series = load_or_synth(cfg)?;
    let prepared = prepare_training(cfg, &series)?;
    let outcome = trainer::train(&prepared.batches, &cfg.train_config())?;

    std::fs::create_dir_all(&cfg.out)?;
    let extra = stats_tensors(&prepared.stats);
    let checkpoint = cfg.out.join("checkpoint.ckpt");
    outcome.model.save_with(&checkpoint, Some(&outcome.adam), &extra)?;
    let checkpoint_final = cfg.out.join("checkpoint_final.ckpt");
    outcome.final_model.save_with(&checkpoint_final, Some(&outcome.adam), &extra)?;

    let log = cfg.out.join("train_log.csv");
    let mut w = std::fs::File::create(&log)?;
    writeln!(w, "epoch,total,l_sta,l_aux,l_reg,seconds")?;
    for row in &outcome.log {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.epoch, row.total, row.sta, row.aux, row.reg, row.seconds
        )?;
    }
    Ok(TrainPaths { checkpoint, checkpoint_final, log })
}

/// Scores for one already-standardized-compatible series part.
fn score_part(
    model: &Model,
    stats: &[ChannelStats],
    part: &TimeSeries,
    agg: scoring::AggMode,
) -> Result<AnomalyScoreSeries> {
    let channels = channel_split(part);
    if channels.len() != stats.len() {
        return Err(Error::Scoring(format!(
            "checkpoint carries {} channel stats but the series has {} channels",
            stats.len(),
            channels.len()
        )));
    }
    let mut per_channel = Vec::new();
    for (channel, ch_stats) in channels.iter().zip(stats) {
        let (standardized, _) = standardize(channel, Some(*ch_stats))?;
        let wb = windowize(&standardized, model.cfg.window, model.cfg.stride)?;
        let window_scores = scoring::score_windows(model, &wb)?;
        per_channel.push((wb.offsets, window_scores));
    }
    scoring::aggregate(&per_channel, model.cfg.window, part.len(), agg)
}

fn select_split(series: &TimeSeries, cfg: &RunConfig) -> Result<(TimeSeries, usize)> {
    match cfg.score_split {
        ScoreSplit::All => Ok((series.clone(), 0)),
        ScoreSplit::Train => {
            let (train, _) = series.split_train_test(cfg.split)?;
            Ok((train, 0))
        }
        ScoreSplit::Test => {
            let (train, test) = series.split_train_test(cfg.split)?;
            Ok((test, train.len()))
        }
    }
}

/// score: run a checkpoint over the configured split and write the score
/// table (absolute timestamp index, score, coverage, prediction, label).
pub fn cmd_score(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.write_snapshot()?;
    let checkpoint = cfg
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("score needs a checkpoint path".into()))?;
    let (model, _, extra) = Model::load(checkpoint)?;
    let series = load_or_synth(cfg)?;
    let stats = stats_from_tensors(&extra)?;
    let (part, offset) = select_split(&series, cfg)?;

    let scored = score_part(&model, &stats, &part, cfg.agg)?;
    let preds = if cfg.pool_train_scores && cfg.score_split == ScoreSplit::Test {
        let (train, _) = series.split_train_test(cfg.split)?;
        let train_scored = score_part(&model, &stats, &train, cfg.agg)?;
        let mut pool = train_scored.scores.clone();
        pool.extend_from_slice(&scored.scores);
        scoring::threshold_pooled(&scored.scores, &pool, cfg.ratio)?
    } else {
        scoring::threshold(&scored.scores, cfg.ratio)?
    };

    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("scores.csv");
    let mut w = std::fs::File::create(&path)?;
    let has_labels = part.labels.is_some();
    if has_labels {
        writeln!(w, "index,score,coverage,prediction,label")?;
    } else {
        writeln!(w, "index,score,coverage,prediction")?;
    }
    for t in 0..part.len() {
        if let Some(labels) = &part.labels {
            writeln!(
                w,
                "{},{},{},{},{}",
                offset + t,
                scored.scores[t],
                scored.coverage[t],
                preds[t],
                labels[t]
            )?;
        } else {
            writeln!(
                w,
                "{},{},{},{}",
                offset + t,
                scored.scores[t],
                scored.coverage[t],
                preds[t]
            )?;
        }
    }
    Ok(path)
}

/// Parsed rows of a scores.csv.
pub struct ScoreTable {
    pub scores: Vec<Real>,
    pub preds: Vec<u8>,
    pub labels: Option<Vec<u8>>,
}

pub fn read_scores_csv(path: &Path) -> Result<ScoreTable> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Ingest {
        path: path.display().to_string(),
        row: 0,
        col: "-".into(),
        msg: e.to_string(),
    })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Config(format!("scores header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (score_col, pred_col) = match (col("score"), col("prediction")) {
        (Some(s), Some(p)) => (s, p),
        _ => {
            return Err(Error::Config(
                "scores file needs 'score' and 'prediction' columns".into(),
            ))
        }
    };
    let label_col = col("label");

    let mut table = ScoreTable { scores: Vec::new(), preds: Vec::new(), labels: label_col.map(|_| Vec::new()) };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingest {
            path: path.display().to_string(),
            row: i + 1,
            col: "-".into(),
            msg: e.to_string(),
        })?;
        let cell = |c: usize| record.get(c).unwrap_or("").trim().to_string();
        table.scores.push(cell(score_col).parse().map_err(|_| Error::Ingest {
            path: path.display().to_string(),
            row: i + 1,
            col: "score".into(),
            msg: "non-numeric".into(),
        })?);
        table.preds.push(cell(pred_col).parse::<u8>().map_err(|_| Error::Ingest {
            path: path.display().to_string(),
            row: i + 1,
            col: "prediction".into(),
            msg: "non-binary".into(),
        })?);
        if let (Some(lc), Some(labels)) = (label_col, table.labels.as_mut()) {
            labels.push(cell(lc).parse::<u8>().map_err(|_| Error::Ingest {
                path: path.display().to_string(),
                row: i + 1,
                col: "label".into(),
                msg: "non-binary".into(),
            })?);
        }
    }
    Ok(table)
}

/// eval: metrics over a written score table (labels required).
pub fn cmd_eval(cfg: &RunConfig) -> Result<(EvalReport, PathBuf)> {
    cfg.write_snapshot()?;
    let scores_path = cfg
        .scores
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs a scores file".into()))?;
    let table = read_scores_csv(scores_path)?;
    let labels = table
        .labels
        .ok_or_else(|| Error::MetricUndefined("scores file carries no labels".into()))?;
    let preds = if cfg.point_adjust {
        scoring::point_adjust(&table.preds, &labels)?
    } else {
        table.preds
    };
    let report = EvalReport::compute(&table.scores, &preds, &labels, cfg.resolved_vus_buffer())?;

    std::fs::create_dir_all(&cfg.out)?;
    let text_path = cfg.out.join("report.txt");
    std::fs::write(&text_path, report.to_text())?;
    let csv_path = cfg.out.join("report.csv");
    std::fs::write(
        &csv_path,
        format!("{}\n{}\n", EvalReport::CSV_HEADER, report.to_csv_row()),
    )?;
    Ok((report, text_path))
}

/// One bench cell: contamination ratio x estimator x critic.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub cr: Real,
    pub estimator: EstimatorKind,
    pub critic: CriticKind,
    pub edad: Option<EvalReport>,
    pub baseline: Option<EvalReport>,
    pub status: String,
}

fn run_bench_cell(
    cfg: &RunConfig,
    series: &TimeSeries,
    cr: Real,
    estimator: EstimatorKind,
    critic: CriticKind,
    baseline_cache: &mut BTreeMap<u64, EvalReport>,
) -> Result<(EvalReport, EvalReport)> {
    let mut cell_cfg = cfg.clone();
    cell_cfg.contaminate_ratio = cr;
    cell_cfg.estimator = estimator;
    cell_cfg.critic = critic;

    let (_, test) = series.split_train_test(cfg.split)?;
    if test.dims() != 1 {
        return Err(Error::Config("bench expects a univariate series".into()));
    }
    let spec = InjectionSpec {
        kind: cfg.inject_kind,
        ratio: cfg.inject_ratio,
        magnitude: cfg.inject_magnitude,
        seed: cfg.seed.wrapping_add(10_007),
    };
    let test_injected = inject_anomalies(&test, &spec)?;
    let labels = test_injected.labels.clone().expect("injection labels");

    let prepared = prepare_training(&cell_cfg, series)?;
    let outcome = trainer::train(&prepared.batches, &cell_cfg.train_config())?;
    let scored = score_part(&outcome.model, &prepared.stats, &test_injected, cfg.agg)?;
    let preds = scoring::threshold(&scored.scores, cfg.ratio)?;
    let edad_report =
        EvalReport::compute(&scored.scores, &preds, &labels, cfg.resolved_vus_buffer())?;

    // The baseline ignores estimator/critic; cache one run per ratio.
    let cr_key = cr.to_bits();
    let base_report = match baseline_cache.get(&cr_key) {
        Some(r) => r.clone(),
        None => {
            let base_cfg = BaselineConfig {
                max_epochs: cfg.max_epochs,
                patience: cfg.patience,
                batch_size: cfg.batch_size,
                ..BaselineConfig::new(cfg.window, cfg.seed)
            };
            let model = trainer::train_reconstruction_baseline(&prepared.batches, &base_cfg)?;
            let channels = channel_split(&test_injected);
            let mut per_channel = Vec::new();
            for (channel, ch_stats) in channels.iter().zip(&prepared.stats) {
                let (standardized, _) = standardize(channel, Some(*ch_stats))?;
                let wb = windowize(&standardized, cfg.window, cfg.stride)?;
                let scores: Result<Vec<Vec<Real>>> =
                    wb.windows.iter().map(|w| model.score_window(w)).collect();
                per_channel.push((wb.offsets, scores?));
            }
            let base_scored =
                scoring::aggregate(&per_channel, cfg.window, test_injected.len(), cfg.agg)?;
            let base_preds = scoring::threshold(&base_scored.scores, cfg.ratio)?;
            let report = EvalReport::compute(
                &base_scored.scores,
                &base_preds,
                &labels,
                cfg.resolved_vus_buffer(),
            )?;
            baseline_cache.insert(cr_key, report.clone());
            report
        }
    };
    Ok((edad_report, base_report))
}

/// bench: sweep contamination ratios and/or estimator/critic kinds, one
/// row per cell with both arms' metrics. Cell failures are recorded and
/// the sweep continues; the command errors at the end if any cell failed.
pub fn cmd_bench(cfg: &RunConfig) -> Result<(Vec<BenchCell>, PathBuf)> {
    cfg.write_snapshot()?;
    let series = load_or_synth(cfg)?;
    let crs = if cfg.cr_grid.is_empty() { vec![cfg.contaminate_ratio] } else { cfg.cr_grid.clone() };
    let estimators =
        if cfg.estimator_grid.is_empty() { vec![cfg.estimator] } else { cfg.estimator_grid.clone() };
    let critics = if cfg.critic_grid.is_empty() { vec![cfg.critic] } else { cfg.critic_grid.clone() };

    let mut cells = Vec::new();
    let mut baseline_cache = BTreeMap::new();
    for &cr in &crs {
        for &estimator in &estimators {
            for &critic in &critics {
                let cell = match run_bench_cell(cfg, &series, cr, estimator, critic, &mut baseline_cache)
                {
                    Ok((edad, baseline)) => BenchCell {
                        cr,
                        estimator,
                        critic,
                        edad: Some(edad),
                        baseline: Some(baseline),
                        status: "ok".into(),
                    },
                    Err(e) => BenchCell {
                        cr,
                        estimator,
                        critic,
                        edad: None,
                        baseline: None,
                        status: format!("error: {e}"),
                    },
                };
                cells.push(cell);
            }
        }
    }

    std::fs::create_dir_all(&cfg.out)?;
    let wide = cfg.out.join("bench.csv");
    let mut w = std::fs::File::create(&wide)?;
    let metric_names = ["precision", "recall", "f1", "auc_pr", "auc_roc", "vus_pr", "vus_roc"];
    let mut header = String::from("cr,estimator,critic,status");
    for arm in ["edad", "baseline"] {
        for m in metric_names {
            header.push_str(&format!(",{arm}_{m}"));
        }
    }
    writeln!(w, "{header}")?;
    let metric_values = |r: &EvalReport| -> Vec<Real> {
        vec![r.precision, r.recall, r.f1, r.auc_pr, r.auc_roc, r.vus_pr, r.vus_roc]
    };
    for cell in &cells {
        let mut row = format!(
            "{},{},{},{}",
            cell.cr,
            cell.estimator.name(),
            cell.critic.name(),
            cell.status.replace(',', ";")
        );
        for report in [&cell.edad, &cell.baseline] {
            match report {
                Some(r) => {
                    for v in metric_values(r) {
                        row.push_str(&format!(",{v}"));
                    }
                }
                None => row.push_str(&",".repeat(metric_names.len())),
            }
        }
        writeln!(w, "{row}")?;
    }

    // Long format for external plotting.
    let long = cfg.out.join("bench_long.csv");
    let mut w = std::fs::File::create(&long)?;
    writeln!(w, "cr,estimator,critic,arm,metric,value")?;
    for cell in &cells {
        for (arm, report) in [("edad", &cell.edad), ("baseline", &cell.baseline)] {
            if let Some(r) = report {
                for (name, v) in metric_names.iter().zip(metric_values(r)) {
                    writeln!(
                        w,
                        "{},{},{},{arm},{name},{v}",
                        cell.cr,
                        cell.estimator.name(),
                        cell.critic.name()
                    )?;
                }
            }
        }
    }

    if cells.iter().any(|c| c.status != "ok") {
        return Err(Error::Train(format!(
            "{} bench cell(s) failed; partial results in {}",
            cells.iter().filter(|c| c.status != "ok").count(),
            wide.display()
        )));
    }
    Ok((cells, wide))
}
