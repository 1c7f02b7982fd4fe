//! Flat run configuration: `key=value` lines, strict on unknown keys.
//! Every command writes its resolved configuration next to its outputs so
//! a run can be reproduced from the snapshot alone.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::AnomalyKind;
use crate::mi::{CriticKind, EstimatorKind};
use crate::numerics::Real;
use crate::scoring::AggMode;
use crate::trainer::{ModelConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthKind {
    #[default]
    Sine,
    Flat,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sine" => Ok(SynthKind::Sine),
            "flat" => Ok(SynthKind::Flat),
            other => Err(Error::Config(format!("unknown synth kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreSplit {
    Train,
    #[default]
    Test,
    All,
}

impl FromStr for ScoreSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(ScoreSplit::Train),
            "test" => Ok(ScoreSplit::Test),
            "all" => Ok(ScoreSplit::All),
            other => Err(Error::Config(format!("unknown score split '{other}'"))),
        }
    }
}

/// Union of every pipeline knob; commands read the subset they need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,

    pub synth: SynthKind,
    pub synth_n: usize,
    pub synth_period: Real,
    pub synth_amplitude: Real,
    pub synth_noise: Real,
    pub synth_value: Real,
    pub split: Real,

    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// 0 resolves to 4*d.
    pub d_ff: usize,
    pub window: usize,
    pub stride: usize,
    pub lr: Real,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_improvement: Real,
    pub batch_size: usize,
    pub ema_decay: Real,
    pub lambda1: Real,
    pub lambda2: Real,
    pub lambda3: Real,
    pub estimator: EstimatorKind,
    pub critic: CriticKind,
    pub standard_infonce: bool,
    pub conventional_addnorm: bool,
    pub clamp: Real,

    pub ratio: Real,
    pub point_adjust: bool,
    pub pool_train_scores: bool,
    /// 0 resolves to window/2.
    pub vus_buffer: usize,
    pub agg: AggMode,
    pub score_split: ScoreSplit,

    pub inject_kind: AnomalyKind,
    pub inject_ratio: Real,
    pub inject_magnitude: Real,
    pub contaminate_ratio: Real,

    pub cr_grid: Vec<Real>,
    pub estimator_grid: Vec<EstimatorKind>,
    pub critic_grid: Vec<CriticKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            checkpoint: None,
            scores: None,
            out: PathBuf::from("out"),
            seed: 0,
            synth: SynthKind::Sine,
            synth_n: 10_000,
            synth_period: 50.0,
            synth_amplitude: 1.0,
            synth_noise: 0.1,
            synth_value: 0.0,
            split: 0.7,
            d: 256,
            layers: 3,
            heads: 8,
            d_ff: 0,
            window: 100,
            stride: 10,
            lr: 5e-4,
            max_epochs: 10,
            patience: 3,
            min_improvement: 1e-4,
            batch_size: 64,
            ema_decay: 0.99,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            estimator: EstimatorKind::InfoNce,
            critic: CriticKind::Separable,
            standard_infonce: false,
            conventional_addnorm: false,
            clamp: 50.0,
            ratio: 0.01,
            point_adjust: false,
            pool_train_scores: false,
            vus_buffer: 0,
            agg: AggMode::Mean,
            score_split: ScoreSplit::Test,
            inject_kind: AnomalyKind::Global,
            inject_ratio: 0.02,
            inject_magnitude: 3.0,
            contaminate_ratio: 0.0,
            cr_grid: Vec::new(),
            estimator_grid: Vec::new(),
            critic_grid: Vec::new(),
        }
    }
}

fn fmt_real(v: Real) -> String {
    format!("{v}")
}

fn fmt_opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            d: self.d,
            layers: self.layers,
            heads: self.heads,
            d_ff: if self.d_ff == 0 { 4 * self.d } else { self.d_ff },
            window: self.window,
            stride: self.stride,
            eps: 1e-5,
            estimator: self.estimator,
            standard_infonce: self.standard_infonce,
            critic: self.critic,
            conventional_addnorm: self.conventional_addnorm,
            clamp: self.clamp,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model_config(),
            lr: self.lr,
            max_epochs: self.max_epochs,
            patience: self.patience,
            min_improvement: self.min_improvement,
            batch_size: self.batch_size,
            ema_decay: self.ema_decay,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            seed: self.seed,
        }
    }

    pub fn resolved_vus_buffer(&self) -> usize {
        if self.vus_buffer == 0 {
            self.window / 2
        } else {
            self.vus_buffer
        }
    }

    /// Sorted `key=value` lines covering every field.
    pub fn to_lines(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("agg", if self.agg == AggMode::Mean { "mean".into() } else { "max".into() }),
            ("batch_size", self.batch_size.to_string()),
            ("checkpoint", fmt_opt_path(&self.checkpoint)),
            ("clamp", fmt_real(self.clamp)),
            ("contaminate_ratio", fmt_real(self.contaminate_ratio)),
            ("conventional_addnorm", self.conventional_addnorm.to_string()),
            (
                "cr_grid",
                self.cr_grid.iter().map(|v| fmt_real(*v)).collect::<Vec<_>>().join(","),
            ),
            ("critic", self.critic.name().to_string()),
            (
                "critic_grid",
                self.critic_grid.iter().map(|k| k.name().to_string()).collect::<Vec<_>>().join(","),
            ),
            ("d", self.d.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("ema_decay", fmt_real(self.ema_decay)),
            ("estimator", self.estimator.name().to_string()),
            (
                "estimator_grid",
                self.estimator_grid
                    .iter()
                    .map(|k| k.name().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("heads", self.heads.to_string()),
            ("inject_kind", self.inject_kind.name().to_string()),
            ("inject_magnitude", fmt_real(self.inject_magnitude)),
            ("inject_ratio", fmt_real(self.inject_ratio)),
            ("input", fmt_opt_path(&self.input)),
            ("lambda1", fmt_real(self.lambda1)),
            ("lambda2", fmt_real(self.lambda2)),
            ("lambda3", fmt_real(self.lambda3)),
            ("layers", self.layers.to_string()),
            ("lr", fmt_real(self.lr)),
            ("max_epochs", self.max_epochs.to_string()),
            ("min_improvement", fmt_real(self.min_improvement)),
            ("out", self.out.display().to_string()),
            ("patience", self.patience.to_string()),
            ("point_adjust", self.point_adjust.to_string()),
            ("pool_train_scores", self.pool_train_scores.to_string()),
            ("ratio", fmt_real(self.ratio)),
            (
                "score_split",
                match self.score_split {
                    ScoreSplit::Train => "train".into(),
                    ScoreSplit::Test => "test".into(),
                    ScoreSplit::All => "all".into(),
                },
            ),
            ("scores", fmt_opt_path(&self.scores)),
            ("seed", self.seed.to_string()),
            ("split", fmt_real(self.split)),
            ("standard_infonce", self.standard_infonce.to_string()),
            ("stride", self.stride.to_string()),
            (
                "synth",
                if self.synth == SynthKind::Sine { "sine".into() } else { "flat".into() },
            ),
            ("synth_amplitude", fmt_real(self.synth_amplitude)),
            ("synth_n", self.synth_n.to_string()),
            ("synth_noise", fmt_real(self.synth_noise)),
            ("synth_period", fmt_real(self.synth_period)),
            ("synth_value", fmt_real(self.synth_value)),
            ("vus_buffer", self.vus_buffer.to_string()),
            ("window", self.window.to_string()),
        ];
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    /// Apply one `key=value` pair; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        macro_rules! parse {
            () => {
                v.parse().map_err(|_| {
                    Error::Config(format!("invalid value '{v}' for key '{key}'"))
                })?
            };
        }
        match key {
            "agg" => self.agg = v.parse()?,
            "batch_size" => self.batch_size = parse!(),
            "checkpoint" => self.checkpoint = opt_path(v),
            "clamp" => self.clamp = parse!(),
            "contaminate_ratio" => self.contaminate_ratio = parse!(),
            "conventional_addnorm" => self.conventional_addnorm = parse!(),
            "cr_grid" => self.cr_grid = parse_list(v, key)?,
            "critic" => self.critic = v.parse()?,
            "critic_grid" => self.critic_grid = parse_list(v, key)?,
            "d" => self.d = parse!(),
            "d_ff" => self.d_ff = parse!(),
            "ema_decay" => self.ema_decay = parse!(),
            "estimator" => self.estimator = v.parse()?,
            "estimator_grid" => self.estimator_grid = parse_list(v, key)?,
            "heads" => self.heads = parse!(),
            "inject_kind" => self.inject_kind = v.parse()?,
            "inject_magnitude" => self.inject_magnitude = parse!(),
            "inject_ratio" => self.inject_ratio = parse!(),
            "input" => self.input = opt_path(v),
            "lambda1" => self.lambda1 = parse!(),
            "lambda2" => self.lambda2 = parse!(),
            "lambda3" => self.lambda3 = parse!(),
            "layers" => self.layers = parse!(),
            "lr" => self.lr = parse!(),
            "max_epochs" => self.max_epochs = parse!(),
            "min_improvement" => self.min_improvement = parse!(),
            "out" => self.out = PathBuf::from(v),
            "patience" => self.patience = parse!(),
            "point_adjust" => self.point_adjust = parse!(),
            "pool_train_scores" => self.pool_train_scores = parse!(),
            "ratio" => self.ratio = parse!(),
            "score_split" => self.score_split = v.parse()?,
            "scores" => self.scores = opt_path(v),
            "seed" => self.seed = parse!(),
            "split" => self.split = parse!(),
            "standard_infonce" => self.standard_infonce = parse!(),
            "stride" => self.stride = parse!(),
            "synth" => self.synth = v.parse()?,
            "synth_amplitude" => self.synth_amplitude = parse!(),
            "synth_n" => self.synth_n = parse!(),
            "synth_noise" => self.synth_noise = parse!(),
            "synth_period" => self.synth_period = parse!(),
            "synth_value" => self.synth_value = parse!(),
            "vus_buffer" => self.vus_buffer = parse!(),
            "window" => self.window = parse!(),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected key=value", path.display(), lineno + 1))
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    /// Write the resolved snapshot into the output directory.
    pub fn write_snapshot(&self) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join("config.resolved");
        std::fs::write(&path, self.to_lines())?;
        Ok(path)
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    if v.is_empty() {
        None
    } else {
        Some(PathBuf::from(v))
    }
}

fn parse_list<T>(v: &str, key: &str) -> Result<Vec<T>>
where
    T: FromStr,
    Error: From<<T as FromStr>::Err>,
{
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|item| {
            item.trim()
                .parse::<T>()
                .map_err(|e| Error::from(e))
        })
        .collect::<std::result::Result<Vec<_>, Error>>()
        .map_err(|e| Error::Config(format!("invalid '{key}': {e}")))
}

impl From<std::num::ParseFloatError> for Error {
    fn from(e: std::num::ParseFloatError) -> Self {
        Error::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_lines() {
        let mut cfg = RunConfig::default();
        cfg.d = 64;
        cfg.lambda3 = 0.5;
        cfg.cr_grid = vec![0.01, 0.2];
        cfg.estimator_grid = vec![EstimatorKind::Nwj, EstimatorKind::Jsd];
        cfg.input = Some(PathBuf::from("data.csv"));
        let lines = cfg.to_lines();

        let mut back = RunConfig::default();
        for line in lines.lines() {
            let (k, v) = line.split_once('=').unwrap();
            back.set(k, v).unwrap();
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        assert!(matches!(cfg.set("no_such_key", "1"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_value_names_key() {
        let mut cfg = RunConfig::default();
        let err = cfg.set("d", "many").unwrap_err();
        assert!(err.to_string().contains('d'), "{err}");
    }

    #[test]
    fn defaults_match_published_hyperparameters() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.d, 256);
        assert_eq!(cfg.layers, 3);
        assert_eq!(cfg.heads, 8);
        assert_eq!(cfg.window, 100);
        assert_eq!(cfg.lr, 5e-4);
        assert_eq!(cfg.ratio, 0.01);
    }
}
