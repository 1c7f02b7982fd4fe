//! Model assembly: architecture config, parameter stores, checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use crate::encoder::{self, EncoderConfig};
use crate::mi::{self, CriticKind, EstimatorForm, EstimatorKind};
use crate::numerics::{checkpoint, AdamState, ParamStore, Real, Tensor};
use crate::{decomposer, Error, Result};

/// Architecture and inference-time configuration. Training-only knobs live
/// in [`super::TrainConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub window: usize,
    pub stride: usize,
    pub eps: Real,
    pub estimator: EstimatorKind,
    pub standard_infonce: bool,
    pub critic: CriticKind,
    pub conventional_addnorm: bool,
    pub clamp: Real,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 256,
            layers: 3,
            heads: 8,
            d_ff: 1024,
            window: 100,
            stride: 10,
            eps: 1e-5,
            estimator: EstimatorKind::InfoNce,
            standard_infonce: false,
            critic: CriticKind::Separable,
            conventional_addnorm: false,
            clamp: mi::DEFAULT_CLAMP,
        }
    }
}

impl ModelConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            d: self.d,
            layers: self.layers,
            heads: self.heads,
            d_ff: self.d_ff,
            eps: self.eps,
            conventional_addnorm: self.conventional_addnorm,
        }
    }

    pub fn estimator_form(&self) -> EstimatorForm {
        EstimatorForm::resolve(self.estimator, self.standard_infonce)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_config().validate()?;
        if self.window < 2 {
            return Err(Error::Config("window must be at least 2".into()));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::Config(format!(
                "stride {} must be in 1..={}",
                self.stride, self.window
            )));
        }
        if self.clamp <= 0.0 {
            return Err(Error::Config("clamp must be positive".into()));
        }
        Ok(())
    }
}

/// Student parameters (encoder + projection + critic) plus the teacher's
/// encoder copy.
#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    /// `enc.*`, `dec.w_p`, `critic.*`
    pub params: ParamStore,
    /// `enc.*` only; updated by EMA, never by gradients.
    pub teacher: ParamStore,
}

impl Model {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Model> {
        cfg.validate()?;
        let mut params = encoder::init_params("enc", &cfg.encoder_config(), seed)?;
        for (name, t) in decomposer::init_params("dec", cfg.d, seed).iter() {
            params.insert(name, t.clone());
        }
        let critic = mi::init_critic_params(
            "critic",
            cfg.critic,
            cfg.d,
            cfg.d / 2,
            cfg.d,
            cfg.d / 2,
            seed,
        );
        for (name, t) in critic.iter() {
            params.insert(name, t.clone());
        }
        let teacher = params.clone_encoder();
        Ok(Model { cfg, params, teacher })
    }

    /// Hard-copy the teacher from the live student encoder.
    pub fn sync_teacher(&mut self) {
        self.teacher = self.params.clone_encoder();
    }

    pub fn save(&self, path: &Path, adam: Option<&AdamState>) -> Result<()> {
        self.save_with(path, adam, &BTreeMap::new())
    }

    /// Save with additional named tensors (e.g. per-channel train
    /// statistics under `stats.*`).
    pub fn save_with(
        &self,
        path: &Path,
        adam: Option<&AdamState>,
        extra: &BTreeMap<String, Tensor>,
    ) -> Result<()> {
        let mut map: BTreeMap<String, Tensor> = BTreeMap::new();
        for (k, v) in extra {
            map.insert(format!("extra.{k}"), v.clone());
        }
        for (k, v) in meta_entries(&self.cfg) {
            map.insert(k, v);
        }
        for (name, t) in self.params.iter() {
            map.insert(format!("model.{name}"), t.clone());
        }
        for (name, t) in self.teacher.iter() {
            map.insert(format!("teacher.{name}"), t.clone());
        }
        if let Some(state) = adam {
            let (m, v) = state.moments();
            for (name, t) in m {
                map.insert(format!("adam.m.{name}"), t.clone());
            }
            for (name, t) in v {
                map.insert(format!("adam.v.{name}"), t.clone());
            }
            map.insert("adam.step".to_string(), Tensor::scalar(state.step_count() as Real));
        }
        checkpoint::save(path, &map)
    }

    pub fn load(path: &Path) -> Result<(Model, Option<AdamState>, BTreeMap<String, Tensor>)> {
        let map = checkpoint::load(path)?;
        let cfg = meta_config(&map)?;
        let mut params = ParamStore::new();
        let mut teacher = ParamStore::new();
        let mut adam_m: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut adam_v: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut adam_step = None;
        let mut extra = BTreeMap::new();
        for (name, t) in map {
            if let Some(rest) = name.strip_prefix("model.") {
                params.insert(rest, t);
            } else if let Some(rest) = name.strip_prefix("teacher.") {
                teacher.insert(rest, t);
            } else if let Some(rest) = name.strip_prefix("adam.m.") {
                adam_m.insert(rest.to_string(), t);
            } else if let Some(rest) = name.strip_prefix("adam.v.") {
                adam_v.insert(rest.to_string(), t);
            } else if name == "adam.step" {
                adam_step = Some(t.scalar_value()? as u64);
            } else if let Some(rest) = name.strip_prefix("extra.") {
                extra.insert(rest.to_string(), t);
            }
        }
        if params.is_empty() {
            return Err(Error::Checkpoint("no model parameters in file".into()));
        }
        let adam = adam_step.map(|step| AdamState::from_parts(adam_m, adam_v, step));
        Ok((Model { cfg, params, teacher }, adam, extra))
    }
}

impl ParamStore {
    /// Clone of the `enc.*` entries (the teacher's scope).
    pub fn clone_encoder(&self) -> ParamStore {
        let mut out = ParamStore::new();
        for (name, t) in self.iter() {
            if name.starts_with("enc.") {
                out.insert(name, t.clone());
            }
        }
        out
    }
}

fn meta_entries(cfg: &ModelConfig) -> Vec<(String, Tensor)> {
    let s = |v: Real| Tensor::scalar(v);
    vec![
        ("meta.schema".into(), s(1.0)),
        ("meta.d".into(), s(cfg.d as Real)),
        ("meta.layers".into(), s(cfg.layers as Real)),
        ("meta.heads".into(), s(cfg.heads as Real)),
        ("meta.d_ff".into(), s(cfg.d_ff as Real)),
        ("meta.window".into(), s(cfg.window as Real)),
        ("meta.stride".into(), s(cfg.stride as Real)),
        ("meta.eps".into(), s(cfg.eps)),
        (
            "meta.estimator".into(),
            s(EstimatorKind::ALL.iter().position(|k| *k == cfg.estimator).unwrap() as Real),
        ),
        ("meta.standard_infonce".into(), s(cfg.standard_infonce as u8 as Real)),
        (
            "meta.critic".into(),
            s(CriticKind::ALL.iter().position(|k| *k == cfg.critic).unwrap() as Real),
        ),
        ("meta.conventional_addnorm".into(), s(cfg.conventional_addnorm as u8 as Real)),
        ("meta.clamp".into(), s(cfg.clamp)),
    ]
}

fn meta_config(map: &BTreeMap<String, Tensor>) -> Result<ModelConfig> {
    let get = |key: &str| -> Result<Real> {
        map.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing '{key}'")))?
            .scalar_value()
    };
    let usize_of = |key: &str| -> Result<usize> { Ok(get(key)? as usize) };
    Ok(ModelConfig {
        d: usize_of("meta.d")?,
        layers: usize_of("meta.layers")?,
        heads: usize_of("meta.heads")?,
        d_ff: usize_of("meta.d_ff")?,
        window: usize_of("meta.window")?,
        stride: usize_of("meta.stride")?,
        eps: get("meta.eps")?,
        estimator: EstimatorKind::ALL[usize_of("meta.estimator")?],
        standard_infonce: get("meta.standard_infonce")? != 0.0,
        critic: CriticKind::ALL[usize_of("meta.critic")?],
        conventional_addnorm: get("meta.conventional_addnorm")? != 0.0,
        clamp: get("meta.clamp")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig { d: 8, layers: 1, heads: 2, d_ff: 16, window: 10, stride: 5, ..Default::default() }
    }

    #[test]
    fn model_has_all_parameter_groups() {
        let m = Model::new(small_cfg(), 1).unwrap();
        assert!(m.params.get("enc.w_emb").is_some());
        assert!(m.params.get("dec.w_p").is_some());
        assert!(m.params.get("critic.phi_a").is_some());
        assert!(m.teacher.get("enc.w_emb").is_some());
        assert!(m.teacher.get("dec.w_p").is_none());
    }

    #[test]
    fn teacher_starts_as_student_copy() {
        let m = Model::new(small_cfg(), 2).unwrap();
        for (name, t) in m.teacher.iter() {
            assert_eq!(m.params.get(name).unwrap(), t);
        }
    }

    #[test]
    fn checkpoint_roundtrip_with_adam() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = Model::new(small_cfg(), 3).unwrap();
        let adam = AdamState::new();
        let mut extra = BTreeMap::new();
        extra.insert("stats.mean".to_string(), Tensor::row(&[0.5, -1.0]));
        m.save_with(&path, Some(&adam), &extra).unwrap();
        let (back, adam_back, extra_back) = Model::load(&path).unwrap();
        assert_eq!(back.cfg, m.cfg);
        assert_eq!(back.params, m.params);
        assert_eq!(back.teacher, m.teacher);
        assert_eq!(adam_back.unwrap().step_count(), 0);
        assert_eq!(extra_back["stats.mean"], extra["stats.mean"]);
    }
}
