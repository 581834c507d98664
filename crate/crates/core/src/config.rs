//! Run configuration: a TOML file with `[scenario]`, `[model]`,
//! `[training]`, `[experiment]` and `[io]` sections, repeatable
//! `--set section.key=value` overrides, and a content hash that names the
//! artifact directory of a run.

use crate::channel::{Scenario, Structure};
use crate::hgnn::{HgnnConfig, TrainParams};
use crate::nn::LrSchedule;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Hgnn,
    Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub kind: ModelKind,
    pub layers: usize,
    pub hidden: usize,
    pub msg_hidden: Vec<usize>,
    pub comb_hidden: Vec<usize>,
    pub rf_hidden: Vec<usize>,
    pub bb_hidden: Vec<usize>,
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    pub attention: bool,
    pub residual: bool,
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock {
            kind: ModelKind::Hgnn,
            layers: 2,
            hidden: 64,
            msg_hidden: vec![96],
            comb_hidden: vec![96],
            rf_hidden: vec![96],
            bb_hidden: vec![50],
            mlp_hidden: vec![200, 300, 500],
            dropout: 0.1,
            attention: true,
            residual: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_base: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    /// Average the parameters of the last K epochs into the emitted model.
    pub tail_avg: usize,
}

impl Default for TrainingBlock {
    fn default() -> Self {
        TrainingBlock {
            epochs: 30,
            batch_size: 10,
            lr_base: 1e-3,
            lr_decay: 0.9,
            lr_decay_every: 5,
            seed: 1,
            train_samples: 2000,
            test_samples: 200,
            grad_clip: 1.0,
            tail_avg: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentBlock {
    /// basic | snr_sweep | phase_robustness | scalability | timing | ablation
    pub kind: String,
    pub snr_db: Vec<f64>,
    pub nbar_grid: Vec<usize>,
    pub phase_error_deg: f64,
    /// Cell layouts exercised by the scalability experiment.
    pub scalability_ues: Vec<Vec<usize>>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        ExperimentBlock {
            kind: "basic".into(),
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            nbar_grid: vec![0, 2, 4, 8],
            phase_error_deg: 5.0,
            scalability_ues: vec![vec![2, 2, 2], vec![4, 4]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoBlock {
    pub out_dir: String,
}

impl Default for IoBlock {
    fn default() -> Self {
        IoBlock { out_dir: "runs".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub training: TrainingBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
    #[serde(default)]
    pub io: IoBlock,
}

pub const EXPERIMENT_KINDS: &[&str] =
    &["basic", "snr_sweep", "nbar_sweep", "phase_robustness", "scalability", "timing", "ablation"];

impl RunConfig {
    pub fn desk_default(structure: Structure) -> Self {
        RunConfig {
            scenario: Scenario::desk_default(structure, 1),
            model: ModelBlock::default(),
            training: TrainingBlock::default(),
            experiment: ExperimentBlock::default(),
            io: IoBlock::default(),
        }
    }

    /// Parses a TOML file, applies `--set section.key=value` overrides, and
    /// finally the `--seed`/`--out` flag overrides.
    pub fn load(
        path: Option<&Path>,
        sets: &[String],
        seed: Option<u64>,
        out: Option<&str>,
    ) -> Result<Self> {
        let mut value: toml::Value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Value::try_from(RunConfig::desk_default(Structure::Fully))
                .map_err(|e| Error::Config(e.to_string()))?,
        };
        for set in sets {
            apply_override(&mut value, set)?;
        }
        let mut config: RunConfig =
            value.try_into().map_err(|e| Error::Config(format!("config does not parse: {e}")))?;
        if let Some(s) = seed {
            config.scenario.seed = s;
            config.training.seed = s;
        }
        if let Some(o) = out {
            config.io.out_dir = o.to_string();
        }
        Ok(config)
    }

    /// Validates every block, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        if let Err(e) = self.scenario.validate() {
            violations.push(e.to_string());
        }
        if self.model.layers < 1 {
            violations.push("model.layers must be >= 1".into());
        }
        if self.model.hidden < 1 {
            violations.push("model.hidden must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            violations.push("model.dropout must lie in [0, 1)".into());
        }
        if self.training.epochs < 1 {
            violations.push("training.epochs must be >= 1".into());
        }
        if self.training.batch_size < 1 {
            violations.push("training.batch_size must be >= 1".into());
        }
        if self.training.train_samples < 1 || self.training.test_samples < 1 {
            violations.push("training sample counts must be >= 1".into());
        }
        if !(self.training.lr_base > 0.0) {
            violations.push("training.lr_base must be > 0".into());
        }
        if !EXPERIMENT_KINDS.contains(&self.experiment.kind.as_str()) {
            violations.push(format!(
                "experiment.kind '{}' unknown (expected one of {})",
                self.experiment.kind,
                EXPERIMENT_KINDS.join(", ")
            ));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations.join("; ")))
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// First eight hex characters of the SHA-256 of the resolved config,
    /// excluding the seeds and the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.io.out_dir = String::new();
        canon.scenario.seed = 0;
        canon.training.seed = 0;
        let mut hasher = Sha256::new();
        hasher.update(canon.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }

    /// Artifact directory of this run: `<out_dir>/<hash>-s<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        PathBuf::from(&self.io.out_dir).join(format!("{}-s{}", self.hash(), self.training.seed))
    }

    pub fn hgnn_config(&self) -> HgnnConfig {
        let n_rf = self.scenario.ues_per_bs.iter().copied().max().unwrap_or(1);
        HgnnConfig {
            layers: self.model.layers,
            hidden: self.model.hidden,
            msg_hidden: self.model.msg_hidden.clone(),
            comb_hidden: self.model.comb_hidden.clone(),
            rf_hidden: self.model.rf_hidden.clone(),
            bb_hidden: self.model.bb_hidden.clone(),
            dropout: self.model.dropout,
            attention: self.model.attention,
            residual: self.model.residual,
            structure: self.scenario.structure,
            n_mm: self.scenario.n_mm,
            n_sub: self.scenario.n_sub,
            n_bar: self.scenario.n_bar,
            n_rf,
        }
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            lr: LrSchedule {
                base: self.training.lr_base,
                decay: self.training.lr_decay,
                every: self.training.lr_decay_every,
            },
            seed: self.training.seed,
            grad_clip: self.training.grad_clip,
            tail_avg: self.training.tail_avg,
        }
    }

    /// Method label of the configured learned model.
    pub fn method_label(&self) -> String {
        let arch = match self.model.kind {
            ModelKind::Hgnn => "HGNN",
            ModelKind::Mlp => "MLP",
        };
        let structure = match self.scenario.structure {
            Structure::Fully => "FULLY",
            Structure::Partially => "PARTIALLY",
        };
        format!("{arch}-{structure}")
    }
}

/// Applies one `section.key=value` override onto the raw TOML value. The
/// value side is parsed as TOML, so lists and numbers work: `--set
/// scenario.power=[1.0,2.0]`. Bare words fall back to strings.
pub fn apply_override(root: &mut toml::Value, setting: &str) -> Result<()> {
    let (path, raw_value) = setting
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{setting}' is not key=value")))?;
    let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw_value}")) {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw_value.trim().to_string()),
    };
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.is_empty() || keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override path '{path}' is malformed")));
    }
    let mut cur = root;
    for key in &keys[..keys.len() - 1] {
        cur = cur
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table")))?
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    cur.as_table_mut()
        .ok_or_else(|| Error::Config(format!("override path '{path}' crosses a non-table")))?
        .insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates_and_roundtrips() {
        let cfg = RunConfig::desk_default(Structure::Fully);
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_with_types() {
        let cfg = RunConfig::desk_default(Structure::Fully);
        let mut value = toml::Value::try_from(&cfg).unwrap();
        apply_override(&mut value, "scenario.noise=0.05").unwrap();
        apply_override(&mut value, "scenario.structure=partially").unwrap();
        apply_override(&mut value, "training.epochs=3").unwrap();
        apply_override(&mut value, "scenario.power=[2.0, 2.0]").unwrap();
        let back: RunConfig = value.try_into().unwrap();
        assert_eq!(back.scenario.noise, 0.05);
        assert_eq!(back.scenario.structure, Structure::Partially);
        assert_eq!(back.training.epochs, 3);
        assert_eq!(back.scenario.power, vec![2.0, 2.0]);
    }

    #[test]
    fn validation_lists_all_violations() {
        let mut cfg = RunConfig::desk_default(Structure::Fully);
        cfg.scenario.noise = 0.0;
        cfg.training.epochs = 0;
        cfg.experiment.kind = "bogus".into();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("noise"), "{err}");
        assert!(err.contains("epochs"), "{err}");
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn run_dir_stable_under_out_dir_and_varies_with_content() {
        let a = RunConfig::desk_default(Structure::Fully);
        let mut b = a.clone();
        b.io.out_dir = "elsewhere".into();
        assert_eq!(a.run_dir().file_name().unwrap(), b.run_dir().file_name().unwrap());
        let mut c = a.clone();
        c.model.hidden = 32;
        assert_ne!(a.run_dir().file_name().unwrap(), c.run_dir().file_name().unwrap());
        let mut d = a.clone();
        d.training.seed = 9;
        d.scenario.seed = 9;
        let d_dir = d.run_dir();
        let name = d_dir.file_name().unwrap().to_str().unwrap();
        assert!(name.ends_with("-s9"));
        let a_dir = a.run_dir();
        let a_name = a_dir.file_name().unwrap().to_str().unwrap();
        assert_eq!(name.split('-').next(), a_name.split('-').next());
    }

    #[test]
    fn default_nbar_grid_includes_zero() {
        let cfg = RunConfig::desk_default(Structure::Fully);
        assert!(cfg.experiment.nbar_grid.contains(&0));
    }
}
