//! The run description shared by every subcommand.

use std::path::{Path, PathBuf};

use annoseg::augment::InceptionSamplerConfig;
use annoseg::eval::Aggregation;
use annoseg::fcn::{NetworkConfig, SgdConfig, TrainConfig};
use annoseg::imaging::BinarizeParams;
use annoseg::infer::InferenceConfig;
use annoseg::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    RandomCrop,
    #[default]
    Inception,
    /// Random crops of the binarized page; implies binarized input.
    BinarizedCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    #[default]
    Color,
    Binarized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset root holding `manifest.json`, `images/`, `page/`, `labels/`.
    pub dir: Option<PathBuf>,
    pub train_pages: usize,
    pub test_pages: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: None,
            train_pages: 40,
            test_pages: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Patch side for the crop samplers.
    pub crop_size: usize,
    pub inception: InceptionSamplerConfig,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            kind: SamplerKind::Inception,
            crop_size: 512,
            inception: InceptionSamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub widths: Vec<usize>,
    pub convs_per_stack: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            widths: vec![16, 32, 64, 128, 128],
            convs_per_stack: 2,
        }
    }
}

impl NetworkSection {
    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig::with_widths(&self.widths, self.convs_per_stack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        OptimizerConfig {
            lr: t.sgd.lr,
            momentum: t.sgd.momentum,
            steps: t.steps,
            batch_size: t.batch_size,
        }
    }
}

impl OptimizerConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            sgd: SgdConfig {
                lr: self.lr,
                momentum: self.momentum,
            },
            steps: self.steps,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for weight init and patch sampling.
    pub seed: u64,
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub input: InputMode,
    pub binarization: BinarizeParams,
    pub sampler: SamplerConfig,
    pub network: NetworkSection,
    pub optimizer: OptimizerConfig,
    pub inference: InferenceConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            synth: SynthConfig::default(),
            input: InputMode::Color,
            binarization: BinarizeParams::default(),
            sampler: SamplerConfig::default(),
            network: NetworkSection::default(),
            optimizer: OptimizerConfig::default(),
            inference: InferenceConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    /// Parse a config file; relative `data.dir` resolves against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(dir), Some(base)) = (&cfg.data.dir, path.parent()) {
            if dir.is_relative() {
                cfg.data.dir = Some(base.join(dir));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// Whether pages are binarized before they reach the network.
    pub fn binarized_input(&self) -> bool {
        self.input == InputMode::Binarized || self.sampler.kind == SamplerKind::BinarizedCrop
    }

    /// Every violated constraint across all sections.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let prefix = |sec: &str, items: Vec<String>| -> Vec<String> {
            items.into_iter().map(|m| format!("{sec}: {m}")).collect()
        };
        if let Some(dir) = &self.data.dir {
            if !dir.is_dir() {
                v.push(format!("data: dataset directory {} does not exist", dir.display()));
            }
        }
        v.extend(prefix("synth", self.synth.violations()));
        if let Err(e) = self.binarization.validate() {
            v.push(format!("binarization: {e}"));
        }
        v.extend(prefix("sampler.inception", self.sampler.inception.violations()));
        if self.sampler.crop_size == 0 || !self.sampler.crop_size.is_multiple_of(annoseg::fcn::INPUT_MULTIPLE) {
            v.push(format!(
                "sampler: crop_size must be a positive multiple of {}, got {}",
                annoseg::fcn::INPUT_MULTIPLE,
                self.sampler.crop_size
            ));
        }
        if !self.sampler.inception.out_size.is_multiple_of(annoseg::fcn::INPUT_MULTIPLE) {
            v.push(format!(
                "sampler.inception: out_size must be a multiple of {}, got {}",
                annoseg::fcn::INPUT_MULTIPLE,
                self.sampler.inception.out_size
            ));
        }
        v.extend(prefix("network", self.network.network_config().violations()));
        v.extend(prefix("optimizer", self.optimizer.train_config().violations()));
        v.extend(prefix("inference", self.inference.violations()));
        v
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(v.join("\n")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = RunConfig::default();
        assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml(
            "seed = 3\ninput = \"binarized\"\n[sampler]\nkind = \"random-crop\"\ncrop_size = 128\n[optimizer]\nsteps = 10\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.sampler.kind, SamplerKind::RandomCrop);
        assert_eq!(cfg.optimizer.steps, 10);
        assert_eq!(cfg.optimizer.batch_size, 4);
        assert!(cfg.binarized_input());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[optimizer]\nlearning_rate = 1.0\n").is_err());
        for section in ["synth", "inference", "sampler.inception", "binarization"] {
            assert!(RunConfig::from_toml(&format!("[{section}]\nbogus = 1\n")).is_err(), "{section}");
        }
    }

    #[test]
    fn all_violations_are_listed() {
        let mut cfg = RunConfig::default();
        cfg.optimizer.lr = -1.0;
        cfg.optimizer.batch_size = 0;
        cfg.inference.overlap = 600;
        cfg.network.widths = vec![8, 8];
        cfg.sampler.crop_size = 100;
        cfg.data.dir = Some("/definitely/not/here".into());
        let v = cfg.violations();
        assert_eq!(v.len(), 7, "{v:#?}");
        assert!(v.iter().any(|m| m.starts_with("data:")));
        assert!(v.iter().any(|m| m.starts_with("inference:")));
    }
}
