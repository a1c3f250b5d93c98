use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::dataio::{DatasetManifest, Modality, ModalityMask};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::models::{EncoderConfig, FusionConfig, FusionKind, FusionNet, Network, TransformerNet};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd => 0.01,
            OptimizerKind::Adam => 0.001,
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Validation quantity watched by early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monitor {
    /// Maximized.
    ValMap,
    /// Minimized.
    ValLoss,
}

impl FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_map" => Ok(Self::ValMap),
            "val_loss" => Ok(Self::ValLoss),
            other => Err(Error::Config(format!("unknown monitor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub monitor: Monitor,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_optimizer(OptimizerKind::Sgd)
    }
}

impl TrainConfig {
    /// Defaults with the optimizer's own learning rate.
    pub fn with_optimizer(optimizer: OptimizerKind) -> Self {
        Self {
            optimizer,
            learning_rate: optimizer.default_learning_rate(),
            max_epochs: 300,
            patience: 10,
            batch_size: 32,
            seed: 0,
            monitor: Monitor::ValMap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience, batch_size and max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which network a run trains, named by its input modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Rgb,
    Dct,
    Bimodal,
    Trimodal,
    Lavila,
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s
            .split('+')
            .map(|p| p.parse::<Modality>())
            .collect::<Result<Vec<_>>>()?;
        parts.sort();
        parts.dedup();
        match parts.as_slice() {
            [Modality::Rgb] => Ok(Self::Rgb),
            [Modality::Dct] => Ok(Self::Dct),
            [Modality::Rgb, Modality::Dct] => Ok(Self::Bimodal),
            [Modality::Rgb, Modality::Dct, Modality::Lavila] => Ok(Self::Trimodal),
            [Modality::Lavila] => Ok(Self::Lavila),
            _ => Err(Error::Config(format!("unsupported modality combination {s:?}"))),
        }
    }
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Rgb => "rgb",
            ModelChoice::Dct => "dct",
            ModelChoice::Bimodal => "rgb+dct",
            ModelChoice::Trimodal => "rgb+dct+lavila",
            ModelChoice::Lavila => "lavila",
        })
    }
}

impl ModelChoice {
    pub fn modalities(self) -> ModalityMask {
        match self {
            ModelChoice::Rgb => ModalityMask::of(&[Modality::Rgb]),
            ModelChoice::Dct => ModalityMask::of(&[Modality::Dct]),
            ModelChoice::Bimodal => ModalityMask::of(&[Modality::Rgb, Modality::Dct]),
            ModelChoice::Trimodal => ModalityMask::of(&Modality::ALL),
            ModelChoice::Lavila => ModalityMask::of(&[Modality::Lavila]),
        }
    }

    /// A freshly initialized network sized for `manifest`.
    ///
    /// The transformer reads each LaViLa vector as a single token of width
    /// `lavila_dim`.
    pub fn build<T: Scalar>(self, manifest: &DatasetManifest, seed: u64) -> Result<Network<T>> {
        for m in self.modalities().modalities() {
            if !manifest.modalities.contains(m) {
                return Err(Error::Validation(format!("dataset has no {m} features")));
            }
        }
        let fusion = FusionConfig {
            feat_dim: manifest.feat_dim,
            n_classes: manifest.n_classes,
            lavila_dim: manifest.lavila_dim.max(1),
            seed,
            ..FusionConfig::default()
        };
        let kind = match self {
            ModelChoice::Rgb => FusionKind::Multiview(Modality::Rgb),
            ModelChoice::Dct => FusionKind::Multiview(Modality::Dct),
            ModelChoice::Bimodal => FusionKind::Bimodal,
            ModelChoice::Trimodal => FusionKind::Trimodal,
            ModelChoice::Lavila => {
                let config = EncoderConfig {
                    d_model: manifest.lavila_dim,
                    seq_len: 1,
                    n_classes: manifest.n_classes,
                    seed,
                    ..EncoderConfig::default()
                };
                return Ok(Network::Transformer(TransformerNet::new(config)?));
            }
        };
        Ok(Network::Fusion(FusionNet::new(kind, fusion)?))
    }
}

/// A training run read from a `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset_path: PathBuf,
    pub model: ModelChoice,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub const KEYS: [&'static str; 10] = [
        "optimizer",
        "learning_rate",
        "max_epochs",
        "patience",
        "batch_size",
        "seed",
        "monitor",
        "dataset_path",
        "modalities",
        "output_dir",
    ];

    /// `dataset_path`, `modalities` and `output_dir` are required; the rest
    /// fall back to [`TrainConfig`] defaults for the chosen optimizer.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.restrict(&Self::KEYS)?;
        let optimizer = kv.get("optimizer")?.unwrap_or(OptimizerKind::Sgd);
        let d = TrainConfig::with_optimizer(optimizer);
        let train = TrainConfig {
            optimizer,
            learning_rate: kv.get("learning_rate")?.unwrap_or(d.learning_rate),
            max_epochs: kv.get("max_epochs")?.unwrap_or(d.max_epochs),
            patience: kv.get("patience")?.unwrap_or(d.patience),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            monitor: kv.get("monitor")?.unwrap_or(d.monitor),
        };
        train.validate()?;
        Ok(Self {
            train,
            dataset_path: PathBuf::from(kv.require_str("dataset_path")?),
            model: kv.require_str("modalities")?.parse()?,
            output_dir: PathBuf::from(kv.require_str("output_dir")?),
        })
    }
}
