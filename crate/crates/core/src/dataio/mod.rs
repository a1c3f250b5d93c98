//! Precomputed per-view, per-modality features with multilabel targets.
//!
//! Views are indexed `0 = frontal`, `1 = left`, `2 = right`. RGB and DCT
//! features carry one vector per view; LaViLa features are a single
//! view-agnostic vector (token outputs mean-pooled at ingestion).

mod format;
mod synth;

pub use format::{read_dataset, write_dataset, MTBR_MAGIC, MTBR_VERSION};
pub use synth::{generate_synthetic, InformativeModality, SynthSpec};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_VIEWS: usize = 3;
pub const DEFAULT_CLASSES: usize = 14;
pub const DEFAULT_FEAT_DIM: usize = 1024;
pub const LAVILA_DIM: usize = 768;

/// Behavior classes in canonical label order.
pub const CLASS_NAMES: [&str; DEFAULT_CLASSES] = [
    "hand-face",
    "hand-mouth",
    "gesture",
    "fumble",
    "scratch",
    "stretching",
    "smearing-hands",
    "shrug",
    "adjusting-clothing",
    "groom",
    "fold-arms",
    "leg-movements",
    "settle",
    "legs-crossed",
];

/// Class names for `n` classes: the canonical list when `n` is 14,
/// otherwise `class-0`, `class-1`, ...
pub fn class_names(n: usize) -> Vec<String> {
    if n == DEFAULT_CLASSES {
        CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..n).map(|i| format!("class-{i}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Dct,
    Lavila,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Dct, Modality::Lavila];

    pub fn bit(self) -> u8 {
        match self {
            Modality::Rgb => 1,
            Modality::Dct => 2,
            Modality::Lavila => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Dct => "dct",
            Modality::Lavila => "lavila",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(Modality::Rgb),
            "dct" => Ok(Modality::Dct),
            "lavila" => Ok(Modality::Lavila),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// Binary targets, one per class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<bool>);

impl LabelVector {
    pub fn new(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-view feature vectors for one modality.
pub type ViewFeatures = [Vec<f32>; N_VIEWS];

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: u64,
    pub split: Split,
    pub labels: LabelVector,
    pub rgb: Option<ViewFeatures>,
    pub dct: Option<ViewFeatures>,
    pub lavila: Option<Vec<f32>>,
}

impl SampleRecord {
    pub fn views(&self, modality: Modality) -> Option<&ViewFeatures> {
        match modality {
            Modality::Rgb => self.rgb.as_ref(),
            Modality::Dct => self.dct.as_ref(),
            Modality::Lavila => None,
        }
    }
}

/// Bit set of present modalities (bit0 RGB, bit1 DCT, bit2 LaViLa).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModalityMask(u8);

impl ModalityMask {
    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !7 == 0).then_some(Self(bits))
    }

    pub fn of(modalities: &[Modality]) -> Self {
        Self(modalities.iter().fold(0, |acc, m| acc | m.bit()))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn modalities(self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|&m| self.contains(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub n_samples: usize,
    pub n_views: usize,
    pub n_classes: usize,
    pub feat_dim: usize,
    pub modalities: ModalityMask,
    pub lavila_dim: usize,
}

impl DatasetManifest {
    /// Checks one record against the manifest dimensions.
    pub fn check_record(&self, r: &SampleRecord) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("record {}: {msg}", r.id)));
        if r.labels.len() != self.n_classes {
            return fail(format!("{} labels, expected {}", r.labels.len(), self.n_classes));
        }
        for m in [Modality::Rgb, Modality::Dct] {
            match (self.modalities.contains(m), r.views(m)) {
                (true, Some(views)) => {
                    for (v, feats) in views.iter().enumerate() {
                        if feats.len() != self.feat_dim {
                            return fail(format!("{m} view {v} has dim {}, expected {}", feats.len(), self.feat_dim));
                        }
                        if feats.iter().any(|x| !x.is_finite()) {
                            return fail(format!("{m} view {v} has non-finite values"));
                        }
                    }
                }
                (true, None) => return fail(format!("missing {m} features")),
                (false, Some(_)) => return fail(format!("{m} features not declared in manifest")),
                (false, None) => {}
            }
        }
        match (self.modalities.contains(Modality::Lavila), &r.lavila) {
            (true, Some(v)) if v.len() != self.lavila_dim => {
                fail(format!("lavila dim {}, expected {}", v.len(), self.lavila_dim))
            }
            (true, Some(v)) if v.iter().any(|x| !x.is_finite()) => fail("lavila has non-finite values".into()),
            (true, None) => fail("missing lavila features".into()),
            (false, Some(_)) => fail("lavila features not declared in manifest".into()),
            _ => Ok(()),
        }
    }

    pub fn validate(&self, records: &[SampleRecord]) -> Result<()> {
        if self.n_views != N_VIEWS {
            return Err(Error::Validation(format!("n_views must be {N_VIEWS}, got {}", self.n_views)));
        }
        if self.n_samples != records.len() {
            return Err(Error::Validation(format!(
                "manifest declares {} samples, got {}",
                self.n_samples,
                records.len()
            )));
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Validation(format!("duplicate sample id {}", w[0])));
        }
        records.iter().try_for_each(|r| self.check_record(r))
    }
}

/// Records assigned to `split`, in file order.
pub fn split_records(records: &[SampleRecord], split: Split) -> Vec<&SampleRecord> {
    records.iter().filter(|r| r.split == split).collect()
}

/// Per-class positive fraction.
pub fn class_prevalence(records: &[SampleRecord]) -> Result<Vec<f64>> {
    let first = records
        .first()
        .ok_or_else(|| Error::EmptySplit("class_prevalence over zero records".into()))?;
    let mut counts = vec![0usize; first.labels.len()];
    for r in records {
        if r.labels.len() != counts.len() {
            return Err(Error::dim("class_prevalence", &[counts.len()], &[r.labels.len()]));
        }
        for (c, &b) in counts.iter_mut().zip(r.labels.bits()) {
            *c += b as usize;
        }
    }
    let n = records.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}
