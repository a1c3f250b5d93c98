//! Synthetic datasets with planted, recoverable structure.
//!
//! Every class `c` owns a fixed unit direction `u_c`. A sample that is
//! positive for `c` gets `signal_strength · u_c` added to the features of
//! exactly one view (and one modality, or both image modalities). All
//! features then receive i.i.d. Gaussian noise. With the signal confined
//! to a known (modality, view) pair, a trained attention module should
//! concentrate its weight on that view.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    DatasetManifest, LabelVector, Modality, ModalityMask, SampleRecord, Split, ViewFeatures, DEFAULT_CLASSES,
    DEFAULT_FEAT_DIM, LAVILA_DIM, N_VIEWS,
};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InformativeModality {
    Rgb,
    Dct,
    Both,
}

impl InformativeModality {
    fn includes(self, m: Modality) -> bool {
        matches!(
            (self, m),
            (InformativeModality::Both, Modality::Rgb | Modality::Dct)
                | (InformativeModality::Rgb, Modality::Rgb)
                | (InformativeModality::Dct, Modality::Dct)
        )
    }
}

impl FromStr for InformativeModality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rgb" => Ok(Self::Rgb),
            "dct" => Ok(Self::Dct),
            "both" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown informative modality {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub feat_dim: usize,
    /// Per class view index in `0..3`.
    pub informative_view: Vec<usize>,
    pub informative_modality: Vec<InformativeModality>,
    pub signal_strength: f64,
    /// Per class probability in `(0, 1)`.
    pub label_prevalence: Vec<f64>,
    pub noise_sigma: f64,
    /// Emit a LaViLa vector per sample.
    pub lavila: bool,
    pub lavila_dim: usize,
    /// Signal added along a per-class direction of the LaViLa vector.
    pub lavila_strength: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::uniform(0, DEFAULT_CLASSES, DEFAULT_FEAT_DIM, 0, InformativeModality::Both)
    }
}

impl SynthSpec {
    /// Every class planted in the same view and modality, prevalence 0.2,
    /// strength 3, unit noise, 2000/500/500 split sizes.
    pub fn uniform(seed: u64, n_classes: usize, feat_dim: usize, view: usize, modality: InformativeModality) -> Self {
        Self {
            seed,
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            n_classes,
            feat_dim,
            informative_view: vec![view; n_classes],
            informative_modality: vec![modality; n_classes],
            signal_strength: 3.0,
            label_prevalence: vec![0.2; n_classes],
            noise_sigma: 1.0,
            lavila: false,
            lavila_dim: LAVILA_DIM,
            lavila_strength: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if self.n_classes == 0 || self.feat_dim == 0 {
            return bad("n_classes and feat_dim must be positive".into());
        }
        if self.informative_view.len() != self.n_classes
            || self.informative_modality.len() != self.n_classes
            || self.label_prevalence.len() != self.n_classes
        {
            return bad(format!("per-class settings must have {} entries", self.n_classes));
        }
        if let Some(v) = self.informative_view.iter().find(|&&v| v >= N_VIEWS) {
            return bad(format!("informative view {v} out of range"));
        }
        if let Some(p) = self.label_prevalence.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return bad(format!("prevalence {p} not in (0, 1)"));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be finite and non-negative".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        if self.lavila && self.lavila_dim == 0 {
            return bad("lavila_dim must be positive".into());
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 14] = [
        "seed",
        "n_train",
        "n_val",
        "n_test",
        "n_classes",
        "feat_dim",
        "informative_view",
        "informative_modality",
        "signal_strength",
        "prevalence",
        "noise_sigma",
        "lavila",
        "lavila_dim",
        "lavila_strength",
    ];

    /// Builds a spec from `key=value` pairs. Per-class keys accept either a
    /// single value, applied to every class, or a comma list of
    /// `n_classes` values.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        kv.restrict(&Self::KEYS)?;
        let n_classes = kv.get("n_classes")?.unwrap_or(DEFAULT_CLASSES);
        let defaults = SynthSpec::default();
        let spec = Self {
            seed: kv.get("seed")?.unwrap_or(defaults.seed),
            n_train: kv.get("n_train")?.unwrap_or(defaults.n_train),
            n_val: kv.get("n_val")?.unwrap_or(defaults.n_val),
            n_test: kv.get("n_test")?.unwrap_or(defaults.n_test),
            n_classes,
            feat_dim: kv.get("feat_dim")?.unwrap_or(defaults.feat_dim),
            informative_view: per_class(kv, "informative_view", n_classes, 0usize)?,
            informative_modality: per_class(kv, "informative_modality", n_classes, InformativeModality::Both)?,
            signal_strength: kv.get("signal_strength")?.unwrap_or(defaults.signal_strength),
            label_prevalence: per_class(kv, "prevalence", n_classes, 0.2f64)?,
            noise_sigma: kv.get("noise_sigma")?.unwrap_or(defaults.noise_sigma),
            lavila: kv.get("lavila")?.unwrap_or(false),
            lavila_dim: kv.get("lavila_dim")?.unwrap_or(LAVILA_DIM),
            lavila_strength: kv.get("lavila_strength")?.unwrap_or(0.0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn manifest(&self) -> DatasetManifest {
        let mut modalities = vec![Modality::Rgb, Modality::Dct];
        if self.lavila {
            modalities.push(Modality::Lavila);
        }
        DatasetManifest {
            n_samples: self.n_train + self.n_val + self.n_test,
            n_views: N_VIEWS,
            n_classes: self.n_classes,
            feat_dim: self.feat_dim,
            modalities: ModalityMask::of(&modalities),
            lavila_dim: if self.lavila { self.lavila_dim } else { 0 },
        }
    }
}

/// A per-class setting: absent, one value for all classes, or a full list.
fn per_class<V: FromStr + Clone>(kv: &KeyValues, key: &str, n_classes: usize, default: V) -> Result<Vec<V>> {
    Ok(match kv.get_list::<V>(key)? {
        None => vec![default; n_classes],
        Some(v) if v.len() == 1 => vec![v[0].clone(); n_classes],
        Some(v) => v,
    })
}

fn unit_directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Deterministic planted-signal dataset. Ids are `0..n`, assigned to
/// train, val and test in that order.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(DatasetManifest, Vec<SampleRecord>)> {
    spec.validate()?;
    // directions and samples come from separate streams of the same seed
    let mut dir_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    dir_rng.set_stream(1);
    let directions = unit_directions(&mut dir_rng, spec.n_classes, spec.feat_dim);
    let lavila_dirs = if spec.lavila {
        unit_directions(&mut dir_rng, spec.n_classes, spec.lavila_dim)
    } else {
        Vec::new()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);

    let manifest = spec.manifest();
    let splits = std::iter::repeat_n(Split::Train, spec.n_train)
        .chain(std::iter::repeat_n(Split::Val, spec.n_val))
        .chain(std::iter::repeat_n(Split::Test, spec.n_test));
    let mut records = Vec::with_capacity(manifest.n_samples);
    for (id, split) in splits.enumerate() {
        let bits: Vec<bool> = spec
            .label_prevalence
            .iter()
            .map(|&p| rng.random_bool(p))
            .collect();
        let noise = |n: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n)
                .map(|_| spec.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let modality_views = |m: Modality, rng: &mut ChaCha8Rng| -> ViewFeatures {
            let mut views: [Vec<f64>; N_VIEWS] = std::array::from_fn(|_| noise(spec.feat_dim, rng));
            for (c, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                if spec.informative_modality[c].includes(m) {
                    let target = &mut views[spec.informative_view[c]];
                    for (x, u) in target.iter_mut().zip(&directions[c]) {
                        *x += spec.signal_strength * u;
                    }
                }
            }
            views.map(|v| v.into_iter().map(|x| x as f32).collect())
        };
        let rgb = modality_views(Modality::Rgb, &mut rng);
        let dct = modality_views(Modality::Dct, &mut rng);
        let lavila = spec.lavila.then(|| {
            let mut v = noise(spec.lavila_dim, &mut rng);
            for (c, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
                for (x, u) in v.iter_mut().zip(&lavila_dirs[c]) {
                    *x += spec.lavila_strength * u;
                }
            }
            v.into_iter().map(|x| x as f32).collect()
        });
        records.push(SampleRecord {
            id: id as u64,
            split,
            labels: LabelVector::new(bits),
            rgb: Some(rgb),
            dct: Some(dct),
            lavila,
        });
    }
    Ok((manifest, records))
}
