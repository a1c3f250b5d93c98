//! Networks trained by [`crate::training`]: the three-view attention fusion
//! family and the encoder-only transformer head.

mod fusion;
mod miniature;
mod transformer;

pub use fusion::{
    attention_report, init_multiview, record_fusion_head, record_multiview, AttentionReport, FusionConfig,
    FusionKind, FusionNet, MultiviewVars,
};
pub use miniature::{gradcheck_miniature, miniature, MiniatureCheck, MiniatureKind};
pub use transformer::{sinusoidal_encoding, EncoderConfig, EncoderVars, TransformerNet};

use crate::autodiff::{Tape, Var};
use crate::dataio::{Modality, ModalityMask, SampleRecord, N_VIEWS};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Feature and target matrices for a group of records, one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub rgb: Option<[Tensor<T>; N_VIEWS]>,
    pub dct: Option<[Tensor<T>; N_VIEWS]>,
    pub lavila: Option<Tensor<T>>,
    /// `[len × n_classes]` of 0/1.
    pub targets: Tensor<T>,
}

impl<T: Scalar> Batch<T> {
    /// Gathers the modalities in `need`; a record missing one is an error.
    pub fn from_records(records: &[&SampleRecord], need: ModalityMask) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::EmptySplit("batch of zero records".into()))?;
        let n_classes = first.labels.len();
        let mut targets = Vec::with_capacity(records.len() * n_classes);
        for r in records {
            if r.labels.len() != n_classes {
                return Err(Error::dim("batch labels", &[n_classes], &[r.labels.len()]));
            }
            targets.extend(r.labels.bits().iter().map(|&b| if b { T::one() } else { T::zero() }));
        }
        let views = |m: Modality| -> Result<Option<[Tensor<T>; N_VIEWS]>> {
            if !need.contains(m) {
                return Ok(None);
            }
            let mut out = Vec::with_capacity(N_VIEWS);
            for v in 0..N_VIEWS {
                let rows = records
                    .iter()
                    .map(|r| {
                        r.views(m)
                            .map(|views| to_scalars(&views[v]))
                            .ok_or_else(|| Error::Validation(format!("record {}: missing {m} features", r.id)))
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push(Tensor::from_rows(&rows)?);
            }
            Ok(Some(out.try_into().expect("N_VIEWS tensors")))
        };
        let lavila = if need.contains(Modality::Lavila) {
            let rows = records
                .iter()
                .map(|r| {
                    r.lavila
                        .as_deref()
                        .map(to_scalars)
                        .ok_or_else(|| Error::Validation(format!("record {}: missing lavila features", r.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            Some(Tensor::from_rows(&rows)?)
        } else {
            None
        };
        Ok(Self {
            rgb: views(Modality::Rgb)?,
            dct: views(Modality::Dct)?,
            lavila,
            targets: Tensor::new(vec![records.len(), n_classes], targets)?,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn views(&self, m: Modality) -> Result<&[Tensor<T>; N_VIEWS]> {
        match m {
            Modality::Rgb => self.rgb.as_ref(),
            Modality::Dct => self.dct.as_ref(),
            Modality::Lavila => None,
        }
        .ok_or_else(|| Error::Validation(format!("batch has no {m} views")))
    }

    pub fn lavila(&self) -> Result<&Tensor<T>> {
        self.lavila
            .as_ref()
            .ok_or_else(|| Error::Validation("batch has no lavila features".into()))
    }
}

fn to_scalars<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| T::of(x as f64)).collect()
}

/// Handles produced by one recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    /// `[batch × n_classes]` sigmoid outputs.
    pub probs: Var,
    /// `[batch × 3]` attention scores per fused modality.
    pub attention: Vec<(Modality, Var)>,
}

/// A network the training loop can fit.
pub trait Model<T: Scalar>: Send + Sync {
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    /// Input modalities the forward pass reads.
    fn modalities(&self) -> ModalityMask;
    fn n_classes(&self) -> usize;
    fn forward(&self, tape: &mut Tape<T>, params: &Bound<'_, T>, batch: &Batch<T>) -> Result<ForwardOut>;
}

/// Forward values for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub probs: Tensor<T>,
    pub attention: Vec<(Modality, Tensor<T>)>,
}

/// Runs the forward pass without keeping the tape.
pub fn predict<T: Scalar, M: Model<T> + ?Sized>(model: &M, batch: &Batch<T>) -> Result<Prediction<T>> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let out = model.forward(&mut tape, &bound, batch)?;
    Ok(Prediction {
        probs: tape.value(out.probs).clone(),
        attention: out
            .attention
            .iter()
            .map(|&(m, v)| (m, tape.value(v).clone()))
            .collect(),
    })
}

/// Any network this crate can checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Network<T> {
    Fusion(FusionNet<T>),
    Transformer(TransformerNet<T>),
}

impl<T: Scalar> Model<T> for Network<T> {
    fn params(&self) -> &ParamSet<T> {
        match self {
            Network::Fusion(n) => n.params(),
            Network::Transformer(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        match self {
            Network::Fusion(n) => n.params_mut(),
            Network::Transformer(n) => n.params_mut(),
        }
    }

    fn modalities(&self) -> ModalityMask {
        match self {
            Network::Fusion(n) => n.modalities(),
            Network::Transformer(n) => n.modalities(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Network::Fusion(n) => Model::n_classes(n),
            Network::Transformer(n) => Model::n_classes(n),
        }
    }

    fn forward(&self, tape: &mut Tape<T>, params: &Bound<'_, T>, batch: &Batch<T>) -> Result<ForwardOut> {
        match self {
            Network::Fusion(n) => n.forward(tape, params, batch),
            Network::Transformer(n) => n.forward(tape, params, batch),
        }
    }
}
