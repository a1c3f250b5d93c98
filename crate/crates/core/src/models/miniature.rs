//! Small random instances of every network, for gradient checks.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Batch, EncoderConfig, FusionConfig, FusionKind, FusionNet, Model, Network, TransformerNet};
use crate::autodiff::{grad_check, GradCheckReport};
use crate::dataio::{LabelVector, Modality, SampleRecord, Split, N_VIEWS};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiniatureKind {
    Multiview,
    Bimodal,
    Trimodal,
    Transformer,
}

impl MiniatureKind {
    pub const ALL: [MiniatureKind; 4] = [
        MiniatureKind::Multiview,
        MiniatureKind::Bimodal,
        MiniatureKind::Trimodal,
        MiniatureKind::Transformer,
    ];
}

impl FromStr for MiniatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiview" => Ok(Self::Multiview),
            "bimodal" => Ok(Self::Bimodal),
            "trimodal" => Ok(Self::Trimodal),
            "transformer" => Ok(Self::Transformer),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

impl fmt::Display for MiniatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MiniatureKind::Multiview => "multiview",
            MiniatureKind::Bimodal => "bimodal",
            MiniatureKind::Trimodal => "trimodal",
            MiniatureKind::Transformer => "transformer",
        })
    }
}

pub const MINI_FEAT_DIM: usize = 6;
pub const MINI_HIDDEN: usize = 4;
pub const MINI_CLASSES: usize = 3;
pub const MINI_BATCH: usize = 3;
pub const MINI_LAVILA_DIM: usize = 5;
pub const MINI_TOKENS: usize = 4;
pub const MINI_D_MODEL: usize = 16;

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f32> {
    (0..n).map(|_| (scale * rng.sample::<f64, _>(StandardNormal)) as f32).collect()
}

/// A network with every parameter perturbed away from its initial value,
/// and a batch of random inputs and targets.
pub fn miniature(kind: MiniatureKind, seed: u64) -> Result<(Network<f64>, Batch<f64>)> {
    let mut net = match kind {
        MiniatureKind::Transformer => Network::Transformer(TransformerNet::new(EncoderConfig {
            d_model: MINI_D_MODEL,
            n_heads: 2,
            d_ff: 8,
            n_layers: 1,
            seq_len: MINI_TOKENS,
            n_classes: MINI_CLASSES,
            layer_norm_eps: 1e-5,
            positional: false,
            seed,
        })?),
        _ => {
            let fusion = match kind {
                MiniatureKind::Multiview => FusionKind::Multiview(Modality::Rgb),
                MiniatureKind::Bimodal => FusionKind::Bimodal,
                _ => FusionKind::Trimodal,
            };
            Network::Fusion(FusionNet::new(
                fusion,
                FusionConfig {
                    feat_dim: MINI_FEAT_DIM,
                    hidden: MINI_HIDDEN,
                    n_classes: MINI_CLASSES,
                    lavila_dim: MINI_LAVILA_DIM,
                    layer_norm_eps: 1e-5,
                    seed,
                },
            )?)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    for p in net.params_mut().iter_mut() {
        for x in p.value.data_mut() {
            *x += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let lavila_dim = match kind {
        MiniatureKind::Transformer => MINI_TOKENS * MINI_D_MODEL,
        _ => MINI_LAVILA_DIM,
    };
    let records: Vec<SampleRecord> = (0..MINI_BATCH)
        .map(|i| {
            let views = |rng: &mut ChaCha8Rng| -> [Vec<f32>; N_VIEWS] {
                std::array::from_fn(|_| gaussian(rng, MINI_FEAT_DIM, 1.0))
            };
            SampleRecord {
                id: i as u64,
                split: Split::Train,
                labels: LabelVector::new((0..MINI_CLASSES).map(|c| (i + c) % 2 == 0).collect()),
                rgb: Some(views(&mut rng)),
                dct: Some(views(&mut rng)),
                lavila: Some(gaussian(&mut rng, lavila_dim, 1.0)),
            }
        })
        .collect();
    let refs: Vec<&SampleRecord> = records.iter().collect();
    let batch = Batch::from_records(&refs, net.modalities())?;
    Ok((net, batch))
}

/// Gradient check result with the offending parameter named.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniatureCheck {
    pub report: GradCheckReport<f64>,
    pub worst_param: String,
}

/// Checks the BCE gradient of the miniature against central differences.
pub fn gradcheck_miniature(kind: MiniatureKind, seed: u64, h: f64) -> Result<MiniatureCheck> {
    let (net, batch) = miniature(kind, seed)?;
    let mut tensors: Vec<Tensor<f64>> = net.params().iter().map(|p| p.value.clone()).collect();
    let report = grad_check(
        |tape, vars| {
            let bound = net.params().bound_from(vars.to_vec())?;
            let out = net.forward(tape, &bound, &batch)?;
            tape.bce_loss(out.probs, &batch.targets)
        },
        &mut tensors,
        h,
    )?;
    let worst_param = net.params().names()[report.worst_param].to_string();
    Ok(MiniatureCheck { report, worst_param })
}
