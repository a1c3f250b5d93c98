//! Three-view softmax attention fusion and its bimodal/trimodal heads.
//!
//! Per modality, with views `x_0, x_1, x_2`:
//!
//! ```text
//! h_v   = x_v·W_v + b_v                       (feat_dim → hidden, no activation)
//! alpha = softmax([h_0 | h_1 | h_2]·W_att + b_att)
//! z_v   = layer_norm(h_v; gamma, beta)
//! fused = Σ_v alpha_v · z_v
//! ```
//!
//! A standalone network classifies `sigmoid(fused·W_cls + b_cls)`. The
//! fusion heads sum the modality descriptors (plus a projected LaViLa
//! vector for the trimodal net) and apply their own classifier; the
//! per-modality classifiers are kept but bypassed.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{predict, Batch, ForwardOut, Model};
use crate::autodiff::{Tape, Var};
use crate::dataio::{split_records, Modality, ModalityMask, SampleRecord, Split, DEFAULT_CLASSES, DEFAULT_FEAT_DIM, LAVILA_DIM, N_VIEWS};
use crate::error::{Error, Result};
use crate::params::{glorot_uniform, Bound, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub feat_dim: usize,
    pub hidden: usize,
    pub n_classes: usize,
    /// Input width of the trimodal LaViLa projection.
    pub lavila_dim: usize,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            feat_dim: DEFAULT_FEAT_DIM,
            hidden: 64,
            n_classes: DEFAULT_CLASSES,
            lavila_dim: LAVILA_DIM,
            layer_norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.feat_dim == 0 || self.n_classes == 0 || self.lavila_dim == 0 {
            return Err(Error::Config("fusion dimensions must be positive".into()));
        }
        if self.hidden < 2 {
            return Err(Error::Config("hidden width must be at least 2 for layer norm".into()));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// Standalone network over the views of one image modality.
    Multiview(Modality),
    Bimodal,
    Trimodal,
}

impl FusionKind {
    pub fn modalities(self) -> ModalityMask {
        match self {
            FusionKind::Multiview(m) => ModalityMask::of(&[m]),
            FusionKind::Bimodal => ModalityMask::of(&[Modality::Rgb, Modality::Dct]),
            FusionKind::Trimodal => ModalityMask::of(&Modality::ALL),
        }
    }

    fn branches(self) -> Vec<Modality> {
        match self {
            FusionKind::Multiview(m) => vec![m],
            _ => vec![Modality::Rgb, Modality::Dct],
        }
    }
}

fn prefix(m: Modality) -> String {
    format!("{}.", m.name())
}

/// Adds one modality's parameters under `prefix`: Glorot-uniform weights,
/// zero biases, unit gamma, zero beta.
pub fn init_multiview<T: Scalar>(
    config: &FusionConfig,
    prefix: &str,
    rng: &mut ChaCha8Rng,
    set: &mut ParamSet<T>,
) -> Result<()> {
    let (d, h, c) = (config.feat_dim, config.hidden, config.n_classes);
    for v in 0..N_VIEWS {
        set.insert(format!("{prefix}w_view{v}"), glorot_uniform(rng, d, h))?;
        set.insert(format!("{prefix}b_view{v}"), Tensor::zeros(&[h]))?;
    }
    set.insert(format!("{prefix}w_att"), glorot_uniform(rng, N_VIEWS * h, N_VIEWS))?;
    set.insert(format!("{prefix}b_att"), Tensor::zeros(&[N_VIEWS]))?;
    set.insert(format!("{prefix}gamma"), Tensor::full(&[h], T::one()))?;
    set.insert(format!("{prefix}beta"), Tensor::zeros(&[h]))?;
    set.insert(format!("{prefix}w_cls"), glorot_uniform(rng, h, c))?;
    set.insert(format!("{prefix}b_cls"), Tensor::zeros(&[c]))?;
    Ok(())
}

/// Intermediate handles of one recorded multiview pass.
#[derive(Debug, Clone, Copy)]
pub struct MultiviewVars {
    /// Raw per-view projections `[batch × hidden]`.
    pub h: [Var; N_VIEWS],
    /// `[batch × 3]`.
    pub alpha: Var,
    /// `[batch × hidden]`.
    pub fused: Var,
}

/// Records the attention fusion of one modality's three view batches.
pub fn record_multiview<T: Scalar>(
    tape: &mut Tape<T>,
    params: &Bound<'_, T>,
    prefix: &str,
    views: &[Var; N_VIEWS],
    eps: T,
) -> Result<MultiviewVars> {
    let mut h = Vec::with_capacity(N_VIEWS);
    for (v, &x) in views.iter().enumerate() {
        let w = params.var(&format!("{prefix}w_view{v}"))?;
        let b = params.var(&format!("{prefix}b_view{v}"))?;
        h.push(tape.dense(x, w, b)?);
    }
    let cat = tape.concat_cols(&h)?;
    let logits = tape.dense(cat, params.var(&format!("{prefix}w_att"))?, params.var(&format!("{prefix}b_att"))?)?;
    let alpha = tape.softmax(logits)?;
    let gamma = params.var(&format!("{prefix}gamma"))?;
    let beta = params.var(&format!("{prefix}beta"))?;
    let mut fused = None;
    for (v, &hv) in h.iter().enumerate() {
        let z = tape.layer_norm(hv, gamma, beta, eps)?;
        let a = tape.slice_cols(alpha, v, 1)?;
        let weighted = tape.row_scale(z, a)?;
        fused = Some(match fused {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    Ok(MultiviewVars {
        h: h.try_into().expect("N_VIEWS projections"),
        alpha,
        fused: fused.expect("at least one view"),
    })
}

/// `sigmoid((Σ parts)·W + b)`.
pub fn record_fusion_head<T: Scalar>(tape: &mut Tape<T>, w: Var, b: Var, parts: &[Var]) -> Result<Var> {
    let (&first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::Contract("fusion head needs at least one descriptor".into()))?;
    let mut sum = first;
    for &p in rest {
        sum = tape.add(sum, p)?;
    }
    let logits = tape.dense(sum, w, b)?;
    Ok(tape.sigmoid(logits))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionNet<T> {
    pub kind: FusionKind,
    pub config: FusionConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> FusionNet<T> {
    /// Fresh parameters, deterministic in `config.seed`.
    pub fn new(kind: FusionKind, config: FusionConfig) -> Result<Self> {
        config.validate()?;
        if let FusionKind::Multiview(Modality::Lavila) = kind {
            return Err(Error::Config("lavila has no views to fuse".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        for m in kind.branches() {
            init_multiview(&config, &prefix(m), &mut rng, &mut params)?;
        }
        if kind != FusionKind::Multiview(Modality::Rgb) && kind != FusionKind::Multiview(Modality::Dct) {
            params.insert("head.w", glorot_uniform(&mut rng, config.hidden, config.n_classes))?;
            params.insert("head.b", Tensor::zeros(&[config.n_classes]))?;
        }
        if kind == FusionKind::Trimodal {
            params.insert("lavila.w", glorot_uniform(&mut rng, config.lavila_dim, config.hidden))?;
            params.insert("lavila.b", Tensor::zeros(&[config.hidden]))?;
        }
        Ok(Self { kind, config, params })
    }

    /// Copies a trained standalone branch into this network's parameters
    /// for the same modality.
    pub fn load_branch(&mut self, branch: &FusionNet<T>) -> Result<()> {
        let FusionKind::Multiview(m) = branch.kind else {
            return Err(Error::Contract("only multiview networks can be loaded as branches".into()));
        };
        if !self.kind.branches().contains(&m) {
            return Err(Error::Contract(format!("network has no {m} branch")));
        }
        for p in branch.params.iter() {
            self.params.set(&p.name, p.value.clone())?;
        }
        Ok(())
    }

    /// Freezes or unfreezes one modality branch.
    pub fn set_branch_trainable(&mut self, m: Modality, trainable: bool) -> usize {
        self.params.set_trainable(&prefix(m), trainable)
    }

    /// Replaces every parameter value; names and shapes must match.
    pub fn with_params(mut self, params: ParamSet<T>) -> Result<Self> {
        self.params.check_layout(&params)?;
        self.params = params;
        Ok(self)
    }

    fn eps(&self) -> T {
        T::of(self.config.layer_norm_eps)
    }

    fn branch(&self, tape: &mut Tape<T>, bound: &Bound<'_, T>, batch: &Batch<T>, m: Modality) -> Result<MultiviewVars> {
        let xs = batch.views(m)?;
        let vars: [Var; N_VIEWS] = std::array::from_fn(|v| tape.constant(xs[v].clone()));
        record_multiview(tape, bound, &prefix(m), &vars, self.eps())
    }
}

impl<T: Scalar> Model<T> for FusionNet<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn modalities(&self) -> ModalityMask {
        self.kind.modalities()
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn forward(&self, tape: &mut Tape<T>, bound: &Bound<'_, T>, batch: &Batch<T>) -> Result<ForwardOut> {
        if let FusionKind::Multiview(m) = self.kind {
            let mv = self.branch(tape, bound, batch, m)?;
            let p = prefix(m);
            let logits = tape.dense(mv.fused, bound.var(&format!("{p}w_cls"))?, bound.var(&format!("{p}b_cls"))?)?;
            return Ok(ForwardOut {
                probs: tape.sigmoid(logits),
                attention: vec![(m, mv.alpha)],
            });
        }
        let rgb = self.branch(tape, bound, batch, Modality::Rgb)?;
        let dct = self.branch(tape, bound, batch, Modality::Dct)?;
        let mut parts = vec![rgb.fused, dct.fused];
        if self.kind == FusionKind::Trimodal {
            let x = tape.constant(batch.lavila()?.clone());
            parts.push(tape.dense(x, bound.var("lavila.w")?, bound.var("lavila.b")?)?);
        }
        let probs = record_fusion_head(tape, bound.var("head.w")?, bound.var("head.b")?, &parts)?;
        Ok(ForwardOut {
            probs,
            attention: vec![(Modality::Rgb, rgb.alpha), (Modality::Dct, dct.alpha)],
        })
    }
}

/// Mean attention per view, per fused modality, over one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionReport {
    pub split: Split,
    pub n_samples: usize,
    pub attention: BTreeMap<Modality, [f64; N_VIEWS]>,
}

impl AttentionReport {
    pub fn table(&self) -> String {
        let mut out = format!("{:<8} {:>8} {:>8} {:>8}\n", "modality", "view0", "view1", "view2");
        for (m, a) in &self.attention {
            let _ = writeln!(out, "{:<8} {:>8.4} {:>8.4} {:>8.4}", m.name(), a[0], a[1], a[2]);
        }
        out
    }
}

/// Arithmetic mean of the attention scores over `split`.
pub fn attention_report<T: Scalar, M: Model<T> + ?Sized>(
    model: &M,
    records: &[SampleRecord],
    split: Split,
) -> Result<AttentionReport> {
    const CHUNK: usize = 256;
    let rows = split_records(records, split);
    if rows.is_empty() {
        return Err(Error::EmptySplit(format!("no {split} records for the attention report")));
    }
    let mut sums: BTreeMap<Modality, [f64; N_VIEWS]> = BTreeMap::new();
    for chunk in rows.chunks(CHUNK) {
        let batch = Batch::from_records(chunk, model.modalities())?;
        for (m, alpha) in predict(model, &batch)?.attention {
            let acc = sums.entry(m).or_insert([0.0; N_VIEWS]);
            for row in alpha.data().chunks(N_VIEWS) {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x.as_f64();
                }
            }
        }
    }
    let n = rows.len() as f64;
    let attention = sums.into_iter().map(|(m, s)| (m, s.map(|x| x / n))).collect();
    Ok(AttentionReport {
        split,
        n_samples: rows.len(),
        attention,
    })
}
