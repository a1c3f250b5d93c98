//! Encoder-only transformer classifier over token sequences.
//!
//! Each layer is pre-norm: `x + MHSA(LN(x))`, then `x + FFN(LN(x))`. Keys
//! are projected without a bias. The encoded tokens are mean-pooled and
//! classified by a sigmoid dense layer.
//! A dataset stores one sample's sequence flattened row-major in its LaViLa
//! vector, so `lavila_dim` must equal `seq_len · d_model`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, ForwardOut, Model};
use crate::autodiff::{Tape, Var};
use crate::dataio::{Modality, ModalityMask, DEFAULT_CLASSES, LAVILA_DIM};
use crate::error::{Error, Result};
use crate::params::{glorot_uniform, Bound, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub n_layers: usize,
    pub seq_len: usize,
    pub n_classes: usize,
    pub layer_norm_eps: f64,
    /// Add sinusoidal position encodings to the input tokens.
    pub positional: bool,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: LAVILA_DIM,
            n_heads: 4,
            d_ff: 2048,
            n_layers: 1,
            seq_len: 256,
            n_classes: DEFAULT_CLASSES,
            layer_norm_eps: 1e-5,
            positional: false,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.d_model, self.n_heads, self.d_ff, self.n_layers, self.seq_len, self.n_classes];
        if dims.contains(&0) {
            return Err(Error::Config("encoder dimensions must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model < 2 {
            return Err(Error::Config("d_model must be at least 2 for layer norm".into()));
        }
        if !(self.layer_norm_eps > 0.0) {
            return Err(Error::Config("layer_norm_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(...)`.
pub fn sinusoidal_encoding<T: Scalar>(seq_len: usize, d_model: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(seq_len * d_model);
    for pos in 0..seq_len {
        for j in 0..d_model {
            let rate = 10000f64.powf((j - j % 2) as f64 / d_model as f64);
            let angle = pos as f64 / rate;
            data.push(T::of(if j % 2 == 0 { angle.sin() } else { angle.cos() }));
        }
    }
    Tensor::new(vec![seq_len, d_model], data).expect("positive sizes")
}

/// Handles of one recorded sequence pass.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    /// Encoded tokens `[seq_len × d_model]`.
    pub tokens: Var,
    /// `[1 × d_model]`.
    pub pooled: Var,
    /// Attention matrices `[seq_len × seq_len]`, per layer then per head.
    pub attention: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerNet<T> {
    pub config: EncoderConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> TransformerNet<T> {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, f) = (config.d_model, config.d_ff);
        let mut params = ParamSet::new();
        for l in 0..config.n_layers {
            params.insert(format!("layer{l}.ln1.gamma"), Tensor::full(&[d], T::one()))?;
            params.insert(format!("layer{l}.ln1.beta"), Tensor::zeros(&[d]))?;
            for proj in ["q", "k", "v", "o"] {
                params.insert(format!("layer{l}.w{proj}"), glorot_uniform(&mut rng, d, d))?;
                // a key bias adds a per-query constant to every score, which softmax cancels
                if proj != "k" {
                    params.insert(format!("layer{l}.b{proj}"), Tensor::zeros(&[d]))?;
                }
            }
            params.insert(format!("layer{l}.ln2.gamma"), Tensor::full(&[d], T::one()))?;
            params.insert(format!("layer{l}.ln2.beta"), Tensor::zeros(&[d]))?;
            params.insert(format!("layer{l}.ff1.w"), glorot_uniform(&mut rng, d, f))?;
            params.insert(format!("layer{l}.ff1.b"), Tensor::zeros(&[f]))?;
            params.insert(format!("layer{l}.ff2.w"), glorot_uniform(&mut rng, f, d))?;
            params.insert(format!("layer{l}.ff2.b"), Tensor::zeros(&[d]))?;
        }
        params.insert("cls.w", glorot_uniform(&mut rng, d, config.n_classes))?;
        params.insert("cls.b", Tensor::zeros(&[config.n_classes]))?;
        Ok(Self { config, params })
    }

    pub fn with_params(mut self, params: ParamSet<T>) -> Result<Self> {
        self.params.check_layout(&params)?;
        self.params = params;
        Ok(self)
    }

    fn eps(&self) -> T {
        T::of(self.config.layer_norm_eps)
    }

    fn check_tokens(&self, tape: &Tape<T>, x: Var) -> Result<()> {
        let want = [self.config.seq_len, self.config.d_model];
        if tape.value(x).shape() != want {
            return Err(Error::dim("token sequence", &want, tape.value(x).shape()));
        }
        Ok(())
    }

    /// `x + MHSA(LN(x))` for layer `l`. Returns the output and the
    /// per-head attention matrices.
    pub fn record_mhsa(&self, tape: &mut Tape<T>, p: &Bound<'_, T>, l: usize, x: Var) -> Result<(Var, Vec<Var>)> {
        self.check_tokens(tape, x)?;
        let n = tape.layer_norm(x, p.var(&format!("layer{l}.ln1.gamma"))?, p.var(&format!("layer{l}.ln1.beta"))?, self.eps())?;
        let proj = |tape: &mut Tape<T>, name: &str| -> Result<Var> {
            tape.dense(n, p.var(&format!("layer{l}.w{name}"))?, p.var(&format!("layer{l}.b{name}"))?)
        };
        let q = proj(tape, "q")?;
        let k = tape.matmul(n, p.var(&format!("layer{l}.wk"))?)?;
        let v = proj(tape, "v")?;
        let dh = self.config.head_dim();
        let scale = T::one() / T::of_usize(dh).sqrt();
        let mut heads = Vec::with_capacity(self.config.n_heads);
        let mut maps = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let raw = tape.matmul(qh, kt)?;
            let scores = tape.scale(raw, scale);
            let a = tape.softmax(scores)?;
            heads.push(tape.matmul(a, vh)?);
            maps.push(a);
        }
        let cat = tape.concat_cols(&heads)?;
        let out = tape.dense(cat, p.var(&format!("layer{l}.wo"))?, p.var(&format!("layer{l}.bo"))?)?;
        Ok((tape.add(x, out)?, maps))
    }

    /// `x + W2·relu(W1·LN(x) + b1) + b2` for layer `l`.
    pub fn record_ffn(&self, tape: &mut Tape<T>, p: &Bound<'_, T>, l: usize, x: Var) -> Result<Var> {
        self.check_tokens(tape, x)?;
        let n = tape.layer_norm(x, p.var(&format!("layer{l}.ln2.gamma"))?, p.var(&format!("layer{l}.ln2.beta"))?, self.eps())?;
        let inner = tape.dense(n, p.var(&format!("layer{l}.ff1.w"))?, p.var(&format!("layer{l}.ff1.b"))?)?;
        let act = tape.relu(inner);
        let out = tape.dense(act, p.var(&format!("layer{l}.ff2.w"))?, p.var(&format!("layer{l}.ff2.b"))?)?;
        tape.add(x, out)
    }

    /// All encoder layers followed by mean pooling over tokens.
    pub fn record_encoder(&self, tape: &mut Tape<T>, p: &Bound<'_, T>, tokens: Var) -> Result<EncoderVars> {
        self.check_tokens(tape, tokens)?;
        let mut x = tokens;
        if self.config.positional {
            let pe = tape.constant(sinusoidal_encoding(self.config.seq_len, self.config.d_model));
            x = tape.add(x, pe)?;
        }
        let mut attention = Vec::new();
        for l in 0..self.config.n_layers {
            let (y, maps) = self.record_mhsa(tape, p, l, x)?;
            attention.extend(maps);
            x = self.record_ffn(tape, p, l, y)?;
        }
        let pooled = tape.mean_rows(x)?;
        Ok(EncoderVars {
            tokens: x,
            pooled,
            attention,
        })
    }

    /// `sigmoid(pooled·W_cls + b_cls)` for a `[rows × d_model]` pooled batch.
    pub fn record_classifier(&self, tape: &mut Tape<T>, p: &Bound<'_, T>, pooled: Var) -> Result<Var> {
        let logits = tape.dense(pooled, p.var("cls.w")?, p.var("cls.b")?)?;
        Ok(tape.sigmoid(logits))
    }

    /// Class probabilities for one sequence.
    pub fn encoder_classify(&self, tokens: &Tensor<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let x = tape.constant(tokens.clone());
        let enc = self.record_encoder(&mut tape, &p, x)?;
        let probs = self.record_classifier(&mut tape, &p, enc.pooled)?;
        Ok(tape.value(probs).data().to_vec())
    }

    /// The pooled `d_model` representation that feeds the classifier.
    pub fn extract_transformer_feature(&self, tokens: &Tensor<T>) -> Result<Vec<T>> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let x = tape.constant(tokens.clone());
        let enc = self.record_encoder(&mut tape, &p, x)?;
        Ok(tape.value(enc.pooled).data().to_vec())
    }
}

impl<T: Scalar> Model<T> for TransformerNet<T> {
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    fn modalities(&self) -> ModalityMask {
        ModalityMask::of(&[Modality::Lavila])
    }

    fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    fn forward(&self, tape: &mut Tape<T>, p: &Bound<'_, T>, batch: &Batch<T>) -> Result<ForwardOut> {
        let lavila = batch.lavila()?;
        let (rows, width) = lavila.dims2("transformer input")?;
        let (s, d) = (self.config.seq_len, self.config.d_model);
        if width != s * d {
            return Err(Error::dim("transformer input", &[s * d], &[width]));
        }
        let mut pooled = Vec::with_capacity(rows);
        for i in 0..rows {
            let tokens = Tensor::new(vec![s, d], lavila.row(i).to_vec())?;
            let x = tape.constant(tokens);
            pooled.push(self.record_encoder(tape, p, x)?.pooled);
        }
        let stacked = tape.concat_rows(&pooled)?;
        Ok(ForwardOut {
            probs: self.record_classifier(tape, p, stacked)?,
            attention: Vec::new(),
        })
    }
}
