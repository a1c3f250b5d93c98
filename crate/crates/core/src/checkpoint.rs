//! The `MTBP` parameter checkpoint.
//!
//! ```text
//! "MTBP" u8 version | u8 model kind | config block | u32 n_tensors
//! per tensor: u16 name_len | name (UTF-8) | u8 rank | rank × u32 dim | f64 payload
//! ```
//!
//! Kinds 0..=3 (multiview-rgb, multiview-dct, bimodal, trimodal) carry the
//! fusion block `u32 feat_dim | u32 hidden | u32 n_classes | u32 lavila_dim |
//! f64 layer_norm_eps | u64 seed`. Kind 4 (transformer) carries `u32 d_model |
//! u32 n_heads | u32 d_ff | u32 n_layers | u32 seq_len | u32 n_classes |
//! u8 positional | f64 layer_norm_eps | u64 seed`. Little-endian throughout.
//! Tensors appear in the model's parameter order; trainable flags are not
//! stored.

use std::io::{Read, Write};

use crate::binio::Cursor;
use crate::dataio::Modality;
use crate::error::{Error, Result};
use crate::models::{EncoderConfig, FusionConfig, FusionKind, FusionNet, Model, Network, TransformerNet};
use crate::params::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MTBP_MAGIC: &[u8; 4] = b"MTBP";
pub const MTBP_VERSION: u8 = 1;

fn u32_field(v: usize, what: &str) -> Result<[u8; 4]> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| Error::Validation(format!("{what} = {v} does not fit a u32")))
}

fn kind_code(kind: FusionKind) -> u8 {
    match kind {
        FusionKind::Multiview(Modality::Rgb) => 0,
        FusionKind::Multiview(Modality::Dct) => 1,
        FusionKind::Multiview(Modality::Lavila) => unreachable!("rejected at construction"),
        FusionKind::Bimodal => 2,
        FusionKind::Trimodal => 3,
    }
}

pub fn write_checkpoint<T: Scalar, W: Write>(net: &Network<T>, mut w: W) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MTBP_MAGIC);
    buf.push(MTBP_VERSION);
    match net {
        Network::Fusion(f) => {
            let c = &f.config;
            buf.push(kind_code(f.kind));
            buf.extend_from_slice(&u32_field(c.feat_dim, "feat_dim")?);
            buf.extend_from_slice(&u32_field(c.hidden, "hidden")?);
            buf.extend_from_slice(&u32_field(c.n_classes, "n_classes")?);
            buf.extend_from_slice(&u32_field(c.lavila_dim, "lavila_dim")?);
            buf.extend_from_slice(&c.layer_norm_eps.to_le_bytes());
            buf.extend_from_slice(&c.seed.to_le_bytes());
        }
        Network::Transformer(t) => {
            let c = &t.config;
            buf.push(4);
            for (v, what) in [
                (c.d_model, "d_model"),
                (c.n_heads, "n_heads"),
                (c.d_ff, "d_ff"),
                (c.n_layers, "n_layers"),
                (c.seq_len, "seq_len"),
                (c.n_classes, "n_classes"),
            ] {
                buf.extend_from_slice(&u32_field(v, what)?);
            }
            buf.push(c.positional as u8);
            buf.extend_from_slice(&c.layer_norm_eps.to_le_bytes());
            buf.extend_from_slice(&c.seed.to_le_bytes());
        }
    }
    let params = net.params();
    buf.extend_from_slice(&u32_field(params.len(), "tensor count")?);
    for p in params.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Validation(format!("parameter name {} too long", p.name)))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(name);
        let rank = u8::try_from(p.value.rank())
            .map_err(|_| Error::Validation(format!("parameter {} has rank above 255", p.name)))?;
        buf.push(rank);
        for &d in p.value.shape() {
            buf.extend_from_slice(&u32_field(d, "dimension")?);
        }
        for x in p.value.data() {
            buf.extend_from_slice(&x.as_f64().to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Network<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn parse<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != MTBP_MAGIC {
        return Err(Error::format(0, "bad magic, expected MTBP"));
    }
    let version = c.u8("version")?;
    if version != MTBP_VERSION {
        return Err(Error::format(4, format!("unsupported MTBP version {version}")));
    }
    let kind = c.u8("model kind")?;
    let config_at = c.pos() as u64;
    let bad_config = |e: Error| Error::format(config_at, format!("invalid model config: {e}"));
    let fresh: Network<T> = match kind {
        0..=3 => {
            let config = FusionConfig {
                feat_dim: c.u32("feat_dim")? as usize,
                hidden: c.u32("hidden")? as usize,
                n_classes: c.u32("n_classes")? as usize,
                lavila_dim: c.u32("lavila_dim")? as usize,
                layer_norm_eps: c.f64("layer_norm_eps")?,
                seed: c.u64("seed")?,
            };
            let kind = [
                FusionKind::Multiview(Modality::Rgb),
                FusionKind::Multiview(Modality::Dct),
                FusionKind::Bimodal,
                FusionKind::Trimodal,
            ][kind as usize];
            Network::Fusion(FusionNet::new(kind, config).map_err(bad_config)?)
        }
        4 => {
            let config = EncoderConfig {
                d_model: c.u32("d_model")? as usize,
                n_heads: c.u32("n_heads")? as usize,
                d_ff: c.u32("d_ff")? as usize,
                n_layers: c.u32("n_layers")? as usize,
                seq_len: c.u32("seq_len")? as usize,
                n_classes: c.u32("n_classes")? as usize,
                positional: match c.u8("positional")? {
                    0 => false,
                    1 => true,
                    b => return Err(Error::format(c.pos() as u64 - 1, format!("positional flag {b} not in {{0,1}}"))),
                },
                layer_norm_eps: c.f64("layer_norm_eps")?,
                seed: c.u64("seed")?,
            };
            Network::Transformer(TransformerNet::new(config).map_err(bad_config)?)
        }
        k => return Err(Error::format(5, format!("unknown model kind {k}"))),
    };

    let count_at = c.pos() as u64;
    let count = c.u32("tensor count")? as usize;
    let expected = fresh.params();
    if count != expected.len() {
        return Err(Error::format(
            count_at,
            format!("{count} tensors, model expects {}", expected.len()),
        ));
    }
    let mut params = ParamSet::new();
    for want in expected.iter() {
        let at = c.pos() as u64;
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::format(at + 2, "parameter name is not UTF-8"))?
            .to_string();
        if name != want.name {
            return Err(Error::format(at, format!("expected parameter {}, found {name}", want.name)));
        }
        let rank = c.u8("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32("dimension")? as usize);
        }
        if shape != want.value.shape() {
            return Err(Error::format(
                at,
                format!("parameter {name} has shape {shape:?}, expected {:?}", want.value.shape()),
            ));
        }
        let n = want.value.len();
        let raw = c.take(n.checked_mul(8).unwrap_or(usize::MAX), "tensor payload")?;
        let data: Vec<T> = raw
            .chunks_exact(8)
            .map(|b| T::of(f64::from_le_bytes(b.try_into().unwrap())))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(at, format!("parameter {name} has non-finite values")));
        }
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    if !c.at_end() {
        return Err(Error::format(c.pos() as u64, "trailing bytes after last tensor"));
    }
    Ok(match fresh {
        Network::Fusion(f) => Network::Fusion(f.with_params(params)?),
        Network::Transformer(t) => Network::Transformer(t.with_params(params)?),
    })
}
