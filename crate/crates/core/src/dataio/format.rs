//! The `MTBR` dataset file.
//!
//! ```text
//! "MTBR" u8 version
//! u64 n_samples | u16 n_views | u16 n_classes | u32 feat_dim | u8 modality_mask | u32 lavila_dim
//! per record:
//!   u64 id | u8 split | n_classes × u8 label
//!   RGB (if present):    n_views × feat_dim × f32
//!   DCT (if present):    n_views × feat_dim × f32
//!   LaViLa (if present): lavila_dim × f32
//! ```
//! Little-endian throughout. Trailing bytes are a format error.

use std::io::{Read, Write};

use super::{DatasetManifest, LabelVector, Modality, ModalityMask, SampleRecord, Split, ViewFeatures};
use crate::binio::Cursor;
use crate::error::{Error, Result};

pub const MTBR_MAGIC: &[u8; 4] = b"MTBR";
pub const MTBR_VERSION: u8 = 1;

fn narrow<U: TryFrom<usize>>(v: usize, what: &str) -> Result<U> {
    U::try_from(v).map_err(|_| Error::Validation(format!("{what} = {v} does not fit the header field")))
}

pub fn write_dataset<W: Write>(manifest: &DatasetManifest, records: &[SampleRecord], mut w: W) -> Result<()> {
    manifest.validate(records)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MTBR_MAGIC);
    buf.push(MTBR_VERSION);
    buf.extend_from_slice(&(manifest.n_samples as u64).to_le_bytes());
    buf.extend_from_slice(&narrow::<u16>(manifest.n_views, "n_views")?.to_le_bytes());
    buf.extend_from_slice(&narrow::<u16>(manifest.n_classes, "n_classes")?.to_le_bytes());
    buf.extend_from_slice(&narrow::<u32>(manifest.feat_dim, "feat_dim")?.to_le_bytes());
    buf.push(manifest.modalities.bits());
    buf.extend_from_slice(&narrow::<u32>(manifest.lavila_dim, "lavila_dim")?.to_le_bytes());
    for r in records {
        buf.extend_from_slice(&r.id.to_le_bytes());
        buf.push(r.split.code());
        buf.extend(r.labels.bits().iter().map(|&b| b as u8));
        for views in [&r.rgb, &r.dct].into_iter().flatten() {
            for v in views {
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        if let Some(l) = &r.lavila {
            for x in l {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<(DatasetManifest, Vec<SampleRecord>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn parse(bytes: &[u8]) -> Result<(DatasetManifest, Vec<SampleRecord>)> {
    let mut c = Cursor::new(bytes);
    if c.take(4, "magic")? != MTBR_MAGIC {
        return Err(Error::format(0, "bad magic, expected MTBR"));
    }
    let version = c.u8("version")?;
    if version != MTBR_VERSION {
        return Err(Error::format(4, format!("unsupported MTBR version {version}")));
    }
    let n_samples = c.u64("n_samples")?;
    let n_views = c.u16("n_views")? as usize;
    let n_classes = c.u16("n_classes")? as usize;
    let feat_dim = c.u32("feat_dim")? as usize;
    let mask_pos = c.pos() as u64;
    let mask = c.u8("modality_mask")?;
    let modalities =
        ModalityMask::from_bits(mask).ok_or_else(|| Error::format(mask_pos, format!("invalid modality mask {mask:#04x}")))?;
    let lavila_dim = c.u32("lavila_dim")? as usize;
    if n_views != super::N_VIEWS {
        return Err(Error::format(13, format!("n_views must be {}, got {n_views}", super::N_VIEWS)));
    }

    let manifest = DatasetManifest {
        n_samples: n_samples as usize,
        n_views,
        n_classes,
        feat_dim,
        modalities,
        lavila_dim,
    };
    let mut records = Vec::new();
    for _ in 0..n_samples {
        let id = c.u64("record id")?;
        let split_pos = c.pos() as u64;
        let code = c.u8("split")?;
        let split = Split::from_code(code)
            .ok_or_else(|| Error::format(split_pos, format!("invalid split code {code}")))?;
        let label_pos = c.pos() as u64;
        let raw = c.take(n_classes, "labels")?;
        let mut bits = Vec::with_capacity(n_classes);
        for (i, &b) in raw.iter().enumerate() {
            match b {
                0 => bits.push(false),
                1 => bits.push(true),
                _ => return Err(Error::format(label_pos + i as u64, format!("label byte {b} not in {{0,1}}"))),
            }
        }
        let read_views = |c: &mut Cursor, m: Modality| -> Result<Option<ViewFeatures>> {
            if !modalities.contains(m) {
                return Ok(None);
            }
            Ok(Some([
                c.floats(feat_dim, "view features")?,
                c.floats(feat_dim, "view features")?,
                c.floats(feat_dim, "view features")?,
            ]))
        };
        let rgb = read_views(&mut c, Modality::Rgb)?;
        let dct = read_views(&mut c, Modality::Dct)?;
        let lavila = if modalities.contains(Modality::Lavila) {
            Some(c.floats(lavila_dim, "lavila features")?)
        } else {
            None
        };
        records.push(SampleRecord {
            id,
            split,
            labels: LabelVector::new(bits),
            rgb,
            dct,
            lavila,
        });
    }
    if c.pos() != bytes.len() {
        return Err(Error::format(c.pos() as u64, "trailing bytes after last record"));
    }
    manifest.validate(&records).map_err(|e| Error::format(0, e.to_string()))?;
    Ok((manifest, records))
}
