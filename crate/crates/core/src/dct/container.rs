//! The `MTVF` raw video container.
//!
//! ```text
//! "MTVF" | u32 version | u32 frame_count | u32 height | u32 width | u32 channels
//! frame_count·height·width·channels × f32
//! ```
//! All integers and floats little-endian. Pixel videos carry values in
//! `[0, 1]`; DCT videos reuse the container with unbounded coefficients.

use std::io::{Read, Write};

use super::{DctFrame, Frame};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MTVF_MAGIC: &[u8; 4] = b"MTVF";
pub const MTVF_VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct RawVideo {
    pub frame_count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl RawVideo {
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn from_frames<T: Scalar>(frames: &[Frame<T>]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or(Error::InsufficientFrames { have: 0, need: 1 })?;
        let mut data = Vec::with_capacity(frames.len() * first.pixels().len());
        for f in frames {
            if (f.height(), f.width(), f.channels()) != (first.height(), first.width(), first.channels()) {
                return Err(Error::Validation("frames differ in shape".into()));
            }
            data.extend(f.pixels().iter().map(|p| p.as_f32()));
        }
        Ok(Self {
            frame_count: frames.len(),
            height: first.height(),
            width: first.width(),
            channels: first.channels(),
            data,
        })
    }

    pub fn from_dct<T: Scalar>(frames: &[DctFrame<T>]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or(Error::InsufficientFrames { have: 0, need: 1 })?;
        let mut data = Vec::with_capacity(frames.len() * first.coefficients().len());
        for f in frames {
            data.extend(f.coefficients().iter().map(|p| p.as_f32()));
        }
        Ok(Self {
            frame_count: frames.len(),
            height: first.height(),
            width: first.width(),
            channels: first.channels(),
            data,
        })
    }

    /// Interprets the payload as pixel frames, checking the `[0, 1]` range.
    pub fn to_frames<T: Scalar>(&self) -> Result<Vec<Frame<T>>> {
        let n = self.frame_len();
        self.data
            .chunks(n)
            .map(|chunk| {
                let pixels = chunk.iter().map(|&v| T::of(v as f64)).collect();
                Frame::new(self.height, self.width, self.channels, pixels)
            })
            .collect()
    }
}

pub fn write_video<W: Write>(video: &RawVideo, mut w: W) -> Result<()> {
    if video.data.len() != video.frame_count * video.frame_len() {
        return Err(Error::Validation("video payload does not match header".into()));
    }
    let dim = |v: usize| -> Result<[u8; 4]> {
        u32::try_from(v)
            .map(u32::to_le_bytes)
            .map_err(|_| Error::Validation(format!("dimension {v} exceeds u32")))
    };
    let mut buf = Vec::with_capacity(HEADER_LEN as usize + video.data.len() * 4);
    buf.extend_from_slice(MTVF_MAGIC);
    buf.extend_from_slice(&MTVF_VERSION.to_le_bytes());
    for v in [video.frame_count, video.height, video.width, video.channels] {
        buf.extend_from_slice(&dim(v)?);
    }
    for v in &video.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_video<R: Read>(mut r: R) -> Result<RawVideo> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN as usize {
        return Err(Error::format(bytes.len() as u64, "truncated MTVF header"));
    }
    if &bytes[..4] != MTVF_MAGIC {
        return Err(Error::format(0, "bad magic, expected MTVF"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let version = word(4) as u32;
    if version != MTVF_VERSION {
        return Err(Error::format(4, format!("unsupported MTVF version {version}")));
    }
    let (frame_count, height, width, channels) = (word(8), word(12), word(16), word(20));
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::format(12, "zero frame dimension"));
    }
    let count = frame_count
        .checked_mul(height * width * channels)
        .ok_or_else(|| Error::format(8, "payload size overflows"))?;
    let payload = &bytes[HEADER_LEN as usize..];
    if payload.len() < count * 4 {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload, expected {} bytes", HEADER_LEN as usize + count * 4),
        ));
    }
    if payload.len() > count * 4 {
        return Err(Error::format(
            HEADER_LEN + (count * 4) as u64,
            "trailing bytes after payload",
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawVideo {
        frame_count,
        height,
        width,
        channels,
        data,
    })
}
