//! Orthonormal DCT-II over frames and videos.
//!
//! Frames are transformed whole, per channel, with the separable 2-D
//! transform (rows, then columns). The orthonormal scaling makes the
//! transform energy preserving, so `Σ coef² = Σ pixel²`.

mod container;

pub use container::{read_video, write_video, RawVideo, MTVF_MAGIC, MTVF_VERSION};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Frame count used for snippets.
pub const SNIPPET_LEN: usize = 64;

/// Precomputed cosine basis for one transform length.
#[derive(Debug, Clone)]
pub struct DctPlan<T> {
    n: usize,
    // basis[k * n + i] = s(k) cos(π (2i + 1) k / 2n)
    basis: Vec<T>,
}

impl<T: Scalar> DctPlan<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("dct", &[0], &[1]));
        }
        let nf = n as f64;
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf);
                basis.push(T::of(s * angle.cos()));
            }
        }
        Ok(Self { n, basis })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// DCT-II of `input` (stride `stride`) written to `out` (length n).
    fn forward_strided(&self, input: &[T], stride: usize, out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.basis[k * self.n..(k + 1) * self.n];
            *o = row
                .iter()
                .enumerate()
                .map(|(i, &b)| b * input[i * stride])
                .sum();
        }
    }

    /// DCT-III (the inverse) of `input` (stride `stride`) written to `out`.
    fn inverse_strided(&self, input: &[T], stride: usize, out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..self.n)
                .map(|k| self.basis[k * self.n + i] * input[k * stride])
                .sum();
        }
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x)?;
        let mut out = vec![T::zero(); self.n];
        self.forward_strided(x, 1, &mut out);
        Ok(out)
    }

    pub fn inverse(&self, x: &[T]) -> Result<Vec<T>> {
        self.check(x)?;
        let mut out = vec![T::zero(); self.n];
        self.inverse_strided(x, 1, &mut out);
        Ok(out)
    }

    fn check(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::dim("dct", &[self.n], &[x.len()]));
        }
        Ok(())
    }
}

/// Orthonormal DCT-II: `X[k] = s(k) Σ x[i] cos(π(2i+1)k / 2n)`.
pub fn dct1d<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    DctPlan::new(x.len())?.forward(x)
}

/// Inverse of [`dct1d`].
pub fn idct1d<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    DctPlan::new(x.len())?.inverse(x)
}

/// Image frame, row-major and channel-last, with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<T>) -> Result<Self> {
        check_layout(height, width, channels, pixels.len())?;
        if let Some(bad) = pixels
            .iter()
            .position(|&p| !(p >= T::zero() && p <= T::one()))
        {
            return Err(Error::Validation(format!(
                "pixel {bad} = {} outside [0, 1]",
                pixels[bad]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn energy(&self) -> T {
        self.pixels.iter().map(|&p| p * p).sum()
    }
}

/// DCT coefficients of a [`Frame`], same layout as the source.
#[derive(Debug, Clone, PartialEq)]
pub struct DctFrame<T> {
    height: usize,
    width: usize,
    channels: usize,
    coefficients: Vec<T>,
}

impl<T: Scalar> DctFrame<T> {
    pub fn new(height: usize, width: usize, channels: usize, coefficients: Vec<T>) -> Result<Self> {
        check_layout(height, width, channels, coefficients.len())?;
        Ok(Self {
            height,
            width,
            channels,
            coefficients,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    /// Coefficient at vertical frequency `v`, horizontal frequency `u`.
    pub fn at(&self, v: usize, u: usize, c: usize) -> T {
        self.coefficients[(v * self.width + u) * self.channels + c]
    }

    pub fn energy(&self) -> T {
        self.coefficients.iter().map(|&p| p * p).sum()
    }
}

fn check_layout(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Validation(format!(
            "frame dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    if len != height * width * channels {
        return Err(Error::dim("frame", &[height, width, channels], &[len]));
    }
    Ok(())
}

/// Runs the separable transform over a `h×w×c` channel-last buffer.
fn separable<T: Scalar>(
    data: &[T],
    (h, w, c): (usize, usize, usize),
    rows: &DctPlan<T>,
    cols: &DctPlan<T>,
    inverse: bool,
) -> Vec<T> {
    let mut tmp = vec![T::zero(); data.len()];
    let mut line = vec![T::zero(); w.max(h)];
    // along each row (length w)
    for y in 0..h {
        for ch in 0..c {
            let start = y * w * c + ch;
            let out = &mut line[..w];
            if inverse {
                rows.inverse_strided(&data[start..], c, out);
            } else {
                rows.forward_strided(&data[start..], c, out);
            }
            for (x, &v) in out.iter().enumerate() {
                tmp[start + x * c] = v;
            }
        }
    }
    // along each column (length h)
    let mut result = vec![T::zero(); data.len()];
    for x in 0..w {
        for ch in 0..c {
            let start = x * c + ch;
            let out = &mut line[..h];
            if inverse {
                cols.inverse_strided(&tmp[start..], w * c, out);
            } else {
                cols.forward_strided(&tmp[start..], w * c, out);
            }
            for (y, &v) in out.iter().enumerate() {
                result[start + y * w * c] = v;
            }
        }
    }
    result
}

/// Full-frame 2-D DCT, independently per channel.
pub fn dct2d<T: Scalar>(frame: &Frame<T>) -> DctFrame<T> {
    let rows = DctPlan::new(frame.width).expect("validated width");
    let cols = DctPlan::new(frame.height).expect("validated height");
    dct2d_with(frame, &rows, &cols)
}

fn dct2d_with<T: Scalar>(frame: &Frame<T>, rows: &DctPlan<T>, cols: &DctPlan<T>) -> DctFrame<T> {
    let dims = (frame.height, frame.width, frame.channels);
    DctFrame {
        height: frame.height,
        width: frame.width,
        channels: frame.channels,
        coefficients: separable(&frame.pixels, dims, rows, cols, false),
    }
}

/// Inverse of [`dct2d`]. Returns raw values, which are only guaranteed to
/// lie in `[0, 1]` when the coefficients came from a valid frame.
pub fn idct2d<T: Scalar>(d: &DctFrame<T>) -> Vec<T> {
    let rows = DctPlan::new(d.width).expect("validated width");
    let cols = DctPlan::new(d.height).expect("validated height");
    separable(
        &d.coefficients,
        (d.height, d.width, d.channels),
        &rows,
        &cols,
        true,
    )
}

/// A run of same-shaped frames, at least one long.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoSnippet<T> {
    frames: Vec<Frame<T>>,
}

impl<T: Scalar> VideoSnippet<T> {
    pub fn new(frames: Vec<Frame<T>>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or(Error::InsufficientFrames { have: 0, need: 1 })?;
        let shape = (first.height, first.width, first.channels);
        if let Some(i) = frames
            .iter()
            .position(|f| (f.height, f.width, f.channels) != shape)
        {
            return Err(Error::Validation(format!("frame {i} has a different shape")));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Centered window of `target_len` frames; shorter inputs are rejected.
pub fn take_snippet<T: Scalar>(frames: Vec<Frame<T>>, target_len: usize) -> Result<VideoSnippet<T>> {
    if target_len == 0 {
        return Err(Error::Contract("snippet length must be at least 1".into()));
    }
    if frames.len() < target_len {
        return Err(Error::InsufficientFrames {
            have: frames.len(),
            need: target_len,
        });
    }
    let start = (frames.len() - target_len) / 2;
    let window = frames.into_iter().skip(start).take(target_len).collect();
    VideoSnippet::new(window)
}

/// Per-frame [`dct2d`], order preserved.
pub fn video_dct<T: Scalar>(video: &VideoSnippet<T>) -> Vec<DctFrame<T>> {
    let first = &video.frames[0];
    let rows = DctPlan::new(first.width).expect("validated width");
    let cols = DctPlan::new(first.height).expect("validated height");
    video
        .frames
        .iter()
        .map(|f| dct2d_with(f, &rows, &cols))
        .collect()
}

/// Log-magnitude map `ln(1 + |c|)`, min-max normalized per channel.
pub fn dct_visualize<T: Scalar>(d: &DctFrame<T>) -> Frame<T> {
    let c = d.channels;
    let logs: Vec<T> = d
        .coefficients
        .iter()
        .map(|&v| v.abs().ln_1p())
        .collect();
    let mut out = vec![T::zero(); logs.len()];
    for ch in 0..c {
        let values = logs.iter().skip(ch).step_by(c);
        let (lo, hi) = values.fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        if span > T::zero() {
            for (o, &v) in out.iter_mut().zip(&logs).skip(ch).step_by(c) {
                *o = ((v - lo) / span).max(T::zero()).min(T::one());
            }
        }
    }
    Frame {
        height: d.height,
        width: d.width,
        channels: c,
        pixels: out,
    }
}

/// Bilinear resize with pixel centers at half-integer coordinates.
pub fn resize_bilinear<T: Scalar>(frame: &Frame<T>, height: usize, width: usize) -> Result<Frame<T>> {
    if height == 0 || width == 0 {
        return Err(Error::Contract(format!("resize target {height}x{width} must be positive")));
    }
    let axis = |out: usize, src: usize| -> Vec<(usize, usize, T)> {
        let scale = src as f64 / out as f64;
        (0..out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, T::of(pos - lo as f64))
            })
            .collect()
    };
    let ys = axis(height, frame.height);
    let xs = axis(width, frame.width);
    let c = frame.channels;
    let mut pixels = Vec::with_capacity(height * width * c);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for ch in 0..c {
                let top = frame.at(y0, x0, ch) * (T::one() - fx) + frame.at(y0, x1, ch) * fx;
                let bottom = frame.at(y1, x0, ch) * (T::one() - fx) + frame.at(y1, x1, ch) * fx;
                let v = top * (T::one() - fy) + bottom * fy;
                pixels.push(v.max(T::zero()).min(T::one()));
            }
        }
    }
    Frame::new(height, width, c, pixels)
}
