//! Float rasters, the `SRTK1` container format, Catmull-Rom sampling and
//! inverse-mapping affine warps.
//!
//! Pixel `(i, j)` is centered on continuous coordinate `(i, j)`: column index
//! along x, row index along y. Samples are row-major and channel-interleaved.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Matrix3;
use rayon::prelude::*;
use thiserror::Error;

const MAGIC: &[u8] = b"SRTK1\n";
const MAX_CHANNELS: usize = 4;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample {index} is non-finite and not nodata")]
    NonFinite { index: usize },
    #[error("channel {channel} out of range for a {channels}-channel raster")]
    ChannelOutOfRange { channel: usize, channels: usize },
    #[error("affine map is not invertible (|det| = {0:e})")]
    NonInvertibleMap(f64),
}

#[derive(Debug, Clone)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f32>,
    nodata: f32,
}

/// Equality is bitwise on samples and sentinel, so NaN nodata compares equal.
impl PartialEq for Raster {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
            && self.nodata.to_bits() == other.nodata.to_bits()
            && self.samples.iter().map(|v| v.to_bits()).eq(other.samples.iter().map(|v| v.to_bits()))
    }
}

impl Raster {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f32>,
        nodata: f32,
    ) -> Result<Self, RasterError> {
        if !(1..=MAX_CHANNELS).contains(&channels) {
            return Err(RasterError::DimensionMismatch(format!("{channels} channels (1-4 supported)")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| RasterError::DimensionMismatch("raster size overflows".into()))?;
        if samples.len() != expected {
            return Err(RasterError::DimensionMismatch(format!(
                "{width}x{height}x{channels} needs {expected} samples, got {}",
                samples.len()
            )));
        }
        let r = Self { width, height, channels, samples, nodata };
        if let Some(index) = r.samples.iter().position(|&v| !v.is_finite() && !r.is_nodata(v)) {
            return Err(RasterError::NonFinite { index });
        }
        Ok(r)
    }

    /// Raster with every sample set to `value`.
    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self, RasterError> {
        Self::new(width, height, channels, vec![value; width * height * channels], f32::NAN)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, RasterError> {
        let mut samples = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    samples.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, samples, f32::NAN)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn nodata(&self) -> f32 {
        self.nodata
    }
    pub fn samples(&self) -> &[f32] {
        &self.samples
    }
    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// NaN is always treated as missing, in addition to the declared sentinel.
    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        v.is_nan() || v == self.nodata
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.samples[self.index(x, y, c)]
    }

    /// Value at a pixel, or `None` when it is nodata.
    pub fn value(&self, x: usize, y: usize, c: usize) -> Option<f32> {
        let v = self.get(x, y, c);
        (!self.is_nodata(v)).then_some(v)
    }

    /// Valid samples of one channel.
    pub fn channel_values(&self, c: usize) -> Vec<f32> {
        self.samples
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .filter(|&v| !self.is_nodata(v))
            .collect()
    }

    pub fn check_channel(&self, channel: usize) -> Result<(), RasterError> {
        if channel < self.channels {
            Ok(())
        } else {
            Err(RasterError::ChannelOutOfRange { channel, channels: self.channels })
        }
    }

    /// Same shape and nodata sentinel with new samples. Values that are not
    /// finite are replaced by the sentinel.
    pub fn with_samples(&self, mut samples: Vec<f32>) -> Result<Self, RasterError> {
        for v in samples.iter_mut() {
            if !v.is_finite() {
                *v = self.nodata;
            }
        }
        Self::new(self.width, self.height, self.channels, samples, self.nodata)
    }

    /// Sub-rectangle `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self, RasterError> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(RasterError::DimensionMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut samples = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let start = self.index(x0, y, 0);
            samples.extend_from_slice(&self.samples[start..start + w * self.channels]);
        }
        Self::new(w, h, self.channels, samples, self.nodata)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.samples.len() * 4);
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), RasterError> {
        w.write_all(MAGIC)?;
        writeln!(w, "{} {} {} {}", self.width, self.height, self.channels, self.nodata)?;
        let mut payload = Vec::with_capacity(self.samples.len() * 4);
        for v in &self.samples {
            payload.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, RasterError> {
        let mut r = BufReader::new(r);
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| RasterError::MalformedHeader("missing SRTK1 magic".into()))?;
        if magic != MAGIC {
            return Err(RasterError::MalformedHeader("missing SRTK1 magic".into()));
        }
        let mut header = Vec::new();
        r.read_until(b'\n', &mut header)?;
        if header.last() != Some(&b'\n') {
            return Err(RasterError::MalformedHeader("unterminated header line".into()));
        }
        let header = std::str::from_utf8(&header)
            .map_err(|_| RasterError::MalformedHeader("header is not ASCII".into()))?;
        let fields: Vec<&str> = header.split_ascii_whitespace().collect();
        if fields.len() != 4 {
            return Err(RasterError::MalformedHeader(format!(
                "expected `width height channels nodata`, got {header:?}"
            )));
        }
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| RasterError::MalformedHeader(format!("bad dimension {s:?}")))
        };
        let (width, height, channels) = (dim(fields[0])?, dim(fields[1])?, dim(fields[2])?);
        let nodata: f32 = fields[3]
            .parse()
            .map_err(|_| RasterError::MalformedHeader(format!("bad nodata {:?}", fields[3])))?;
        if !(1..=MAX_CHANNELS).contains(&channels) {
            return Err(RasterError::MalformedHeader(format!("{channels} channels (1-4 supported)")));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels * 4))
            .ok_or_else(|| RasterError::MalformedHeader("raster size overflows".into()))?;
        let mut payload = Vec::with_capacity(expected);
        r.read_to_end(&mut payload)?;
        if payload.len() < expected {
            return Err(RasterError::Truncated { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(RasterError::DimensionMismatch(format!(
                "payload has {} bytes, header declares {expected}",
                payload.len()
            )));
        }
        let samples = payload
            .chunks_exact(4)
            .map(|b| f32::from_bits(u32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect();
        Self::new(width, height, channels, samples, nodata)
    }
}

pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    raster.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    Raster::read_from(std::fs::File::open(path)?)
}

/// Planar affine map in homogeneous pixel coordinates (bottom row `0 0 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap2D {
    matrix: Matrix3<f64>,
}

impl AffineMap2D {
    pub const MIN_DET: f64 = 1e-12;

    /// The bottom row is forced to `(0, 0, 1)`.
    pub fn new(mut matrix: Matrix3<f64>) -> Result<Self, RasterError> {
        matrix[(2, 0)] = 0.0;
        matrix[(2, 1)] = 0.0;
        matrix[(2, 2)] = 1.0;
        let det = matrix[(0, 0)] * matrix[(1, 1)] - matrix[(0, 1)] * matrix[(1, 0)];
        if !(det.abs() > Self::MIN_DET) || matrix.iter().any(|v| !v.is_finite()) {
            return Err(RasterError::NonInvertibleMap(det.abs()));
        }
        Ok(Self { matrix })
    }

    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity() }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        let mut m = Matrix3::identity();
        m[(0, 2)] = dx;
        m[(1, 2)] = dy;
        Self { matrix: m }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.matrix;
        (
            m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)],
            m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)],
        )
    }

    pub fn inverse(&self) -> Self {
        let m = &self.matrix;
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let a = m[(1, 1)] / det;
        let b = -m[(0, 1)] / det;
        let c = -m[(1, 0)] / det;
        let d = m[(0, 0)] / det;
        let tx = -(a * m[(0, 2)] + b * m[(1, 2)]);
        let ty = -(c * m[(0, 2)] + d * m[(1, 2)]);
        Self { matrix: Matrix3::new(a, b, tx, c, d, ty, 0.0, 0.0, 1.0) }
    }
}

/// Catmull-Rom kernel (`a = -0.5`).
#[inline]
pub fn catmull_rom(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

#[inline]
fn kernel_weights(t: f64) -> [f64; 4] {
    [catmull_rom(t + 1.0), catmull_rom(t), catmull_rom(1.0 - t), catmull_rom(2.0 - t)]
}

/// Bicubic (Catmull-Rom) sample at continuous pixel coordinates.
///
/// Queries outside `[-0.5, w - 0.5] x [-0.5, h - 0.5]` return nodata. Support
/// indices beyond the edge are clamped. Any nodata sample among the 16
/// support samples makes the result nodata.
pub fn cubic_interpolate(raster: &Raster, x: f64, y: f64, channel: usize) -> Result<f32, RasterError> {
    raster.check_channel(channel)?;
    Ok(sample_unchecked(raster, x, y, channel))
}

#[inline]
fn sample_unchecked(raster: &Raster, x: f64, y: f64, channel: usize) -> f32 {
    let (w, h) = (raster.width as f64, raster.height as f64);
    if !(x >= -0.5 && x <= w - 0.5 && y >= -0.5 && y <= h - 0.5) {
        return raster.nodata;
    }
    let (fx, fy) = (x.floor(), y.floor());
    let wx = kernel_weights(x - fx);
    let wy = kernel_weights(y - fy);
    let (ix, iy) = (fx as isize, fy as isize);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut acc = 0.0f64;
    for (j, wyj) in wy.iter().enumerate() {
        let yy = clamp(iy - 1 + j as isize, raster.height);
        let mut row = 0.0f64;
        for (i, wxi) in wx.iter().enumerate() {
            let xx = clamp(ix - 1 + i as isize, raster.width);
            let v = raster.get(xx, yy, channel);
            if raster.is_nodata(v) {
                return raster.nodata;
            }
            row += wxi * f64::from(v);
        }
        acc += wyj * row;
    }
    if x == fx && y == fy {
        // lattice hit: return the stored sample itself (keeps -0.0)
        return raster.get(ix as usize, iy as usize, channel);
    }
    acc as f32
}

/// Inverse-mapping warp: output pixel `p` takes the cubic sample of the input
/// at `map(p)`. The output canvas equals the input canvas.
pub fn warp_affine(raster: &Raster, map: &AffineMap2D) -> Result<Raster, RasterError> {
    let map = AffineMap2D::new(map.matrix)?;
    let (w, c) = (raster.width, raster.channels);
    let mut out = vec![raster.nodata; raster.samples.len()];
    if w > 0 {
        out.par_chunks_mut(w * c).enumerate().for_each(|(y, row)| {
            for x in 0..w {
                let (sx, sy) = map.apply(x as f64, y as f64);
                for ch in 0..c {
                    row[x * c + ch] = sample_unchecked(raster, sx, sy, ch);
                }
            }
        });
    }
    Raster::new(raster.width, raster.height, raster.channels, out, raster.nodata)
}
