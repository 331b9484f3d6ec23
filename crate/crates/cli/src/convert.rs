//! Converters between the internal raster/grid formats and PNG, PFM and PLY.
//! Field mappings are listed in `docs/formats.md`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, RgbImage};
use nalgebra::Vector3;

use satrecon::eval::{read_ply, rasterize_height, write_points_ply, GridSpec, HeightGrid};
use satrecon::raster::Raster;

use crate::error::{CliError, Result};

/// Writes an 8-bit PNG. Values are rounded half up and clamped to
/// `[0, 255]`; nodata becomes 0. One channel gives grayscale, three RGB.
pub fn write_png(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = raster
        .samples()
        .iter()
        .map(|&v| if raster.is_nodata(v) { 0 } else { (f64::from(v) + 0.5).floor().clamp(0.0, 255.0) as u8 })
        .collect();
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let img = match raster.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer sized from raster")),
        3 => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer sized from raster")),
        c => return Err(CliError::Format(format!("PNG export needs 1 or 3 channels, raster has {c}"))),
    };
    img.save_with_format(path, image::ImageFormat::Png).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

/// Reads an 8- or 16-bit grayscale or RGB PNG; an alpha channel is dropped.
/// Samples keep their integer values; there is no nodata.
pub fn read_png(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, samples): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageLumaA16(_) => (1, img.to_luma16().into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(f32::from).collect()),
        DynamicImage::ImageRgba16(_) => {
            let b: ImageBuffer<image::Rgb<u16>, Vec<u16>> = img.to_rgb16();
            (3, b.into_raw().into_iter().map(f32::from).collect())
        }
        _ => (3, img.to_rgb8().into_raw().into_iter().map(f32::from).collect()),
    };
    Ok(Raster::new(w, h, channels, samples, f32::NAN)?)
}

/// Writes a little-endian PFM (`Pf` for one channel, `PF` for three). PFM
/// stores rows bottom to top; nodata is written as NaN.
pub fn write_pfm(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let magic = match raster.channels() {
        1 => "Pf",
        3 => "PF",
        c => return Err(CliError::Format(format!("PFM needs 1 or 3 channels, raster has {c}"))),
    };
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let row_len = raster.width() * raster.channels();
    let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        write!(w, "{magic}\n{} {}\n-1.0\n", raster.width(), raster.height())?;
        for row in raster.samples().chunks(row_len).rev() {
            for &v in row {
                let v = if raster.is_nodata(v) { f32::NAN } else { v };
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    write(&mut w).map_err(|e| CliError::io(path, e))
}

fn pfm_token(r: &mut impl BufRead) -> Result<String> {
    let mut tok = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte).map_err(|e| CliError::Format(format!("PFM header: {e}")))? == 0 {
            break;
        }
        if byte[0].is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(byte[0]);
    }
    String::from_utf8(tok).map_err(|_| CliError::Format("PFM header is not ASCII".into()))
}

/// Reads a PFM of either byte order. Non-finite samples become nodata (NaN);
/// with `zero_is_nodata`, so do zeros, which several MVS tools use to mark
/// invalid depths.
pub fn read_pfm(path: impl AsRef<Path>, zero_is_nodata: bool) -> Result<Raster> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::new(file);
    let channels = match pfm_token(&mut r)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(CliError::Format(format!("{}: not a PFM (magic {other:?})", path.display()))),
    };
    let parse = |t: String| t.parse::<f64>().map_err(|_| CliError::Format(format!("PFM header value {t:?}")));
    let w = parse(pfm_token(&mut r)?)? as usize;
    let h = parse(pfm_token(&mut r)?)? as usize;
    let scale = parse(pfm_token(&mut r)?)?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(CliError::Format("PFM scale must be non-zero".into()));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(|e| CliError::io(path, e))?;
    let n = w * h * channels;
    if payload.len() != 4 * n {
        return Err(CliError::Format(format!("PFM payload has {} bytes, expected {}", payload.len(), 4 * n)));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            let v = if scale < 0.0 { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
            if !v.is_finite() || (zero_is_nodata && v == 0.0) { f32::NAN } else { v }
        })
        .collect();
    let row_len = w * channels;
    let samples: Vec<f32> = values.chunks(row_len.max(1)).rev().flatten().copied().collect();
    Ok(Raster::new(w, h, channels, samples, f32::NAN)?)
}

/// Rasterizes the vertices of a PLY (points or mesh) onto a grid covering
/// them, with origin snapped to a multiple of `cell`.
pub fn ply_to_grid(path: impl AsRef<Path>, cell: f64) -> Result<HeightGrid> {
    let points = read_points(path)?;
    let spec = GridSpec::covering(&points, cell)?;
    Ok(rasterize_height(&points, &spec))
}

/// Vertices of a PLY file, ignoring faces.
pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_ply(BufReader::new(file))?.vertices().to_vec())
}

/// One point per valid cell, at the cell center.
pub fn grid_to_points(grid: &HeightGrid) -> Vec<Vector3<f64>> {
    let spec = grid.spec();
    let mut out = Vec::with_capacity(grid.valid_count());
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            if let Some(h) = grid.get(i, j) {
                let (e, n) = spec.cell_center(i, j);
                out.push(Vector3::new(e, n, f64::from(h)));
            }
        }
    }
    out
}

pub fn save_points(path: impl AsRef<Path>, points: &[Vector3<f64>]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_points_ply(&mut w, points)?;
    w.flush().map_err(|e| CliError::io(path, e))
}
