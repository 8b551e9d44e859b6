//! On-disk light field container: a directory with `manifest.json` and one
//! grayscale image per view.
//!
//! Views are listed row-major, `files[t * views_s + s]`. Images are 8- or
//! 16-bit PNG or little-endian PFM (scanlines bottom-up). Colour inputs are
//! reduced to luminance `Y = 0.299 R + 0.587 G + 0.114 B`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{LfError, Result};
use crate::grid::Grid2;
use crate::lightfield::{DisparityRange, LightField4D};
use crate::scalar::Scalar;

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views_s: usize,
    pub views_t: usize,
    pub width: usize,
    pub height: usize,
    /// 8 or 16 for PNG views, 32 for PFM views.
    pub bit_depth: u32,
    #[serde(default)]
    pub disparity_min: Option<f64>,
    #[serde(default)]
    pub disparity_max: Option<f64>,
    pub files: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewFormat {
    Png8,
    Png16,
    Pfm,
}

impl ViewFormat {
    pub fn from_bit_depth(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Self::Png8),
            16 => Ok(Self::Png16),
            32 => Ok(Self::Pfm),
            b => Err(LfError::Container(format!("unsupported bit depth {b}"))),
        }
    }

    pub fn bit_depth(self) -> u32 {
        match self {
            Self::Png8 => 8,
            Self::Png16 => 16,
            Self::Pfm => 32,
        }
    }

    fn extension(self) -> &'static str {
        match self {
            Self::Pfm => "pfm",
            _ => "png",
        }
    }
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        if self.views_s == 0 || self.views_t == 0 || self.width == 0 || self.height == 0 {
            return Err(LfError::Container("all dimensions must be >= 1".into()));
        }
        ViewFormat::from_bit_depth(self.bit_depth)?;
        if self.files.len() != self.views_s * self.views_t {
            return Err(LfError::Container(format!(
                "{} files listed for {}x{} views",
                self.files.len(),
                self.views_s,
                self.views_t
            )));
        }
        if self.disparity_min.is_some() != self.disparity_max.is_some() {
            return Err(LfError::Container("disparity_min and disparity_max must be given together".into()));
        }
        for f in &self.files {
            let p = Path::new(f);
            if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
                return Err(LfError::Container(format!("view path {f:?} escapes the container")));
            }
        }
        Ok(())
    }

    pub fn disparity(&self) -> Result<Option<DisparityRange>> {
        match (self.disparity_min, self.disparity_max) {
            (Some(a), Some(b)) => Ok(Some(DisparityRange::new(a, b)?)),
            _ => Ok(None),
        }
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let m: Manifest = serde_json::from_str(&text)?;
    m.validate()?;
    Ok(m)
}

/// Loads a container, checking every view against the manifest.
pub fn read_light_field(dir: &Path) -> Result<LightField4D> {
    let m = read_manifest(dir)?;
    let mut lf = LightField4D::zeros(m.width, m.height, m.views_s, m.views_t)?;
    for t in 0..m.views_t {
        for s in 0..m.views_s {
            let path = dir.join(&m.files[t * m.views_s + s]);
            let img = read_view(&path)?;
            if img.shape() != (m.height, m.width) {
                return Err(LfError::Container(format!(
                    "{} is {}x{}, manifest says {}x{}",
                    path.display(),
                    img.cols(),
                    img.rows(),
                    m.width,
                    m.height
                )));
            }
            if !img.is_finite() {
                return Err(LfError::NonFinite(path.display().to_string()));
            }
            lf.set_view(s, t, &img)?;
        }
    }
    lf.disparity_hint = m.disparity()?;
    Ok(lf)
}

/// Writes a container, replacing any manifest already in `dir`.
pub fn write_light_field<T: Scalar>(dir: &Path, lf: &LightField4D<T>, format: ViewFormat) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::with_capacity(lf.views_s() * lf.views_t());
    for t in 0..lf.views_t() {
        for s in 0..lf.views_s() {
            let name = format!("view_{t:03}_{s:03}.{}", format.extension());
            write_view(&dir.join(&name), &lf.view(s, t).cast::<f64>(), format)?;
            files.push(name);
        }
    }
    let m = Manifest {
        views_s: lf.views_s(),
        views_t: lf.views_t(),
        width: lf.width(),
        height: lf.height(),
        bit_depth: format.bit_depth(),
        disparity_min: lf.disparity_hint.map(|d| d.d_min()),
        disparity_max: lf.disparity_hint.map(|d| d.d_max()),
        files,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(m)
}

fn read_view(path: &Path) -> Result<Grid2<f64>> {
    let is_pfm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    if is_pfm {
        read_pfm(path)
    } else {
        read_png(path)
    }
}

pub fn write_view(path: &Path, img: &Grid2<f64>, format: ViewFormat) -> Result<()> {
    match format {
        ViewFormat::Pfm => write_pfm(path, img),
        ViewFormat::Png8 | ViewFormat::Png16 => write_png(path, img, format == ViewFormat::Png16),
    }
}

/// Reads any PNG as luminance in `[0, 1]`.
pub fn read_png(path: &Path) -> Result<Grid2<f64>> {
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(b) => b.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(b) => b.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLumaA16(_) => {
            img.to_luma32f().as_raw().iter().map(|&v| v as f64).collect()
        }
        _ => img
            .to_rgb32f()
            .as_raw()
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect(),
    };
    Grid2::from_vec(h, w, data)
}

/// Writes `[0, 1]` samples as an 8- or 16-bit grayscale PNG (clamped).
pub fn write_png(path: &Path, img: &Grid2<f64>, sixteen: bool) -> Result<()> {
    let (h, w) = img.shape();
    let (w32, h32) = (w as u32, h as u32);
    if sixteen {
        let data: Vec<u16> = img
            .as_slice()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
            .collect();
        let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w32, h32, data)
            .ok_or_else(|| LfError::Container("image buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)?;
    } else {
        let data: Vec<u8> = img
            .as_slice()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = ImageBuffer::<Luma<u8>, _>::from_raw(w32, h32, data)
            .ok_or_else(|| LfError::Container("image buffer size".into()))?;
        buf.save_with_format(path, image::ImageFormat::Png)?;
    }
    Ok(())
}

/// Writes any grid as an 8-bit PNG stretched to its own min..max range.
pub fn write_png_normalized(path: &Path, img: &Grid2<f64>) -> Result<()> {
    let lo = img.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write_png(path, &img.map(|v| (v - lo) / span), false)
}

/// Grayscale little-endian PFM, bottom row first.
pub fn write_pfm(path: &Path, img: &Grid2<f64>) -> Result<()> {
    let (h, w) = img.shape();
    let mut out = Vec::with_capacity(32 + 4 * w * h);
    write!(out, "Pf\n{w} {h}\n-1.0\n")?;
    for r in (0..h).rev() {
        for &v in img.row(r) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn header_token(reader: &mut impl BufRead) -> Result<String> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    loop {
        if reader.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(LfError::Container("truncated PFM header".into()));
    }
    Ok(tok)
}

/// Reads a grayscale (`Pf`) or colour (`PF`) PFM in either byte order.
pub fn read_pfm(path: &Path) -> Result<Grid2<f64>> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let bad = |what: &str| LfError::Container(format!("{}: {what}", path.display()));
    let channels = match header_token(&mut reader)?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a PFM file")),
    };
    let w: usize = header_token(&mut reader)?.parse().map_err(|_| bad("bad width"))?;
    let h: usize = header_token(&mut reader)?.parse().map_err(|_| bad("bad height"))?;
    let scale: f64 = header_token(&mut reader)?.parse().map_err(|_| bad("bad scale"))?;
    let little = scale < 0.0;
    let mut raw = vec![0u8; w * h * channels * 4];
    reader.read_exact(&mut raw).map_err(|_| bad("truncated pixel data"))?;
    let vals: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| {
            let b = [b[0], b[1], b[2], b[3]];
            if little {
                f32::from_le_bytes(b) as f64
            } else {
                f32::from_be_bytes(b) as f64
            }
        })
        .collect();
    let mut g = Grid2::zeros(h, w);
    for (i, r) in (0..h).rev().enumerate() {
        for c in 0..w {
            let base = (i * w + c) * channels;
            let v = if channels == 1 {
                vals[base]
            } else {
                0.299 * vals[base] + 0.587 * vals[base + 1] + 0.114 * vals[base + 2]
            };
            g.set(r, c, v);
        }
    }
    Ok(g)
}

/// Path of view `(s, t)` inside a container.
pub fn view_path(dir: &Path, m: &Manifest, s: usize, t: usize) -> Result<PathBuf> {
    if s >= m.views_s || t >= m.views_t {
        return Err(LfError::OutOfRange {
            what: "view",
            index: t * m.views_s + s,
            limit: m.files.len(),
        });
    }
    Ok(dir.join(&m.files[t * m.views_s + s]))
}
