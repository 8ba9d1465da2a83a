//! Thermal cube data model, the `.tcube` + JSON sidecar format, ROI cropping
//! and PNG rendering of maps and masks.
//!
//! A `.tcube` payload is `width * height * frames` little-endian binary32
//! samples, frame-major, row-major within each frame, without padding. The
//! sidecar shares the payload's stem and carries the dimensions.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::detect::{AnomalyMask, FeatureMap};
use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 4;
pub const MIN_FRAMES: usize = 8;

/// Temperature sequence over an `height x width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalCube {
    width: usize,
    height: usize,
    frames: usize,
    frame_rate: Option<f64>,
    units: String,
    /// Frame-major samples; `data[t * height * width + y * width + x]`.
    data: Vec<f64>,
}

impl ThermalCube {
    pub fn new(width: usize, height: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::InvalidDimensions(format!(
                "{width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}"
            )));
        }
        if frames < MIN_FRAMES {
            return Err(Error::InvalidDimensions(format!("{frames} frames, need at least {MIN_FRAMES}")));
        }
        if data.len() != width * height * frames {
            return Err(Error::InvalidDimensions(format!(
                "{} samples for {width}x{height}x{frames}",
                data.len()
            )));
        }
        Ok(Self { width, height, frames, frame_rate: None, units: String::new(), data })
    }

    /// Builds a cube from a `(x, y, t)` generator.
    pub fn from_fn(
        width: usize,
        height: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * frames);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, t));
                }
            }
        }
        Self::new(width, height, frames, data)
    }

    pub fn with_frame_rate(mut self, hz: Option<f64>) -> Result<Self> {
        if let Some(r) = hz {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidDimensions(format!("frame rate {r} must be > 0")));
            }
        }
        self.frame_rate = hz;
        Ok(self)
    }

    pub fn with_units(mut self, units: impl Into<String>) -> Self {
        self.units = units.into();
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
    pub fn frame_rate(&self) -> Option<f64> {
        self.frame_rate
    }
    pub fn units(&self) -> &str {
        &self.units
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[t * n..(t + 1) * n]
    }

    /// Time series of pixel index `p = y * width + x`.
    pub fn series(&self, p: usize) -> Vec<f64> {
        let n = self.pixels();
        (0..self.frames).map(|t| self.data[t * n + p]).collect()
    }

    /// Samples reordered pixel-major: `out[p * frames + t]`.
    pub fn to_pixel_major(&self) -> Vec<f64> {
        let (n, f) = (self.pixels(), self.frames);
        let mut out = vec![0.0; n * f];
        crate::exec::for_each_chunk_mut(&mut out, f, |p, series| {
            for (t, s) in series.iter_mut().enumerate() {
                *s = self.data[t * n + p];
            }
        });
        out
    }

    /// Same geometry and metadata, new samples given pixel-major.
    pub fn with_pixel_major(&self, series: &[f64]) -> Self {
        let (n, f) = (self.pixels(), self.frames);
        assert_eq!(series.len(), n * f);
        let mut data = vec![0.0; n * f];
        crate::exec::for_each_chunk_mut(&mut data, n, |t, frame| {
            for (p, s) in frame.iter_mut().enumerate() {
                *s = series[p * f + t];
            }
        });
        Self { data, ..self.clone_meta() }
    }

    /// Same geometry and metadata, frame-major samples replaced.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(Error::InvalidDimensions("replacement sample count".into()));
        }
        Ok(Self { data, ..self.clone_meta() })
    }

    fn clone_meta(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            frames: self.frames,
            frame_rate: self.frame_rate,
            units: self.units.clone(),
            data: Vec::new(),
        }
    }

    /// `a * cube + b`, applied to every sample.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self { data: self.data.iter().map(|v| a * v + b).collect(), ..self.clone_meta() }
    }
}

/// Pixel window `(x0, y0, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn full(cube: &ThermalCube) -> Self {
        Self { x0: 0, y0: 0, w: cube.width, h: cube.height }
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        if self.w < MIN_SIDE || self.h < MIN_SIDE {
            return Err(Error::RoiOutOfBounds(format!(
                "{}x{} is smaller than {MIN_SIDE}x{MIN_SIDE}",
                self.w, self.h
            )));
        }
        if self.x0 + self.w > width || self.y0 + self.h > height {
            return Err(Error::RoiOutOfBounds(format!(
                "({}, {}, {}, {}) exceeds {width}x{height}",
                self.x0, self.y0, self.w, self.h
            )));
        }
        Ok(())
    }
}

/// Copies the ROI window out of every frame.
pub fn crop(cube: &ThermalCube, roi: Roi) -> Result<ThermalCube> {
    roi.validate_for(cube.width, cube.height)?;
    let mut data = Vec::with_capacity(roi.w * roi.h * cube.frames);
    for t in 0..cube.frames {
        let frame = cube.frame(t);
        for y in roi.y0..roi.y0 + roi.h {
            let row = y * cube.width;
            data.extend_from_slice(&frame[row + roi.x0..row + roi.x0 + roi.w]);
        }
    }
    Ok(ThermalCube { width: roi.w, height: roi.h, data, ..cube.clone_meta() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub frame_rate_hz: Option<f64>,
    pub units: String,
}

/// Path of the JSON sidecar belonging to a `.tcube` payload.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

// f32 <-> f64 conversions that keep NaN payloads (including the quiet bit) intact.
fn widen(v: f32) -> f64 {
    if v.is_nan() {
        let bits = v.to_bits() as u64;
        let sign = (bits >> 31) << 63;
        let mantissa = (bits & 0x007f_ffff) << 29;
        f64::from_bits(sign | 0x7ff0_0000_0000_0000 | mantissa)
    } else {
        v as f64
    }
}

fn narrow(v: f64) -> f32 {
    if v.is_nan() {
        let bits = v.to_bits();
        let sign = ((bits >> 63) as u32) << 31;
        let mut mantissa = ((bits >> 29) & 0x007f_ffff) as u32;
        if mantissa == 0 {
            mantissa = 0x0040_0000;
        }
        f32::from_bits(sign | 0x7f80_0000 | mantissa)
    } else {
        v as f32
    }
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<ThermalCube> {
    let path = path.as_ref();
    let side_path = sidecar_path(path);
    if !side_path.is_file() {
        return Err(Error::MissingSidecar(side_path));
    }
    let side_text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: Sidecar =
        serde_json::from_str(&side_text).map_err(|source| Error::Json { path: side_path.clone(), source })?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = side
        .width
        .checked_mul(side.height)
        .and_then(|v| v.checked_mul(side.frames))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::InvalidDimensions("sidecar dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch { expected, found: bytes.len() });
    }
    let data = bytes.chunks_exact(4).map(|b| widen(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))).collect();
    Ok(ThermalCube::new(side.width, side.height, side.frames, data)?
        .with_frame_rate(side.frame_rate_hz)?
        .with_units(side.units))
}

pub fn write_cube(cube: &ThermalCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(cube.data.len() * 4);
    for v in &cube.data {
        bytes.extend_from_slice(&narrow(*v).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = Sidecar {
        width: cube.width,
        height: cube.height,
        frames: cube.frames,
        frame_rate_hz: cube.frame_rate,
        units: cube.units.clone(),
    };
    let side_path = sidecar_path(path);
    let text = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    fs::write(&side_path, text + "\n").map_err(|e| Error::io(&side_path, e))
}

/// 8-bit optical photograph registered to the ROI.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpticalImage {
    pub width: usize,
    pub height: usize,
    pub channels: u8,
    pub data: Vec<u8>,
}

impl OpticalImage {
    pub fn new(width: usize, height: usize, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions("optical image is empty".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidDimensions(format!("optical image has {channels} channels")));
        }
        if data.len() != width * height * channels as usize {
            return Err(Error::InvalidDimensions("optical sample count".into()));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        if img.color().channel_count() == 1 {
            Self::new(w, h, 1, img.into_luma8().into_raw())
        } else {
            Self::new(w, h, 3, img.into_rgb8().into_raw())
        }
    }

    /// Sub-image covering `roi`.
    pub fn crop(&self, roi: Roi) -> Result<Self> {
        roi.validate_for(self.width, self.height)?;
        let c = self.channels as usize;
        let mut data = Vec::with_capacity(roi.w * roi.h * c);
        for y in roi.y0..roi.y0 + roi.h {
            let start = (y * self.width + roi.x0) * c;
            data.extend_from_slice(&self.data[start..start + roi.w * c]);
        }
        Self::new(roi.w, roi.h, self.channels, data)
    }

    pub fn to_png(&self) -> Result<Vec<u8>> {
        let (w, h) = (self.width as u32, self.height as u32);
        let img: image::DynamicImage = if self.channels == 1 {
            image::GrayImage::from_raw(w, h, self.data.clone()).expect("sized buffer").into()
        } else {
            RgbImage::from_raw(w, h, self.data.clone()).expect("sized buffer").into()
        };
        encode(img)
    }

    fn rgb(&self, i: usize) -> [u8; 3] {
        if self.channels == 1 {
            let v = self.data[i];
            [v, v, v]
        } else {
            let d = &self.data[3 * i..3 * i + 3];
            [d[0], d[1], d[2]]
        }
    }
}

/// Anything that renders to an encoded PNG.
pub trait PngRender {
    fn render_png(&self, overlay: Option<&OpticalImage>) -> Result<Vec<u8>>;
}

/// Min-max normalization to 8 bits over finite values; constant maps are mid-gray.
pub fn normalize_to_u8(values: &[f64]) -> Vec<u8> {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(hi > lo) {
        return vec![128; values.len()];
    }
    values
        .iter()
        .map(
            |v| {
                if v.is_finite() {
                    ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                }
            },
        )
        .collect()
}

fn encode(img: image::DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| Error::Image(e.to_string()))?;
    Ok(buf.into_inner())
}

fn check_overlay(w: usize, h: usize, overlay: Option<&OpticalImage>) -> Result<()> {
    match overlay {
        Some(o) if o.width != w || o.height != h => {
            Err(Error::DimensionMismatch(format!("overlay is {}x{}, map is {w}x{h}", o.width, o.height)))
        }
        _ => Ok(()),
    }
}

impl PngRender for FeatureMap {
    /// Grayscale rendering; an overlay only has to match dimensions.
    fn render_png(&self, overlay: Option<&OpticalImage>) -> Result<Vec<u8>> {
        check_overlay(self.width, self.height, overlay)?;
        let gray =
            image::GrayImage::from_raw(self.width as u32, self.height as u32, normalize_to_u8(&self.values))
                .expect("sized buffer");
        encode(gray.into())
    }
}

impl PngRender for AnomalyMask {
    /// Red at 50% alpha over the optical image, or over black.
    fn render_png(&self, overlay: Option<&OpticalImage>) -> Result<Vec<u8>> {
        check_overlay(self.width, self.height, overlay)?;
        let mut buf = Vec::with_capacity(self.bits.len() * 3);
        for (i, &on) in self.bits.iter().enumerate() {
            let base = overlay.map_or([0, 0, 0], |o| o.rgb(i));
            if on {
                buf.push((base[0] as u16 + 255).div_ceil(2) as u8);
                buf.push((base[1] as u16).div_ceil(2) as u8);
                buf.push((base[2] as u16).div_ceil(2) as u8);
            } else {
                buf.extend_from_slice(&base);
            }
        }
        let rgb = RgbImage::from_raw(self.width as u32, self.height as u32, buf).expect("sized buffer");
        encode(rgb.into())
    }
}

/// Writes a map (grayscale) or mask (RGB overlay) as PNG.
pub fn export_map_png(
    item: &impl PngRender,
    path: impl AsRef<Path>,
    overlay: Option<&OpticalImage>,
) -> Result<()> {
    let path = path.as_ref();
    let bytes = item.render_png(overlay)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
