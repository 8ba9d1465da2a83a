//! Pulsed phase thermography: temporal DFT of each pixel's post-pulse decay,
//! amplitude and phase at one frequency bin, and the wrapped phase gradient.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cube_io::{sidecar_path, ThermalCube};
use crate::detect::{FeatureMap, Modality};
use crate::error::{Error, Result};
use crate::exec;
use crate::preprocess::PulseTiming;

#[derive(Debug, Clone, PartialEq)]
pub struct PptResult {
    pub amplitude: FeatureMap,
    /// Radians in `(-pi, pi]`.
    pub phase: FeatureMap,
    /// Radians per pixel.
    pub phase_gradient: FeatureMap,
    pub bin: usize,
    /// Hz when the cube has a frame rate, otherwise cycles per frame.
    pub bin_frequency: f64,
    pub frequency_in_hz: bool,
}

/// Full complex spectrum of every pixel's post-pulse series.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    /// Series length (number of bins).
    pub bins: usize,
    /// Pixel-major: `data[p * bins + k]`.
    pub data: Vec<Complex<f64>>,
}

impl Spectrum {
    pub fn bin(&self, p: usize, k: usize) -> Complex<f64> {
        self.data[p * self.bins + k]
    }

    /// Writes bins frame-major as interleaved little-endian binary32
    /// `(re, im)` pairs, with the `.tcube`-style sidecar.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let pixels = self.width * self.height;
        let mut bytes = Vec::with_capacity(self.data.len() * 8);
        for k in 0..self.bins {
            for p in 0..pixels {
                let c = self.bin(p, k);
                bytes.extend_from_slice(&(c.re as f32).to_le_bytes());
                bytes.extend_from_slice(&(c.im as f32).to_le_bytes());
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let side = SpectrumSidecar {
            width: self.width,
            height: self.height,
            frames: self.bins,
            frame_rate_hz: None,
            units: "complex DFT bins".into(),
            complex: true,
        };
        let side_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&side).expect("serializes");
        fs::write(&side_path, text + "\n").map_err(|e| Error::io(&side_path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct SpectrumSidecar {
    width: usize,
    height: usize,
    frames: usize,
    frame_rate_hz: Option<f64>,
    units: String,
    complex: bool,
}

fn post_pulse_series(cube: &ThermalCube, timing: &PulseTiming) -> Result<(usize, Vec<f64>)> {
    timing.validate(cube.frames())?;
    let n = timing.post_pulse_frames(cube.frames());
    let frames = cube.frames();
    let all = cube.to_pixel_major();
    let mut out = vec![0.0; cube.pixels() * n];
    exec::for_each_chunk_pair(&all, &mut out, frames, n, |_, src, dst| {
        dst.copy_from_slice(&src[timing.t0 + 1..]);
    });
    Ok((n, out))
}

/// FFT of every pixel's post-pulse series (`tau = 0..n-1` for frames after `t0`).
pub fn ppt_spectrum(cube: &ThermalCube, timing: &PulseTiming) -> Result<Spectrum> {
    let (n, series) = post_pulse_series(cube, timing)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut data: Vec<Complex<f64>> = series.iter().map(|v| Complex::new(*v, 0.0)).collect();
    exec::for_each_chunk_mut(&mut data, n, |_, buf| fft.process(buf));
    Ok(Spectrum { width: cube.width(), height: cube.height(), bins: n, data })
}

/// Principal value in `(-pi, pi]`.
pub fn wrap_phase(d: f64) -> f64 {
    let r = d.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

pub fn ppt_transform(cube: &ThermalCube, timing: &PulseTiming, bin: usize) -> Result<PptResult> {
    timing.validate(cube.frames())?;
    let n = timing.post_pulse_frames(cube.frames());
    if bin == 0 || bin > n / 2 {
        return Err(Error::OutOfRange(format!("frequency bin {bin} (valid 1..={})", n / 2)));
    }
    let spectrum = ppt_spectrum(cube, timing)?;
    let (w, h) = (cube.width(), cube.height());
    let mut amp = Vec::with_capacity(w * h);
    let mut phase = Vec::with_capacity(w * h);
    for p in 0..w * h {
        let c = spectrum.bin(p, bin);
        amp.push(c.norm());
        let mut ph = c.im.atan2(c.re);
        if ph <= -PI {
            ph = PI;
        }
        phase.push(ph);
    }
    let phase = FeatureMap::new(w, h, phase, Modality::PptPhase)?;
    let phase_gradient = ppt_phase_gradient(&phase)?;
    let cycles_per_frame = bin as f64 / n as f64;
    let (bin_frequency, frequency_in_hz) = match cube.frame_rate() {
        Some(hz) => (cycles_per_frame * hz, true),
        None => (cycles_per_frame, false),
    };
    Ok(PptResult {
        amplitude: FeatureMap::new(w, h, amp, Modality::PptAmp)?,
        phase,
        phase_gradient,
        bin,
        bin_frequency,
        frequency_in_hz,
    })
}

/// Gradient magnitude of a wrapped phase map. Central differences inside,
/// one-sided at the borders; every difference is wrapped first.
pub fn ppt_phase_gradient(phase: &FeatureMap) -> Result<FeatureMap> {
    let (w, h) = (phase.width, phase.height);
    let p = |x: usize, y: usize| phase.values[y * w + x];
    let diff = |a: f64, b: f64, span: f64| wrap_phase(a - b) / span;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let gx = if w < 2 {
                0.0
            } else if x == 0 {
                diff(p(1, y), p(0, y), 1.0)
            } else if x == w - 1 {
                diff(p(x, y), p(x - 1, y), 1.0)
            } else {
                diff(p(x + 1, y), p(x - 1, y), 2.0)
            };
            let gy = if h < 2 {
                0.0
            } else if y == 0 {
                diff(p(x, 1), p(x, 0), 1.0)
            } else if y == h - 1 {
                diff(p(x, y), p(x, y - 1), 1.0)
            } else {
                diff(p(x, y + 1), p(x, y - 1), 2.0)
            };
            out.push(gx.hypot(gy));
        }
    }
    let mut g = FeatureMap::new(w, h, out, Modality::PptPhaseEdge)?;
    g.valid = phase.valid.clone();
    Ok(g)
}
