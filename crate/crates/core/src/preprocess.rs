//! Non-finite repair, pulse timing, baseline removal and temporal smoothing.

use serde::{Deserialize, Serialize};

use crate::cube_io::ThermalCube;
use crate::error::{Error, Result};
use crate::exec;
use crate::savgol::SavGol;

/// Frames required before the onset for the baseline estimate.
pub const MIN_BASELINE_FRAMES: usize = 4;
/// Frames required after the peak for the decay window.
pub const MIN_DECAY_FRAMES: usize = 8;

/// Pulse onset and peak-response frame indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PulseTiming {
    pub t0: usize,
    pub t_peak: usize,
}

impl PulseTiming {
    pub fn new(t0: usize, t_peak: usize, frames: usize) -> Result<Self> {
        let timing = Self { t0, t_peak };
        timing.validate(frames)?;
        Ok(timing)
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.t0 < MIN_BASELINE_FRAMES {
            return Err(Error::PulseDetection(format!(
                "onset at frame {} leaves fewer than {MIN_BASELINE_FRAMES} baseline frames",
                self.t0
            )));
        }
        if self.t_peak <= self.t0 {
            return Err(Error::PulseDetection(format!(
                "peak {} does not follow onset {}",
                self.t_peak, self.t0
            )));
        }
        if self.t_peak + MIN_DECAY_FRAMES > frames.saturating_sub(1) {
            return Err(Error::PulseDetection(format!(
                "peak at frame {} leaves fewer than {MIN_DECAY_FRAMES} decay frames of {frames}",
                self.t_peak
            )));
        }
        Ok(())
    }

    /// Number of frames strictly after the onset.
    pub fn post_pulse_frames(&self, frames: usize) -> usize {
        frames - self.t0 - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub sg_enabled: bool,
    pub sg_window: usize,
    pub sg_polyorder: usize,
    pub mean_smooth_window: usize,
    pub onset_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { sg_enabled: true, sg_window: 7, sg_polyorder: 3, mean_smooth_window: 5, onset_fraction: 0.10 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sg_window < 5 || self.sg_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "sg_window must be odd and >= 5, got {}",
                self.sg_window
            )));
        }
        if self.sg_polyorder < 2 || self.sg_polyorder >= self.sg_window {
            return Err(Error::InvalidConfig(format!(
                "sg_polyorder must be in [2, sg_window), got {}",
                self.sg_polyorder
            )));
        }
        if self.mean_smooth_window < 3 || self.mean_smooth_window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "mean_smooth_window must be odd and >= 3, got {}",
                self.mean_smooth_window
            )));
        }
        if !(self.onset_fraction > 0.0 && self.onset_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "onset_fraction must lie in (0, 1), got {}",
                self.onset_fraction
            )));
        }
        Ok(())
    }
}

/// Median of an ascending, non-empty slice.
pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Replaces each non-finite sample with the median of its pixel's finite samples.
pub fn repair_nonfinite(cube: &ThermalCube) -> Result<ThermalCube> {
    if cube.data().iter().all(|v| v.is_finite()) {
        return Ok(cube.clone());
    }
    let frames = cube.frames();
    let mut series = cube.to_pixel_major();
    let bad: Vec<usize> = exec::map_range(cube.pixels(), |p| {
        let s = &series[p * frames..(p + 1) * frames];
        usize::from(!s.iter().any(|v| v.is_finite()))
    });
    if let Some(p) = bad.iter().position(|b| *b == 1) {
        return Err(Error::NoFiniteSamples { x: p % cube.width(), y: p / cube.width() });
    }
    exec::for_each_chunk_mut(&mut series, frames, |_, s| {
        if s.iter().all(|v| v.is_finite()) {
            return;
        }
        let mut finite: Vec<f64> = s.iter().copied().filter(|v| v.is_finite()).collect();
        finite.sort_by(f64::total_cmp);
        let med = median_sorted(&finite);
        s.iter_mut().filter(|v| !v.is_finite()).for_each(|v| *v = med);
    });
    Ok(cube.with_pixel_major(&series))
}

/// Spatial mean of every frame.
pub fn mean_curve(cube: &ThermalCube) -> Vec<f64> {
    let n = cube.pixels() as f64;
    exec::map_range(cube.frames(), |t| cube.frame(t).iter().sum::<f64>() / n)
}

/// Centered moving average; windows are truncated at the ends.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn argmax(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| if *v > bv { (i, *v) } else { (bi, bv) })
        .0
}

/// Locates the pulse from the spatial-mean curve.
///
/// The smoothed curve gives a coarse peak; the peak is then refined on the
/// raw mean within one smoothing window of it, and the onset is the last
/// frame before the peak whose rise above the pre-peak smoothed minimum is at
/// most `onset_fraction` of the full rise.
pub fn detect_pulse(cube: &ThermalCube, cfg: &PreprocessConfig) -> Result<PulseTiming> {
    cfg.validate()?;
    let raw = mean_curve(cube);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::PulseDetection("cube contains non-finite samples".into()));
    }
    let smooth = moving_average(&raw, cfg.mean_smooth_window);
    let coarse = argmax(&smooth);
    let last = raw.len() - 1;
    if coarse == 0 || coarse == last {
        return Err(Error::PulseDetection(format!("smoothed peak at boundary frame {coarse}")));
    }
    let w = cfg.mean_smooth_window;
    let lo = coarse.saturating_sub(w);
    let hi = (coarse + w).min(last);
    let t_peak = lo + argmax(&raw[lo..=hi]);
    if t_peak == 0 || t_peak == last {
        return Err(Error::PulseDetection(format!("peak at boundary frame {t_peak}")));
    }

    let baseline = smooth[..t_peak].iter().copied().fold(f64::INFINITY, f64::min);
    let rise = raw[t_peak] - baseline;
    let scale = raw.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(rise > 64.0 * f64::EPSILON * scale) {
        return Err(Error::PulseDetection("mean temperature curve is flat".into()));
    }
    let cut = cfg.onset_fraction * rise;
    let t0 = (0..t_peak)
        .rev()
        .find(|&t| raw[t] - baseline <= cut)
        .ok_or_else(|| Error::PulseDetection("no pre-pulse frame below onset threshold".into()))?;
    PulseTiming::new(t0, t_peak, cube.frames())
}

/// Subtracts each pixel's mean over frames `[0, t0)`.
pub fn subtract_baseline(cube: &ThermalCube, timing: &PulseTiming) -> Result<ThermalCube> {
    timing.validate(cube.frames())?;
    let t0 = timing.t0;
    let n = cube.pixels();
    let offsets: Vec<f64> =
        exec::map_range(n, |p| (0..t0).map(|t| cube.data()[t * n + p]).sum::<f64>() / t0 as f64);
    let mut data = cube.data().to_vec();
    exec::for_each_chunk_mut(&mut data, n, |_, frame| {
        for (v, o) in frame.iter_mut().zip(&offsets) {
            *v -= o;
        }
    });
    cube.with_data(data)
}

/// Savitzky–Golay smoothing of every pixel's full time series.
pub fn smooth_sg(cube: &ThermalCube, cfg: &PreprocessConfig) -> Result<ThermalCube> {
    smooth_sg_from(cube, cfg, 0)
}

/// Savitzky–Golay smoothing of frames `[start, frames)` only; earlier frames
/// are copied. Used to keep the smoothing window off the excitation step.
pub fn smooth_sg_from(cube: &ThermalCube, cfg: &PreprocessConfig, start: usize) -> Result<ThermalCube> {
    if !cfg.sg_enabled {
        return Ok(cube.clone());
    }
    cfg.validate()?;
    let frames = cube.frames();
    if start >= frames || cfg.sg_window > frames - start {
        return Err(Error::InvalidConfig(format!(
            "sg_window {} exceeds the {} frames available",
            cfg.sg_window,
            frames.saturating_sub(start)
        )));
    }
    let sg = SavGol::new(cfg.sg_window, cfg.sg_polyorder)?;
    let input = cube.to_pixel_major();
    let mut out = input.clone();
    exec::for_each_chunk_pair(&input, &mut out, frames, frames, |_, src, dst| {
        sg.apply(&src[start..], &mut dst[start..]).expect("window checked");
    });
    Ok(cube.with_pixel_major(&out))
}

/// Minimum and maximum over pixels of the per-pixel median of frames `[0, t0)`.
pub fn base_median_range(cube: &ThermalCube, timing: &PulseTiming) -> Result<(f64, f64)> {
    timing.validate(cube.frames())?;
    let n = cube.pixels();
    let medians = exec::map_range(n, |p| {
        let mut s: Vec<f64> = (0..timing.t0).map(|t| cube.data()[t * n + p]).collect();
        s.sort_by(f64::total_cmp);
        median_sorted(&s)
    });
    Ok(medians.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))))
}
