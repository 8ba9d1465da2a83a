//! Thermographic signal reconstruction: per-pixel polynomial fit of
//! log-temperature against log-time after the pulse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cube_io::ThermalCube;
use crate::detect::{FeatureMap, Modality};
use crate::error::{Error, Result};
use crate::exec;
use crate::preprocess::PulseTiming;

pub const MIN_DEGREE: usize = 2;
pub const MAX_DEGREE: usize = 7;
/// Log floor relative to the cube's post-pulse maximum.
pub const FLOOR_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsrConfig {
    pub degree: usize,
    /// Frames since onset; `None` picks the log-time midpoint of the window.
    pub eval_time: Option<usize>,
}

impl Default for TsrConfig {
    fn default() -> Self {
        Self { degree: 4, eval_time: None }
    }
}

/// `round(sqrt(n))`: midpoint of `[ln 1, ln n]`.
pub fn default_eval_time(post_pulse_frames: usize) -> usize {
    ((post_pulse_frames as f64).sqrt().round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsrResult {
    pub log_amplitude: FeatureMap,
    pub slope: FeatureMap,
    pub fit_residual_rms: FeatureMap,
    pub degree: usize,
    pub eval_time: usize,
}

/// Least-squares polynomial in `ln(tau)` for `tau = 1..=n`, shared by all pixels.
#[derive(Debug, Clone)]
pub struct LogLogFit {
    log_times: Vec<f64>,
    degree: usize,
    /// `(degree + 1) x n` solve operator from the QR factorization.
    solve: DMatrix<f64>,
}

impl LogLogFit {
    pub fn new(samples: usize, degree: usize) -> Result<Self> {
        if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
            return Err(Error::OutOfRange(format!(
                "TSR degree {degree} (valid {MIN_DEGREE}..={MAX_DEGREE})"
            )));
        }
        if samples < degree + 1 {
            return Err(Error::DegenerateDesign(format!("{samples} distinct log-times for degree {degree}")));
        }
        let log_times: Vec<f64> = (1..=samples).map(|t| (t as f64).ln()).collect();
        let design = DMatrix::from_fn(samples, degree + 1, |r, c| log_times[r].powi(c as i32));
        let qr = design.qr();
        let r = qr.r();
        if r.diagonal().iter().any(|d| d.abs() < 1e-12) {
            return Err(Error::DegenerateDesign("rank-deficient design matrix".into()));
        }
        let q_t = qr.q().transpose();
        let solve = r
            .solve_upper_triangular(&q_t)
            .ok_or_else(|| Error::DegenerateDesign("singular R factor".into()))?;
        Ok(Self { log_times, degree, solve })
    }

    pub fn log_times(&self) -> &[f64] {
        &self.log_times
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficients `c` of `y ~ sum c_i ln(tau)^i`, lowest order first.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        (&self.solve * DVector::from_column_slice(y)).iter().copied().collect()
    }

    pub fn value(coeffs: &[f64], log_t: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, c| acc * log_t + c)
    }

    /// `dy / d ln(tau)`.
    pub fn derivative(coeffs: &[f64], log_t: f64) -> f64 {
        coeffs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (i, c)| acc * log_t + i as f64 * c)
    }

    pub fn residual_rms(&self, coeffs: &[f64], y: &[f64]) -> f64 {
        let ss: f64 =
            self.log_times.iter().zip(y).map(|(lt, v)| (v - Self::value(coeffs, *lt)).powi(2)).sum();
        (ss / y.len() as f64).sqrt()
    }
}

pub fn tsr_fit(
    cube: &ThermalCube,
    timing: &PulseTiming,
    degree: usize,
    eval_time: usize,
) -> Result<TsrResult> {
    timing.validate(cube.frames())?;
    let n = timing.post_pulse_frames(cube.frames());
    if n < degree + 3 {
        return Err(Error::OutOfRange(format!(
            "{n} post-pulse frames for degree {degree} (need degree + 3)"
        )));
    }
    if eval_time == 0 || eval_time > n {
        return Err(Error::OutOfRange(format!("eval_time {eval_time} (valid 1..={n})")));
    }
    let fit = LogLogFit::new(n, degree)?;

    let pixels = cube.pixels();
    let start = timing.t0 + 1;
    let post = &cube.data()[start * pixels..];
    let peak = post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::DegenerateDesign("no positive post-pulse response".into()));
    }
    let floor = FLOOR_FRACTION * peak;
    let log_eval = (eval_time as f64).ln();

    // (log amplitude, slope, residual rms, valid)
    let per_pixel = exec::map_range(pixels, |p| {
        let mut floored = 0usize;
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let v = post[i * pixels + p];
                if v > floor {
                    v.ln()
                } else {
                    floored += 1;
                    floor.ln()
                }
            })
            .collect();
        let c = fit.coefficients(&y);
        (
            LogLogFit::value(&c, log_eval),
            LogLogFit::derivative(&c, log_eval),
            fit.residual_rms(&c, &y),
            2 * floored <= n,
        )
    });

    let (w, h) = (cube.width(), cube.height());
    let valid: Vec<bool> = per_pixel.iter().map(|r| r.3).collect();
    let make = |vals: Vec<f64>, modality| -> Result<FeatureMap> {
        FeatureMap::new(w, h, vals, modality)?.with_valid(valid.clone())
    };
    Ok(TsrResult {
        log_amplitude: make(per_pixel.iter().map(|r| r.0).collect(), Modality::TsrLogamp)?,
        slope: make(per_pixel.iter().map(|r| r.1).collect(), Modality::TsrSlope)?,
        fit_residual_rms: make(per_pixel.iter().map(|r| r.2).collect(), Modality::TsrResidual)?,
        degree,
        eval_time,
    })
}

pub fn tsr_slope_map(result: &TsrResult) -> FeatureMap {
    let mut m = result.slope.clone();
    m.modality = Modality::TsrSlope;
    m
}
