//! Principal component thermography: thin SVD of the mean-centred
//! pixel-by-time matrix of post-pulse frames.

use nalgebra::DMatrix;

use crate::cube_io::ThermalCube;
use crate::detect::{FeatureMap, Modality};
use crate::error::{Error, Result};
use crate::preprocess::PulseTiming;

pub const DEFAULT_COMPONENTS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PctResult {
    /// Spatial component maps, strongest first.
    pub components: Vec<FeatureMap>,
    /// Non-increasing singular values, one per component.
    pub singular_values: Vec<f64>,
    /// Matching unit-norm temporal profiles (rows of V^T).
    pub temporal_profiles: Vec<Vec<f64>>,
    pub k: usize,
}

/// Post-pulse frames as a `pixels x frames` matrix with each column mean-centred.
pub fn pct_matrix(cube: &ThermalCube, timing: &PulseTiming) -> Result<DMatrix<f64>> {
    timing.validate(cube.frames())?;
    let n = cube.pixels();
    let cols = timing.post_pulse_frames(cube.frames());
    let mut a = DMatrix::zeros(n, cols);
    for (j, t) in (timing.t0 + 1..cube.frames()).enumerate() {
        let frame = cube.frame(t);
        let mean = frame.iter().sum::<f64>() / n as f64;
        for (i, v) in frame.iter().enumerate() {
            a[(i, j)] = v - mean;
        }
    }
    Ok(a)
}

pub fn pct_decompose(cube: &ThermalCube, timing: &PulseTiming, k: usize) -> Result<PctResult> {
    let a = pct_matrix(cube, timing)?;
    let limit = a.nrows().min(a.ncols());
    if k == 0 || k > limit {
        return Err(Error::OutOfRange(format!("component count {k} (valid 1..={limit})")));
    }
    let svd = a.try_svd(true, true, f64::EPSILON, 10_000).ok_or(Error::SvdNonConvergence)?;
    let u = svd.u.as_ref().ok_or(Error::SvdNonConvergence)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::SvdNonConvergence)?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let (w, h) = (cube.width(), cube.height());
    let mut components = Vec::with_capacity(k);
    let mut singular_values = Vec::with_capacity(k);
    let mut temporal_profiles = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut spatial: Vec<f64> = u.column(c).iter().copied().collect();
        let mut temporal: Vec<f64> = v_t.row(c).iter().copied().collect();
        // Largest-magnitude entry positive.
        let pivot = spatial.iter().fold(0.0_f64, |best, v| if v.abs() > best.abs() { *v } else { best });
        if pivot < 0.0 {
            spatial.iter_mut().for_each(|v| *v = -*v);
            temporal.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(FeatureMap::new(w, h, spatial, Modality::PctComponent)?);
        singular_values.push(svd.singular_values[c].max(0.0));
        temporal_profiles.push(temporal);
    }
    Ok(PctResult { components, singular_values, temporal_profiles, k })
}

/// Elementwise magnitude of component `component` (1-based).
pub fn pct_magnitude(result: &PctResult, component: usize) -> Result<FeatureMap> {
    if component == 0 || component > result.k {
        return Err(Error::OutOfRange(format!("component {component} (valid 1..={})", result.k)));
    }
    let c = &result.components[component - 1];
    let mut mag =
        FeatureMap::new(c.width, c.height, c.values.iter().map(|v| v.abs()).collect(), Modality::PctMag)?;
    mag.valid = c.valid.clone();
    Ok(mag)
}
