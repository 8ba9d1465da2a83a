//! Savitzky–Golay least-squares smoothing with one-sided fits at the ends.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Precomputed smoothing weights for one window/order pair.
#[derive(Debug, Clone)]
pub struct SavGol {
    window: usize,
    /// Row `j` evaluates the window's least-squares polynomial at offset `j`.
    weights: Vec<Vec<f64>>,
}

impl SavGol {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window < 3 || window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "Savitzky-Golay window must be odd and >= 3, got {window}"
            )));
        }
        if order >= window {
            return Err(Error::InvalidConfig(format!(
                "polynomial order {order} must be below window {window}"
            )));
        }
        let half = (window / 2) as f64;
        let vander = DMatrix::from_fn(window, order + 1, |r, c| (r as f64 - half).powi(c as i32));
        // Projection onto the column space of the Vandermonde matrix.
        let pinv = vander
            .clone()
            .svd(true, true)
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let hat = &vander * pinv;
        let weights = (0..window).map(|j| hat.row(j).iter().copied().collect()).collect();
        Ok(Self { window, weights })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Smooths `input` into `out`. Frames within half a window of either end
    /// are evaluated on the first/last full window instead of a padded one.
    pub fn apply(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        let n = input.len();
        if self.window > n {
            return Err(Error::InvalidConfig(format!(
                "Savitzky-Golay window {} exceeds series length {n}",
                self.window
            )));
        }
        let half = self.window / 2;
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let start = i.saturating_sub(half).min(n - self.window);
            let w = &self.weights[i - start];
            *o = w.iter().zip(&input[start..start + self.window]).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }
}
