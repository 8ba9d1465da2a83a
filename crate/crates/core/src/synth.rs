//! Seeded synthetic pulsed-thermography sequences with planted defects and
//! their ground-truth footprints.
//!
//! The background decays as `A * tau^e` after the onset. Inside a defect the
//! response is scaled by `1 + c * g(tau)`, where `g` rises smoothly from 0 at
//! the contrast onset to 1 at the contrast peak and then decays as `1/tau`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cube_io::ThermalCube;
use crate::detect::{label_regions, AnomalyMask, Connectivity, MaskSource};
use crate::error::{Error, Result};
use crate::exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DefectShape {
    Disk { cx: f64, cy: f64, radius: f64 },
    Rect { x0: usize, y0: usize, w: usize, h: usize },
}

impl DefectShape {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        match *self {
            DefectShape::Disk { cx, cy, radius } => {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                dx * dx + dy * dy <= radius * radius
            }
            DefectShape::Rect { x0, y0, w, h } => x >= x0 && x < x0 + w && y >= y0 && y < y0 + h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectSpec {
    #[serde(flatten)]
    pub shape: DefectShape,
    /// Peak fractional excess over the background, in `(0, 1]`.
    pub contrast_amplitude: f64,
    /// Frames after the onset.
    #[serde(default = "default_contrast_onset")]
    pub contrast_onset_frame: usize,
    #[serde(default = "default_contrast_peak")]
    pub contrast_peak_frame: usize,
}

fn default_contrast_onset() -> usize {
    2
}
fn default_contrast_peak() -> usize {
    20
}

impl DefectSpec {
    pub fn disk(cx: f64, cy: f64, radius: f64, contrast: f64) -> Self {
        Self {
            shape: DefectShape::Disk { cx, cy, radius },
            contrast_amplitude: contrast,
            contrast_onset_frame: default_contrast_onset(),
            contrast_peak_frame: default_contrast_peak(),
        }
    }

    pub fn rect(x0: usize, y0: usize, w: usize, h: usize, contrast: f64) -> Self {
        Self {
            shape: DefectShape::Rect { x0, y0, w, h },
            contrast_amplitude: contrast,
            contrast_onset_frame: default_contrast_onset(),
            contrast_peak_frame: default_contrast_peak(),
        }
    }

    /// Contrast time profile `g(tau)`.
    pub fn profile(&self, tau: f64) -> f64 {
        let on = self.contrast_onset_frame as f64;
        let pk = self.contrast_peak_frame as f64;
        if tau <= on {
            0.0
        } else if tau < pk {
            let s = (tau - on) / (pk - on);
            s * s * (3.0 - 2.0 * s)
        } else {
            pk / tau
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub t0: usize,
    #[serde(default = "default_amplitude")]
    pub peak_amplitude: f64,
    #[serde(default = "default_exponent")]
    pub background_decay_exponent: f64,
    #[serde(default)]
    pub defects: Vec<DefectSpec>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Minimum distance in pixels from any defect pixel to the frame edge.
    #[serde(default = "default_clearance")]
    pub edge_clearance: usize,
}

fn default_amplitude() -> f64 {
    1.0
}
fn default_exponent() -> f64 {
    -0.5
}
fn default_clearance() -> usize {
    3
}

impl SynthSpec {
    pub fn new(width: usize, height: usize, frames: usize, t0: usize) -> Self {
        Self {
            width,
            height,
            frames,
            t0,
            peak_amplitude: default_amplitude(),
            background_decay_exponent: default_exponent(),
            defects: Vec::new(),
            noise_sigma: 0.0,
            seed: 0,
            edge_clearance: default_clearance(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width < 4 || self.height < 4 {
            return bad(format!("{}x{} frame is too small", self.width, self.height));
        }
        if self.t0 < 8 {
            return bad(format!("t0 = {} must be at least 8", self.t0));
        }
        if self.frames < self.t0 + 32 {
            return bad(format!("{} frames leave fewer than 32 after t0 = {}", self.frames, self.t0));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {}", self.noise_sigma));
        }
        if !(self.peak_amplitude > 0.0 && self.peak_amplitude.is_finite()) {
            return bad(format!("peak_amplitude = {}", self.peak_amplitude));
        }
        if !self.background_decay_exponent.is_finite() {
            return bad("background_decay_exponent must be finite".into());
        }
        let c = self.edge_clearance;
        for (i, d) in self.defects.iter().enumerate() {
            if !(d.contrast_amplitude > 0.0 && d.contrast_amplitude <= 1.0) {
                return bad(format!("defect {i}: contrast {} outside (0, 1]", d.contrast_amplitude));
            }
            if d.contrast_onset_frame >= d.contrast_peak_frame {
                return bad(format!("defect {i}: contrast onset must precede its peak"));
            }
            let mut any = false;
            for y in 0..self.height {
                for x in 0..self.width {
                    if !d.shape.contains(x, y) {
                        continue;
                    }
                    any = true;
                    if x < c || y < c || x + c >= self.width || y + c >= self.height {
                        return bad(format!(
                            "defect {i} reaches pixel ({x}, {y}), within {c} px of the edge"
                        ));
                    }
                }
            }
            if !any {
                return bad(format!("defect {i} covers no pixels"));
            }
        }
        Ok(())
    }

    /// Union of defect footprints.
    pub fn ground_truth(&self) -> AnomalyMask {
        let (w, h) = (self.width, self.height);
        let bits = (0..w * h).map(|i| self.defects.iter().any(|d| d.shape.contains(i % w, i / w))).collect();
        let mask = AnomalyMask::new(w, h, bits, MaskSource::GroundTruth).expect("sized");
        label_regions(&mask, Connectivity::Eight)
    }
}

/// Renders the cube and its ground-truth mask. Identical specs give
/// bit-identical output regardless of thread count.
pub fn generate(spec: &SynthSpec) -> Result<(ThermalCube, AnomalyMask)> {
    spec.validate()?;
    let (w, h, frames) = (spec.width, spec.height, spec.frames);
    let pixels = w * h;
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    // Per-pixel list of defects covering it.
    let cover: Vec<Vec<usize>> = (0..pixels)
        .map(|p| {
            spec.defects
                .iter()
                .enumerate()
                .filter(|(_, d)| d.shape.contains(p % w, p / w))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut data = vec![0.0; pixels * frames];
    exec::for_each_chunk_mut(&mut data, pixels, |t, frame| {
        let clean: Vec<f64> = if t > spec.t0 {
            let tau = (t - spec.t0) as f64;
            let background = spec.peak_amplitude * tau.powf(spec.background_decay_exponent);
            let gains: Vec<f64> =
                spec.defects.iter().map(|d| 1.0 + d.contrast_amplitude * d.profile(tau)).collect();
            cover.iter().map(|c| c.iter().fold(background, |v, i| v * gains[*i])).collect()
        } else {
            vec![0.0; pixels]
        };
        frame.copy_from_slice(&clean);
        if let Some(dist) = &noise {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(t as u64);
            for v in frame.iter_mut() {
                *v += dist.sample(&mut rng);
            }
        }
    });
    let cube = ThermalCube::new(w, h, frames, data)?.with_units("synthetic");
    Ok((cube, spec.ground_truth()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let ok = SynthSpec::new(32, 32, 64, 10);
        ok.validate().unwrap();
        assert!(SynthSpec { t0: 7, ..ok.clone() }.validate().is_err());
        assert!(SynthSpec { frames: 41, ..ok.clone() }.validate().is_err());
        assert!(SynthSpec { noise_sigma: -1.0, ..ok.clone() }.validate().is_err());
        let mut edge = ok.clone();
        edge.defects.push(DefectSpec::disk(2.0, 16.0, 3.0, 0.3));
        assert!(edge.validate().is_err());
        edge.edge_clearance = 0;
        edge.validate().unwrap();
        let mut weak = ok.clone();
        weak.defects.push(DefectSpec::disk(16.0, 16.0, 3.0, 1.5));
        assert!(weak.validate().is_err());
    }

    #[test]
    fn background_is_power_law() {
        let mut spec = SynthSpec::new(8, 8, 48, 10);
        spec.peak_amplitude = 4.0;
        let (cube, gt) = generate(&spec).unwrap();
        assert_eq!(gt.count(), 0);
        assert_eq!(cube.get(3, 3, 10), 0.0);
        assert_eq!(cube.get(3, 3, 11), 4.0);
        assert!((cube.get(3, 3, 14) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn defect_raises_response() {
        let mut spec = SynthSpec::new(16, 16, 48, 10);
        spec.defects.push(DefectSpec::rect(6, 6, 4, 4, 0.5));
        let (cube, gt) = generate(&spec).unwrap();
        assert_eq!(gt.count(), 16);
        assert_eq!(gt.regions.len(), 1);
        // tau = 20 is the contrast peak.
        let ratio = cube.get(7, 7, 30) / cube.get(1, 1, 30);
        assert!((ratio - 1.5).abs() < 1e-12);
        assert_eq!(cube.get(7, 7, 12), cube.get(1, 1, 12));
    }

    #[test]
    fn profile_shape() {
        let d = DefectSpec::disk(0.0, 0.0, 1.0, 1.0);
        assert_eq!(d.profile(1.0), 0.0);
        assert_eq!(d.profile(2.0), 0.0);
        assert!((d.profile(11.0) - 0.5).abs() < 1e-12);
        assert_eq!(d.profile(20.0), 1.0);
        assert_eq!(d.profile(40.0), 0.5);
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let mut spec = SynthSpec::new(12, 12, 48, 10);
        spec.noise_sigma = 0.05;
        spec.seed = 42;
        let (a, _) = generate(&spec).unwrap();
        let (b, _) = generate(&spec).unwrap();
        assert_eq!(a.data(), b.data());
        spec.seed = 43;
        let (c, _) = generate(&spec).unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SynthSpec = serde_json::from_str(
            r#"{"width":32,"height":32,"frames":64,"t0":10,
                "defects":[{"shape":"disk","cx":16,"cy":16,"radius":4,"contrast_amplitude":0.3}]}"#,
        )
        .unwrap();
        assert_eq!(spec.background_decay_exponent, -0.5);
        assert_eq!(spec.defects[0].contrast_peak_frame, 20);
        spec.validate().unwrap();
    }
}
