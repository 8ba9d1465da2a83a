//! Feature-map standardization, per-modality thresholding and connected-region
//! bookkeeping for binary anomaly masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a feature map measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    /// Signed principal component map.
    PctComponent,
    PctMag,
    TsrSlope,
    TsrLogamp,
    TsrResidual,
    PptAmp,
    PptPhase,
    PptPhaseEdge,
    ConsensusScore,
}

impl Modality {
    pub fn label(self) -> &'static str {
        match self {
            Modality::PctComponent => "PCT component",
            Modality::PctMag => "PCT magnitude",
            Modality::TsrSlope => "TSR slope",
            Modality::TsrLogamp => "TSR log-amplitude",
            Modality::TsrResidual => "TSR residual RMS",
            Modality::PptAmp => "PPT amplitude",
            Modality::PptPhase => "PPT phase",
            Modality::PptPhaseEdge => "PPT phase-edge",
            Modality::ConsensusScore => "Consensus score",
        }
    }
}

/// Single-channel map over the ROI, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub modality: Modality,
    pub standardized: bool,
    /// Pixels excluded from statistics are `false`.
    pub valid: Vec<bool>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, modality: Modality) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(Self { width, height, valid: vec![true; values.len()], values, modality, standardized: false })
    }

    pub fn with_valid(mut self, valid: Vec<bool>) -> Result<Self> {
        if valid.len() != self.values.len() {
            return Err(Error::DimensionMismatch("validity mask length".into()));
        }
        self.valid = valid;
        Ok(self)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v)
    }

    /// Population mean and standard deviation over valid pixels (two-pass).
    pub fn valid_mean_std(&self) -> Option<(f64, f64)> {
        let n = self.valid_count();
        if n == 0 {
            return None;
        }
        let mean = self.valid_values().sum::<f64>() / n as f64;
        let var = self.valid_values().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        Some((mean, var.sqrt()))
    }
}

/// Where a mask came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaskSource {
    Modality(Modality),
    Consensus,
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)],
        }
    }
}

/// Axis-aligned box `(x0, y0, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    pub area: usize,
    pub bbox: BBox,
    /// Mean pixel-centre coordinate `(x, y)`.
    pub centroid: (f64, f64),
    /// Mean score of the member pixels (0 when the mask carries no scores).
    pub mean_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub regions: Vec<Region>,
    /// Per-pixel region label, 0 for background. Empty until labeled.
    pub labels: Vec<u32>,
    pub connectivity: Option<Connectivity>,
    pub source: MaskSource,
    /// Per-pixel scores used for `Region::mean_z`.
    #[serde(skip)]
    pub scores: Option<Vec<f64>>,
    /// Denominator for area percentages.
    pub valid_pixels: usize,
}

impl AnomalyMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>, source: MaskSource) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!("{} bits for a {width}x{height} mask", bits.len())));
        }
        Ok(Self {
            width,
            height,
            bits,
            regions: Vec::new(),
            labels: Vec::new(),
            connectivity: None,
            source,
            scores: None,
            valid_pixels: width * height,
        })
    }

    pub fn empty(width: usize, height: usize, source: MaskSource) -> Self {
        Self::new(width, height, vec![false; width * height], source).expect("sized")
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_labeled(&self) -> bool {
        self.connectivity.is_some()
    }

    pub fn same_shape(&self, other: &AnomalyMask) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Thresholds and geometric filters applied per modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub pct_percentile: f64,
    pub ppt_amp_percentile: f64,
    pub phase_edge_percentile: f64,
    pub tsr_slope_z: f64,
    /// `None` resolves to 0.05% of the ROI area, at least 8 px.
    pub min_area: Option<usize>,
    /// `None` resolves to 2% of the smaller ROI side, at least 2 px.
    pub border_margin: Option<usize>,
    pub connectivity: Connectivity,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            pct_percentile: 99.0,
            ppt_amp_percentile: 99.0,
            phase_edge_percentile: 95.0,
            tsr_slope_z: 2.0,
            min_area: None,
            border_margin: None,
            connectivity: Connectivity::Eight,
        }
    }
}

impl DetectConfig {
    pub fn min_area_for(&self, width: usize, height: usize) -> usize {
        self.min_area.unwrap_or_else(|| ((0.0005 * (width * height) as f64).ceil() as usize).max(8))
    }

    pub fn border_margin_for(&self, width: usize, height: usize) -> usize {
        self.border_margin.unwrap_or_else(|| ((0.02 * width.min(height) as f64).floor() as usize).max(2))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("pct_percentile", self.pct_percentile),
            ("ppt_amp_percentile", self.ppt_amp_percentile),
            ("phase_edge_percentile", self.phase_edge_percentile),
        ] {
            if !(p > 50.0 && p < 100.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (50, 100), got {p}")));
            }
        }
        if !(self.tsr_slope_z > 0.0) {
            return Err(Error::InvalidConfig("tsr_slope_z must be positive".into()));
        }
        if self.min_area == Some(0) {
            return Err(Error::InvalidConfig("min_area must be at least 1".into()));
        }
        Ok(())
    }
}

/// Z-score standardization over valid pixels.
pub fn standardize(map: &FeatureMap) -> Result<FeatureMap> {
    let n = map.valid_count();
    if n < 2 {
        return Err(Error::TooFewValid { needed: 2, have: n });
    }
    let (mean, sd) = map.valid_mean_std().expect("n >= 2");
    let max_abs = map.valid_values().fold(0.0_f64, |m, v| m.max(v.abs()));
    // Rounding residue on a constant map is not signal.
    if sd == 0.0 || sd <= 1e-12 * max_abs || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let values = map.values.iter().map(|v| (v - mean) / sd).collect();
    Ok(FeatureMap {
        width: map.width,
        height: map.height,
        values,
        modality: map.modality,
        standardized: true,
        valid: map.valid.clone(),
    })
}

/// Linear-interpolation percentile of an ascending sample.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Upper,
    Lower,
}

/// Marks valid pixels strictly beyond the `p`-th percentile (upper tail) or
/// strictly below the `(100 - p)`-th percentile (lower tail).
pub fn threshold_percentile(map: &FeatureMap, p: f64, tail: Tail) -> Result<AnomalyMask> {
    let mut sorted: Vec<f64> = map.valid_values().collect();
    if sorted.len() < 10 {
        return Err(Error::TooFewValid { needed: 10, have: sorted.len() });
    }
    sorted.sort_by(f64::total_cmp);
    let bits: Vec<bool> = match tail {
        Tail::Upper => {
            let cut = percentile_sorted(&sorted, p);
            map.values.iter().zip(&map.valid).map(|(v, ok)| *ok && *v > cut).collect()
        }
        Tail::Lower => {
            let cut = percentile_sorted(&sorted, 100.0 - p);
            map.values.iter().zip(&map.valid).map(|(v, ok)| *ok && *v < cut).collect()
        }
    };
    Ok(scored_mask(map, bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    TwoSided,
    Upper,
    Lower,
}

/// Marks standardized valid pixels whose z-score exceeds `z`.
pub fn threshold_z(map: &FeatureMap, z: f64, mode: ZMode) -> Result<AnomalyMask> {
    if !map.standardized {
        return Err(Error::NotStandardized);
    }
    let bits = map
        .values
        .iter()
        .zip(&map.valid)
        .map(|(v, ok)| {
            *ok && match mode {
                ZMode::TwoSided => v.abs() >= z,
                ZMode::Upper => *v >= z,
                ZMode::Lower => *v <= -z,
            }
        })
        .collect();
    Ok(scored_mask(map, bits))
}

fn scored_mask(map: &FeatureMap, bits: Vec<bool>) -> AnomalyMask {
    let mut mask = AnomalyMask::new(map.width, map.height, bits, MaskSource::Modality(map.modality))
        .expect("map-shaped");
    mask.scores = Some(map.values.clone());
    mask.valid_pixels = map.valid_count();
    mask
}

/// Labels connected true pixels. Labels follow the raster order of each
/// region's first pixel.
pub fn label_regions(mask: &AnomalyMask, connectivity: Connectivity) -> AnomalyMask {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    let offsets = connectivity.offsets();

    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut sx, mut sy, mut sz, mut area) = (0.0, 0.0, 0.0, 0usize);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            area += 1;
            sx += x as f64;
            sy += y as f64;
            if let Some(s) = &mask.scores {
                sz += s[i];
            }
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for (dx, dy) in offsets {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        let n = area as f64;
        regions.push(Region {
            label,
            area,
            bbox: BBox { x0, y0, w: x1 - x0 + 1, h: y1 - y0 + 1 },
            centroid: (sx / n, sy / n),
            mean_z: if mask.scores.is_some() { sz / n } else { 0.0 },
        });
    }

    AnomalyMask { labels, regions, connectivity: Some(connectivity), ..mask.clone() }
}

/// Drops regions smaller than `min_area` and relabels.
pub fn filter_small(mask: &AnomalyMask, min_area: usize) -> AnomalyMask {
    let connectivity = mask.connectivity.unwrap_or_default();
    let labeled = if mask.is_labeled() { mask.clone() } else { label_regions(mask, connectivity) };
    let keep: Vec<bool> =
        std::iter::once(false).chain(labeled.regions.iter().map(|r| r.area >= min_area)).collect();
    let bits = labeled.labels.iter().map(|&l| l != 0 && keep[l as usize]).collect();
    label_regions(&AnomalyMask { bits, ..labeled }, connectivity)
}

/// Clears every pixel within `margin` of the ROI edge, then relabels and
/// re-applies the minimum-area filter.
pub fn suppress_border(mask: &AnomalyMask, margin: usize, min_area: usize) -> Result<AnomalyMask> {
    let (w, h) = (mask.width, mask.height);
    if 2 * margin >= w.min(h) {
        return Err(Error::OutOfRange(format!("border margin {margin} for a {w}x{h} mask")));
    }
    let mut bits = mask.bits.clone();
    if margin > 0 {
        for y in 0..h {
            for x in 0..w {
                if x < margin || y < margin || x + margin >= w || y + margin >= h {
                    bits[y * w + x] = false;
                }
            }
        }
    }
    let cleared = AnomalyMask { bits, ..mask.clone() };
    let connectivity = mask.connectivity.unwrap_or_default();
    Ok(filter_small(&label_regions(&cleared, connectivity), min_area))
}

/// Percentage of valid ROI pixels that are set, rounded to 2 decimals.
pub fn mask_area_percent(mask: &AnomalyMask) -> f64 {
    if mask.valid_pixels == 0 {
        return 0.0;
    }
    round2(100.0 * mask.count() as f64 / mask.valid_pixels as f64)
}

pub(crate) fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Dice overlap `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (x, y) in a.iter().zip(b) {
        na += *x as usize;
        nb += *y as usize;
        inter += (*x && *y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// Run-length encoding: alternating run lengths in raster order, starting
/// with a (possibly empty) run of `false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub rle: Vec<usize>,
    pub w: usize,
    pub h: usize,
}

impl MaskRle {
    pub fn encode(mask: &AnomalyMask) -> Self {
        let mut rle = Vec::new();
        let mut current = false;
        let mut run = 0usize;
        for &b in &mask.bits {
            if b == current {
                run += 1;
            } else {
                rle.push(run);
                current = b;
                run = 1;
            }
        }
        rle.push(run);
        Self { rle, w: mask.width, h: mask.height }
    }

    pub fn decode(&self, source: MaskSource) -> Result<AnomalyMask> {
        let mut bits = Vec::with_capacity(self.w * self.h);
        let mut current = false;
        for &run in &self.rle {
            bits.extend(std::iter::repeat_n(current, run));
            current = !current;
        }
        if bits.len() != self.w * self.h {
            return Err(Error::DimensionMismatch(format!(
                "RLE covers {} pixels, expected {}x{}",
                bits.len(),
                self.w,
                self.h
            )));
        }
        AnomalyMask::new(self.w, self.h, bits, source)
    }
}
