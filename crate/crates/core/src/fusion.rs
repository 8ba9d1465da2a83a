//! Consensus fusion of the TSR-slope and PPT phase-edge masks, the metrics
//! record, and representative principal-component selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::detect::{
    dice, filter_small, label_regions, mask_area_percent, threshold_percentile, AnomalyMask, DetectConfig,
    FeatureMap, MaskSource, Modality, Region, Tail,
};
use crate::error::{Error, Result};
use crate::pct::{pct_magnitude, PctResult};
use crate::preprocess::PulseTiming;

/// Added to the CNR denominator.
pub const CNR_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    /// Chebyshev radius of the cross-modality tolerance; 0 is strict intersection.
    pub dilation_r: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { dilation_r: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub mask: AnomalyMask,
    pub area_percent: f64,
    pub region_count: usize,
    pub per_modality_areas: BTreeMap<Modality, f64>,
    pub contributing: Vec<Modality>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentativePc {
    /// 1-based component index.
    pub component: usize,
    pub cnr: f64,
    /// Dice overlap with the consensus mask.
    pub overlap: f64,
    pub score: f64,
}

/// Pixels within Chebyshev distance `r` of a set pixel.
pub fn dilate(bits: &[bool], width: usize, height: usize, r: usize) -> Vec<bool> {
    if r == 0 {
        return bits.to_vec();
    }
    let mut rows = vec![false; bits.len()];
    for y in 0..height {
        let row = &bits[y * width..(y + 1) * width];
        for x in 0..width {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(width - 1);
            rows[y * width + x] = row[lo..=hi].iter().any(|b| *b);
        }
    }
    let mut out = vec![false; bits.len()];
    for y in 0..height {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(height - 1);
        for x in 0..width {
            out[y * width + x] = (lo..=hi).any(|yy| rows[yy * width + x]);
        }
    }
    out
}

fn modality_of(mask: &AnomalyMask) -> Option<Modality> {
    match mask.source {
        MaskSource::Modality(m) => Some(m),
        _ => None,
    }
}

/// Keeps pixels set in one mask and within `dilation_r` of a set pixel of the
/// other, in both directions; then applies the minimum-area filter.
pub fn fuse_consensus(
    a: &AnomalyMask,
    b: &AnomalyMask,
    detect: &DetectConfig,
    fusion: &FusionConfig,
) -> Result<ConsensusResult> {
    if !a.same_shape(b) {
        return Err(Error::DimensionMismatch(format!(
            "fusing {}x{} with {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let r = fusion.dilation_r;
    let da = dilate(&a.bits, w, h, r);
    let db = dilate(&b.bits, w, h, r);
    let bits = (0..w * h).map(|i| (a.bits[i] && db[i]) || (b.bits[i] && da[i])).collect();

    let mut mask = AnomalyMask::new(w, h, bits, MaskSource::Consensus)?;
    // Region scores come from the TSR slope z-map when it is one of the inputs.
    let scored = [a, b]
        .into_iter()
        .find(|m| modality_of(m) == Some(Modality::TsrSlope) && m.scores.is_some())
        .or_else(|| [a, b].into_iter().find(|m| m.scores.is_some()));
    mask.scores = scored.and_then(|m| m.scores.clone());
    mask.valid_pixels = a.valid_pixels.min(b.valid_pixels);

    let labeled = label_regions(&mask, detect.connectivity);
    let mask = filter_small(&labeled, detect.min_area_for(w, h));

    let mut per_modality_areas = BTreeMap::new();
    let mut contributing = Vec::new();
    for m in [a, b] {
        if let Some(modality) = modality_of(m) {
            per_modality_areas.insert(modality, mask_area_percent(m));
            if !contributing.contains(&modality) {
                contributing.push(modality);
            }
        }
    }
    contributing.sort();
    Ok(ConsensusResult {
        area_percent: mask_area_percent(&mask),
        region_count: mask.regions.len(),
        mask,
        per_modality_areas,
        contributing,
    })
}

/// Quantitative summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub roi_width: usize,
    pub roi_height: usize,
    /// Percent of valid ROI pixels, 2 decimals.
    pub mask_areas_percent: BTreeMap<Modality, f64>,
    pub consensus_area_percent: f64,
    pub consensus_regions: usize,
    pub t0: usize,
    pub t_peak: usize,
    pub base_median_min: f64,
    pub base_median_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative_pc: Option<RepresentativePc>,
}

pub fn summarize(
    consensus: &ConsensusResult,
    all_masks: &BTreeMap<Modality, AnomalyMask>,
    timing: &PulseTiming,
    base_range: (f64, f64),
) -> MetricsRecord {
    MetricsRecord {
        roi_width: consensus.mask.width,
        roi_height: consensus.mask.height,
        mask_areas_percent: all_masks.iter().map(|(m, mask)| (*m, mask_area_percent(mask))).collect(),
        consensus_area_percent: consensus.area_percent,
        consensus_regions: consensus.region_count,
        t0: timing.t0,
        t_peak: timing.t_peak,
        base_median_min: round_sig(base_range.0),
        base_median_max: round_sig(base_range.1),
        representative_pc: None,
    }
}

// Keeps the JSON readable without losing meaningful precision.
fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let scale = 10f64.powi(6 - v.abs().log10().ceil() as i32);
    (v * scale).round() / scale
}

fn table_name(m: Modality) -> &'static str {
    match m {
        Modality::PctMag | Modality::PctComponent => "PCT",
        Modality::TsrSlope => "TSR slope",
        Modality::PptAmp => "PPT amplitude",
        Modality::PptPhaseEdge => "PPT phase-edge",
        other => other.label(),
    }
}

impl MetricsRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| Mask / Map | Area (%) |\n|---|---|\n");
        for (m, area) in &self.mask_areas_percent {
            let _ = writeln!(s, "| {} | {:.2} |", table_name(*m), area);
        }
        let _ = writeln!(
            s,
            "| Consensus anomaly mask | {:.2} ({}) |",
            self.consensus_area_percent,
            regions_phrase(self.consensus_regions)
        );
        let _ =
            writeln!(s, "\nPulse onset t0 = {}, peak response t_peak = {} (frames).", self.t0, self.t_peak);
        let _ = writeln!(s, "Base-median range: {:.2} to {:.2}.", self.base_median_min, self.base_median_max);
        if let Some(pc) = &self.representative_pc {
            let _ = writeln!(
                s,
                "Representative component: PC{} (CNR {:.3}, Dice {:.3}).",
                pc.component, pc.cnr, pc.overlap
            );
        }
        s
    }
}

/// "1 region", "8 regions".
pub(crate) fn regions_phrase(n: usize) -> String {
    if n == 1 {
        "1 region".into()
    } else {
        format!("{n} regions")
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

/// Contrast-to-noise ratio of `map` inside vs outside `mask`.
pub fn contrast_to_noise(map: &FeatureMap, mask: &AnomalyMask) -> f64 {
    let inside = map.values.iter().zip(&mask.bits).filter(|(_, b)| **b).map(|(v, _)| *v);
    let outside = map.values.iter().zip(&mask.bits).filter(|(_, b)| !**b).map(|(v, _)| *v);
    match (mean_std(inside), mean_std(outside)) {
        (Some((mi, _)), Some((mo, so))) => (mi - mo).abs() / (so + CNR_EPSILON),
        _ => 0.0,
    }
}

/// Picks the component whose magnitude best matches the consensus mask:
/// `0.5 * cnr / max_cnr + 0.5 * dice(top-1% mask, consensus)`.
pub fn select_representative_pc(pct: &PctResult, consensus: &ConsensusResult) -> Result<RepresentativePc> {
    if pct.k == 0 {
        return Err(Error::OutOfRange("PCT result has no components".into()));
    }
    let has_consensus = consensus.mask.count() > 0;
    let mut rows = Vec::with_capacity(pct.k);
    for i in 1..=pct.k {
        let mag = pct_magnitude(pct, i)?;
        let cnr = contrast_to_noise(&mag, &consensus.mask);
        let overlap = if has_consensus {
            let top = threshold_percentile(&mag, 99.0, Tail::Upper)?;
            dice(&top.bits, &consensus.mask.bits)
        } else {
            0.0
        };
        rows.push((i, cnr, overlap));
    }
    let max_cnr = rows.iter().fold(0.0_f64, |m, r| m.max(r.1));
    let mut best: Option<RepresentativePc> = None;
    for (component, cnr, overlap) in rows {
        let norm = if max_cnr > 0.0 { cnr / max_cnr } else { 0.0 };
        let score = 0.5 * norm + 0.5 * overlap;
        if best.is_none_or(|b| score > b.score) {
            best = Some(RepresentativePc { component, cnr, overlap, score });
        }
    }
    Ok(best.expect("k >= 1"))
}

/// Region list of a consensus result, for reporting.
pub fn consensus_regions(consensus: &ConsensusResult) -> &[Region] {
    &consensus.mask.regions
}
