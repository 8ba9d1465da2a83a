use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DISCLAIMER, SECTION_TITLES};
use crate::detect::Modality;
use crate::error::{Error, Result};
use crate::fusion::{regions_phrase, MetricsRecord};

/// Section templates and the system-level constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub s1: String,
    pub s2: String,
    pub s3: String,
    pub system_constraints: String,
}

impl Default for PromptSpec {
    fn default() -> Self {
        Self {
            s1: "Interpret each modality separately: PCT, PPT, TSR and the consensus map. \
                 Write one bullet per modality as `- **<modality>**: Location: <where>. \
                 Interpretation: <plausible physical explanation>.`"
                .into(),
            s2: "Discuss implications for authenticity cautiously. Keep direct observations \
                 and hypotheses apart: prefix each bullet with `Observation:` or `Hypothesis:`. \
                 Close the section with the required disclaimer sentence."
                .into(),
            s3: "Summarize every anomaly as one bullet: `- Location: <where>; Supporting \
                 modalities: <PCT/TSR/PPT/Consensus>; Tentative cause: <physical interpretation>`. \
                 If there is no consensus anomaly, write the single bullet \
                 `- No consensus anomalies detected.`"
                .into(),
            system_constraints: format!(
                "You are assisting a conservator with active infrared thermography of a painted panel. \
                 Base every statement on the supplied thermographic evidence and do not speculate \
                 beyond it. State uncertainty explicitly. Do not claim definitive material diagnoses. \
                 {DISCLAIMER}"
            ),
        }
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [("s1", &self.s1), ("s2", &self.s2), ("s3", &self.s3)] {
            if s.trim().is_empty() {
                return Err(Error::InvalidConfig(format!("prompt section {name} is empty")));
            }
        }
        if !self.system_constraints.to_lowercase().contains(&DISCLAIMER.to_lowercase()) {
            return Err(Error::InvalidConfig(
                "system constraints must contain the authenticity disclaimer".into(),
            ));
        }
        Ok(())
    }
}

fn area_label(m: Modality) -> &'static str {
    match m {
        Modality::PctMag => "PCT magnitude",
        Modality::TsrSlope => "TSR slope",
        Modality::PptAmp => "PPT amplitude",
        Modality::PptPhaseEdge => "PPT phase-edge",
        other => other.label(),
    }
}

/// Deterministic prompt text embedding the metrics.
pub fn build_prompt(metrics: &MetricsRecord, spec: &PromptSpec) -> Result<String> {
    spec.validate()?;
    let mut p = String::new();
    let _ = writeln!(p, "SYSTEM CONSTRAINTS\n{}\n", spec.system_constraints.trim());
    let _ = writeln!(p, "THERMOGRAPHIC EVIDENCE");
    let _ = writeln!(p, "Region of interest: {} x {} px.", metrics.roi_width, metrics.roi_height);
    let _ = writeln!(
        p,
        "Pulse onset t0 = {} and peak response t_peak = {} (frame indices).",
        metrics.t0, metrics.t_peak
    );
    let _ = writeln!(
        p,
        "Pre-pulse base-median range: {:.2} to {:.2}.",
        metrics.base_median_min, metrics.base_median_max
    );
    let _ = writeln!(p, "Anomaly mask areas (% of ROI):");
    for (m, a) in &metrics.mask_areas_percent {
        let _ = writeln!(p, "- {}: {:.2}%", area_label(*m), a);
    }
    let _ = writeln!(
        p,
        "Consensus anomaly mask: {:.2}% of ROI ({}).",
        metrics.consensus_area_percent,
        regions_phrase(metrics.consensus_regions)
    );
    if let Some(pc) = &metrics.representative_pc {
        let _ = writeln!(p, "Representative principal component: PC{}.", pc.component);
    }
    let _ = writeln!(
        p,
        "Attached images, in order: (1) representative PCT component, (2) TSR slope map, \
         (3) PPT phase map, (4) consensus anomaly mask overlay, (5) optical image when provided.\n"
    );
    let _ = writeln!(p, "REPORT FORMAT");
    let _ = writeln!(p, "Write exactly three sections with these headers, in this order.\n");
    for (i, (title, body)) in SECTION_TITLES.iter().zip([&spec.s1, &spec.s2, &spec.s3]).enumerate() {
        let _ = writeln!(p, "## {}. {}\n{}\n", i + 1, title, body.trim());
    }
    Ok(p)
}
