//! Structured conservation reporting: the ordered multimodal input set, the
//! three-section prompt, the chat-completions transport, report parsing and
//! a deterministic offline report generator.

mod client;
mod offline;
mod parse;
mod prompt;

use serde::{Deserialize, Serialize};

use crate::detect::Region;
use crate::fusion::MetricsRecord;

pub use client::{call_vlm, EndpointConfig, API_KEY_ENV};
pub use offline::{generate_offline_report, location_phrase};
pub use parse::parse_report;
pub use prompt::{build_prompt, PromptSpec};

/// Sentence every report (and the prompt) must carry.
pub const DISCLAIMER: &str = "Thermography alone cannot establish authenticity.";

pub const SECTION_TITLES: [&str; 3] =
    ["Thermal Output Analysis", "Authenticity Assessment", "Defect Locations and Likely Causes"];

/// Modalities a report may cite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReportModality {
    Pct,
    Tsr,
    Ppt,
    Consensus,
}

impl ReportModality {
    pub const ALL: [ReportModality; 4] = [Self::Pct, Self::Tsr, Self::Ppt, Self::Consensus];

    pub fn name(self) -> &'static str {
        match self {
            Self::Pct => "PCT",
            Self::Tsr => "TSR",
            Self::Ppt => "PPT",
            Self::Consensus => "Consensus",
        }
    }

    /// Modalities mentioned in `text`, in canonical order.
    pub fn mentioned_in(text: &str) -> Vec<ReportModality> {
        let lower = text.to_lowercase();
        Self::ALL.into_iter().filter(|m| lower.contains(&m.name().to_lowercase())).collect()
    }
}

/// Encoded images in the fixed order PCT, TSR, PPT, consensus, then the
/// optional optical photograph, plus the numbers they summarize.
#[derive(Debug, Clone)]
pub struct VlmInputSet {
    pub pct_map_png: Vec<u8>,
    pub tsr_map_png: Vec<u8>,
    pub ppt_map_png: Vec<u8>,
    pub consensus_png: Vec<u8>,
    pub optical_png: Option<Vec<u8>>,
    pub metrics: MetricsRecord,
    /// Consensus regions; the offline generator reports exactly these.
    pub regions: Vec<Region>,
}

impl VlmInputSet {
    pub fn ordered_images(&self) -> Vec<&[u8]> {
        let mut v: Vec<&[u8]> =
            vec![&self.pct_map_png, &self.tsr_map_png, &self.ppt_map_png, &self.consensus_png];
        if let Some(o) = &self.optical_png {
            v.push(o);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub modality: ReportModality,
    pub location_text: String,
    pub physical_interpretation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Authenticity {
    pub observations: Vec<String>,
    pub hypotheses: Vec<String>,
    pub disclaimer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectEntry {
    pub location: String,
    pub supporting_modalities: Vec<ReportModality>,
    pub tentative_cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredReport {
    pub s1_findings: Vec<Finding>,
    pub s2_authenticity: Authenticity,
    pub s3_defects: Vec<DefectEntry>,
    /// Section 3 explicitly states that no consensus anomaly was found.
    pub s3_none_reported: bool,
    pub raw_text: String,
}

impl StructuredReport {
    /// Checks every schema invariant, naming the first one that fails.
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error::Schema;
        if self.s1_findings.is_empty() {
            return Err(Schema("section 1 has no per-modality findings".into()));
        }
        let s2 = &self.s2_authenticity;
        if !parse::is_disclaimer(&s2.disclaimer) {
            return Err(Schema("section 2 lacks the authenticity disclaimer".into()));
        }
        if self.s3_defects.is_empty() && !self.s3_none_reported {
            return Err(Schema("section 3 is empty".into()));
        }
        for (i, d) in self.s3_defects.iter().enumerate() {
            if d.supporting_modalities.is_empty() {
                return Err(Schema(format!("section 3 entry {} lists no supporting modality", i + 1)));
            }
            if d.location.trim().is_empty() {
                return Err(Schema(format!("section 3 entry {} has no location", i + 1)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
