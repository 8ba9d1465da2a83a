use std::fmt::Write as _;

use super::{DISCLAIMER, SECTION_TITLES};
use crate::detect::{Modality, Region};
use crate::fusion::{regions_phrase, MetricsRecord};

pub(crate) const NO_ANOMALY_BULLET: &str = "No consensus anomalies detected.";

/// Location phrase for a point in a `width` x `height` ROI on a 3x3 grid.
pub fn location_phrase(x: f64, y: f64, width: usize, height: usize) -> String {
    let cell = |v: f64, n: usize| -> usize {
        if n == 0 {
            return 1;
        }
        ((3.0 * v / n as f64).floor().max(0.0) as usize).min(2)
    };
    let row = ["upper", "middle", "lower"][cell(y, height)];
    let col = ["left", "center", "right"][cell(x, width)];
    let phrase = match (row, col) {
        ("middle", "center") => "center".to_string(),
        ("middle", c) => format!("center-{c}"),
        (r, c) => format!("{r}-{c}"),
    };
    format!("{phrase} region")
}

fn cause_for(mean_z: f64) -> &'static str {
    if mean_z > 0.0 {
        "locally elevated thermal response, which may indicate a subsurface void, delamination or loss of adhesion"
    } else if mean_z < 0.0 {
        "locally reduced thermal response, which may indicate a denser fill, retouching material or a local change in thickness"
    } else {
        "thermal contrast of indeterminate sign, which may reflect material heterogeneity in the paint or ground layers"
    }
}

fn area(metrics: &MetricsRecord, m: Modality) -> Option<f64> {
    metrics.mask_areas_percent.get(&m).copied()
}

fn fmt_area(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"))
}

/// Deterministic three-section report with one section-3 bullet per region.
pub fn generate_offline_report(metrics: &MetricsRecord, regions: &[Region]) -> String {
    let (w, h) = (metrics.roi_width, metrics.roi_height);
    let mut r = String::new();

    let _ = writeln!(r, "## 1. {}\n", SECTION_TITLES[0]);
    let _ = writeln!(
        r,
        "- **PCT**: Location: anomaly mask covers {} of the ROI. Interpretation: pixels whose \
         principal-component response departs from the dominant cooling pattern.",
        fmt_area(area(metrics, Modality::PctMag))
    );
    let _ = writeln!(
        r,
        "- **PPT**: Location: amplitude mask covers {} and phase-edge mask covers {} of the ROI. \
         Interpretation: phase discontinuities at the selected frequency, consistent with changes \
         in subsurface thermal properties.",
        fmt_area(area(metrics, Modality::PptAmp)),
        fmt_area(area(metrics, Modality::PptPhaseEdge))
    );
    let _ = writeln!(
        r,
        "- **TSR**: Location: slope mask covers {} of the ROI. Interpretation: cooling rates that \
         deviate from one-dimensional diffusion.",
        fmt_area(area(metrics, Modality::TsrSlope))
    );
    let _ = writeln!(
        r,
        "- **Consensus**: Location: {:.2}% of the ROI in {}. Interpretation: anomalies \
         supported by more than one modality.\n",
        metrics.consensus_area_percent,
        regions_phrase(metrics.consensus_regions)
    );

    let _ = writeln!(r, "## 2. {}\n", SECTION_TITLES[1]);
    let _ = writeln!(
        r,
        "- Observation: the consensus mask covers {:.2}% of the {} x {} px ROI in {}; \
         pulse onset at frame {}, peak at frame {}.",
        metrics.consensus_area_percent,
        w,
        h,
        regions_phrase(metrics.consensus_regions),
        metrics.t0,
        metrics.t_peak
    );
    if regions.is_empty() {
        let _ = writeln!(
            r,
            "- Hypothesis: the absence of consensus anomalies is compatible with a homogeneous \
             structure, although defects below the detection limit cannot be excluded."
        );
    } else {
        let _ = writeln!(
            r,
            "- Hypothesis: localized anomalies may reflect past interventions or material \
             heterogeneity; confirmation with complementary imaging and material analysis is required."
        );
    }
    let _ = writeln!(r, "- {DISCLAIMER}\n");

    let _ = writeln!(r, "## 3. {}\n", SECTION_TITLES[2]);
    if regions.is_empty() {
        let _ = writeln!(r, "- {NO_ANOMALY_BULLET}");
    }
    for reg in regions {
        let b = &reg.bbox;
        let _ = writeln!(
            r,
            "- Location: {} (x {}-{}, y {}-{}, {} px); Supporting modalities: TSR, PPT, Consensus; \
             Tentative cause: {}.",
            location_phrase(reg.centroid.0, reg.centroid.1, w, h),
            b.x0,
            b.x0 + b.w.saturating_sub(1),
            b.y0,
            b.y0 + b.h.saturating_sub(1),
            reg.area,
            cause_for(reg.mean_z)
        );
    }
    r
}
