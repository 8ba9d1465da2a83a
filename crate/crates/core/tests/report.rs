use std::collections::BTreeMap;

use thermo_core::detect::{BBox, Modality, Region};
use thermo_core::fusion::MetricsRecord;
use thermo_core::report::{
    build_prompt, generate_offline_report, location_phrase, parse_report, PromptSpec, ReportModality,
    DISCLAIMER,
};
use thermo_core::Error;

const SAMPLE: &str = include_str!("fixtures/sample_report.md");

fn metrics(regions: usize) -> MetricsRecord {
    MetricsRecord {
        roi_width: 90,
        roi_height: 90,
        mask_areas_percent: BTreeMap::from([
            (Modality::PctMag, 1.0),
            (Modality::TsrSlope, 5.68),
            (Modality::PptAmp, 1.0),
            (Modality::PptPhaseEdge, 5.0),
        ]),
        consensus_area_percent: 8.84,
        consensus_regions: regions,
        t0: 56,
        t_peak: 124,
        base_median_min: 0.18,
        base_median_max: 6.55,
        representative_pc: None,
    }
}

fn region(label: u32, cx: f64, cy: f64, mean_z: f64) -> Region {
    Region {
        label,
        area: 9,
        bbox: BBox { x0: cx as usize - 1, y0: cy as usize - 1, w: 3, h: 3 },
        centroid: (cx, cy),
        mean_z,
    }
}

#[test]
fn sample_report_parses() {
    let r = parse_report(SAMPLE).unwrap();
    let mods: Vec<ReportModality> = r.s1_findings.iter().map(|f| f.modality).collect();
    assert_eq!(
        mods,
        [ReportModality::Pct, ReportModality::Ppt, ReportModality::Tsr, ReportModality::Consensus]
    );
    assert!(r.s1_findings[0].location_text.contains("along the edges of the painting"));
    assert_eq!(r.s3_defects.len(), 1);
    let d = &r.s3_defects[0];
    assert!(d.location.contains("Lower left region"), "{}", d.location);
    assert_eq!(
        d.supporting_modalities,
        [ReportModality::Pct, ReportModality::Ppt, ReportModality::Consensus]
    );
    assert!(d.tentative_cause.starts_with("Possible retouching"));
    assert!(r.s2_authenticity.disclaimer.contains("does not provide definitive evidence"));
    assert!(!r.s2_authenticity.hypotheses.is_empty());
    assert_eq!(r.raw_text, SAMPLE);
}

#[test]
fn missing_authenticity_section_is_named() {
    let cut: String = SAMPLE.split("**2. Authenticity").next().unwrap().to_string()
        + &SAMPLE[SAMPLE.find("**3.").unwrap()..];
    match parse_report(&cut) {
        Err(Error::MissingSection(s)) => assert_eq!(s, "Authenticity Assessment"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_section_three_is_rejected() {
    let text = SAMPLE[..SAMPLE.find("*Location*").unwrap()].to_string();
    assert!(matches!(parse_report(&text), Err(Error::Schema(_))));
}

#[test]
fn missing_disclaimer_is_rejected() {
    let text = "# 1. Thermal Output Analysis\n- PCT: uniform\n# 2. Authenticity Assessment\n- Observation: edges are warm.\n# 3. Defect Locations and Likely Causes\n- Location: edge; Supporting modalities: PCT; Tentative cause: heat loss\n";
    let err = parse_report(text).unwrap_err().to_string();
    assert!(err.contains("disclaimer"), "{err}");
}

#[test]
fn offline_report_round_trips() {
    let regions = vec![region(1, 5.0, 5.0, 2.5), region(2, 45.0, 45.0, -2.1), region(3, 80.0, 40.0, 0.0)];
    let text = generate_offline_report(&metrics(3), &regions);
    assert_eq!(text, generate_offline_report(&metrics(3), &regions));
    let r = parse_report(&text).unwrap();
    assert_eq!(r.s1_findings.len(), 4);
    assert_eq!(r.s3_defects.len(), 3);
    assert!(r.s3_defects[0].location.starts_with("upper-left region"));
    assert!(r.s3_defects[1].location.starts_with("center region"));
    assert!(r.s3_defects[2].location.starts_with("center-right region"));
    assert_ne!(r.s3_defects[0].tentative_cause, r.s3_defects[1].tentative_cause);
    assert_eq!(r.s2_authenticity.disclaimer, DISCLAIMER);
    assert_eq!(r.s2_authenticity.observations.len(), 1);
    assert_eq!(r.s2_authenticity.hypotheses.len(), 1);
}

#[test]
fn no_regions_gives_single_sentinel_bullet() {
    let text = generate_offline_report(&metrics(0), &[]);
    let s3 = &text[text.find("## 3.").unwrap()..];
    assert_eq!(s3.lines().filter(|l| l.starts_with("- ")).count(), 1);
    assert!(s3.to_lowercase().contains("no consensus anomalies detected"));
    let r = parse_report(&text).unwrap();
    assert!(r.s3_none_reported);
    assert!(r.s3_defects.is_empty());
}

#[test]
fn grid_phrase_for_top_left_ninth() {
    assert_eq!(location_phrase(10.0, 10.0, 90, 90), "upper-left region");
    assert_eq!(location_phrase(85.0, 85.0, 90, 90), "lower-right region");
}

#[test]
fn prompt_embeds_evidence() {
    let p = build_prompt(&metrics(8), &PromptSpec::default()).unwrap();
    assert!(p.contains("8.84") && p.contains("8 regions"));
    assert!(p.contains("t0 = 56") && p.contains("t_peak = 124"));
    assert!(p.contains(DISCLAIMER));
}

#[test]
fn header_styles_are_tolerated() {
    let body = |h1: &str, h2: &str, h3: &str| {
        format!(
            "{h1}\n- PCT: uniform\n{h2}\n{DISCLAIMER}\n{h3}\n- Location: edge; Supporting modalities: TSR; Tentative cause: heat loss\n"
        )
    };
    for (a, b, c) in [
        ("1. Thermal Output Analysis", "2. Authenticity Assessment", "3. Defect Locations and Likely Causes"),
        (
            "**1. Thermal Output Analysis**",
            "**2. Authenticity Assessment**",
            "**3. Defect Locations and Likely Causes**",
        ),
        (
            "### Thermal Output Analysis",
            "### Authenticity Assessment",
            "### Defect Locations and Likely Causes",
        ),
        (
            "## S1: Thermal Output Analysis",
            "## S2: Authenticity Assessment",
            "## S3: Defect Locations and Likely Causes",
        ),
    ] {
        let r = parse_report(&body(a, b, c)).unwrap();
        assert_eq!(r.s3_defects[0].supporting_modalities, [ReportModality::Tsr]);
    }
}
