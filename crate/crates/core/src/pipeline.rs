//! End-to-end orchestration: preprocessing, the three feature modalities,
//! detection, fusion, metrics, rendering and the report stage.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cube_io::{crop, read_cube, write_cube, OpticalImage, PngRender, Roi, ThermalCube};
use crate::detect::{
    dice, filter_small, label_regions, standardize, suppress_border, threshold_percentile, threshold_z,
    AnomalyMask, DetectConfig, FeatureMap, MaskRle, MaskSource, Modality, Tail, ZMode,
};
use crate::error::{Error, Result};
use crate::fusion::{
    fuse_consensus, select_representative_pc, summarize, ConsensusResult, FusionConfig, MetricsRecord,
};
use crate::pct::{pct_decompose, pct_magnitude, DEFAULT_COMPONENTS};
use crate::ppt::{ppt_spectrum, ppt_transform};
use crate::preprocess::{
    base_median_range, detect_pulse, repair_nonfinite, smooth_sg_from, subtract_baseline, PreprocessConfig,
    PulseTiming,
};
use crate::report::{build_prompt, call_vlm, parse_report, EndpointConfig, PromptSpec, VlmInputSet};
use crate::synth::{generate, SynthSpec};
use crate::tsr::{default_eval_time, tsr_fit, TsrConfig};

/// `"full"` or an explicit window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoiSpec {
    Named(String),
    Window(Roi),
}

impl Default for RoiSpec {
    fn default() -> Self {
        RoiSpec::Named("full".into())
    }
}

impl RoiSpec {
    fn resolve(&self, cube: &ThermalCube) -> Result<Roi> {
        match self {
            RoiSpec::Named(s) if s == "full" => Ok(Roi::full(cube)),
            RoiSpec::Named(s) => Err(Error::InvalidConfig(format!("unknown roi {s:?}"))),
            RoiSpec::Window(r) => {
                r.validate_for(cube.width(), cube.height())?;
                Ok(*r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub roi: RoiSpec,
    pub preprocess: PreprocessConfig,
    pub pct_k: usize,
    pub tsr: TsrConfig,
    /// Frequency bin of the phase and amplitude maps.
    pub ppt_bin: usize,
    pub detect: DetectConfig,
    pub fusion: FusionConfig,
    pub report: EndpointConfig,
    pub output_dir: PathBuf,
    /// Also write the full post-pulse spectrum.
    pub dump_spectrum: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            roi: RoiSpec::default(),
            preprocess: PreprocessConfig::default(),
            pct_k: DEFAULT_COMPONENTS,
            tsr: TsrConfig::default(),
            ppt_bin: 1,
            detect: DetectConfig::default(),
            fusion: FusionConfig::default(),
            report: EndpointConfig::default(),
            output_dir: PathBuf::from("thermo-out"),
            dump_spectrum: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    pub fn validate(&self) -> Result<()> {
        if let RoiSpec::Named(s) = &self.roi {
            if s != "full" {
                return Err(Error::InvalidConfig(format!("unknown roi {s:?}")));
            }
        }
        self.preprocess.validate()?;
        self.detect.validate()?;
        self.report.validate()?;
        if self.pct_k == 0 {
            return Err(Error::InvalidConfig("pct_k must be at least 1".into()));
        }
        if self.ppt_bin == 0 {
            return Err(Error::InvalidConfig("ppt_bin 0 is the DC term".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Which part of the run failed; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Input,
    Pipeline,
    Report,
}

#[derive(Debug, thiserror::Error)]
#[error("{source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    fn classify(source: Error) -> Self {
        let stage = if source.is_transport_error() {
            Stage::Report
        } else if source.is_input_error() {
            Stage::Input
        } else {
            Stage::Pipeline
        };
        Self { stage, source }
    }

    pub fn exit_code(&self) -> i32 {
        match self.stage {
            Stage::Input => 2,
            Stage::Pipeline => 3,
            Stage::Report => 4,
        }
    }
}

impl From<Error> for StageError {
    fn from(e: Error) -> Self {
        Self::classify(e)
    }
}

/// Everything computed from one cube, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub timing: PulseTiming,
    /// Named maps in render order.
    pub maps: Vec<(&'static str, FeatureMap)>,
    /// Thresholded masks, one per modality; their areas go in the metrics.
    pub masks: BTreeMap<Modality, AnomalyMask>,
    /// Border-suppressed, area-filtered fusion inputs.
    pub fusion_inputs: [AnomalyMask; 2],
    pub consensus: ConsensusResult,
    pub metrics: MetricsRecord,
}

impl Analysis {
    pub fn map(&self, name: &str) -> Option<&FeatureMap> {
        self.maps.iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }
}

fn zero_variance_empty(map: &FeatureMap, z: f64) -> Result<AnomalyMask> {
    match standardize(map) {
        Ok(s) => threshold_z(&s, z, ZMode::TwoSided),
        // A flat slope map carries no anomaly.
        Err(Error::ZeroVariance) => {
            let mut m = AnomalyMask::empty(map.width, map.height, MaskSource::Modality(map.modality));
            m.valid_pixels = map.valid_count();
            m.scores = Some(vec![0.0; map.values.len()]);
            Ok(m)
        }
        Err(e) => Err(e),
    }
}

/// Preprocessed cube and its pulse timing.
pub fn preprocess(
    cube: &ThermalCube,
    cfg: &PreprocessConfig,
) -> Result<(ThermalCube, PulseTiming, (f64, f64))> {
    let repaired = repair_nonfinite(cube)?;
    let timing = detect_pulse(&repaired, cfg)?;
    let base = base_median_range(&repaired, &timing)?;
    let shifted = subtract_baseline(&repaired, &timing)?;
    // Smoothing starts after the onset so the window never spans the step.
    let smoothed = smooth_sg_from(&shifted, cfg, timing.t0 + 1)?;
    Ok((smoothed, timing, base))
}

/// Runs detection and fusion on an ROI-cropped cube.
pub fn analyze_cube(cube: &ThermalCube, cfg: &PipelineConfig) -> Result<Analysis> {
    let (cube, timing, base) = preprocess(cube, &cfg.preprocess)?;
    let (w, h) = (cube.width(), cube.height());
    let post = timing.post_pulse_frames(cube.frames());

    let k = cfg.pct_k.min(w * h).min(post);
    let pct = pct_decompose(&cube, &timing, k)?;
    let eval_time = cfg.tsr.eval_time.unwrap_or_else(|| default_eval_time(post));
    let tsr = tsr_fit(&cube, &timing, cfg.tsr.degree, eval_time)?;
    let ppt = ppt_transform(&cube, &timing, cfg.ppt_bin)?;

    let d = &cfg.detect;
    let min_area = d.min_area_for(w, h);
    let margin = d.border_margin_for(w, h);
    let geometric = |m: &AnomalyMask| -> Result<AnomalyMask> {
        let labeled = label_regions(m, d.connectivity);
        suppress_border(&filter_small(&labeled, min_area), margin, min_area)
    };

    let tsr_mask = zero_variance_empty(&tsr.slope, d.tsr_slope_z)?;
    let edge_mask = threshold_percentile(&ppt.phase_gradient, d.phase_edge_percentile, Tail::Upper)?;
    let fusion_inputs = [geometric(&tsr_mask)?, geometric(&edge_mask)?];
    let consensus = fuse_consensus(&fusion_inputs[0], &fusion_inputs[1], d, &cfg.fusion)?;

    let rep = select_representative_pc(&pct, &consensus)?;
    let pct_mag = pct_magnitude(&pct, rep.component)?;
    let pct_mask = threshold_percentile(&pct_mag, d.pct_percentile, Tail::Upper)?;
    let amp_mask = threshold_percentile(&ppt.amplitude, d.ppt_amp_percentile, Tail::Upper)?;

    let masks = BTreeMap::from([
        (Modality::PctMag, pct_mask),
        (Modality::TsrSlope, tsr_mask),
        (Modality::PptAmp, amp_mask),
        (Modality::PptPhaseEdge, edge_mask),
    ]);
    let mut metrics = summarize(&consensus, &masks, &timing, base);
    metrics.representative_pc = Some(rep);

    let maps = vec![
        ("pct_component", pct.components[rep.component - 1].clone()),
        ("pct_magnitude", pct_mag),
        ("tsr_slope", tsr.slope),
        ("tsr_logamp", tsr.log_amplitude),
        ("tsr_residual", tsr.fit_residual_rms),
        ("ppt_amplitude", ppt.amplitude),
        ("ppt_phase", ppt.phase),
        ("ppt_phase_edge", ppt.phase_gradient),
    ];
    Ok(Analysis { timing, maps, masks, fusion_inputs, consensus, metrics })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn mask_name(m: Modality) -> &'static str {
    match m {
        Modality::PctMag => "pct_magnitude",
        Modality::TsrSlope => "tsr_slope",
        Modality::PptAmp => "ppt_amplitude",
        Modality::PptPhaseEdge => "ppt_phase_edge",
        _ => "other",
    }
}

/// Index of the cached map stack used by `export`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapIndex {
    pub names: Vec<String>,
    pub modalities: Vec<Modality>,
}

pub const MAP_STACK: &str = "maps.tcube";
pub const MAP_INDEX: &str = "maps_index.json";

fn write_map_stack(dir: &Path, maps: &[(&'static str, FeatureMap)]) -> Result<()> {
    let (w, h) = (maps[0].1.width, maps[0].1.height);
    let mut data = Vec::with_capacity(w * h * maps.len());
    for (_, m) in maps {
        data.extend(m.values.iter().zip(&m.valid).map(|(v, ok)| if *ok { *v } else { f64::NAN }));
    }
    // The stack needs at least 8 "frames"; pad with NaN.
    let frames = maps.len().max(8);
    data.resize(w * h * frames, f64::NAN);
    write_cube(&ThermalCube::new(w, h, frames, data)?.with_units("map"), dir.join(MAP_STACK))?;
    let index = MapIndex {
        names: maps.iter().map(|(n, _)| n.to_string()).collect(),
        modalities: maps.iter().map(|(_, m)| m.modality).collect(),
    };
    write(&dir.join(MAP_INDEX), serde_json::to_string_pretty(&index).expect("index") + "\n")
}

/// Reads the cached map stack written by `analyze`.
pub fn read_map_stack(dir: &Path) -> Result<Vec<(String, FeatureMap)>> {
    let index_path = dir.join(MAP_INDEX);
    let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: MapIndex =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: index_path.clone(), source })?;
    let stack = read_cube(dir.join(MAP_STACK))?;
    if stack.frames() < index.names.len() || index.names.len() != index.modalities.len() {
        return Err(Error::DimensionMismatch("map index does not match the cached stack".into()));
    }
    index
        .names
        .into_iter()
        .zip(index.modalities)
        .enumerate()
        .map(|(t, (name, modality))| {
            let values = stack.frame(t).to_vec();
            let valid = values.iter().map(|v| v.is_finite()).collect();
            let map = FeatureMap::new(stack.width(), stack.height(), values, modality)?.with_valid(valid)?;
            Ok((name, map))
        })
        .collect()
}

/// Re-renders the cached maps and masks of an `analyze` run into `out`.
pub fn run_export(run_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (name, map) in read_map_stack(run_dir)? {
        let p = out.join(format!("{name}.png"));
        write(&p, map.render_png(None)?)?;
        written.push(p);
    }
    let masks = run_dir.join("masks");
    if masks.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&masks)
            .map_err(|e| Error::io(&masks, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        for src in entries {
            let text = fs::read_to_string(&src).map_err(|e| Error::io(&src, e))?;
            let rle: MaskRle =
                serde_json::from_str(&text).map_err(|source| Error::Json { path: src.clone(), source })?;
            let mask = rle.decode(MaskSource::Consensus)?;
            let stem = src.file_stem().expect("file").to_string_lossy();
            let p = out.join(format!("{stem}_mask.png"));
            write(&p, mask.render_png(None)?)?;
            written.push(p);
        }
    }
    Ok(written)
}

/// Summary of a completed `analyze` run.
#[derive(Debug, Clone)]
pub struct AnalyzeOutcome {
    pub output_dir: PathBuf,
    pub metrics: MetricsRecord,
    pub report_valid: bool,
}

fn load_optical(path: Option<&Path>, full: (usize, usize), roi: Roi) -> Result<Option<OpticalImage>> {
    let Some(path) = path else { return Ok(None) };
    let img = OpticalImage::read(path)?;
    if (img.width, img.height) == (roi.w, roi.h) {
        Ok(Some(img))
    } else if (img.width, img.height) == full {
        Ok(Some(img.crop(roi)?))
    } else {
        Err(Error::DimensionMismatch(format!(
            "optical image is {}x{}, expected {}x{} (ROI) or {}x{} (full frame)",
            img.width, img.height, roi.w, roi.h, full.0, full.1
        )))
    }
}

/// Full `analyze` run. Pipeline artifacts are on disk before the report
/// stage starts, so a transport failure leaves them intact.
pub fn run_analyze(
    cube_path: &Path,
    cfg: &PipelineConfig,
    optical_path: Option<&Path>,
) -> std::result::Result<AnalyzeOutcome, StageError> {
    let input = |e: Error| StageError { stage: Stage::Input, source: e };
    cfg.validate().map_err(input)?;
    let raw = read_cube(cube_path).map_err(input)?;
    let roi = cfg.roi.resolve(&raw).map_err(input)?;
    let optical = load_optical(optical_path, (raw.width(), raw.height()), roi).map_err(input)?;
    let cube = crop(&raw, roi).map_err(input)?;

    let analysis = analyze_cube(&cube, cfg)?;

    let dir = cfg.output_dir.as_path();
    let maps_dir = dir.join("maps");
    let masks_dir = dir.join("masks");
    for d in [dir, &maps_dir, &masks_dir] {
        fs::create_dir_all(d).map_err(|e| input(Error::io(d, e)))?;
    }
    let mut pngs: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for (name, map) in &analysis.maps {
        let png = map.render_png(None)?;
        write(&maps_dir.join(format!("{name}.png")), &png)?;
        pngs.insert(name, png);
    }
    let mut all_masks: Vec<(String, &AnomalyMask)> =
        analysis.masks.iter().map(|(m, mask)| (mask_name(*m).to_string(), mask)).collect();
    all_masks.push(("tsr_slope_filtered".into(), &analysis.fusion_inputs[0]));
    all_masks.push(("ppt_phase_edge_filtered".into(), &analysis.fusion_inputs[1]));
    all_masks.push(("consensus".into(), &analysis.consensus.mask));
    let mut consensus_png = Vec::new();
    for (name, mask) in all_masks {
        let png = mask.render_png(optical.as_ref())?;
        write(&masks_dir.join(format!("{name}.png")), &png)?;
        let rle = serde_json::to_string(&MaskRle::encode(mask)).expect("rle") + "\n";
        write(&masks_dir.join(format!("{name}.json")), rle)?;
        if name == "consensus" {
            consensus_png = png;
        }
    }
    write_map_stack(dir, &analysis.maps)?;
    if cfg.dump_spectrum {
        let (pre, timing, _) = preprocess(&cube, &cfg.preprocess)?;
        ppt_spectrum(&pre, &timing)?.write(dir.join("spectrum.tcube"))?;
    }

    let metrics = &analysis.metrics;
    write(&dir.join("metrics.json"), metrics.to_json())?;
    write(&dir.join("metrics.md"), metrics.to_markdown())?;
    let prompt = build_prompt(metrics, &PromptSpec::default())?;
    write(&dir.join("prompt.txt"), &prompt)?;

    let vlm_input = VlmInputSet {
        pct_map_png: pngs["pct_component"].clone(),
        tsr_map_png: pngs["tsr_slope"].clone(),
        ppt_map_png: pngs["ppt_phase"].clone(),
        consensus_png,
        optical_png: optical.as_ref().map(|o| o.to_png()).transpose()?,
        metrics: metrics.clone(),
        regions: analysis.consensus.mask.regions.clone(),
    };
    let report_err = |e: Error| StageError { stage: Stage::Report, source: e };
    let raw_report = call_vlm(&vlm_input, &prompt, &cfg.report).map_err(report_err)?;
    write(&dir.join("report.md"), &raw_report)?;
    let parsed = parse_report(&raw_report).map_err(report_err)?;
    write(&dir.join("report.json"), parsed.to_json())?;

    Ok(AnalyzeOutcome { output_dir: dir.to_path_buf(), metrics: metrics.clone(), report_valid: true })
}

/// Writes a synthetic cube to `out` and its ground truth to `gt.json` alongside.
pub fn run_synth(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    let (cube, gt) = generate(spec)?;
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let gt_path = parent.join("gt.json");
    if crate::cube_io::sidecar_path(out) == gt_path {
        return Err(Error::InvalidConfig("output name `gt` would collide with gt.json".into()));
    }
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    write_cube(&cube, out)?;
    write(&gt_path, serde_json::to_string(&MaskRle::encode(&gt)).expect("rle") + "\n")?;
    Ok(gt_path)
}

/// Consensus-vs-truth agreement, pixel- and region-level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dice: f64,
    pub precision: f64,
    pub recall: f64,
    pub consensus_regions: usize,
    pub truth_regions: usize,
    /// Truth regions touched by at least one consensus pixel.
    pub truth_regions_detected: usize,
    pub region_recall: f64,
}

pub fn evaluate(consensus: &AnomalyMask, truth: &AnomalyMask) -> Result<EvalReport> {
    if !consensus.same_shape(truth) {
        return Err(Error::DimensionMismatch(format!(
            "truth is {}x{}, consensus is {}x{}",
            truth.width, truth.height, consensus.width, consensus.height
        )));
    }
    let tp = consensus.bits.iter().zip(&truth.bits).filter(|(a, b)| **a && **b).count();
    let (np, nt) = (consensus.count(), truth.count());
    let ratio = |a: usize, b: usize, empty: f64| if b == 0 { empty } else { a as f64 / b as f64 };
    let truth = label_regions(truth, crate::detect::Connectivity::Eight);
    let detected = (1..=truth.regions.len() as u32)
        .filter(|&l| truth.labels.iter().zip(&consensus.bits).any(|(tl, c)| *tl == l && *c))
        .count();
    Ok(EvalReport {
        dice: dice(&consensus.bits, &truth.bits),
        precision: ratio(tp, np, if nt == 0 { 1.0 } else { 0.0 }),
        recall: ratio(tp, nt, 1.0),
        consensus_regions: consensus.regions.len(),
        truth_regions: truth.regions.len(),
        truth_regions_detected: detected,
        region_recall: ratio(detected, truth.regions.len(), 1.0),
    })
}

/// Runs detection and fusion and scores the consensus against `gt_path`.
pub fn run_eval(cube_path: &Path, gt_path: &Path, cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let raw = read_cube(cube_path)?;
    let roi = cfg.roi.resolve(&raw)?;
    let text = fs::read_to_string(gt_path).map_err(|e| Error::io(gt_path, e))?;
    let rle: MaskRle =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: gt_path.to_path_buf(), source })?;
    let mut truth = rle.decode(MaskSource::GroundTruth)?;
    if (truth.width, truth.height) == (raw.width(), raw.height())
        && (roi.w, roi.h) != (raw.width(), raw.height())
    {
        let bits = (0..roi.w * roi.h)
            .map(|i| truth.bits[(roi.y0 + i / roi.w) * raw.width() + roi.x0 + i % roi.w])
            .collect();
        truth = AnomalyMask::new(roi.w, roi.h, bits, MaskSource::GroundTruth)?;
    }
    let analysis = analyze_cube(&crop(&raw, roi)?, cfg)?;
    evaluate(&analysis.consensus.mask, &truth)
}
