//! Library results checked against the independent implementations in `common`.

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use thermo_core::cube_io::ThermalCube;
use thermo_core::detect::{
    filter_small, label_regions, mask_area_percent, standardize, suppress_border, threshold_percentile,
    threshold_z, AnomalyMask, Connectivity, DetectConfig, FeatureMap, MaskSource, Modality, Tail, ZMode,
};
use thermo_core::fusion::{
    contrast_to_noise, fuse_consensus, select_representative_pc, summarize, FusionConfig,
};
use thermo_core::pct::{pct_decompose, pct_magnitude};
use thermo_core::ppt::{ppt_spectrum, ppt_transform};
use thermo_core::preprocess::{detect_pulse, PreprocessConfig, PulseTiming};
use thermo_core::savgol::SavGol;
use thermo_core::synth::{generate, SynthSpec};
use thermo_core::tsr::{tsr_fit, LogLogFit};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_map(r: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureMap {
    let v = (0..w * h).map(|_| r.random::<f64>() * 10.0 - 3.0).collect();
    FeatureMap::new(w, h, v, Modality::PptAmp).unwrap()
}

fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize, density: f64, m: Modality) -> AnomalyMask {
    let bits = (0..w * h).map(|_| r.random::<f64>() < density).collect();
    AnomalyMask::new(w, h, bits, MaskSource::Modality(m)).unwrap()
}

#[test]
fn standardize_matches_two_pass() {
    let mut r = rng(1);
    for _ in 0..20 {
        let map = random_map(&mut r, 23, 17);
        let (mean, sd) = common::mean_std(&map.values);
        let z = standardize(&map).unwrap();
        for (a, v) in z.values.iter().zip(&map.values) {
            assert!((a - (v - mean) / sd).abs() < 1e-9);
        }
    }
}

#[test]
fn standardize_worked_example() {
    let map = FeatureMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], Modality::TsrSlope).unwrap();
    let z = standardize(&map).unwrap();
    for (a, e) in z.values.iter().zip([-1.3416, -0.4472, 0.4472, 1.3416]) {
        assert!((a - e).abs() < 1e-4);
    }
}

#[test]
fn percentile_mask_matches_sort_oracle() {
    let mut r = rng(2);
    for p in [90.0, 95.0, 97.5, 99.0] {
        let map = random_map(&mut r, 40, 30);
        let cut = common::sort_percentile(&map.values, p);
        let mask = threshold_percentile(&map, p, Tail::Upper).unwrap();
        let expect: Vec<bool> = map.values.iter().map(|v| *v > cut).collect();
        assert_eq!(mask.bits, expect, "p = {p}");
    }
}

#[test]
fn z_threshold_tail_fraction() {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(3);
    let v: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut r)).collect();
    let map = standardize(&FeatureMap::new(100, 100, v, Modality::TsrSlope).unwrap()).unwrap();
    let frac = threshold_z(&map, 2.0, ZMode::TwoSided).unwrap().count() as f64 / 10_000.0;
    // Two-sided normal tail beyond 2 sigma.
    assert!((frac - 0.0455).abs() < 0.01, "{frac}");
}

#[test]
fn labeling_matches_flood_fill() {
    let mut r = rng(4);
    for i in 0..200 {
        let m = random_mask(&mut r, 32, 32, 0.2 + 0.3 * (i % 3) as f64 / 2.0, Modality::TsrSlope);
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let l = label_regions(&m, conn);
            let expect = common::flood_fill(&m.bits, 32, 32, eight);
            assert_eq!(common::regions_from_labels(&l.labels, l.regions.len()), expect);
            for (reg, members) in l.regions.iter().zip(&expect) {
                assert_eq!(reg.area, members.len());
            }
        }
    }
}

#[test]
fn filter_and_border_match_oracles() {
    let mut r = rng(5);
    for _ in 0..100 {
        let m = random_mask(&mut r, 30, 26, 0.35, Modality::TsrSlope);
        let min_area = r.random_range(1..12);
        let f = filter_small(&label_regions(&m, Connectivity::Eight), min_area);
        assert_eq!(f.bits, common::filter_oracle(&m.bits, 30, 26, true, min_area));
        let margin = r.random_range(0..6);
        let b = suppress_border(&m, margin, min_area).unwrap();
        assert_eq!(b.bits, common::border_oracle(&m.bits, 30, 26, margin, min_area));
    }
}

#[test]
fn area_matches_popcount() {
    let mut r = rng(6);
    for _ in 0..50 {
        let density = r.random::<f64>();
        let mut m = random_mask(&mut r, 50, 40, density, Modality::PctMag);
        m.valid_pixels = 2000;
        let pop = m.bits.iter().filter(|b| **b).count();
        let expect = (100.0 * pop as f64 / 2000.0 * 100.0).round() / 100.0;
        assert_eq!(mask_area_percent(&m), expect);
    }
}

#[test]
fn consensus_matches_neighbourhood_scan() {
    let mut r = rng(7);
    for i in 0..100 {
        let a = random_mask(&mut r, 28, 24, 0.15, Modality::TsrSlope);
        let b = random_mask(&mut r, 28, 24, 0.15, Modality::PptPhaseEdge);
        let radius = i % 3;
        let detect = DetectConfig { min_area: Some(1), ..Default::default() };
        let c = fuse_consensus(&a, &b, &detect, &FusionConfig { dilation_r: radius }).unwrap();
        assert_eq!(c.mask.bits, common::consensus_scan(&a.bits, &b.bits, 28, 24, radius));
        let detect = DetectConfig { min_area: Some(4), ..Default::default() };
        let c = fuse_consensus(&a, &b, &detect, &FusionConfig { dilation_r: radius }).unwrap();
        let scan = common::consensus_scan(&a.bits, &b.bits, 28, 24, radius);
        assert_eq!(c.mask.bits, common::filter_oracle(&scan, 28, 24, true, 4));
    }
}

#[test]
fn summarize_matches_recount() {
    let mut r = rng(8);
    for _ in 0..20 {
        let masks: BTreeMap<Modality, AnomalyMask> =
            [Modality::PctMag, Modality::TsrSlope, Modality::PptAmp, Modality::PptPhaseEdge]
                .into_iter()
                .map(|m| (m, random_mask(&mut r, 20, 20, 0.1, m)))
                .collect();
        let c = fuse_consensus(
            &masks[&Modality::TsrSlope],
            &masks[&Modality::PptPhaseEdge],
            &DetectConfig::default(),
            &FusionConfig::default(),
        )
        .unwrap();
        let rec = summarize(&c, &masks, &PulseTiming { t0: 5, t_peak: 6 }, (0.1, 0.2));
        for (m, mask) in &masks {
            let pop = mask.bits.iter().filter(|b| **b).count() as f64;
            assert_eq!(rec.mask_areas_percent[m], (pop / 400.0 * 10000.0).round() / 100.0);
        }
        let cons = common::filter_oracle(
            &common::consensus_scan(
                &masks[&Modality::TsrSlope].bits,
                &masks[&Modality::PptPhaseEdge].bits,
                20,
                20,
                1,
            ),
            20,
            20,
            true,
            8,
        );
        assert_eq!(rec.consensus_regions, common::flood_fill(&cons, 20, 20, true).len());
    }
}

#[test]
fn representative_pc_matches_score_table() {
    let mut r = rng(9);
    for _ in 0..10 {
        let cube = ThermalCube::from_fn(12, 10, 40, |_, _, t| if t <= 8 { 0.0 } else { 1.0 }).unwrap();
        let noisy: Vec<f64> = cube.data().iter().map(|v| v + r.random::<f64>()).collect();
        let cube = cube.with_data(noisy).unwrap();
        let timing = PulseTiming { t0: 8, t_peak: 9 };
        let pct = pct_decompose(&cube, &timing, 4).unwrap();
        let m = random_mask(&mut r, 12, 10, 0.2, Modality::TsrSlope);
        let c = fuse_consensus(
            &m,
            &m,
            &DetectConfig { min_area: Some(1), ..Default::default() },
            &FusionConfig::default(),
        )
        .unwrap();
        let rows: Vec<(f64, f64)> = (1..=4)
            .map(|i| {
                let mag = pct_magnitude(&pct, i).unwrap();
                let cut = common::sort_percentile(&mag.values, 99.0);
                let top: Vec<bool> = mag.values.iter().map(|v| *v > cut).collect();
                (contrast_to_noise(&mag, &c.mask), common::dice(&top, &c.mask.bits))
            })
            .collect();
        let max_cnr = rows.iter().map(|r| r.0).fold(0.0, f64::max);
        let scores: Vec<f64> = rows.iter().map(|(cnr, ov)| 0.5 * cnr / max_cnr + 0.5 * ov).collect();
        let best = (0..4).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        let sel = select_representative_pc(&pct, &c).unwrap();
        assert_eq!(sel.component, best + 1);
        assert!((sel.score - scores[best]).abs() < 1e-12);
    }
}

#[test]
fn pct_matches_eigendecomposition() {
    let mut r = rng(10);
    let (w, h, frames) = (8, 8, 32);
    let data: Vec<f64> = (0..w * h * frames).map(|_| r.random::<f64>()).collect();
    let cube = ThermalCube::new(w, h, frames, data).unwrap();
    let timing = PulseTiming { t0: 4, t_peak: 5 };
    let pct = pct_decompose(&cube, &timing, 5).unwrap();

    // Column-centred matrix, then eigenvectors of A A^T.
    let n = w * h;
    let cols: Vec<Vec<f64>> = (timing.t0 + 1..frames)
        .map(|t| {
            let f = cube.frame(t);
            let mean = f.iter().sum::<f64>() / n as f64;
            f.iter().map(|v| v - mean).collect()
        })
        .collect();
    let mut aat = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            aat[i * n + j] = cols.iter().map(|c| c[i] * c[j]).sum();
        }
    }
    let (vals, vecs) = common::jacobi_eigen(&aat, n);
    for k in 0..5 {
        assert!((pct.singular_values[k] - vals[k].sqrt()).abs() < 1e-8 * vals[0].sqrt());
        let dot: f64 = pct.components[k].values.iter().zip(&vecs[k]).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-6, "component {k}: |dot| = {}", dot.abs());
    }
}

#[test]
fn spectrum_matches_naive_dft() {
    let mut r = rng(11);
    let cube = ThermalCube::from_fn(6, 5, 40, |_, _, _| 0.0).unwrap();
    let data: Vec<f64> = cube.data().iter().map(|_| r.random::<f64>() - 0.5).collect();
    let cube = cube.with_data(data).unwrap();
    let timing = PulseTiming { t0: 7, t_peak: 8 };
    let spec = ppt_spectrum(&cube, &timing).unwrap();
    for p in 0..30 {
        let series: Vec<f64> = (timing.t0 + 1..40).map(|t| cube.frame(t)[p]).collect();
        let dft = common::naive_dft(&series);
        for (k, (re, im)) in dft.iter().enumerate() {
            let c = spec.bin(p, k);
            let scale = re.hypot(*im).max(1e-12);
            assert!((c.re - re).hypot(c.im - im) / scale < 1e-9);
        }
    }
    let ppt = ppt_transform(&cube, &timing, 2).unwrap();
    for p in 0..30 {
        let c = spec.bin(p, 2);
        assert!((ppt.amplitude.values[p] - c.norm()).abs() < 1e-12);
    }
}

#[test]
fn tsr_matches_normal_equations() {
    let mut r = rng(12);
    let t0 = 5;
    let cube = ThermalCube::from_fn(4, 4, 70, |x, y, t| {
        if t <= t0 {
            0.0
        } else {
            (1.0 + x as f64 + y as f64) * ((t - t0) as f64).powf(-0.4)
        }
    })
    .unwrap();
    let data: Vec<f64> = cube.data().iter().map(|v| v * (1.0 + 0.01 * r.random::<f64>())).collect();
    let cube = cube.with_data(data).unwrap();
    let timing = PulseTiming { t0, t_peak: t0 + 1 };
    let res = tsr_fit(&cube, &timing, 4, 8).unwrap();
    let n = 70 - t0 - 1;
    let x: Vec<f64> = (1..=n).map(|t| (t as f64).ln()).collect();
    for p in 0..16 {
        let y: Vec<f64> = (t0 + 1..70).map(|t| cube.frame(t)[p].ln()).collect();
        let c = common::polyfit_normal(&x, &y, 4);
        let lt = 8f64.ln();
        let slope: f64 = (1..c.len()).map(|i| i as f64 * c[i] * lt.powi(i as i32 - 1)).sum();
        let value: f64 = (0..c.len()).map(|i| c[i] * lt.powi(i as i32)).sum();
        assert!((res.slope.values[p] - slope).abs() < 1e-6);
        assert!((res.log_amplitude.values[p] - value).abs() < 1e-6);
    }
    // The shared operator agrees with the oracle coefficients directly.
    let fit = LogLogFit::new(n, 4).unwrap();
    let y: Vec<f64> = x.iter().map(|l| 0.3 - 0.5 * l + 0.02 * l * l).collect();
    for (a, b) in fit.coefficients(&y).iter().zip(common::polyfit_normal(&x, &y, 4)) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn savgol_matches_window_least_squares() {
    let mut r = rng(13);
    let x: Vec<f64> = (0..40).map(|_| r.random::<f64>()).collect();
    for (window, order) in [(5, 2), (7, 3), (9, 4)] {
        let sg = SavGol::new(window, order).unwrap();
        let mut out = vec![0.0; x.len()];
        sg.apply(&x, &mut out).unwrap();
        let half = window / 2;
        for (i, o) in out.iter().enumerate() {
            // Interior: centre of its own window. Edges: evaluate the first/last full window's fit.
            let start = i.saturating_sub(half).min(x.len() - window);
            let ts: Vec<f64> = (0..window).map(|k| k as f64 - half as f64).collect();
            let c = common::polyfit_normal(&ts, &x[start..start + window], order);
            let at = i as f64 - (start + half) as f64;
            let fit: f64 = c.iter().enumerate().map(|(k, ck)| ck * at.powi(k as i32)).sum();
            assert!((o - fit).abs() < 1e-9, "w{window} o{order} i{i}");
        }
    }
}

#[test]
fn pulse_detection_on_planted_onsets() {
    let mut hits = 0;
    for seed in 0..30u64 {
        let t0 = 10 + (seed as usize * 7) % 25;
        let mut spec = SynthSpec::new(16, 16, t0 + 60, t0);
        spec.noise_sigma = 0.01;
        spec.seed = seed;
        let (cube, _) = generate(&spec).unwrap();
        let t = detect_pulse(&cube, &PreprocessConfig::default()).unwrap();
        if t.t0.abs_diff(t0) <= 1 && t.t_peak.abs_diff(t0 + 1) <= 2 {
            hits += 1;
        }
    }
    assert_eq!(hits, 30);
}
