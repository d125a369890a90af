//! Release gate: one PASS/FAIL line per criterion, then a single verdict.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use common::oracles;
use common::props::{self, labelled, random_permutation, random_vec, rng, spectrogram_from, Check};
use mdg_core::classify;
use mdg_core::envelope::EnvelopeConfig;
use mdg_core::features;
use mdg_core::harness::pipeline::{self, ClassifierKind, FeatureSet, Method, PipelineConfig, RecordFeatures};
use mdg_core::harness::{evaluate, EvalProtocol};
use mdg_core::seed::{self, sub_seed};
use mdg_core::segmentation::{self, PbcConfig};
use mdg_core::simulate;
use mdg_core::subspace::{self, ClassSubspace};
use mdg_core::tfr::{self, StftConfig};
use mdg_core::{FeatureVector, GestureLabel, SimConfig};
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn from_check(c: Check, elapsed: Duration, limit: Duration) -> Self {
        match c {
            Ok(()) if elapsed < limit => Outcome {
                pass: true,
                detail: format!("{:.1} s", elapsed.as_secs_f64()),
            },
            Ok(()) => Outcome {
                pass: false,
                detail: format!("too slow: {:.1} s", elapsed.as_secs_f64()),
            },
            Err(e) => Outcome { pass: false, detail: e },
        }
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn small_stft() -> StftConfig {
    StftConfig {
        window_len: 64,
        fft_size: 128,
        hop: 16,
        ..StftConfig::default()
    }
}

fn property_suite() -> Check {
    let mut r = rng(101);
    for case in 0..200 {
        let a = random_vec(&mut r, 12, 100.0);
        let b = random_vec(&mut r, 12, 100.0);
        let c = random_vec(&mut r, 12, 100.0);
        props::metric_axioms(&a, &b, &c).map_err(|e| format!("metric case {case}: {e}"))?;
    }
    for case in 0..40 {
        let all = labelled(&mut r, 30, 10);
        let perm = random_permutation(&mut r, 10);
        props::nn_permutation_invariance(&all[..20], &all[20..], &perm).map_err(|e| format!("permutation case {case}: {e}"))?;
        props::nn_monotone_transform(&all[..20], &all[20..]).map_err(|e| format!("monotone case {case}: {e}"))?;
    }
    for case in 0..40 {
        props::pca_full_rank_isometry(&labelled(&mut r, 8, 20)).map_err(|e| format!("isometry case {case}: {e}"))?;
        let d = r.random_range(1..8);
        props::pca_decorrelates(&labelled(&mut r, 25, 12), d).map_err(|e| format!("decorrelation case {case}: {e}"))?;
        let d = r.random_range(1..5);
        let (a, b) = (labelled(&mut r, 6, 15), labelled(&mut r, 6, 15));
        props::cc_basis_invariance(&a, &b, d, r.random()).map_err(|e| format!("basis case {case}: {e}"))?;
    }
    for bin in -60..60 {
        let amp = 10f64.powf(r.random_range(-2.0..2.0));
        props::tone_localization(bin, amp, &small_stft(), 1000.0)?;
    }
    for _ in 0..20 {
        let z: Vec<Complex64> = (0..200).map(|_| Complex64::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0))).collect();
        props::column_parseval(&z, &small_stft())?;
        props::real_signal_symmetry(&random_vec(&mut r, 200, 5.0), &small_stft())?;
    }
    for (i, label) in GestureLabel::ALL.into_iter().enumerate() {
        let spec = props::simulated_spectrogram(label, 500 + i as u64, 10.0);
        props::envelope_scale_invariance(&spec, &EnvelopeConfig::default())?;
        for alpha in props::SCALES {
            props::pbc_scale_invariance(&spec, &PbcConfig::default(), alpha)?;
            props::empirical_scale_invariance(&spec, &EnvelopeConfig::default(), alpha)?;
        }
        props::intervals_sorted_disjoint(&spec, &PbcConfig::default())?;
    }
    for _ in 0..20 {
        let len = r.random_range(2..60);
        let x = random_vec(&mut r, len, 500.0);
        props::resample_extrema(&x, r.random_range(2..200))?;
        let p = r.random_range(2..12);
        let power = Array2::from_shape_fn((40, 24), |_| r.random_range(0..6) as f64);
        props::trajectory_greedy_consistency(&power, p)?;
        let pts: Vec<[f64; 2]> = (0..r.random_range(12..80)).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        props::kmeans_monotone(&pts, r.random_range(1..8), r.random())?;
    }
    for _ in 0..6 {
        props::svm_objective_monotone(&labelled(&mut r, 36, 5), r.random())?;
        props::similarity_symmetric(&labelled(&mut r, 36, 30), r.random_range(1..6))?;
    }
    Ok(())
}

fn oracle_suite() -> Check {
    let mut r = rng(202);
    for case in 0..100 {
        let a = random_vec(&mut r, 8, 5.0);
        let b = random_vec(&mut r, 8, 5.0);
        let closed = classify::emd_1d(&a, &b).map_err(|e| e.to_string())?;
        let lp = oracles::transport_cost(&classify::to_distribution(&a), &classify::to_distribution(&b));
        ensure!((closed - lp).abs() <= 1e-9, "EMD case {case}: {closed} vs {lp}");
    }
    let (q, d) = (10, 3);
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { (0..q).map(|i| (0..d).map(|j| m[(i, j)]).collect()).collect() };
    for case in 0..50 {
        let a = ClassSubspace::from_basis(DMatrix::from_fn(q, d, |_, _| r.random_range(-1.0..1.0))).map_err(|e| e.to_string())?;
        let b = ClassSubspace::from_basis(DMatrix::from_fn(q, d, |_, _| r.random_range(-1.0..1.0))).map_err(|e| e.to_string())?;
        let expected = oracles::canonical_correlations(&rows(&a.basis), &rows(&b.basis));
        let got = subspace::canonical_correlations(&a, &b).map_err(|e| e.to_string())?;
        for (x, y) in got.iter().zip(&expected) {
            ensure!((x - y).abs() <= 1e-8, "correlation case {case}: {got:?} vs {expected:?}");
        }
    }
    for case in 0..20 {
        let (nt, nf) = (r.random_range(10..60), r.random_range(12..80));
        let coarse = case % 2 == 0;
        let power = Array2::from_shape_fn((nt, nf), |_| {
            if coarse {
                r.random_range(0..5) as f64
            } else {
                r.random_range(0.0..1.0)
            }
        });
        let spec = spectrogram_from(power.clone());
        let t = features::trajectory(&spec, 10).map_err(|e| e.to_string())?;
        let expected = oracles::greedy_peaks(&power, 10, features::SUPPRESS_COLS, features::SUPPRESS_BINS);
        ensure!(t.n_valid == expected.len(), "trajectory case {case}: {} vs {} points", t.n_valid, expected.len());
        for (p, &(n, k, v)) in t.valid().iter().zip(&expected) {
            ensure!(
                (p.t, p.f, p.a) == (spec.times()[n], spec.freqs()[k], v),
                "trajectory case {case}: point mismatch"
            );
        }
    }
    Ok(())
}

fn mean_accuracy(feats: &[RecordFeatures], method: Method, cfg: &PipelineConfig) -> Result<f64, String> {
    evaluate(feats, method, cfg, &EvalProtocol::default())
        .map(|cm| cm.mean_trial_accuracy())
        .map_err(|e| e.to_string())
}

fn ordering(feats: &[RecordFeatures], cfg: &PipelineConfig) -> Check {
    let env = |c| Method::new(FeatureSet::Envelope, c);
    let l1 = mean_accuracy(feats, env(ClassifierKind::NnL1), cfg)?;
    let mut line = format!("envelope NN-L1 {l1:.2}%");
    ensure!(l1 >= 90.0, "{line} below 90%");
    for c in [ClassifierKind::NnL2, ClassifierKind::NnEmd, ClassifierKind::NnMhd] {
        let a = mean_accuracy(feats, env(c), cfg)?;
        line += &format!(", {c:?} {a:.2}%");
        ensure!(l1 >= a - 2.0, "{line}: NN-L1 trails {c:?} by more than 2 points");
    }
    let emp = mean_accuracy(feats, Method::new(FeatureSet::Empirical, ClassifierKind::NnL1), cfg)?;
    let traj = mean_accuracy(feats, Method::new(FeatureSet::Trajectory, ClassifierKind::NnMhd), cfg)?;
    line += &format!(", empirical {emp:.2}%, trajectory {traj:.2}%");
    ensure!(emp <= l1 - 10.0, "{line}: empirical baseline within 10 points");
    ensure!(traj <= l1 - 10.0, "{line}: trajectory baseline within 10 points");
    println!("    {line}");
    Ok(())
}

fn sufficiency(feats: &[RecordFeatures], cfg: &PipelineConfig) -> Check {
    let spec = mean_accuracy(feats, Method::new(FeatureSet::PcaSpec, ClassifierKind::NnL1), cfg)?;
    let envimg = mean_accuracy(feats, Method::new(FeatureSet::PcaEnvimg, ClassifierKind::NnL1), cfg)?;
    println!("    PCA spectrogram {spec:.2}%, PCA envelope image {envimg:.2}%");
    ensure!((spec - envimg).abs() <= 5.0, "gap {:.2} points", (spec - envimg).abs());
    Ok(())
}

fn similarity(feats: &[RecordFeatures], cfg: &PipelineConfig) -> Check {
    let images: Vec<FeatureVector> = feats.iter().filter_map(|f| f.spec_image.clone()).collect();
    let t = subspace::similarity_table(&images, cfg.subspace_dim).map_err(|e| e.to_string())?;
    let mut max_off = 0.0f64;
    for a in GestureLabel::ALL {
        for b in GestureLabel::ALL {
            let v = t.get(a, b);
            if a == b {
                ensure!((v - 1.0).abs() <= 1e-9, "diagonal {a:?} = {v}");
            } else {
                ensure!(v < 1.0, "{a:?}/{b:?} = {v}");
                max_off = max_off.max(v);
            }
        }
    }
    // class c carries a copy of class a's images
    let firsts: Vec<&FeatureVector> = images.iter().filter(|f| f.label == Some(GestureLabel::PushPull)).collect();
    let mut dup = Vec::with_capacity(images.len());
    let mut k = 0;
    for f in &images {
        if f.label == Some(GestureLabel::Cross) {
            let mut g = firsts[k % firsts.len()].clone();
            g.label = Some(GestureLabel::Cross);
            dup.push(g);
            k += 1;
        } else {
            dup.push(f.clone());
        }
    }
    let t = subspace::similarity_table(&dup, cfg.subspace_dim).map_err(|e| e.to_string())?;
    let v = t.get(GestureLabel::PushPull, GestureLabel::Cross);
    ensure!((v - 1.0).abs() <= 1e-9, "duplicate control gave {v}");
    println!("    largest off-diagonal {max_off:.4}");
    Ok(())
}

fn segmentation_accuracy() -> Check {
    let grid = simulate::protocol_grid(&SimConfig::default());
    let stft = StftConfig::default();
    let mut hits = 0;
    for i in 0..100 {
        let cfg = SimConfig {
            seed: sub_seed(0, seed::SIMULATE, i as u64),
            snr_db: 10.0,
            ..grid[i % grid.len()]
        };
        let rec = simulate::simulate(GestureLabel::ALL[i % GestureLabel::COUNT], &cfg).map_err(|e| e.to_string())?;
        let spec = tfr::spectrogram(&rec, &stft).map_err(|e| e.to_string())?;
        let Some(iv) = segmentation::dominant_motion(&spec, &PbcConfig::default()).map_err(|e| e.to_string())? else {
            continue;
        };
        let (on, off) = (rec.truth[0].onset, rec.truth[rec.truth.len() - 1].offset);
        hits += ((iv.onset - on).abs() <= 0.05 && (iv.offset - off).abs() <= 0.05) as usize;
    }
    println!("    {hits}/100 within 0.05 s");
    ensure!(hits >= 95, "only {hits}/100 records within tolerance");
    Ok(())
}

fn mdg(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mdg"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "mdg {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    Ok(())
}

fn determinism(tmp: &Path) -> Check {
    let data = tmp.join("data");
    let data_s = data.to_str().ok_or("non-UTF-8 temp path")?;
    mdg(&["--seed", "7", "simulate", "--out", data_s, "--per-class", "120", "--manifest-only"])?;
    let mut reports = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.join(format!("jobs{jobs}"));
        let out_s = out.to_str().ok_or("non-UTF-8 temp path")?;
        mdg(&["--seed", "7", "--jobs", jobs, "eval", "--in", data_s, "--out", out_s])?;
        let json = std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?;
        let csv = std::fs::read(out.join("report.csv")).map_err(|e| e.to_string())?;
        reports.push((json, csv));
    }
    ensure!(reports[0] == reports[1], "reports differ between --jobs 1 and --jobs 3");
    Ok(())
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Check, limit: Duration) -> bool {
    let start = Instant::now();
    let o = Outcome::from_check(f(), start.elapsed(), limit);
    println!("criterion {n} {}: {name} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    o.pass
}

#[test]
fn acceptance() {
    let unbounded = Duration::MAX;
    let mut passed = Vec::new();

    passed.push(run(1, "property suite", property_suite, Duration::from_secs(60)));
    passed.push(run(2, "oracle equivalences", oracle_suite, unbounded));

    let cfg = PipelineConfig::default();
    let mut feats = Vec::new();
    passed.push(run(
        3,
        "end-to-end ordering",
        || {
            let grid = simulate::protocol_grid(&SimConfig::default());
            let ds = simulate::generate_dataset(120, &grid).map_err(|e| e.to_string())?;
            ensure!(ds.len() == 720, "dataset has {} records", ds.len());
            feats = pipeline::extract_all(&ds, &cfg, true).map_err(|e| e.to_string())?;
            ordering(&feats, &cfg)
        },
        Duration::from_secs(300),
    ));
    passed.push(run(4, "envelope sufficiency", || sufficiency(&feats, &cfg), unbounded));
    passed.push(run(5, "similarity sanity", || similarity(&feats, &cfg), unbounded));
    drop(feats);
    passed.push(run(6, "segmentation accuracy", segmentation_accuracy, unbounded));

    let tmp = tempfile::tempdir().expect("temp dir");
    passed.push(run(7, "determinism across --jobs", || determinism(tmp.path()), unbounded));

    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
