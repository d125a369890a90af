//! Invariant checks over explicit inputs. The proptest suites feed them
//! generated inputs; the acceptance gate feeds them seeded random draws.

use mdg_core::classify::{self, DistanceKind, NnModel, SvmConfig};
use mdg_core::envelope::{self, EnvelopeConfig};
use mdg_core::features;
use mdg_core::harness::ConfusionMatrix;
use mdg_core::segmentation::{self, PbcConfig};
use mdg_core::subspace::{self, ClassSubspace};
use mdg_core::tfr::{self, StftConfig};
use mdg_core::{FeatureKind, FeatureVector, GestureLabel, MotionInterval, SimConfig, Spectrogram};
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn labelled(rng: &mut impl Rng, m: usize, n: usize) -> Vec<FeatureVector> {
    (0..m)
        .map(|i| {
            FeatureVector::new(
                random_vec(rng, n, 10.0),
                GestureLabel::ALL[i % GestureLabel::COUNT],
                FeatureKind::Envelope,
            )
        })
        .collect()
}

pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

/// Cropped spectrogram of a simulated record.
pub fn simulated_spectrogram(label: GestureLabel, seed: u64, snr_db: f64) -> Spectrogram {
    let cfg = SimConfig {
        seed,
        snr_db,
        ..SimConfig::default()
    };
    let rec = mdg_core::simulate::simulate(label, &cfg).unwrap();
    tfr::spectrogram(&rec, &StftConfig::default())
        .unwrap()
        .crop_band(-500.0, 500.0)
        .unwrap()
}

pub fn metric_axioms(a: &[f64], b: &[f64], c: &[f64]) -> Check {
    let tol = 1e-9;
    for kind in [DistanceKind::L1, DistanceKind::L2, DistanceKind::Emd] {
        let d = |x: &[f64], y: &[f64]| {
            let fx = FeatureVector::unlabeled(x.to_vec(), FeatureKind::Envelope);
            let fy = FeatureVector::unlabeled(y.to_vec(), FeatureKind::Envelope);
            classify::dist(&fx, &fy, kind).unwrap()
        };
        let (ab, ba, ac, bc) = (d(a, b), d(b, a), d(a, c), d(b, c));
        ensure!(ab >= 0.0, "{kind:?}: negative distance {ab}");
        ensure!(d(a, a) == 0.0, "{kind:?}: d(a, a) = {}", d(a, a));
        ensure!((ab - ba).abs() <= tol * ab.max(1.0), "{kind:?}: asymmetric {ab} vs {ba}");
        ensure!(ac <= ab + bc + tol * (ab + bc).max(1.0), "{kind:?}: triangle {ac} > {ab} + {bc}");
    }
    let pa: Vec<[f64; 2]> = a.chunks(2).filter(|c| c.len() == 2).map(|c| [c[0], c[1]]).collect();
    let pb: Vec<[f64; 2]> = b.chunks(2).filter(|c| c.len() == 2).map(|c| [c[0], c[1]]).collect();
    if !pa.is_empty() && !pb.is_empty() {
        let ab = classify::modified_hausdorff(&pa, &pb).unwrap();
        let ba = classify::modified_hausdorff(&pb, &pa).unwrap();
        ensure!(ab >= 0.0 && ab == ba, "MHD not symmetric: {ab} vs {ba}");
        ensure!(classify::modified_hausdorff(&pa, &pa).unwrap() == 0.0, "MHD(a, a) != 0");
    }
    Ok(())
}

/// NN-L1/L2 predictions are unchanged when train and test coordinates are
/// permuted jointly.
pub fn nn_permutation_invariance(train: &[FeatureVector], test: &[FeatureVector], perm: &[usize]) -> Check {
    let st = classify::shuffle_features(train, perm).unwrap();
    let se = classify::shuffle_features(test, perm).unwrap();
    for kind in [DistanceKind::L1, DistanceKind::L2] {
        let a = NnModel::fit(train.to_vec(), kind).unwrap();
        let b = NnModel::fit(st.clone(), kind).unwrap();
        for (x, y) in test.iter().zip(&se) {
            let (pa, pb) = (a.predict(x).unwrap(), b.predict(y).unwrap());
            ensure!(pa == pb, "{kind:?}: {pa:?} became {pb:?} under permutation");
        }
    }
    Ok(())
}

/// NN-L1 predictions are unchanged under the increasing map `d -> d^2 + 1`.
pub fn nn_monotone_transform(train: &[FeatureVector], test: &[FeatureVector]) -> Check {
    let m = NnModel::fit(train.to_vec(), DistanceKind::L1).unwrap();
    for x in test {
        let plain = m.predict(x).unwrap();
        let warped = m
            .predict_by(x, |a, b| classify::dist(a, b, DistanceKind::L1).map(|d| d * d + 1.0))
            .unwrap();
        ensure!(plain == warped, "{plain:?} vs {warped:?}");
    }
    Ok(())
}

/// With `d = M - 1` components, projection preserves distances between
/// centred samples.
pub fn pca_full_rank_isometry(samples: &[FeatureVector]) -> Check {
    let m = samples.len();
    let model = subspace::fit_pca(samples, m - 1).unwrap();
    let proj: Vec<FeatureVector> = samples.iter().map(|s| subspace::project(&model, s).unwrap()).collect();
    for i in 0..m {
        for j in i + 1..m {
            let orig = classify::l2(&samples[i].values, &samples[j].values);
            let p = classify::l2(&proj[i].values, &proj[j].values);
            ensure!(close(orig, p, 1e-6), "pair ({i}, {j}): {orig} vs {p}");
        }
    }
    Ok(())
}

/// Projected training data has a diagonal covariance with descending variances.
pub fn pca_decorrelates(samples: &[FeatureVector], d: usize) -> Check {
    let model = subspace::fit_pca(samples, d).unwrap();
    let proj: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| subspace::project(&model, s).unwrap().values)
        .collect();
    let m = proj.len() as f64;
    let cov = |a: usize, b: usize| proj.iter().map(|p| p[a] * p[b]).sum::<f64>() / m;
    let trace: f64 = (0..d).map(|a| cov(a, a)).sum();
    for a in 0..d {
        if a + 1 < d {
            ensure!(cov(a, a) >= cov(a + 1, a + 1) - 1e-9 * trace, "variance {a} below {}", a + 1);
        }
        for b in a + 1..d {
            ensure!(cov(a, b).abs() <= 1e-6 * trace, "cov({a}, {b}) = {}", cov(a, b));
        }
    }
    Ok(())
}

fn random_orthonormal(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

/// Canonical correlations do not depend on the choice of orthonormal basis.
pub fn cc_basis_invariance(a: &[FeatureVector], b: &[FeatureVector], d: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let sa = subspace::class_subspace_of(a, d).unwrap();
    let sb = subspace::class_subspace_of(b, d).unwrap();
    let base = subspace::canonical_correlations(&sa, &sb).unwrap();
    let ra = ClassSubspace::from_basis(&sa.basis * random_orthonormal(&mut r, d)).unwrap();
    let rb = ClassSubspace::from_basis(&sb.basis * random_orthonormal(&mut r, d)).unwrap();
    let rot = subspace::canonical_correlations(&ra, &rb).unwrap();
    for (x, y) in base.iter().zip(&rot) {
        ensure!((x - y).abs() <= 1e-9, "{base:?} vs {rot:?}");
    }
    Ok(())
}

/// A complex tone on the bin grid peaks within one bin of its frequency in
/// every column.
pub fn tone_localization(bin: i64, amplitude: f64, cfg: &StftConfig, fs: f64) -> Check {
    let f0 = bin as f64 * fs / cfg.fft_size as f64;
    let n = cfg.window_len + 8 * cfg.hop;
    let x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::from_polar(amplitude, 2.0 * std::f64::consts::PI * f0 * i as f64 / fs))
        .collect();
    let spec = tfr::spectrogram_of(&x, fs, cfg).unwrap();
    for (c, col) in spec.power().outer_iter().enumerate() {
        let k = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
        let f = spec.freqs()[k];
        ensure!((f - f0).abs() <= spec.bin_hz() + 1e-9, "column {c}: peak at {f} Hz, tone at {f0} Hz");
    }
    Ok(())
}

/// Rectangular-window Parseval: each column sums to `K` times its frame energy.
pub fn column_parseval(x: &[Complex64], cfg: &StftConfig) -> Check {
    let spec = tfr::spectrogram_of(x, 1000.0, cfg).unwrap();
    for (n, col) in spec.power().outer_iter().enumerate() {
        let frame: f64 = x[n * cfg.hop..n * cfg.hop + cfg.window_len].iter().map(|s| s.norm_sqr()).sum();
        let expected = cfg.fft_size as f64 * frame;
        ensure!(close(col.sum(), expected, 1e-6), "column {n}: {} vs {expected}", col.sum());
    }
    Ok(())
}

/// A real signal's spectrogram is symmetric in frequency.
pub fn real_signal_symmetry(x: &[f64], cfg: &StftConfig) -> Check {
    let z: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let spec = tfr::spectrogram_of(&z, 1000.0, cfg).unwrap();
    let k = cfg.fft_size;
    for col in spec.power().outer_iter() {
        let peak = col.iter().copied().fold(0.0, f64::max).max(1e-300);
        for r in 1..k {
            let mirror = k - r;
            ensure!(
                (col[r] - col[mirror]).abs() <= 1e-9 * peak,
                "rows {r} and {mirror}: {} vs {}",
                col[r],
                col[mirror]
            );
        }
    }
    Ok(())
}

pub const SCALES: [f64; 3] = [0.5, 2.0, 10.0];

/// Envelopes are unchanged by scaling the spectrogram.
pub fn envelope_scale_invariance(spec: &Spectrogram, cfg: &EnvelopeConfig) -> Check {
    let base = envelope::extract(spec, cfg).unwrap();
    for alpha in SCALES {
        let e = envelope::extract(&spec.scaled(alpha), cfg).unwrap();
        ensure!(e.upper == base.upper && e.lower == base.lower, "alpha {alpha}: envelopes changed");
    }
    Ok(())
}

/// Detected motions are unchanged by scaling the spectrogram.
pub fn pbc_scale_invariance(spec: &Spectrogram, cfg: &PbcConfig, alpha: f64) -> Check {
    let a = segmentation::segment_motions(spec, cfg).unwrap();
    let b = segmentation::segment_motions(&spec.scaled(alpha), cfg).unwrap();
    ensure!(a == b, "alpha {alpha}: {a:?} vs {b:?}");
    Ok(())
}

pub fn intervals_sorted_disjoint(spec: &Spectrogram, cfg: &PbcConfig) -> Check {
    let iv = segmentation::segment_motions(spec, cfg).unwrap();
    for w in iv.windows(2) {
        ensure!(w[0].offset < w[1].onset, "overlap or disorder: {:?}", w);
    }
    Ok(())
}

/// Empirical features do not depend on the spectrogram amplitude.
pub fn empirical_scale_invariance(spec: &Spectrogram, cfg: &EnvelopeConfig, alpha: f64) -> Check {
    let iv = MotionInterval::new(spec.times()[0], *spec.times().last().unwrap()).unwrap();
    let base = features::empirical(spec, &iv, &envelope::extract(spec, cfg).unwrap()).unwrap();
    let scaled = spec.scaled(alpha);
    let other = features::empirical(&scaled, &iv, &envelope::extract(&scaled, cfg).unwrap()).unwrap();
    ensure!(base == other, "alpha {alpha}: {base:?} vs {other:?}");
    Ok(())
}

/// Linear resampling stays within the input range and keeps each extreme
/// within one input step.
pub fn resample_extrema(x: &[f64], n: usize) -> Check {
    let y = envelope::resample(x, n);
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (ylo, yhi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let quantum = x.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let eps = 1e-9 * (hi.abs() + lo.abs()).max(1.0);
    ensure!(ylo >= lo - eps && yhi <= hi + eps, "output [{ylo}, {yhi}] leaves [{lo}, {hi}]");
    ensure!(hi - yhi <= quantum + eps && ylo - lo <= quantum + eps, "extremes moved by more than {quantum}");
    Ok(())
}

pub fn spectrogram_from(power: Array2<f64>) -> Spectrogram {
    let (nt, nf) = power.dim();
    let bin = 3.125;
    let freqs = (0..nf).map(|k| (k as f64 - (nf / 2) as f64) * bin).collect();
    let times = (0..nt).map(|n| 0.08 + n as f64 * 0.01).collect();
    Spectrogram::from_parts(power, times, freqs, bin).unwrap()
}

/// Intensities never increase, and re-running on the residual left after the
/// first pick reproduces the remaining picks.
pub fn trajectory_greedy_consistency(power: &Array2<f64>, p: usize) -> Check {
    let spec = spectrogram_from(power.clone());
    let t = features::trajectory(&spec, p).unwrap();
    let valid = t.valid();
    for w in valid.windows(2) {
        ensure!(w[0].a >= w[1].a, "intensity rises: {} then {}", w[0].a, w[1].a);
    }
    if valid.len() < 2 {
        return Ok(());
    }
    let n0 = spec.times().iter().position(|&x| x == valid[0].t).unwrap();
    let k0 = spec.freqs().iter().position(|&x| x == valid[0].f).unwrap();
    let (nt, nf) = power.dim();
    let mut residual = power.clone();
    for n in n0.saturating_sub(features::SUPPRESS_COLS)..=(n0 + features::SUPPRESS_COLS).min(nt - 1) {
        for k in k0.saturating_sub(features::SUPPRESS_BINS)..=(k0 + features::SUPPRESS_BINS).min(nf - 1) {
            residual[[n, k]] = 0.0;
        }
    }
    let rest = features::trajectory(&spectrogram_from(residual), p - 1).unwrap();
    ensure!(rest.valid() == &valid[1..], "residual run differs");
    Ok(())
}

/// Lloyd iterations never raise the objective, and restarting from the
/// final centroids keeps the assignment.
pub fn kmeans_monotone(points: &[[f64; 2]], k: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let init: Vec<[f64; 2]> = (0..k).map(|_| points[r.random_range(0..points.len())]).collect();
    let (km, history) = features::lloyd(points, init);
    for w in history.windows(2) {
        ensure!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "objective rose: {} -> {}", w[0], w[1]);
    }
    let (again, _) = features::lloyd(points, km.centroids.clone());
    ensure!(again.assignment == km.assignment, "assignment not stable");
    Ok(())
}

pub fn svm_objective_monotone(train: &[FeatureVector], seed: u64) -> Check {
    let cfg = SvmConfig {
        epochs: 30,
        seed,
        ..SvmConfig::default()
    };
    let m = classify::fit_svm(train, &cfg).unwrap();
    for (c, h) in m.objective.iter().enumerate() {
        for w in h.windows(2) {
            ensure!(w[1] <= w[0] + 1e-9, "machine {c}: {} -> {}", w[0], w[1]);
        }
    }
    Ok(())
}

pub fn similarity_symmetric(samples: &[FeatureVector], d: usize) -> Check {
    let t = subspace::similarity_table(samples, d).unwrap();
    for i in 0..GestureLabel::COUNT {
        ensure!((t.values[i][i] - 1.0).abs() <= 1e-9, "diagonal {i} = {}", t.values[i][i]);
        for j in 0..GestureLabel::COUNT {
            ensure!((t.values[i][j] - t.values[j][i]).abs() <= 1e-12, "({i}, {j}) asymmetric");
        }
    }
    Ok(())
}

/// Rows of the percentage matrix sum to 100 and the matrix accuracy equals
/// the directly counted one.
pub fn confusion_consistency(trials: &[(Vec<GestureLabel>, Vec<GestureLabel>)]) -> Check {
    let mut cm = ConfusionMatrix::new();
    let (mut correct, mut total) = (0usize, 0usize);
    for (t, p) in trials {
        cm.add_trial(t, p);
        correct += t.iter().zip(p).filter(|(a, b)| a == b).count();
        total += t.len();
    }
    for (i, row) in cm.percentages().iter().enumerate() {
        let s: f64 = row.iter().sum();
        let has = cm.counts[i].iter().sum::<u64>() > 0;
        ensure!(!has || (s - 100.0).abs() <= 1e-9, "row {i} sums to {s}");
    }
    let direct = 100.0 * correct as f64 / total.max(1) as f64;
    ensure!((cm.overall_accuracy() - direct).abs() <= 1e-9, "{} vs {direct}", cm.overall_accuracy());
    Ok(())
}
