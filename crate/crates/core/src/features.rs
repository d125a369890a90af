//! Comparison features: the empirical triple and sparse time-frequency
//! trajectories.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopePair, FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::seed;
use crate::segmentation::MotionInterval;
use crate::tfr::Spectrogram;

/// Time normalisation for trajectory geometry (one analysis window).
pub const TIME_SCALE_S: f64 = 5.0;
/// Frequency normalisation for trajectory and envelope geometry.
pub const FREQ_SCALE_HZ: f64 = 500.0;
/// Suppression half-widths around each picked peak.
pub const SUPPRESS_COLS: usize = 3;
pub const SUPPRESS_BINS: usize = 5;
pub const DEFAULT_SPARSITY: usize = 10;
pub const KMEANS_RESTARTS: usize = 50;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFeatures {
    /// Event length `t_e - t_s` in seconds.
    pub length_s: f64,
    /// `|f_p / f_n|`.
    pub ratio: f64,
    /// `|f_p| + |f_n|` in Hz.
    pub bandwidth_hz: f64,
    pub f_pos: f64,
    pub f_neg: f64,
}

impl EmpiricalFeatures {
    pub fn to_feature(&self) -> FeatureVector {
        FeatureVector::unlabeled(
            vec![self.length_s, self.ratio, self.bandwidth_hz],
            FeatureKind::Empirical,
        )
    }
}

/// Length, peak ratio and bandwidth of one motion. `f_p` and `f_n` are the
/// extreme envelope values inside the interval; a zero `f_n` is replaced by
/// one frequency bin in the ratio.
pub fn empirical(spec: &Spectrogram, interval: &MotionInterval, env: &EnvelopePair) -> Result<EmpiricalFeatures> {
    if env.is_empty() || env.upper.len() != env.lower.len() || env.times.len() != env.upper.len() {
        return Err(Error::Data("malformed envelope pair".into()));
    }
    let mut inside: Vec<usize> = (0..env.times.len())
        .filter(|&i| env.times[i] >= interval.onset && env.times[i] <= interval.offset)
        .collect();
    if inside.is_empty() {
        let mid = interval.midpoint();
        let nearest = (0..env.times.len())
            .min_by(|&a, &b| (env.times[a] - mid).abs().total_cmp(&(env.times[b] - mid).abs()))
            .unwrap();
        inside.push(nearest);
    }
    let f_pos = inside.iter().map(|&i| env.upper[i]).fold(0.0, f64::max);
    let f_neg = inside.iter().map(|&i| env.lower[i]).fold(0.0, f64::min);
    let denom = if f_neg == 0.0 { spec.bin_hz() } else { f_neg.abs() };
    Ok(EmpiricalFeatures {
        length_s: interval.length(),
        ratio: (f_pos / denom).abs(),
        bandwidth_hz: f_pos.abs() + f_neg.abs(),
        f_pos,
        f_neg,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfPoint {
    pub t: f64,
    pub f: f64,
    pub a: f64,
}

impl TfPoint {
    /// Position on the unit-balanced plane used for clustering and MHD.
    pub fn normalized(&self) -> [f64; 2] {
        [self.t / TIME_SCALE_S, self.f / FREQ_SCALE_HZ]
    }
}

/// `P` points ordered by non-increasing intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TfPoint>,
    /// Number of genuine points; the rest are `(0, 0, 0)` padding.
    pub n_valid: usize,
}

impl Trajectory {
    pub fn padded(&self) -> bool {
        self.n_valid < self.points.len()
    }

    pub fn valid(&self) -> &[TfPoint] {
        &self.points[..self.n_valid]
    }

    pub fn to_feature(&self) -> FeatureVector {
        let values = self.points.iter().flat_map(|p| [p.t, p.f, p.a]).collect();
        FeatureVector::unlabeled(values, FeatureKind::Trajectory)
    }

    /// Inverse of [`Trajectory::to_feature`]; trailing all-zero points count as padding.
    pub fn from_feature(fv: &FeatureVector) -> Result<Self> {
        if fv.kind != FeatureKind::Trajectory || fv.len() % 3 != 0 {
            return Err(Error::Data("not a trajectory feature vector".into()));
        }
        let points: Vec<TfPoint> = fv
            .values
            .chunks_exact(3)
            .map(|c| TfPoint { t: c[0], f: c[1], a: c[2] })
            .collect();
        let n_valid = points
            .iter()
            .rposition(|p| p.a != 0.0 || p.t != 0.0 || p.f != 0.0)
            .map_or(0, |i| i + 1);
        Ok(Self { points, n_valid })
    }
}

#[derive(PartialEq)]
struct Cell {
    value: f64,
    index: usize,
}

impl Eq for Cell {}

impl Ord for Cell {
    // larger value first, then lower flat index
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy peak picking: take the strongest remaining cell, then suppress
/// `+-SUPPRESS_COLS` columns by `+-SUPPRESS_BINS` bins around it. Ties go to
/// the lower `(column, row)` position.
pub fn trajectory(spec: &Spectrogram, p: usize) -> Result<Trajectory> {
    if p == 0 {
        return Err(Error::InvalidConfig("sparsity level must be at least 1".into()));
    }
    let power = spec.power();
    let (nt, nf) = power.dim();
    let mut heap: BinaryHeap<Cell> = power
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(index, &value)| Cell { value, index })
        .collect();
    let mut suppressed = vec![false; nt * nf];
    let mut points = Vec::with_capacity(p);
    while points.len() < p {
        let Some(cell) = heap.pop() else { break };
        if suppressed[cell.index] {
            continue;
        }
        let (n, k) = (cell.index / nf, cell.index % nf);
        points.push(TfPoint {
            t: spec.times()[n],
            f: spec.freqs()[k],
            a: cell.value,
        });
        for nn in n.saturating_sub(SUPPRESS_COLS)..(n + SUPPRESS_COLS + 1).min(nt) {
            for kk in k.saturating_sub(SUPPRESS_BINS)..(k + SUPPRESS_BINS + 1).min(nf) {
                suppressed[nn * nf + kk] = true;
            }
        }
    }
    let n_valid = points.len();
    points.resize(p, TfPoint { t: 0.0, f: 0.0, a: 0.0 });
    Ok(Trajectory { points, n_valid })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

fn nearest(p: &[f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init<R: Rng>(points: &[[f64; 2]], k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// One Lloyd run from the given centroids. Returns the result and the
/// inertia after every iteration.
pub fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>) -> (KMeans, Vec<f64>) {
    let k = centroids.len();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    for _ in 0..KMEANS_MAX_ITER {
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut sums = vec![[0.0, 0.0]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assignment.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        let mut moved: f64 = 0.0;
        for j in 0..k {
            // an empty cluster keeps its centroid
            if counts[j] > 0 {
                let c = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
                moved = moved.max(sq_dist(&c, &centroids[j]).sqrt());
                centroids[j] = c;
            }
        }
        history.push(points.iter().map(|p| nearest(p, &centroids).1).sum());
        if moved < KMEANS_TOL {
            break;
        }
    }
    for (a, p) in assignment.iter_mut().zip(points) {
        *a = nearest(p, &centroids).0;
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    (
        KMeans {
            centroids,
            assignment,
            inertia,
        },
        history,
    )
}

/// K-means++ seeded Lloyd iterations, best of `restarts` by inertia (the
/// earliest restart wins ties).
pub fn kmeans<R: Rng>(points: &[[f64; 2]], k: usize, restarts: usize, rng: &mut R) -> Result<KMeans> {
    if points.is_empty() {
        return Err(Error::EmptyInput("k-means points"));
    }
    if k == 0 || restarts == 0 {
        return Err(Error::InvalidConfig("k-means needs k >= 1 and at least one restart".into()));
    }
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts {
        let (run, _) = lloyd(points, plus_plus_init(points, k, rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.unwrap())
}

/// Class-central trajectory: K-means with `K = p` over the pooled valid points
/// of all trajectories on the normalised plane. Centroid intensity is the mean
/// intensity of its cluster.
pub fn central_trajectory(trajs: &[Trajectory], p: usize, seed_value: u64) -> Result<Trajectory> {
    let pooled: Vec<TfPoint> = trajs.iter().flat_map(|t| t.valid().iter().copied()).collect();
    if pooled.is_empty() {
        return Err(Error::EmptyInput("trajectories"));
    }
    let plane: Vec<[f64; 2]> = pooled.iter().map(TfPoint::normalized).collect();
    let mut rng = seed::stream_rng(seed_value, seed::KMEANS_INIT, 0);
    let km = kmeans(&plane, p, KMEANS_RESTARTS, &mut rng)?;
    let mut intensity = vec![(0.0, 0usize); p];
    for (pt, &a) in pooled.iter().zip(&km.assignment) {
        intensity[a].0 += pt.a;
        intensity[a].1 += 1;
    }
    let mut points: Vec<TfPoint> = km
        .centroids
        .iter()
        .zip(&intensity)
        .map(|(c, &(sum, n))| TfPoint {
            t: c[0] * TIME_SCALE_S,
            f: c[1] * FREQ_SCALE_HZ,
            a: if n > 0 { sum / n as f64 } else { 0.0 },
        })
        .collect();
    points.sort_by(|x, y| y.a.total_cmp(&x.a));
    Ok(Trajectory { n_valid: points.len(), points })
}
