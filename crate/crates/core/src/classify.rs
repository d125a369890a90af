//! Nearest-neighbour classification under four distances, and a one-vs-rest
//! linear SVM baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::envelope::{FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::features::{Trajectory, FREQ_SCALE_HZ};
use crate::seed;
use crate::simulate::GestureLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    L1,
    L2,
    Emd,
    Mhd,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [DistanceKind::L1, DistanceKind::L2, DistanceKind::Emd, DistanceKind::Mhd];

    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::L1 => "l1",
            DistanceKind::L2 => "l2",
            DistanceKind::Emd => "emd",
            DistanceKind::Mhd => "mhd",
        }
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

pub fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Shifts to a zero minimum and normalises to unit mass; zero mass becomes uniform.
pub fn to_distribution(a: &[f64]) -> Vec<f64> {
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = a.iter().map(|v| v - min).collect();
    let total: f64 = shifted.iter().sum();
    if total > 0.0 {
        shifted.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / a.len() as f64; a.len()]
    }
}

/// Earth mover's distance on the index line with unit ground distance:
/// `sum |cumsum(a) - cumsum(b)|` of the two distributions.
pub fn emd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let (pa, pb) = (to_distribution(a), to_distribution(b));
    let mut carry = 0.0;
    let mut total = 0.0;
    for (x, y) in pa.iter().zip(&pb) {
        carry += x - y;
        total += carry.abs();
    }
    Ok(total)
}

/// Mean over `a` of the distance to the nearest point of `b`; `b_sorted`
/// must be ordered by the first coordinate.
fn directed_mean(a: &[[f64; 2]], b_sorted: &[[f64; 2]]) -> f64 {
    let mut sum = 0.0;
    for p in a {
        let start = b_sorted.partition_point(|q| q[0] < p[0]);
        let mut best = f64::INFINITY;
        // walk right then left; stop once the x gap alone exceeds the best
        for q in &b_sorted[start..] {
            let dx = q[0] - p[0];
            if dx * dx >= best {
                break;
            }
            best = best.min(dx * dx + (q[1] - p[1]) * (q[1] - p[1]));
        }
        for q in b_sorted[..start].iter().rev() {
            let dx = p[0] - q[0];
            if dx * dx >= best {
                break;
            }
            best = best.min(dx * dx + (q[1] - p[1]) * (q[1] - p[1]));
        }
        sum += best.sqrt();
    }
    sum / a.len() as f64
}

/// Modified Hausdorff distance: the larger of the two directed mean
/// nearest-point distances.
pub fn modified_hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("point set"));
    }
    let sort = |s: &[[f64; 2]]| {
        let mut v = s.to_vec();
        v.sort_by(|x, y| x[0].total_cmp(&y[0]));
        v
    };
    let (sa, sb) = (sort(a), sort(b));
    Ok(directed_mean(a, &sb).max(directed_mean(b, &sa)))
}

/// Point-set form of a feature vector on the unit-balanced plane.
///
/// Envelopes give `(n / N_e, e(n) / 500 Hz)` for both traces, trajectories
/// their valid normalised points, anything else `(i / len, v_i)`.
pub fn point_set(fv: &FeatureVector) -> Result<Vec<[f64; 2]>> {
    match fv.kind {
        FeatureKind::Envelope => {
            if fv.len() % 2 != 0 || fv.is_empty() {
                return Err(Error::Data("envelope vector has odd length".into()));
            }
            let n = fv.len() / 2;
            Ok(fv
                .values
                .iter()
                .enumerate()
                .map(|(i, &v)| [(i % n) as f64 / n as f64, v / FREQ_SCALE_HZ])
                .collect())
        }
        FeatureKind::Trajectory => {
            let tr = Trajectory::from_feature(fv)?;
            let pts: Vec<[f64; 2]> = tr.valid().iter().map(|p| p.normalized()).collect();
            if pts.is_empty() {
                Ok(vec![[0.0, 0.0]])
            } else {
                Ok(pts)
            }
        }
        _ => {
            let n = fv.len().max(1) as f64;
            Ok(fv.values.iter().enumerate().map(|(i, &v)| [i as f64 / n, v]).collect())
        }
    }
}

pub fn dist(a: &FeatureVector, b: &FeatureVector, kind: DistanceKind) -> Result<f64> {
    match kind {
        DistanceKind::L1 => {
            same_len(&a.values, &b.values)?;
            Ok(l1(&a.values, &b.values))
        }
        DistanceKind::L2 => {
            same_len(&a.values, &b.values)?;
            Ok(l2(&a.values, &b.values))
        }
        DistanceKind::Emd => emd_1d(&a.values, &b.values),
        DistanceKind::Mhd => {
            if a.kind != b.kind {
                return Err(Error::Data("point sets of different feature kinds".into()));
            }
            modified_hausdorff(&point_set(a)?, &point_set(b)?)
        }
    }
}

/// Index of the smallest distance; the lowest index wins ties.
pub fn argmin(dists: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in dists.into_iter().enumerate() {
        if best.is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0)
}

/// Majority label among the `k` nearest (distance, index, label) triples;
/// vote ties go to the tied label whose nearest member ranks first.
pub fn vote(mut ranked: Vec<(f64, usize, GestureLabel)>, k: usize) -> Option<GestureLabel> {
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k.max(1));
    let mut counts = [0usize; GestureLabel::COUNT];
    for r in &ranked {
        counts[r.2.index()] += 1;
    }
    let top = *counts.iter().max()?;
    ranked.iter().find(|r| counts[r.2.index()] == top).map(|r| r.2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnModel {
    pub train: Vec<FeatureVector>,
    pub labels: Vec<GestureLabel>,
    pub kind: DistanceKind,
    pub k: usize,
}

impl NnModel {
    pub fn fit(train: Vec<FeatureVector>, kind: DistanceKind) -> Result<Self> {
        Self::fit_k(train, kind, 1)
    }

    pub fn fit_k(train: Vec<FeatureVector>, kind: DistanceKind, k: usize) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let labels = train
            .iter()
            .map(|f| f.label.ok_or_else(|| Error::Data("training vector without label".into())))
            .collect::<Result<Vec<_>>>()?;
        let n = train[0].len();
        if matches!(kind, DistanceKind::L1 | DistanceKind::L2 | DistanceKind::Emd) {
            if let Some(bad) = train.iter().find(|f| f.len() != n) {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: bad.len(),
                });
            }
        }
        Ok(Self { train, labels, kind, k })
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<GestureLabel> {
        let kind = self.kind;
        self.predict_by(x, |a, b| dist(a, b, kind))
    }

    /// Prediction under an arbitrary distance.
    pub fn predict_by<F>(&self, x: &FeatureVector, metric: F) -> Result<GestureLabel>
    where
        F: Fn(&FeatureVector, &FeatureVector) -> Result<f64>,
    {
        let dists = self
            .train
            .iter()
            .map(|t| metric(x, t))
            .collect::<Result<Vec<f64>>>()?;
        if self.k == 1 {
            return Ok(self.labels[argmin(dists).expect("non-empty training set")]);
        }
        let ranked = dists
            .into_iter()
            .enumerate()
            .map(|(i, d)| (d, i, self.labels[i]))
            .collect();
        Ok(vote(ranked, self.k).expect("non-empty training set"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial step; halved whenever an epoch would raise the objective.
    pub step: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 200,
            step: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// One weight vector per class, in label order.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Regularised hinge objective of each machine after every epoch.
    pub objective: Vec<Vec<f64>>,
    /// Set when every feature is constant; prediction is then this label.
    pub majority: Option<GestureLabel>,
}

impl SvmModel {
    pub fn decision_values(&self, x: &FeatureVector) -> Result<Vec<f64>> {
        same_len(&self.mean, &x.values)?;
        let z = standardize(&x.values, &self.mean, &self.scale);
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, &z) + b)
            .collect())
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<GestureLabel> {
        let v = self.decision_values(x)?;
        if let Some(m) = self.majority {
            return Ok(m);
        }
        let best = v
            .iter()
            .enumerate()
            .fold(0, |b, (i, &d)| if d > v[b] { i } else { b });
        Ok(GestureLabel::ALL[best])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

fn objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / xs.len() as f64
}

/// Six one-vs-rest linear hinge machines on standardised features. Each epoch
/// is a shuffled pass of subgradient steps; an epoch that would raise the
/// objective is discarded and the step halved, so the recorded objective
/// never increases.
pub fn fit_svm(train: &[FeatureVector], cfg: &SvmConfig) -> Result<SvmModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let labels = train
        .iter()
        .map(|f| f.label.ok_or_else(|| Error::Data("training vector without label".into())))
        .collect::<Result<Vec<_>>>()?;
    let mut present = labels.clone();
    present.sort();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::Data("SVM training needs at least two classes".into()));
    }
    let dim = train[0].len();
    if let Some(bad) = train.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let m = train.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| train.iter().map(|f| f.values[j]).sum::<f64>() / m).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = train.iter().map(|f| (f.values[j] - mean[j]).powi(2)).sum::<f64>() / m;
            if var > 1e-24 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let xs: Vec<Vec<f64>> = train.iter().map(|f| standardize(&f.values, &mean, &scale)).collect();

    let all_constant = xs.iter().all(|x| x.iter().all(|&v| v == 0.0));
    let majority = all_constant.then(|| {
        let mut counts = [0usize; GestureLabel::COUNT];
        for l in &labels {
            counts[l.index()] += 1;
        }
        let top = *counts.iter().max().unwrap();
        GestureLabel::ALL[counts.iter().position(|&c| c == top).unwrap()]
    });

    let mut rng = seed::stream_rng(cfg.seed, seed::SVM_SHUFFLE, 0);
    let mut weights = Vec::with_capacity(GestureLabel::COUNT);
    let mut biases = Vec::with_capacity(GestureLabel::COUNT);
    let mut histories = Vec::with_capacity(GestureLabel::COUNT);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    for class in GestureLabel::ALL {
        let ys: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut current = objective(&w, b, &xs, &ys, cfg.lambda);
        let mut step = cfg.step;
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let (mut cw, mut cb) = (w.clone(), b);
            for &i in &order {
                let margin = ys[i] * (dot(&cw, &xs[i]) + cb);
                let shrink = 1.0 - step * cfg.lambda;
                cw.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (v, x) in cw.iter_mut().zip(&xs[i]) {
                        *v += step * ys[i] * x;
                    }
                    cb += step * ys[i];
                }
            }
            let candidate = objective(&cw, cb, &xs, &ys, cfg.lambda);
            if candidate <= current {
                w = cw;
                b = cb;
                current = candidate;
            } else {
                step *= 0.5;
            }
            history.push(current);
        }
        weights.push(w);
        biases.push(b);
        histories.push(history);
    }
    Ok(SvmModel {
        mean,
        scale,
        weights,
        biases,
        objective: histories,
        majority,
    })
}

/// Applies one permutation of coordinates to every vector: output
/// coordinate `i` is input coordinate `perm[i]`.
pub fn shuffle_features(vectors: &[FeatureVector], perm: &[usize]) -> Result<Vec<FeatureVector>> {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
            return Err(Error::InvalidPermutation { len: perm.len() });
        }
    }
    vectors
        .iter()
        .map(|v| {
            if v.len() != perm.len() {
                return Err(Error::DimensionMismatch {
                    expected: perm.len(),
                    got: v.len(),
                });
            }
            Ok(FeatureVector {
                values: perm.iter().map(|&p| v.values[p]).collect(),
                label: v.label,
                kind: v.kind,
            })
        })
        .collect()
}
