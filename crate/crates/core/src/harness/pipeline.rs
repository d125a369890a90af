//! Per-record feature extraction and the classification methods evaluated
//! on top of it.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, DistanceKind, NnModel, SvmConfig};
use crate::envelope::{self, EnvelopeConfig, FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::features::{self, Trajectory};
use crate::harness::dataset::Dataset;
use crate::linalg;
use crate::seed;
use crate::segmentation::{self, MotionInterval, PbcConfig};
use crate::simulate::{GestureLabel, IQRecord};
use crate::subspace::{self, SimilarityMatrix};
use crate::tfr::{self, Spectrogram, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub pbc: PbcConfig,
    pub envelope: EnvelopeConfig,
    /// Re-centre every record on its dominant motion before feature extraction.
    pub segment: bool,
    pub window_s: f64,
    /// Frequency span `+-crop_hz` kept for images, envelopes and trajectories.
    pub crop_hz: f64,
    pub image_size: (usize, usize),
    pub dyn_range_db: f64,
    pub sparsity: usize,
    pub pca_dim: usize,
    pub subspace_dim: usize,
    pub knn_k: usize,
    /// Z-score empirical features with training statistics before
    /// nearest-neighbour matching; off matches raw feature units.
    pub zscore_empirical: bool,
    pub svm: SvmConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            pbc: PbcConfig::default(),
            envelope: EnvelopeConfig::default(),
            segment: true,
            window_s: 5.0,
            crop_hz: 500.0,
            image_size: (100, 100),
            dyn_range_db: 50.0,
            sparsity: features::DEFAULT_SPARSITY,
            pca_dim: 30,
            subspace_dim: 10,
            knn_k: 1,
            zscore_empirical: false,
            svm: SvmConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.pbc.validate()?;
        self.envelope.validate()?;
        if !(self.window_s > 0.0 && self.crop_hz > 0.0 && self.dyn_range_db > 0.0) {
            return Err(Error::InvalidConfig(
                "window, crop and dynamic range must be positive".into(),
            ));
        }
        if self.image_size.0 < 2 || self.image_size.1 < 1 {
            return Err(Error::InvalidConfig("image needs at least 2 x 1 pixels".into()));
        }
        if self.sparsity == 0 || self.pca_dim == 0 || self.subspace_dim == 0 || self.knn_k == 0 {
            return Err(Error::InvalidConfig(
                "sparsity, dimensions and k must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the evaluated methods need from one record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFeatures {
    pub label: GestureLabel,
    /// Dominant motion in the frame the features were computed in.
    pub interval: MotionInterval,
    pub envelope: FeatureVector,
    pub empirical: FeatureVector,
    pub trajectory: FeatureVector,
    pub spec_image: Option<FeatureVector>,
    pub env_image: Option<FeatureVector>,
}

/// Spectrogram restricted to `+-crop_hz`.
pub fn cropped_spectrogram(record: &IQRecord, cfg: &PipelineConfig) -> Result<Spectrogram> {
    tfr::spectrogram(record, &cfg.stft)?.crop_band(-cfg.crop_hz, cfg.crop_hz)
}

/// Copy with the zero-Doppler rows (`|f| < min_hz`) cleared.
pub fn without_zero_doppler(spec: &Spectrogram, min_hz: f64) -> Result<Spectrogram> {
    let mut power = spec.power().clone();
    for (k, &f) in spec.freqs().iter().enumerate() {
        if f.abs() < min_hz {
            power.column_mut(k).fill(0.0);
        }
    }
    Spectrogram::from_parts(power, spec.times().to_vec(), spec.freqs().to_vec(), spec.bin_hz())
}

/// Centres the record on its dominant motion. Returns the window and the
/// motion interval in window time; without a detection the whole record is
/// taken as the motion.
pub fn center_on_motion(record: &IQRecord, cfg: &PipelineConfig) -> Result<(IQRecord, MotionInterval)> {
    let spec = tfr::spectrogram(record, &cfg.stft)?;
    let iv = match segmentation::dominant_motion(&spec, &cfg.pbc)? {
        Some(iv) => iv,
        None => MotionInterval::new(0.0, record.duration_s())?,
    };
    if !cfg.segment {
        return Ok((record.clone(), iv));
    }
    let fs = record.sample_rate_hz;
    let start = segmentation::window_start(&iv, fs, cfg.window_s);
    let w = segmentation::window(record, &iv, cfg.window_s)?;
    Ok((w, iv.shifted(-(start as f64) / fs)))
}

pub fn extract_features(record: &IQRecord, cfg: &PipelineConfig, images: bool) -> Result<RecordFeatures> {
    let (rec, interval) = center_on_motion(record, cfg)?;
    let crop = cropped_spectrogram(&rec, cfg)?;
    let env = envelope::extract(&crop, &cfg.envelope)?;
    let empirical = features::empirical(&crop, &interval, &env)?.to_feature();
    let motion = without_zero_doppler(&crop, cfg.envelope.min_freq_hz)?;
    let trajectory = features::trajectory(&motion, cfg.sparsity)?.to_feature();
    let (spec_image, env_image) = if images {
        let g = tfr::to_gray(&crop, cfg.image_size, cfg.dyn_range_db)?;
        let e = envelope::envelope_image(&crop, &env, cfg.image_size)?;
        (Some(tfr::vectorize(&g)), Some(tfr::vectorize(&e)))
    } else {
        (None, None)
    };
    let label = record.label;
    Ok(RecordFeatures {
        label,
        interval,
        envelope: envelope::to_feature(&env)?.with_label(label),
        empirical: empirical.with_label(label),
        trajectory: trajectory.with_label(label),
        spec_image: spec_image.map(|v| v.with_label(label)),
        env_image: env_image.map(|v| v.with_label(label)),
    })
}

/// Features of every record, in dataset order. Records are processed in
/// parallel on the current rayon pool.
pub fn extract_all(dataset: &Dataset, cfg: &PipelineConfig, images: bool) -> Result<Vec<RecordFeatures>> {
    cfg.validate()?;
    (0..dataset.len())
        .into_par_iter()
        .map(|i| extract_features(&dataset.record(i)?, cfg, images))
        .collect()
}

/// Labelled spectrogram images of a dataset, then the class similarity table.
pub fn dataset_similarity(dataset: &Dataset, cfg: &PipelineConfig, d: usize) -> Result<SimilarityMatrix> {
    let feats = extract_all(dataset, cfg, true)?;
    let images: Vec<FeatureVector> = feats.into_iter().filter_map(|f| f.spec_image).collect();
    subspace::similarity_table(&images, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    Envelope,
    /// PCA of spectrogram images.
    PcaSpec,
    /// PCA of binary envelope images.
    PcaEnvimg,
    /// PCA of envelope vectors.
    PcaEnv,
    Empirical,
    Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    NnL1,
    NnL2,
    NnEmd,
    NnMhd,
    Svm,
}

impl ClassifierKind {
    pub fn distance(self) -> Option<DistanceKind> {
        match self {
            ClassifierKind::NnL1 => Some(DistanceKind::L1),
            ClassifierKind::NnL2 => Some(DistanceKind::L2),
            ClassifierKind::NnEmd => Some(DistanceKind::Emd),
            ClassifierKind::NnMhd => Some(DistanceKind::Mhd),
            ClassifierKind::Svm => None,
        }
    }
}

/// Feature set plus classifier. Trajectories with `nn-mhd` are matched
/// against K-means central trajectories of each class rather than against
/// individual training samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub features: FeatureSet,
    pub classifier: ClassifierKind,
}

impl Method {
    pub fn new(features: FeatureSet, classifier: ClassifierKind) -> Self {
        Self { features, classifier }
    }

    pub fn needs_images(&self) -> bool {
        matches!(self.features, FeatureSet::PcaSpec | FeatureSet::PcaEnvimg)
    }
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn parse_kebab<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| Error::InvalidConfig(format!("unknown {what} '{s}'")))
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&kebab(self))
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&kebab(self))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.features, self.classifier)
    }
}

impl FromStr for FeatureSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab(s, "feature set")
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_kebab(s, "classifier")
    }
}

pub(crate) fn vectors_of(feats: &[RecordFeatures], set: FeatureSet) -> Result<Vec<&FeatureVector>> {
    feats
        .iter()
        .map(|f| match set {
            FeatureSet::Envelope | FeatureSet::PcaEnv => Ok(&f.envelope),
            FeatureSet::Empirical => Ok(&f.empirical),
            FeatureSet::Trajectory => Ok(&f.trajectory),
            FeatureSet::PcaSpec => f
                .spec_image
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("spectrogram images were not extracted".into())),
            FeatureSet::PcaEnvimg => f
                .env_image
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("envelope images were not extracted".into())),
        })
        .collect()
}

/// Per-trial predictor over record indices.
pub trait Predictor: Sync {
    /// Predicted labels of `test`, in order, after fitting on `train`.
    fn predict(&self, trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>>;
}

impl<F> Predictor for F
where
    F: Fn(usize, &[usize], &[usize]) -> Result<Vec<GestureLabel>> + Sync,
{
    fn predict(&self, trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>> {
        self(trial, train, test)
    }
}

/// Nearest neighbours over a precomputed distance matrix.
struct DistanceNn {
    dist: Vec<Vec<f64>>,
    labels: Vec<GestureLabel>,
    k: usize,
}

impl DistanceNn {
    fn new(vectors: &[&FeatureVector], kind: DistanceKind, k: usize) -> Result<Self> {
        let n = vectors.len();
        let points: Option<Vec<Vec<[f64; 2]>>> = (kind == DistanceKind::Mhd)
            .then(|| vectors.iter().map(|v| classify::point_set(v)).collect::<Result<_>>())
            .transpose()?;
        // upper triangle, mirrored
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| match &points {
                        Some(p) => classify::modified_hausdorff(&p[i], &p[j]),
                        None => classify::dist(vectors[i], vectors[j], kind),
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let mut dist = vec![vec![0.0; n]; n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                dist[i][i + 1 + off] = d;
                dist[i + 1 + off][i] = d;
            }
        }
        Ok(Self {
            dist,
            labels: vectors.iter().map(|v| v.label.expect("labelled features")).collect(),
            k,
        })
    }
}

impl Predictor for DistanceNn {
    fn predict(&self, _trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>> {
        Ok(test
            .iter()
            .map(|&i| {
                let ranked = train
                    .iter()
                    .enumerate()
                    .map(|(pos, &j)| (self.dist[i][j], pos, self.labels[j]))
                    .collect();
                classify::vote(ranked, self.k).expect("non-empty training set")
            })
            .collect())
    }
}

/// PCA fitted per trial through the Gram matrix of all records; projections
/// feed a nearest-neighbour or SVM classifier.
struct GramPca {
    gram: DMatrix<f64>,
    labels: Vec<GestureLabel>,
    d: usize,
    classifier: ClassifierKind,
    k: usize,
    svm: SvmConfig,
    seed: u64,
}

impl GramPca {
    fn new(vectors: &[&FeatureVector], cfg: &PipelineConfig, classifier: ClassifierKind, seed: u64) -> Result<Self> {
        let q = vectors.first().ok_or(Error::EmptyInput("feature vectors"))?.len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != q) {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: bad.len(),
            });
        }
        let x = DMatrix::from_fn(q, vectors.len(), |r, c| vectors[c].values[r]);
        Ok(Self {
            gram: x.tr_mul(&x),
            labels: vectors.iter().map(|v| v.label.expect("labelled features")).collect(),
            d: cfg.pca_dim,
            classifier,
            k: cfg.knn_k,
            svm: cfg.svm,
            seed,
        })
    }

    /// PCA coordinates of `rows` under a model fitted on `train`.
    fn project(&self, train: &[usize], rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        let m = train.len();
        if self.d > m {
            return Err(Error::InvalidConfig(format!(
                "PCA dimension {} exceeds {m} training samples",
                self.d
            )));
        }
        let ktt = DMatrix::from_fn(m, m, |a, b| self.gram[(train[a], train[b])]);
        let col_mean: Vec<f64> = (0..m).map(|b| ktt.column(b).sum() / m as f64).collect();
        let total_mean = col_mean.iter().sum::<f64>() / m as f64;
        let centered = DMatrix::from_fn(m, m, |a, b| ktt[(a, b)] - col_mean[a] - col_mean[b] + total_mean);
        let (ev, v) = linalg::sorted_eigen(centered);
        let comps: Vec<(Vec<f64>, f64)> = (0..self.d)
            .filter(|&j| ev[j] > 1e-12 * ev[0].max(1e-300))
            .map(|j| (v.column(j).iter().copied().collect(), ev[j].sqrt()))
            .collect();
        Ok(rows
            .iter()
            .map(|&x| {
                // <x - mu, t_b - mu> from Gram entries
                let kx: Vec<f64> = train.iter().map(|&t| self.gram[(x, t)]).collect();
                let kx_mean = kx.iter().sum::<f64>() / m as f64;
                let cx: Vec<f64> = (0..m).map(|b| kx[b] - kx_mean - col_mean[b] + total_mean).collect();
                let mut coords: Vec<f64> = comps
                    .iter()
                    .map(|(vj, s)| vj.iter().zip(&cx).map(|(a, b)| a * b).sum::<f64>() / s)
                    .collect();
                coords.resize(self.d, 0.0);
                coords
            })
            .collect())
    }
}

impl Predictor for GramPca {
    fn predict(&self, trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>> {
        let fv = |coords: Vec<f64>, i: usize| FeatureVector::new(coords, self.labels[i], FeatureKind::Pca);
        let tr: Vec<FeatureVector> = self.project(train, train)?.into_iter().zip(train).map(|(c, &i)| fv(c, i)).collect();
        let te: Vec<FeatureVector> = self.project(train, test)?.into_iter().zip(test).map(|(c, &i)| fv(c, i)).collect();
        classify_vectors(tr, &te, self.classifier, self.k, &self.svm, trial_seed(self.seed, trial))
    }
}

fn trial_seed(base: u64, trial: usize) -> u64 {
    seed::sub_seed(base, seed::SVM_SHUFFLE, trial as u64)
}

fn classify_vectors(
    train: Vec<FeatureVector>,
    test: &[FeatureVector],
    classifier: ClassifierKind,
    k: usize,
    svm: &SvmConfig,
    seed_value: u64,
) -> Result<Vec<GestureLabel>> {
    match classifier.distance() {
        Some(kind) => {
            let model = NnModel::fit_k(train, kind, k)?;
            test.iter().map(|x| model.predict(x)).collect()
        }
        None => {
            let model = classify::fit_svm(&train, &SvmConfig { seed: seed_value, ..*svm })?;
            test.iter().map(|x| model.predict(x)).collect()
        }
    }
}

/// Fits per trial on the selected vectors, optionally z-scored with training
/// statistics before nearest-neighbour matching.
struct PerTrial<'a> {
    vectors: Vec<&'a FeatureVector>,
    classifier: ClassifierKind,
    zscore: bool,
    k: usize,
    svm: SvmConfig,
    seed: u64,
}

impl Predictor for PerTrial<'_> {
    fn predict(&self, trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>> {
        let mut tr: Vec<FeatureVector> = train.iter().map(|&i| self.vectors[i].clone()).collect();
        let mut te: Vec<FeatureVector> = test.iter().map(|&i| self.vectors[i].clone()).collect();
        if self.zscore && self.classifier != ClassifierKind::Svm {
            let dim = tr[0].len();
            let m = tr.len() as f64;
            for j in 0..dim {
                let mean = tr.iter().map(|v| v.values[j]).sum::<f64>() / m;
                let sd = (tr.iter().map(|v| (v.values[j] - mean).powi(2)).sum::<f64>() / m).sqrt();
                let sd = if sd > 1e-12 { sd } else { 1.0 };
                for v in tr.iter_mut().chain(te.iter_mut()) {
                    v.values[j] = (v.values[j] - mean) / sd;
                }
            }
        }
        classify_vectors(tr, &te, self.classifier, self.k, &self.svm, trial_seed(self.seed, trial))
    }
}

/// Class-central trajectories from the training split; test trajectories
/// take the label of the nearest centre under the modified Hausdorff distance.
struct CentralTrajectory {
    trajs: Vec<Trajectory>,
    labels: Vec<GestureLabel>,
    sparsity: usize,
    seed: u64,
}

impl Predictor for CentralTrajectory {
    fn predict(&self, trial: usize, train: &[usize], test: &[usize]) -> Result<Vec<GestureLabel>> {
        let mut centres: Vec<(GestureLabel, Vec<[f64; 2]>)> = Vec::new();
        for label in GestureLabel::ALL {
            let members: Vec<Trajectory> = train
                .iter()
                .filter(|&&i| self.labels[i] == label)
                .map(|&i| self.trajs[i].clone())
                .collect();
            if members.is_empty() {
                continue;
            }
            let s = seed::sub_seed(self.seed, seed::KMEANS_INIT, (trial * GestureLabel::COUNT + label.index()) as u64);
            let c = features::central_trajectory(&members, self.sparsity, s)?;
            centres.push((label, c.points.iter().map(|p| p.normalized()).collect()));
        }
        test.iter()
            .map(|&i| {
                let mut pts: Vec<[f64; 2]> = self.trajs[i].valid().iter().map(|p| p.normalized()).collect();
                if pts.is_empty() {
                    pts.push([0.0, 0.0]);
                }
                let d = centres
                    .iter()
                    .map(|(_, c)| classify::modified_hausdorff(&pts, c))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(centres[classify::argmin(d).ok_or(Error::EmptyInput("class centres"))?].0)
            })
            .collect()
    }
}

/// Builds the predictor of a method over extracted features. Distance
/// matrices and Gram matrices are computed once here and shared by all trials.
pub fn build_predictor<'a>(
    feats: &'a [RecordFeatures],
    method: Method,
    cfg: &PipelineConfig,
    seed_value: u64,
) -> Result<Box<dyn Predictor + 'a>> {
    if feats.is_empty() {
        return Err(Error::EmptyInput("features"));
    }
    let vectors = vectors_of(feats, method.features)?;
    Ok(match (method.features, method.classifier) {
        (FeatureSet::PcaSpec | FeatureSet::PcaEnvimg | FeatureSet::PcaEnv, c) => {
            Box::new(GramPca::new(&vectors, cfg, c, seed_value)?)
        }
        (FeatureSet::Trajectory, ClassifierKind::NnMhd) => Box::new(CentralTrajectory {
            trajs: vectors.iter().map(|v| Trajectory::from_feature(v)).collect::<Result<_>>()?,
            labels: feats.iter().map(|f| f.label).collect(),
            sparsity: cfg.sparsity,
            seed: seed_value,
        }),
        (FeatureSet::Envelope | FeatureSet::Trajectory, c) if c != ClassifierKind::Svm => {
            Box::new(DistanceNn::new(&vectors, c.distance().unwrap(), cfg.knn_k)?)
        }
        (set, c) => Box::new(PerTrial {
            vectors,
            classifier: c,
            zscore: set == FeatureSet::Empirical && cfg.zscore_empirical,
            k: cfg.knn_k,
            svm: cfg.svm,
            seed: seed_value,
        }),
    })
}
