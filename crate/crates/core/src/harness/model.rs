//! A method fitted on every record of a dataset, for saving and applying
//! to new records.

use serde::{Deserialize, Serialize};

use crate::classify::{self, NnModel, SvmConfig, SvmModel};
use crate::envelope::FeatureVector;
use crate::error::{Error, Result};
use crate::features::{self, Trajectory};
use crate::harness::pipeline::{vectors_of, ClassifierKind, FeatureSet, Method, PipelineConfig, RecordFeatures};
use crate::seed;
use crate::simulate::GestureLabel;
use crate::subspace::{self, PcaModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Fitted {
    Nn(NnModel),
    Svm(SvmModel),
    /// Normalised central trajectory points per class.
    Centres(Vec<(GestureLabel, Vec<[f64; 2]>)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub method: Method,
    pub config: PipelineConfig,
    pca: Option<PcaModel>,
    /// Per-coordinate `(mean, sd)` applied before matching.
    standardize: Option<Vec<(f64, f64)>>,
    fitted: Fitted,
}

fn standardize(v: &FeatureVector, stats: &[(f64, f64)]) -> Result<FeatureVector> {
    if v.len() != stats.len() {
        return Err(Error::DimensionMismatch {
            expected: stats.len(),
            got: v.len(),
        });
    }
    let mut out = v.clone();
    for (x, (m, s)) in out.values.iter_mut().zip(stats) {
        *x = (*x - m) / s;
    }
    Ok(out)
}

fn trajectory_points(fv: &FeatureVector) -> Result<Vec<[f64; 2]>> {
    let mut pts: Vec<[f64; 2]> = Trajectory::from_feature(fv)?.valid().iter().map(|p| p.normalized()).collect();
    if pts.is_empty() {
        pts.push([0.0, 0.0]);
    }
    Ok(pts)
}

impl TrainedModel {
    pub fn fit(feats: &[RecordFeatures], method: Method, cfg: &PipelineConfig, seed_value: u64) -> Result<Self> {
        cfg.validate()?;
        if feats.is_empty() {
            return Err(Error::EmptyInput("features"));
        }
        let mut vectors: Vec<FeatureVector> = vectors_of(feats, method.features)?.into_iter().cloned().collect();
        let pca = match method.features {
            FeatureSet::PcaSpec | FeatureSet::PcaEnvimg | FeatureSet::PcaEnv => {
                let model = subspace::fit_pca(&vectors, cfg.pca_dim)?;
                vectors = vectors
                    .iter()
                    .map(|v| subspace::project(&model, v))
                    .collect::<Result<_>>()?;
                Some(model)
            }
            _ => None,
        };
        let standardize_stats = (method.features == FeatureSet::Empirical
            && cfg.zscore_empirical
            && method.classifier != ClassifierKind::Svm)
            .then(|| {
                let m = vectors.len() as f64;
                (0..vectors[0].len())
                    .map(|j| {
                        let mean = vectors.iter().map(|v| v.values[j]).sum::<f64>() / m;
                        let sd = (vectors.iter().map(|v| (v.values[j] - mean).powi(2)).sum::<f64>() / m).sqrt();
                        (mean, if sd > 1e-12 { sd } else { 1.0 })
                    })
                    .collect::<Vec<_>>()
            });
        if let Some(stats) = &standardize_stats {
            vectors = vectors.iter().map(|v| standardize(v, stats)).collect::<Result<_>>()?;
        }
        let fitted = match (method.features, method.classifier) {
            (FeatureSet::Trajectory, ClassifierKind::NnMhd) => {
                let mut centres = Vec::new();
                for label in GestureLabel::ALL {
                    let members: Vec<Trajectory> = vectors
                        .iter()
                        .filter(|v| v.label == Some(label))
                        .map(Trajectory::from_feature)
                        .collect::<Result<_>>()?;
                    if members.is_empty() {
                        continue;
                    }
                    let s = seed::sub_seed(seed_value, seed::KMEANS_INIT, label.index() as u64);
                    let c = features::central_trajectory(&members, cfg.sparsity, s)?;
                    centres.push((label, c.points.iter().map(|p| p.normalized()).collect()));
                }
                Fitted::Centres(centres)
            }
            (_, ClassifierKind::Svm) => Fitted::Svm(classify::fit_svm(
                &vectors,
                &SvmConfig {
                    seed: seed::sub_seed(seed_value, seed::SVM_SHUFFLE, 0),
                    ..cfg.svm
                },
            )?),
            (_, c) => Fitted::Nn(NnModel::fit_k(vectors, c.distance().expect("distance classifier"), cfg.knn_k)?),
        };
        Ok(Self {
            method,
            config: *cfg,
            pca,
            standardize: standardize_stats,
            fitted,
        })
    }

    pub fn predict(&self, rf: &RecordFeatures) -> Result<GestureLabel> {
        let raw = vectors_of(std::slice::from_ref(rf), self.method.features)?[0];
        let mut x = match &self.pca {
            Some(model) => subspace::project(model, raw)?,
            None => raw.clone(),
        };
        if let Some(stats) = &self.standardize {
            x = standardize(&x, stats)?;
        }
        match &self.fitted {
            Fitted::Nn(m) => m.predict(&x),
            Fitted::Svm(m) => m.predict(&x),
            Fitted::Centres(centres) => {
                let pts = trajectory_points(&x)?;
                let d = centres
                    .iter()
                    .map(|(_, c)| classify::modified_hausdorff(&pts, c))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(centres[classify::argmin(d).ok_or(Error::EmptyInput("class centres"))?].0)
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed model: {e}")))
    }
}
