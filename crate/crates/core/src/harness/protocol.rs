//! Repeated stratified holdout and confusion-matrix accumulation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::dataset::Dataset;
use crate::harness::pipeline::{build_predictor, Method, PipelineConfig, Predictor, RecordFeatures};
use crate::seed;
use crate::simulate::GestureLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalProtocol {
    pub train_fraction: f64,
    pub trials: usize,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            trials: 20,
            seed: 0,
            stratified: true,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("at least one trial is required".into()));
        }
        Ok(())
    }
}

/// Train and test indices of one trial, each ascending. Per class,
/// `floor(fraction * n)` samples train and the rest test.
pub fn split_labels(labels: &[GestureLabel], protocol: &EvalProtocol, trial: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    protocol.validate()?;
    let mut rng = seed::stream_rng(protocol.seed, seed::SPLIT, trial as u64);
    let groups: Vec<Vec<usize>> = if protocol.stratified {
        GestureLabel::ALL
            .iter()
            .map(|&l| (0..labels.len()).filter(|&i| labels[i] == l).collect())
            .collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (g, mut members) in groups.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            let label = if protocol.stratified { GestureLabel::ALL[g].letter() } else { '*' };
            return Err(Error::ClassTooSmall {
                label,
                have: members.len(),
                need: 2,
            });
        }
        members.shuffle(&mut rng);
        let n_train = ((protocol.train_fraction * members.len() as f64).floor() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(dataset: &Dataset, protocol: &EvalProtocol, trial: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    split_labels(&dataset.labels(), protocol, trial)
}

/// Counts accumulated over all trials, rows = true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; GestureLabel::COUNT]; GestureLabel::COUNT],
    pub trial_accuracies: Vec<f64>,
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self {
            counts: [[0; GestureLabel::COUNT]; GestureLabel::COUNT],
            trial_accuracies: Vec::new(),
        }
    }

    /// Adds one trial's predictions.
    pub fn add_trial(&mut self, truth: &[GestureLabel], predicted: &[GestureLabel]) {
        let mut correct = 0usize;
        for (t, p) in truth.iter().zip(predicted) {
            self.counts[t.index()][p.index()] += 1;
            correct += (t == p) as usize;
        }
        self.trial_accuracies
            .push(100.0 * correct as f64 / truth.len().max(1) as f64);
    }

    /// Row percentages; empty rows stay zero.
    pub fn percentages(&self) -> [[f64; GestureLabel::COUNT]; GestureLabel::COUNT] {
        let mut out = [[0.0; GestureLabel::COUNT]; GestureLabel::COUNT];
        for (o, row) in out.iter_mut().zip(&self.counts) {
            let total: u64 = row.iter().sum();
            if total > 0 {
                for (v, &c) in o.iter_mut().zip(row) {
                    *v = 100.0 * c as f64 / total as f64;
                }
            }
        }
        out
    }

    /// Pooled accuracy over every test prediction, in percent.
    pub fn overall_accuracy(&self) -> f64 {
        let total: u64 = self.counts.iter().flatten().sum();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..GestureLabel::COUNT).map(|i| self.counts[i][i]).sum();
        100.0 * correct as f64 / total as f64
    }

    pub fn mean_trial_accuracy(&self) -> f64 {
        if self.trial_accuracies.is_empty() {
            return 0.0;
        }
        self.trial_accuracies.iter().sum::<f64>() / self.trial_accuracies.len() as f64
    }

    /// Sample standard deviation of the per-trial accuracies.
    pub fn accuracy_std(&self) -> f64 {
        let n = self.trial_accuracies.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean_trial_accuracy();
        (self.trial_accuracies.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    }
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

/// Runs every trial (in parallel on the current rayon pool) and accumulates
/// the predictions in trial order.
pub fn evaluate_with<P: Predictor + ?Sized>(
    labels: &[GestureLabel],
    protocol: &EvalProtocol,
    predictor: &P,
) -> Result<ConfusionMatrix> {
    protocol.validate()?;
    let results: Vec<(Vec<GestureLabel>, Vec<GestureLabel>)> = (0..protocol.trials)
        .into_par_iter()
        .map(|trial| {
            let wrap = |e: Error| Error::Trial {
                trial,
                source: Box::new(e),
            };
            let (train, test) = split_labels(labels, protocol, trial).map_err(wrap)?;
            let predicted = predictor.predict(trial, &train, &test).map_err(wrap)?;
            if predicted.len() != test.len() {
                return Err(wrap(Error::DimensionMismatch {
                    expected: test.len(),
                    got: predicted.len(),
                }));
            }
            Ok((test.iter().map(|&i| labels[i]).collect(), predicted))
        })
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::new();
    for (truth, predicted) in &results {
        cm.add_trial(truth, predicted);
    }
    Ok(cm)
}

/// Evaluates one method on extracted features.
pub fn evaluate(
    feats: &[RecordFeatures],
    method: Method,
    cfg: &PipelineConfig,
    protocol: &EvalProtocol,
) -> Result<ConfusionMatrix> {
    let labels: Vec<GestureLabel> = feats.iter().map(|f| f.label).collect();
    let predictor = build_predictor(feats, method, cfg, protocol.seed)?;
    evaluate_with(&labels, protocol, predictor.as_ref())
}
