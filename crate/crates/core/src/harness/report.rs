//! JSON and CSV renderings of an evaluation. Reports carry no timestamps so
//! identical runs produce identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::pipeline::{Method, PipelineConfig};
use crate::harness::protocol::{ConfusionMatrix, EvalProtocol};
use crate::io;
use crate::simulate::GestureLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub method: Method,
    pub labels: Vec<String>,
    pub counts: [[u64; GestureLabel::COUNT]; GestureLabel::COUNT],
    /// Row percentages, rows = true class.
    pub confusion: [[f64; GestureLabel::COUNT]; GestureLabel::COUNT],
    pub overall_accuracy: f64,
    pub mean_trial_accuracy: f64,
    pub accuracy_std: f64,
    pub trial_accuracies: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub n_records: usize,
    pub config_hash: String,
}

/// SHA-256 (hex) of the serialised pipeline configuration and method.
pub fn config_hash(cfg: &PipelineConfig, method: &Method) -> String {
    let canonical = serde_json::to_string(&(cfg, method)).expect("configuration serialises");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Report {
    pub fn new(cm: &ConfusionMatrix, method: Method, cfg: &PipelineConfig, protocol: &EvalProtocol, n_records: usize) -> Self {
        Self {
            method,
            labels: GestureLabel::ALL.iter().map(|l| l.letter().to_string()).collect(),
            counts: cm.counts,
            confusion: cm.percentages(),
            overall_accuracy: cm.overall_accuracy(),
            mean_trial_accuracy: cm.mean_trial_accuracy(),
            accuracy_std: cm.accuracy_std(),
            trial_accuracies: cm.trial_accuracies.clone(),
            trials: protocol.trials,
            seed: protocol.seed,
            n_records,
            config_hash: config_hash(cfg, &method),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v:.2}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("overall_accuracy,{:.2}\n", self.overall_accuracy));
        out.push_str(&format!("accuracy_std,{:.2}\n", self.accuracy_std));
        out.push_str(&format!("trials,{}\n", self.trials));
        out.push_str(&format!("seed,{}\n", self.seed));
        out.push_str(&format!("method,{}\n", self.method));
        out.push_str(&format!("config_hash,{}\n", self.config_hash));
        out
    }

    /// Writes `<stem>.json` and `<stem>.csv` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        io::write_bytes(&dir.join(format!("{stem}.json")), self.to_json().as_bytes())?;
        io::write_bytes(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())
    }
}
