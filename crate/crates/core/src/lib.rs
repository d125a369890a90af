//! Micro-Doppler arm-gesture recognition toolkit.
//!
//! The crate covers the whole chain from synthetic continuous-wave radar
//! returns to classification reports:
//!
//! ```text
//! simulate -> tfr (spectrogram) -> segmentation (power burst curve)
//!          -> envelope (max instantaneous Doppler) -> classify (NN / SVM)
//!                      \-> features (empirical, trajectories)
//!                      \-> subspace (PCA, canonical correlations)
//! harness: datasets, Monte Carlo protocol, confusion matrices, reports
//! ```

pub mod classify;
pub mod envelope;
pub mod error;
pub mod features;
pub mod harness;
pub mod io;
mod linalg;
pub mod seed;
pub mod segmentation;
pub mod simulate;
pub mod subspace;
pub mod tfr;

pub use envelope::{EnvelopeConfig, EnvelopePair, FeatureKind, FeatureVector};
pub use error::{Error, Result};
pub use segmentation::MotionInterval;
pub use simulate::{GestureLabel, IQRecord, SimConfig, SpeedMode};
pub use tfr::{GrayImage, Spectrogram, StftConfig};
