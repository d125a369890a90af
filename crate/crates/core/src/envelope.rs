//! Positive and negative micro-Doppler envelopes.
//!
//! For each column the scan starts at the edge of the effective band and moves
//! toward zero Doppler; the first bin whose squared value reaches
//! `sigma * E(n)` marks the envelope, `E(n)` being that half's column energy.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::GestureLabel;
use crate::tfr::{GrayImage, Spectrogram};

/// Origin of a feature vector; fixes its layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    /// `[e_U; e_L]` in Hz.
    Envelope,
    /// PCA coefficients.
    Pca,
    /// `[T, R, B_w]`.
    Empirical,
    /// `[t_1, f_1, A_1, ..., t_P, f_P, A_P]`.
    Trajectory,
    /// Row-major pixels of a gray image.
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub label: Option<GestureLabel>,
    pub kind: FeatureKind,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, label: GestureLabel, kind: FeatureKind) -> Self {
        Self {
            values,
            label: Some(label),
            kind,
        }
    }

    pub fn unlabeled(values: Vec<f64>, kind: FeatureKind) -> Self {
        Self {
            values,
            label: None,
            kind,
        }
    }

    pub fn with_label(mut self, label: GestureLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvelopeConfig {
    /// Fixed `(sigma_U, sigma_L)`; `None` calibrates both per record.
    pub sigma: Option<(f64, f64)>,
    /// Used when calibration finds no active column.
    pub fallback_sigma: f64,
    /// Calibration anchors at the outer bin still within this many dB of the peak.
    pub calibration_drop_db: f64,
    pub n_points: usize,
    pub beta: f64,
    /// Bins closer to zero Doppler than this are never envelope points.
    pub min_freq_hz: f64,
    /// Columns below `gate_factor * median` half-energy are silent.
    pub gate_factor: f64,
    /// A half is silent when its energy is below this fraction of the other half's.
    pub cross_gate: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            sigma: None,
            fallback_sigma: 0.005,
            calibration_drop_db: 10.0,
            n_points: 100,
            beta: 0.99,
            min_freq_hz: 20.0,
            gate_factor: 3.0,
            cross_gate: 1e-3,
        }
    }
}

impl EnvelopeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some((u, l)) = self.sigma {
            if !(u > 0.0 && u < 1.0 && l > 0.0 && l < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "scale factors must lie in (0, 1), got ({u}, {l})"
                )));
            }
        }
        if !(self.fallback_sigma > 0.0 && self.fallback_sigma < 1.0) {
            return Err(Error::InvalidConfig("fallback sigma must lie in (0, 1)".into()));
        }
        if self.n_points < 8 {
            return Err(Error::InvalidConfig(format!(
                "envelope length {} below 8",
                self.n_points
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta {} outside (0, 1]", self.beta)));
        }
        if !(self.min_freq_hz >= 0.0 && self.gate_factor >= 0.0 && self.cross_gate >= 0.0) {
            return Err(Error::InvalidConfig("gates must be non-negative".into()));
        }
        Ok(())
    }
}

/// Upper and lower envelope traces on a common, uniformly resampled time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub times: Vec<f64>,
}

impl EnvelopePair {
    pub fn zeros(times: Vec<f64>) -> Self {
        Self {
            upper: vec![0.0; times.len()],
            lower: vec![0.0; times.len()],
            times,
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    /// Rebuilds a pair from an envelope feature vector; times span `[t0, t1]`.
    pub fn from_feature(fv: &FeatureVector, t0: f64, t1: f64) -> Result<Self> {
        if fv.kind != FeatureKind::Envelope || fv.len() % 2 != 0 || fv.is_empty() {
            return Err(Error::Data("not an envelope feature vector".into()));
        }
        let n = fv.len() / 2;
        Ok(Self {
            upper: fv.values[..n].to_vec(),
            lower: fv.values[n..].to_vec(),
            times: linspace(t0, t1, n),
        })
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// `(E_U(n), E_L(n))`: per-column sums of squared values over the positive and
/// the negative frequency rows. The zero row belongs to neither.
pub fn half_energies(spec: &Spectrogram) -> (Vec<f64>, Vec<f64>) {
    band_half_energies(spec, 0.0)
}

/// Half energies restricted to rows with `|f| >= min_hz` (and `f != 0`).
pub fn band_half_energies(spec: &Spectrogram, min_hz: f64) -> (Vec<f64>, Vec<f64>) {
    let freqs = spec.freqs();
    let mut upper = Vec::with_capacity(spec.n_times());
    let mut lower = Vec::with_capacity(spec.n_times());
    for col in spec.power().outer_iter() {
        let (mut u, mut l) = (0.0, 0.0);
        for (&f, &v) in freqs.iter().zip(col.iter()) {
            if f > 0.0 && f >= min_hz {
                u += v * v;
            } else if f < 0.0 && -f >= min_hz {
                l += v * v;
            }
        }
        upper.push(u);
        lower.push(l);
    }
    (upper, lower)
}

/// Smallest symmetric `F >= min_hz` such that rows with `min_hz <= |f| <= F`
/// hold a `beta` fraction of the power of all rows with `|f| >= min_hz`.
pub fn effective_band(spec: &Spectrogram, beta: f64, min_hz: f64) -> f64 {
    let freqs = spec.freqs();
    let row_energy: Vec<f64> = {
        let mut e = vec![0.0; freqs.len()];
        for col in spec.power().outer_iter() {
            for (acc, &v) in e.iter_mut().zip(col.iter()) {
                *acc += v;
            }
        }
        e
    };
    // energy by distance from zero Doppler, in increasing |f|
    let mut by_abs: Vec<(f64, f64)> = freqs
        .iter()
        .zip(&row_energy)
        .filter(|(f, _)| f.abs() >= min_hz && **f != 0.0)
        .map(|(f, e)| (f.abs(), *e))
        .collect();
    by_abs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = by_abs.iter().map(|x| x.1).sum();
    if total <= 0.0 {
        return min_hz;
    }
    let target = beta * total;
    let mut acc = 0.0;
    let mut i = 0;
    while i < by_abs.len() {
        let f = by_abs[i].0;
        // both signs at the same |f| enter together
        while i < by_abs.len() && by_abs[i].0 == f {
            acc += by_abs[i].1;
            i += 1;
        }
        if acc >= target * (1.0 - 1e-12) {
            return f.max(min_hz);
        }
    }
    by_abs.last().map_or(min_hz, |x| x.0.max(min_hz))
}

struct Half {
    /// Rows ordered from the band edge toward zero Doppler.
    scan: Vec<usize>,
    energy: Vec<f64>,
    active: Vec<bool>,
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn gate(energy: &[f64], other: &[f64], cfg: &EnvelopeConfig) -> Vec<bool> {
    let max = energy.iter().copied().fold(0.0, f64::max);
    // a record whose every column is active would otherwise gate itself out
    let floor = (cfg.gate_factor * median(energy)).min(0.5 * max);
    energy
        .iter()
        .zip(other)
        .map(|(&e, &o)| e > 0.0 && e >= floor && e >= cfg.cross_gate * o)
        .collect()
}

/// Scale factor putting the threshold of the strongest column `drop_db`
/// below its peak, so the scan there stops at the outermost bin of that level.
fn calibrate(power: &Array2<f64>, half: &Half, drop_db: f64) -> Option<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (n, col) in power.outer_iter().enumerate() {
        if !half.active[n] {
            continue;
        }
        for &k in &half.scan {
            if best.is_none_or(|b| col[k] > b.1) {
                best = Some((n, col[k]));
            }
        }
    }
    let (n, peak) = best?;
    if peak <= 0.0 {
        return None;
    }
    let limit = peak * 10f64.powf(-drop_db / 10.0);
    Some((limit * limit / half.energy[n]).clamp(f64::MIN_POSITIVE, 1.0))
}

fn trace(power: &Array2<f64>, half: &Half, freqs: &[f64], sigma: f64) -> Vec<f64> {
    power
        .outer_iter()
        .enumerate()
        .map(|(n, col)| {
            if !half.active[n] {
                return 0.0;
            }
            let threshold = sigma * half.energy[n];
            half.scan
                .iter()
                .find(|&&k| col[k] * col[k] >= threshold)
                .map_or(0.0, |&k| freqs[k])
        })
        .collect()
}

/// Linear resampling of `x` onto `n` points spanning the same support.
pub fn resample(x: &[f64], n: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; n];
    }
    if x.len() == n {
        return x.to_vec();
    }
    if x.len() == 1 || n == 1 {
        return vec![x[0]; n];
    }
    let scale = (x.len() - 1) as f64 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let p = i as f64 * scale;
            let i0 = (p.floor() as usize).min(x.len() - 1);
            let i1 = (i0 + 1).min(x.len() - 1);
            let w = p - i0 as f64;
            x[i0] * (1.0 - w) + x[i1] * w
        })
        .collect()
}

/// Envelope traces of a spectrogram, resampled to `cfg.n_points`.
pub fn extract(spec: &Spectrogram, cfg: &EnvelopeConfig) -> Result<EnvelopePair> {
    cfg.validate()?;
    if spec.is_empty() {
        return Err(Error::EmptyInput("spectrogram"));
    }
    let times = linspace(spec.times()[0], *spec.times().last().unwrap(), cfg.n_points);
    let (eu, el) = band_half_energies(spec, cfg.min_freq_hz);
    if eu.iter().chain(&el).all(|&e| e == 0.0) {
        return Ok(EnvelopePair::zeros(times));
    }
    let band = effective_band(spec, cfg.beta, cfg.min_freq_hz);
    let freqs = spec.freqs();
    let mut up_rows: Vec<usize> = (0..freqs.len())
        .filter(|&k| freqs[k] > 0.0 && freqs[k] >= cfg.min_freq_hz && freqs[k] <= band)
        .collect();
    up_rows.reverse();
    let low_rows: Vec<usize> = (0..freqs.len())
        .filter(|&k| freqs[k] < 0.0 && -freqs[k] >= cfg.min_freq_hz && -freqs[k] <= band)
        .collect();
    let upper = Half {
        scan: up_rows,
        active: gate(&eu, &el, cfg),
        energy: eu,
    };
    let lower = Half {
        scan: low_rows,
        active: gate(&el, &upper.energy, cfg),
        energy: el,
    };
    let power = spec.power();
    let (su, sl) = match cfg.sigma {
        Some(s) => s,
        None => (
            calibrate(power, &upper, cfg.calibration_drop_db).unwrap_or(cfg.fallback_sigma),
            calibrate(power, &lower, cfg.calibration_drop_db).unwrap_or(cfg.fallback_sigma),
        ),
    };
    Ok(EnvelopePair {
        upper: resample(&trace(power, &upper, freqs, su), cfg.n_points),
        lower: resample(&trace(power, &lower, freqs, sl), cfg.n_points),
        times,
    })
}

/// `[e_U; e_L]` in Hz.
pub fn to_feature(env: &EnvelopePair) -> Result<FeatureVector> {
    if env.upper.len() != env.lower.len() {
        return Err(Error::DimensionMismatch {
            expected: env.upper.len(),
            got: env.lower.len(),
        });
    }
    let mut values = env.upper.clone();
    values.extend_from_slice(&env.lower);
    Ok(FeatureVector::unlabeled(values, FeatureKind::Envelope))
}

/// Binary image marking both envelopes, laid out like the spectrogram image
/// (row 0 is the top of the frequency axis of `spec`).
pub fn envelope_image(spec: &Spectrogram, env: &EnvelopePair, size: (usize, usize)) -> Result<GrayImage> {
    let (rows, cols) = size;
    if rows < 2 || cols == 0 {
        return Err(Error::InvalidConfig("envelope image needs at least 2 rows and 1 column".into()));
    }
    if env.upper.len() != env.lower.len() || env.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: env.upper.len(),
            got: env.lower.len(),
        });
    }
    let (fmin, fmax) = match (spec.freqs().first(), spec.freqs().last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        _ => return Err(Error::EmptyInput("frequency axis")),
    };
    let row_of = |f: f64| -> usize {
        let r = (fmax - f) / (fmax - fmin) * (rows - 1) as f64;
        r.round().clamp(0.0, (rows - 1) as f64) as usize
    };
    let up = resample(&env.upper, cols);
    let low = resample(&env.lower, cols);
    let mut pixels = Array2::zeros((rows, cols));
    for c in 0..cols {
        pixels[[row_of(up[c]), c]] = 1.0;
        pixels[[row_of(low[c]), c]] = 1.0;
    }
    Ok(GrayImage::new(pixels))
}
