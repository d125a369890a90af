//! Motion onset/offset detection with the power burst curve (PBC).
//!
//! The PBC of a spectrogram column is the energy `sum |S(n,k)|^2` inside a
//! negative and a positive Doppler band; the band around zero Doppler is left
//! out. After a centred moving average the curve is thresholded at
//! `min + alpha * (max - min)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::IQRecord;
use crate::tfr::Spectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbcConfig {
    pub neg_band_hz: (f64, f64),
    pub pos_band_hz: (f64, f64),
    /// Moving-average length in columns (odd).
    pub smoothing: usize,
    pub alpha: f64,
    /// Runs separated by less than this are merged into one motion.
    pub merge_gap_s: f64,
    /// Merged runs are shrunk by this much at both ends (negative widens). A
    /// column already responds when motion enters its analysis window.
    pub edge_compensation_s: f64,
    /// The threshold never drops below `median + noise_guard * MAD` of the
    /// smoothed curve; 0 disables the guard.
    pub noise_guard: f64,
}

impl Default for PbcConfig {
    fn default() -> Self {
        Self {
            neg_band_hz: (-500.0, -20.0),
            pos_band_hz: (20.0, 500.0),
            smoothing: 3,
            alpha: 0.02,
            merge_gap_s: 0.2,
            edge_compensation_s: 0.03,
            noise_guard: 5.0,
        }
    }
}

impl PbcConfig {
    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = self.neg_band_hz;
        let (p1, p2) = self.pos_band_hz;
        if !(n1 < n2 && n2 < 0.0 && 0.0 < p1 && p1 < p2) {
            return Err(Error::InvalidConfig(format!(
                "bands must satisfy KN1 < KN2 < 0 < KP1 < KP2, got [{n1}, {n2}] and [{p1}, {p2}]"
            )));
        }
        if !(0.01..=0.2).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0.01, 0.2]",
                self.alpha
            )));
        }
        if self.smoothing == 0 || self.smoothing % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "smoothing window {} must be odd",
                self.smoothing
            )));
        }
        if !(self.merge_gap_s >= 0.0) {
            return Err(Error::InvalidConfig("merge gap must be non-negative".into()));
        }
        if !(self.noise_guard >= 0.0 && self.noise_guard.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise guard {} must be non-negative", self.noise_guard)));
        }
        if !self.edge_compensation_s.is_finite() {
            return Err(Error::InvalidConfig("edge compensation must be finite".into()));
        }
        Ok(())
    }
}

/// Onset and offset of one motion, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionInterval {
    pub onset: f64,
    pub offset: f64,
}

impl MotionInterval {
    pub fn new(onset: f64, offset: f64) -> Result<Self> {
        if !(onset < offset) {
            return Err(Error::Data(format!(
                "interval onset {onset} s must precede offset {offset} s"
            )));
        }
        Ok(Self { onset, offset })
    }

    pub fn length(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.onset + self.offset)
    }

    pub fn shifted(&self, dt: f64) -> Self {
        Self {
            onset: self.onset + dt,
            offset: self.offset + dt,
        }
    }
}

/// Power burst curve of every column.
pub fn pbc(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let freqs = spec.freqs();
    let (lo, hi) = (cfg.neg_band_hz.0, cfg.pos_band_hz.1);
    let (axis_lo, axis_hi) = match (freqs.first(), freqs.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::EmptyInput("spectrogram")),
    };
    if axis_lo > lo || axis_hi < hi {
        return Err(Error::BandAxisMismatch {
            lo,
            hi,
            axis_lo,
            axis_hi,
        });
    }
    let in_band = |f: f64| {
        (f >= cfg.neg_band_hz.0 && f <= cfg.neg_band_hz.1)
            || (f >= cfg.pos_band_hz.0 && f <= cfg.pos_band_hz.1)
    };
    let rows: Vec<usize> = (0..freqs.len()).filter(|&k| in_band(freqs[k])).collect();
    Ok(spec
        .power()
        .outer_iter()
        .map(|col| rows.iter().map(|&k| col[k] * col[k]).sum())
        .collect())
}

/// Centred moving average; near the ends the average covers only the
/// samples that exist.
pub fn smooth(s: &[f64], win: usize) -> Result<Vec<f64>> {
    if win == 0 || win % 2 == 0 {
        return Err(Error::InvalidConfig(format!("smoothing window {win} must be odd")));
    }
    let half = win / 2;
    let mut prefix = Vec::with_capacity(s.len() + 1);
    prefix.push(0.0);
    for &v in s {
        prefix.push(prefix.last().unwrap() + v);
    }
    Ok((0..s.len())
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(s.len());
            // direct sum keeps short windows exact; prefix sums are used for long ones
            if b - a <= 32 {
                s[a..b].iter().sum::<f64>() / (b - a) as f64
            } else {
                (prefix[b] - prefix[a]) / (b - a) as f64
            }
        })
        .collect())
}

/// Detection threshold `min + alpha * (max - min)`, raised to
/// `median + guard * MAD` when that is higher. `None` for a flat curve.
pub fn threshold(sf: &[f64], alpha: f64, guard: f64) -> Result<Option<f64>> {
    if sf.is_empty() {
        return Err(Error::EmptyInput("power burst curve"));
    }
    let max = sf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sf.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Ok(None);
    }
    let mut t = min + alpha * (max - min);
    if guard > 0.0 {
        let med = median(sf.to_vec());
        let mad = median(sf.iter().map(|v| (v - med).abs()).collect());
        t = t.max(med + guard * mad);
    }
    Ok(Some(t))
}

fn median(mut v: Vec<f64>) -> f64 {
    let mid = v.len() / 2;
    *v.select_nth_unstable_by(mid, f64::total_cmp).1
}

/// Maximal index runs `[start, end)` with `sf >= threshold`.
pub fn runs_above(sf: &[f64], threshold: f64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &v) in sf.iter().enumerate() {
        match (v >= threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, sf.len()));
    }
    runs
}

/// Column-index runs `[start, end)` where the curve reaches
/// `min + alpha * (max - min)`.
pub fn detect_runs(sf: &[f64], alpha: f64) -> Result<Vec<(usize, usize)>> {
    Ok(threshold(sf, alpha, 0.0)?.map_or_else(Vec::new, |t| runs_above(sf, t)))
}

/// Threshold detection; interval times come from the spectrogram time axis.
pub fn detect(sf: &[f64], alpha: f64, spec: &Spectrogram) -> Result<Vec<MotionInterval>> {
    to_intervals(detect_runs(sf, alpha)?, spec)
}

fn to_intervals(runs: Vec<(usize, usize)>, spec: &Spectrogram) -> Result<Vec<MotionInterval>> {
    runs
        .into_iter()
        .map(|(a, b)| MotionInterval::new(spec.time_of_index(a), spec.time_of_index(b)))
        .collect()
}

/// Merges intervals separated by gaps shorter than `min_gap_s`.
pub fn merge_intervals(intervals: &[MotionInterval], min_gap_s: f64) -> Vec<MotionInterval> {
    let mut out: Vec<MotionInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match out.last_mut() {
            Some(last) if iv.onset - last.offset < min_gap_s => last.offset = last.offset.max(iv.offset),
            _ => out.push(*iv),
        }
    }
    out
}

/// Shrinks an interval by `c` at both ends; an interval shorter than `2c`
/// collapses onto a 1 ms span around its midpoint.
fn compensate(iv: MotionInterval, c: f64) -> MotionInterval {
    if iv.length() > 2.0 * c + 1e-3 {
        MotionInterval {
            onset: iv.onset + c,
            offset: iv.offset - c,
        }
    } else {
        let m = iv.midpoint();
        MotionInterval {
            onset: m - 5e-4,
            offset: m + 5e-4,
        }
    }
}

/// Merged, edge-compensated runs with the smoothed PBC energy of each.
fn scored_motions(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Vec<(f64, MotionInterval)>> {
    let s = pbc(spec, cfg)?;
    let sf = smooth(&s, cfg.smoothing)?;
    let runs = threshold(&sf, cfg.alpha, cfg.noise_guard)?.map_or_else(Vec::new, |t| runs_above(&sf, t));
    let merged = merge_intervals(&to_intervals(runs, spec)?, cfg.merge_gap_s);
    Ok(merged
        .into_iter()
        .map(|iv| {
            let energy = spec
                .times()
                .iter()
                .zip(&sf)
                .filter(|(t, _)| **t >= iv.onset && **t < iv.offset)
                .map(|(_, v)| v)
                .sum();
            (energy, compensate(iv, cfg.edge_compensation_s))
        })
        .collect())
}

/// PBC, smoothing, detection, gap merging and edge compensation.
pub fn segment_motions(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Vec<MotionInterval>> {
    Ok(scored_motions(spec, cfg)?.into_iter().map(|(_, iv)| iv).collect())
}

/// The detected motion carrying the most smoothed PBC energy.
pub fn dominant_motion(spec: &Spectrogram, cfg: &PbcConfig) -> Result<Option<MotionInterval>> {
    Ok(scored_motions(spec, cfg)?
        .into_iter()
        .fold(None, |best: Option<(f64, MotionInterval)>, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .map(|(_, iv)| iv))
}

/// First sample index (possibly negative) of the window [`window`] cuts.
pub fn window_start(interval: &MotionInterval, sample_rate_hz: f64, dur_s: f64) -> i64 {
    let n = (dur_s * sample_rate_hz).round() as i64;
    (interval.midpoint() * sample_rate_hz).round() as i64 - n / 2
}

/// A `dur_s` slice centred on the interval midpoint. Samples outside the
/// record are zero; ground-truth intervals are shifted into the new frame.
pub fn window(record: &IQRecord, interval: &MotionInterval, dur_s: f64) -> Result<IQRecord> {
    let total = record.duration_s();
    if interval.offset <= 0.0 || interval.onset >= total {
        return Err(Error::IntervalOutsideRecord {
            onset: interval.onset,
            offset: interval.offset,
            duration: total,
        });
    }
    let fs = record.sample_rate_hz;
    let n = (dur_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::InvalidConfig("window duration must be positive".into()));
    }
    let start = window_start(interval, fs, dur_s);
    let zero = Complex64::new(0.0, 0.0);
    let samples: Vec<Complex64> = (0..n as i64)
        .map(|i| {
            let j = start + i;
            if j >= 0 && (j as usize) < record.samples.len() {
                record.samples[j as usize]
            } else {
                zero
            }
        })
        .collect();
    let shift = -(start as f64) / fs;
    let end = n as f64 / fs;
    let truth = record
        .truth
        .iter()
        .map(|iv| iv.shifted(shift))
        .filter(|iv| iv.offset > 0.0 && iv.onset < end)
        .collect();
    Ok(IQRecord {
        samples,
        sample_rate_hz: fs,
        label: record.label,
        config: crate::simulate::SimConfig {
            duration_s: end,
            ..record.config
        },
        truth,
    })
}
