//! Spectrograms and their image forms.
//!
//! Column `n` of a spectrogram holds `|sum_m s(nH + m) h(m) e^{-j 2 pi m k / K}|^2`
//! for a rectangular window `h` of length `L`, zero-padded to `K` points and
//! reordered so that row 0 is `-fs/2` and row `K/2` is zero Doppler.

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::envelope::{FeatureKind, FeatureVector};
use crate::error::{Error, Result};
use crate::simulate::IQRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub window_len: usize,
    pub window: WindowKind,
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 2048,
            window: WindowKind::Rectangular,
            fft_size: 4096,
            hop: 128,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.window_len > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "window length {} must be in 1..={}",
                self.window_len, self.fft_size
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidConfig("hop must be at least 1".into()));
        }
        Ok(())
    }

    fn window_coefficients(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Rectangular => vec![1.0; self.window_len],
        }
    }
}

/// Time x frequency power matrix with calibrated axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `power[[n, k]]`: time column `n`, frequency row `k`.
    power: Array2<f64>,
    times: Vec<f64>,
    freqs: Vec<f64>,
    bin_hz: f64,
}

impl Spectrogram {
    /// Builds a spectrogram from parts; `freqs` must be strictly increasing
    /// and all power values non-negative.
    pub fn from_parts(power: Array2<f64>, times: Vec<f64>, freqs: Vec<f64>, bin_hz: f64) -> Result<Self> {
        let (nt, nf) = power.dim();
        if nt != times.len() || nf != freqs.len() {
            return Err(Error::DimensionMismatch {
                expected: nt * nf,
                got: times.len() * freqs.len(),
            });
        }
        if freqs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Data("frequency axis is not strictly increasing".into()));
        }
        if power.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Data("spectrogram power must be finite and non-negative".into()));
        }
        Ok(Self {
            power,
            times,
            freqs,
            bin_hz,
        })
    }

    pub fn power(&self) -> &Array2<f64> {
        &self.power
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    /// Frequency resolution `fs / K`.
    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_freqs(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// Spacing of the time axis (0 for a single column).
    pub fn time_step(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }

    /// Time of a (possibly one-past-the-end) column index.
    pub fn time_of_index(&self, n: usize) -> f64 {
        self.times.first().copied().unwrap_or(0.0) + n as f64 * self.time_step()
    }

    /// Row nearest to frequency `f`.
    pub fn row_of_freq(&self, f: f64) -> usize {
        let i = self.freqs.partition_point(|&x| x < f);
        if i == 0 {
            0
        } else if i == self.freqs.len() {
            i - 1
        } else if (self.freqs[i] - f).abs() < (f - self.freqs[i - 1]).abs() {
            i
        } else {
            i - 1
        }
    }

    /// Keeps the rows with `lo <= f <= hi`.
    pub fn crop_band(&self, lo: f64, hi: f64) -> Result<Spectrogram> {
        let first = self.freqs.partition_point(|&f| f < lo);
        let end = self.freqs.partition_point(|&f| f <= hi);
        if first >= end {
            return Err(Error::BandAxisMismatch {
                lo,
                hi,
                axis_lo: self.freqs.first().copied().unwrap_or(f64::NAN),
                axis_hi: self.freqs.last().copied().unwrap_or(f64::NAN),
            });
        }
        Ok(Spectrogram {
            power: self.power.slice(ndarray::s![.., first..end]).to_owned(),
            times: self.times.clone(),
            freqs: self.freqs[first..end].to_vec(),
            bin_hz: self.bin_hz,
        })
    }

    pub fn scaled(&self, alpha: f64) -> Spectrogram {
        Spectrogram {
            power: &self.power * alpha,
            ..self.clone()
        }
    }

    /// Total power per frequency row.
    pub fn row_sums(&self) -> Vec<f64> {
        self.power.sum_axis(Axis(0)).to_vec()
    }
}

/// Short-time Fourier spectrogram of a record.
pub fn spectrogram(record: &IQRecord, cfg: &StftConfig) -> Result<Spectrogram> {
    spectrogram_of(&record.samples, record.sample_rate_hz, cfg)
}

pub fn spectrogram_of(samples: &[Complex64], sample_rate_hz: f64, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let (l, k, h) = (cfg.window_len, cfg.fft_size, cfg.hop);
    if samples.len() < l {
        return Err(Error::SignalTooShort {
            len: samples.len(),
            window: l,
        });
    }
    let n_cols = (samples.len() - l) / h + 1;
    let window = cfg.window_coefficients();
    let fft = FftPlanner::new().plan_fft_forward(k);
    let mut power = Array2::<f64>::zeros((n_cols, k));
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let half = k / 2;
    for (n, mut row) in power.outer_iter_mut().enumerate() {
        let frame = &samples[n * h..n * h + l];
        for (b, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *b = s * w;
        }
        buf[l..].fill(Complex64::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        // fftshift: natural bin j lands on row (j + K/2) mod K
        for (j, v) in buf.iter().enumerate() {
            row[(j + half) % k] = v.norm_sqr();
        }
    }
    let bin_hz = sample_rate_hz / k as f64;
    let freqs = (0..k).map(|r| (r as f64 - half as f64) * bin_hz).collect();
    let times = (0..n_cols)
        .map(|n| (n * h) as f64 / sample_rate_hz + l as f64 / (2.0 * sample_rate_hz))
        .collect();
    Ok(Spectrogram {
        power,
        times,
        freqs,
        bin_hz,
    })
}

/// Row-major gray-scale image with values in `[0, 1]`.
///
/// Images of spectrograms are laid out for display: row 0 is the highest
/// frequency, column 0 the earliest time.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Array2<f64>,
}

impl GrayImage {
    pub fn new(pixels: Array2<f64>) -> Self {
        Self {
            pixels: pixels.mapv(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            pixels: Array2::zeros((rows, cols)),
        }
    }

    /// Inverse of [`vectorize`].
    pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        let pixels = Array2::from_shape_vec((rows, cols), values.to_vec())
            .map_err(|e| Error::Data(e.to_string()))?;
        Ok(Self::new(pixels))
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut Array2<f64> {
        &mut self.pixels
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    /// Binary 8-bit PGM (P5).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols(), self.rows()).into_bytes();
        out.extend(self.pixels.iter().map(|&v| (v * 255.0).round() as u8));
        out
    }
}

/// Bilinear resampling with corner alignment (same size is the identity).
pub fn resize_bilinear(src: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let (sr, sc) = src.dim();
    if (sr, sc) == (rows, cols) {
        return src.clone();
    }
    let coord = |i: usize, dst: usize, srcn: usize| -> (usize, usize, f64) {
        if dst <= 1 || srcn <= 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (srcn - 1) as f64 / (dst - 1) as f64;
        let x0 = (x.floor() as usize).min(srcn - 1);
        let x1 = (x0 + 1).min(srcn - 1);
        (x0, x1, x - x0 as f64)
    };
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        let (r0, r1, fr) = coord(r, rows, sr);
        for c in 0..cols {
            let (c0, c1, fc) = coord(c, cols, sc);
            let top = src[[r0, c0]] * (1.0 - fc) + src[[r0, c1]] * fc;
            let bottom = src[[r1, c0]] * (1.0 - fc) + src[[r1, c1]] * fc;
            out[[r, c]] = top * (1.0 - fr) + bottom * fr;
        }
    }
    out
}

/// Display-oriented copy of a time x frequency matrix: frequency descending
/// down the rows, time along the columns.
pub(crate) fn display_layout(m: &Array2<f64>) -> Array2<f64> {
    let mut t = m.t().to_owned();
    t.invert_axis(Axis(0));
    t
}

/// dB-scaled, range-clipped, normalised gray image of a spectrogram.
pub fn to_gray(spec: &Spectrogram, size: (usize, usize), dyn_range_db: f64) -> Result<GrayImage> {
    if spec.is_empty() {
        return Err(Error::EmptyInput("spectrogram"));
    }
    if !(dyn_range_db > 0.0) || size.0 == 0 || size.1 == 0 {
        return Err(Error::InvalidConfig(
            "image size and dynamic range must be positive".into(),
        ));
    }
    let max = spec.power.fold(0.0f64, |m, &v| m.max(v));
    if max <= 0.0 {
        return Ok(GrayImage::zeros(size.0, size.1));
    }
    let min = spec.power.fold(f64::INFINITY, |m, &v| m.min(v));
    let norm = if min == max {
        spec.power.mapv(|_| 1.0)
    } else {
        let top = 10.0 * max.log10();
        let floor = top - dyn_range_db;
        spec.power.mapv(|v| {
            let db = if v > 0.0 { 10.0 * v.log10() } else { f64::NEG_INFINITY };
            (db.max(floor) - floor) / dyn_range_db
        })
    };
    let img = resize_bilinear(&display_layout(&norm), size.0, size.1);
    Ok(GrayImage::new(img))
}

/// Row-major flattening of an image.
pub fn vectorize(img: &GrayImage) -> FeatureVector {
    FeatureVector::unlabeled(img.pixels.iter().copied().collect(), FeatureKind::Image)
}
