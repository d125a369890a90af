//! Synthetic continuous-wave radar returns for six arm gestures.
//!
//! Each gesture is a kinematic plan: a handful of point scatterers (hands,
//! forearm midpoints, a static torso) whose radial range follows piecewise
//! raised-cosine strokes. The baseband return of a scatterer at range `r(t)`
//! is `a * exp(-j 4 pi r(t) / lambda)`, so motion towards the radar
//! (`dr/dt < 0`) produces positive Doppler.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::dataset::{Dataset, DatasetEntry};
use crate::seed::{self, StreamRng};
use crate::segmentation::MotionInterval;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Radial speed bound; keeps Doppler inside +/-500 Hz at a 12 mm wavelength.
pub const MAX_RADIAL_SPEED: f64 = 3.0;

/// Time stretch of the slow speed mode.
pub const SLOW_STRETCH: f64 = 1.3;

/// Orientation angles of the recording protocol, in degrees.
pub const PROTOCOL_ANGLES: [f64; 5] = [0.0, 10.0, -10.0, 20.0, -20.0];

const HAND_AMPLITUDE: f64 = 1.0;
const FOREARM_AMPLITUDE: f64 = 0.7;
const TORSO_AMPLITUDE: f64 = 0.3;
const LEFT_ARM_RATIO: f64 = 0.93;
const AMPLITUDE_JITTER: f64 = 0.15;
const TIMING_JITTER: f64 = 0.10;
const PLACEMENT_JITTER_S: f64 = 0.3;
const EDGE_MARGIN_S: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum GestureLabel {
    /// (a) pushing arms and pulling back
    PushPull,
    /// (b) crossing arms and opening
    CrossOpen,
    /// (c) crossing arms
    Cross,
    /// (d) rolling arms
    Roll,
    /// (e) stop sign
    StopSign,
    /// (f) pushing arms and opening
    PushOpen,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 6] = [
        GestureLabel::PushPull,
        GestureLabel::CrossOpen,
        GestureLabel::Cross,
        GestureLabel::Roll,
        GestureLabel::StopSign,
        GestureLabel::PushOpen,
    ];

    pub const COUNT: usize = 6;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Letter used in tables, `a` through `f`.
    pub fn letter(self) -> char {
        (b'a' + self.code()) as char
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureLabel::PushPull => "push-pull",
            GestureLabel::CrossOpen => "cross-open",
            GestureLabel::Cross => "cross",
            GestureLabel::Roll => "roll",
            GestureLabel::StopSign => "stop-sign",
            GestureLabel::PushOpen => "push-open",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.letter(), self.name())
    }
}

impl From<GestureLabel> for u8 {
    fn from(l: GestureLabel) -> u8 {
        l.code()
    }
}

impl TryFrom<u8> for GestureLabel {
    type Error = String;
    fn try_from(code: u8) -> Result<Self, String> {
        GestureLabel::from_code(code).ok_or_else(|| format!("invalid gesture code {code}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpeedMode {
    #[default]
    Normal,
    Slow,
}

impl SpeedMode {
    pub fn time_scale(self) -> f64 {
        match self {
            SpeedMode::Normal => 1.0,
            SpeedMode::Slow => SLOW_STRETCH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub carrier_hz: f64,
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub angle_deg: f64,
    pub speed: SpeedMode,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 25e9,
            sample_rate_hz: 12_800.0,
            duration_s: 5.0,
            angle_deg: 0.0,
            speed: SpeedMode::Normal,
            snr_db: 10.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Amplitude gain of the antenna pattern at the configured angle.
    pub fn angle_gain(&self) -> f64 {
        10f64.powf(-0.15 * self.angle_deg.abs() / 10.0)
    }

    pub fn max_doppler_hz(&self) -> f64 {
        2.0 * MAX_RADIAL_SPEED / self.wavelength()
    }

    pub fn n_samples(&self) -> Result<usize> {
        let n = self.duration_s * self.sample_rate_hz;
        if !(n.is_finite() && n >= 1.0) || (n - n.round()).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "duration {} s at {} Hz is not an integer sample count",
                self.duration_s, self.sample_rate_hz
            )));
        }
        Ok(n.round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0 && self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "carrier and sample rate must be positive".into(),
            ));
        }
        if self.sample_rate_hz <= 2.0 * self.max_doppler_hz() {
            return Err(Error::InvalidConfig(format!(
                "sample rate {} Hz does not exceed twice the maximum Doppler {:.1} Hz",
                self.sample_rate_hz,
                self.max_doppler_hz()
            )));
        }
        if !self.snr_db.is_finite() || !self.angle_deg.is_finite() {
            return Err(Error::InvalidConfig("SNR and angle must be finite".into()));
        }
        self.n_samples().map(|_| ())
    }
}

/// Radial range of one scatterer sampled at the radar rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererTrack {
    pub range_m: Vec<f64>,
    pub amplitude: f64,
}

impl ScattererTrack {
    /// Finite-difference radial velocity in m/s (one value per sample gap).
    pub fn radial_velocity(&self, sample_rate_hz: f64) -> Vec<f64> {
        self.range_m
            .windows(2)
            .map(|w| (w[1] - w[0]) * sample_rate_hz)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct IQRecord {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
    pub label: GestureLabel,
    pub config: SimConfig,
    /// Ground-truth active intervals; empty when unknown (e.g. loaded from disk).
    pub truth: Vec<MotionInterval>,
}

impl IQRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One raised-cosine displacement: the range moves by `displacement` metres
/// over `duration` seconds with zero velocity at both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stroke {
    pub start: f64,
    pub duration: f64,
    pub displacement: f64,
}

impl Stroke {
    fn offset_at(&self, t: f64) -> f64 {
        let u = (t - self.start) / self.duration;
        if u <= 0.0 {
            0.0
        } else if u >= 1.0 {
            self.displacement
        } else {
            self.displacement * 0.5 * (1.0 - (PI * u).cos())
        }
    }

    pub fn velocity_at(&self, t: f64) -> f64 {
        let u = (t - self.start) / self.duration;
        if u <= 0.0 || u >= 1.0 {
            0.0
        } else {
            self.displacement * PI / (2.0 * self.duration) * (PI * u).sin()
        }
    }

    pub fn peak_speed(&self) -> f64 {
        self.displacement.abs() * PI / (2.0 * self.duration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScattererPlan {
    pub base_range_m: f64,
    pub amplitude: f64,
    pub strokes: Vec<Stroke>,
}

impl ScattererPlan {
    pub fn range_at(&self, t: f64) -> f64 {
        self.base_range_m + self.strokes.iter().map(|s| s.offset_at(t)).sum::<f64>()
    }

    pub fn velocity_at(&self, t: f64) -> f64 {
        self.strokes.iter().map(|s| s.velocity_at(t)).sum()
    }
}

/// Kinematic plan of a record: scatterers plus the ground-truth active intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct GesturePlan {
    pub label: GestureLabel,
    pub scatterers: Vec<ScattererPlan>,
    pub active: Vec<MotionInterval>,
}

impl GesturePlan {
    pub fn tracks(&self, cfg: &SimConfig) -> Result<Vec<ScattererTrack>> {
        let n = cfg.n_samples()?;
        let fs = cfg.sample_rate_hz;
        Ok(self
            .scatterers
            .iter()
            .map(|sc| ScattererTrack {
                range_m: (0..n).map(|i| sc.range_at(i as f64 / fs)).collect(),
                amplitude: sc.amplitude,
            })
            .collect())
    }
}

/// Hand motion of one phase; the forearm midpoint moves by `forearm_ratio`
/// of the hand displacement.
#[derive(Debug, Clone, Copy)]
struct Phase {
    duration: f64,
    right: f64,
    left: f64,
    forearm_ratio: f64,
}

const fn both(duration: f64, displacement: f64, forearm_ratio: f64) -> Phase {
    Phase {
        duration,
        right: displacement,
        left: displacement * LEFT_ARM_RATIO,
        forearm_ratio,
    }
}

const fn opposed(duration: f64, displacement: f64, forearm_ratio: f64) -> Phase {
    Phase {
        duration,
        right: displacement,
        left: -displacement * LEFT_ARM_RATIO,
        forearm_ratio,
    }
}

const fn pause(duration: f64) -> Phase {
    Phase {
        duration,
        right: 0.0,
        left: 0.0,
        forearm_ratio: 0.0,
    }
}

/// Nominal (normal speed, unjittered) phase sequence per gesture. Negative
/// displacement is motion towards the radar.
fn template(label: GestureLabel) -> &'static [Phase] {
    const PUSH_PULL: [Phase; 2] = [both(0.32, -0.42, 0.55), both(0.38, 0.42, 0.55)];
    const CROSS_OPEN: [Phase; 5] = [
        both(0.28, -0.26, 0.35),
        both(0.28, 0.26, 0.35),
        pause(0.10),
        both(0.28, -0.28, 0.35),
        both(0.28, 0.28, 0.35),
    ];
    const CROSS: [Phase; 2] = [both(0.28, -0.26, 0.35), both(0.28, 0.26, 0.35)];
    const ROLL: [Phase; 3] = [
        opposed(0.30, -0.25, 0.5),
        opposed(0.30, 0.25, 0.5),
        opposed(0.30, -0.25, 0.5),
    ];
    const STOP_SIGN: [Phase; 1] = [Phase {
        duration: 0.55,
        right: 0.45,
        left: 0.0,
        forearm_ratio: 0.5,
    }];
    const PUSH_OPEN: [Phase; 2] = [both(0.32, -0.42, 0.55), both(0.50, 0.45, 0.8)];
    match label {
        GestureLabel::PushPull => &PUSH_PULL,
        GestureLabel::CrossOpen => &CROSS_OPEN,
        GestureLabel::Cross => &CROSS,
        GestureLabel::Roll => &ROLL,
        GestureLabel::StopSign => &STOP_SIGN,
        GestureLabel::PushOpen => &PUSH_OPEN,
    }
}

struct Body {
    right_hand: ScattererPlan,
    left_hand: ScattererPlan,
    right_forearm: ScattererPlan,
    left_forearm: ScattererPlan,
    torso: ScattererPlan,
}

impl Body {
    fn new(rng: &mut StreamRng, gain: f64) -> Self {
        let mut at = |base: f64, amplitude: f64| ScattererPlan {
            base_range_m: base + rng.random_range(-0.02..0.02),
            amplitude: amplitude * gain,
            strokes: Vec::new(),
        };
        Body {
            right_hand: at(2.70, HAND_AMPLITUDE),
            left_hand: at(2.72, HAND_AMPLITUDE),
            right_forearm: at(2.85, FOREARM_AMPLITUDE),
            left_forearm: at(2.86, FOREARM_AMPLITUDE),
            torso: at(3.00, TORSO_AMPLITUDE),
        }
    }

    /// Appends one jittered gesture starting at `onset` and returns its end time.
    fn perform(&mut self, phases: &[(Phase, f64, f64)], onset: f64) -> f64 {
        let mut t = onset;
        for &(phase, duration, amp) in phases {
            let push = |plan: &mut ScattererPlan, disp: f64| {
                if disp != 0.0 {
                    plan.strokes.push(Stroke {
                        start: t,
                        duration,
                        displacement: disp,
                    });
                }
            };
            push(&mut self.right_hand, phase.right * amp);
            push(&mut self.left_hand, phase.left * amp);
            push(&mut self.right_forearm, phase.right * amp * phase.forearm_ratio);
            push(&mut self.left_forearm, phase.left * amp * phase.forearm_ratio);
            t += duration;
        }
        t
    }

    fn into_plan(self, label: GestureLabel, active: Vec<MotionInterval>) -> GesturePlan {
        GesturePlan {
            label,
            scatterers: vec![
                self.right_hand,
                self.left_hand,
                self.right_forearm,
                self.left_forearm,
                self.torso,
            ],
            active,
        }
    }
}

/// Draws one timing and one amplitude factor for the whole rendition. The
/// draws do not depend on the speed mode, so slow and normal renditions of one
/// seed share the same jitter.
fn jittered_phases(label: GestureLabel, speed: SpeedMode, rng: &mut StreamRng) -> Vec<(Phase, f64, f64)> {
    let time = 1.0 + rng.random_range(-TIMING_JITTER..TIMING_JITTER);
    let amp = 1.0 + rng.random_range(-AMPLITUDE_JITTER..AMPLITUDE_JITTER);
    template(label)
        .iter()
        .map(|&p| (p, p.duration * time * speed.time_scale(), amp))
        .collect()
}

/// Kinematic plan of a single gesture placed near the middle of the record.
pub fn gesture_plan(label: GestureLabel, cfg: &SimConfig) -> Result<GesturePlan> {
    cfg.validate()?;
    let mut rng = seed::stream_rng(cfg.seed, seed::SIMULATE, 0);
    let mut body = Body::new(&mut rng, cfg.angle_gain());
    let phases = jittered_phases(label, cfg.speed, &mut rng);
    let active: f64 = phases.iter().map(|p| p.1).sum();
    let shift = rng.random_range(-PLACEMENT_JITTER_S..PLACEMENT_JITTER_S);
    let lo = EDGE_MARGIN_S.min((cfg.duration_s - active) / 2.0).max(0.0);
    let hi = (cfg.duration_s - active - lo).max(lo);
    let onset = ((cfg.duration_s - active) / 2.0 + shift).clamp(lo, hi);
    let end = body.perform(&phases, onset);
    Ok(body.into_plan(label, vec![MotionInterval::new(onset, end)?]))
}

/// A long recording with `repetitions` renditions of one gesture, evenly
/// spaced (the 40 s sessions that segmentation cuts into 5 s windows).
pub fn session_plan(label: GestureLabel, cfg: &SimConfig, repetitions: usize) -> Result<GesturePlan> {
    cfg.validate()?;
    if repetitions == 0 {
        return Err(Error::InvalidConfig("session needs at least one repetition".into()));
    }
    let mut rng = seed::stream_rng(cfg.seed, seed::SIMULATE, 0);
    let mut body = Body::new(&mut rng, cfg.angle_gain());
    let slot = cfg.duration_s / repetitions as f64;
    let mut active = Vec::with_capacity(repetitions);
    for r in 0..repetitions {
        let phases = jittered_phases(label, cfg.speed, &mut rng);
        let len: f64 = phases.iter().map(|p| p.1).sum();
        if len + 0.4 > slot {
            return Err(Error::InvalidConfig(format!(
                "{repetitions} repetitions do not fit in {} s",
                cfg.duration_s
            )));
        }
        let shift = rng.random_range(-0.1..0.1);
        let onset = r as f64 * slot + (slot - len) / 2.0 + shift;
        let end = body.perform(&phases, onset);
        active.push(MotionInterval::new(onset, end)?);
    }
    Ok(body.into_plan(label, active))
}

/// Scatterer tracks of one gesture rendition.
pub fn gesture_tracks(label: GestureLabel, cfg: &SimConfig) -> Result<Vec<ScattererTrack>> {
    gesture_plan(label, cfg)?.tracks(cfg)
}

/// Point-scatterer CW return plus complex white Gaussian noise.
///
/// The noise floor is set so that the boresight-equivalent signal power over
/// the moving samples sits `snr_db` above it; the antenna gain of an off-axis
/// angle therefore lowers the measured SNR. Without any signal the reference
/// power is 1.
pub fn synthesize(tracks: &[ScattererTrack], cfg: &SimConfig) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    if tracks.is_empty() {
        return Err(Error::EmptyInput("scatterer tracks"));
    }
    let n = cfg.n_samples()?;
    if let Some(t) = tracks.iter().find(|t| t.range_m.len() < n) {
        return Err(Error::TrackLengthMismatch {
            track: t.range_m.len(),
            segment: n,
        });
    }
    let k = 4.0 * PI / cfg.wavelength();
    let mut signal = vec![Complex64::new(0.0, 0.0); n];
    for track in tracks.iter().filter(|t| t.amplitude != 0.0) {
        for (s, &r) in signal.iter_mut().zip(&track.range_m) {
            *s += Complex64::from_polar(track.amplitude, -k * r);
        }
    }

    let moving: Vec<bool> = (0..n)
        .map(|i| {
            i > 0
                && tracks
                    .iter()
                    .any(|t| t.amplitude != 0.0 && t.range_m[i] != t.range_m[i - 1])
        })
        .collect();
    let n_moving = moving.iter().filter(|&&m| m).count();
    let power = if n_moving > 0 {
        signal
            .iter()
            .zip(&moving)
            .filter(|(_, &m)| m)
            .map(|(s, _)| s.norm_sqr())
            .sum::<f64>()
            / n_moving as f64
    } else {
        signal.iter().map(|s| s.norm_sqr()).sum::<f64>() / n as f64
    };
    let gain = cfg.angle_gain();
    let reference = if power > 0.0 { power / (gain * gain) } else { 1.0 };
    let noise_var = noise_floor(reference, cfg.snr_db);

    let sigma = (noise_var / 2.0).sqrt();
    let mut rng = seed::stream_rng(cfg.seed, seed::NOISE, 0);
    for s in signal.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *s += Complex64::new(sigma * re, sigma * im);
    }
    Ok(signal)
}

/// Complex noise variance placing `reference_power` at `snr_db`.
pub fn noise_floor(reference_power: f64, snr_db: f64) -> f64 {
    reference_power / 10f64.powf(snr_db / 10.0)
}

/// Synthesize a labelled record of one gesture.
pub fn simulate(label: GestureLabel, cfg: &SimConfig) -> Result<IQRecord> {
    let plan = gesture_plan(label, cfg)?;
    record_from_plan(&plan, cfg)
}

/// Synthesize a multi-repetition session.
pub fn simulate_session(label: GestureLabel, cfg: &SimConfig, repetitions: usize) -> Result<IQRecord> {
    let plan = session_plan(label, cfg, repetitions)?;
    record_from_plan(&plan, cfg)
}

pub fn record_from_plan(plan: &GesturePlan, cfg: &SimConfig) -> Result<IQRecord> {
    let tracks = plan.tracks(cfg)?;
    let samples = synthesize(&tracks, cfg)?;
    Ok(IQRecord {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
        label: plan.label,
        config: *cfg,
        truth: plan.active.clone(),
    })
}

/// All five protocol angles at both speeds.
pub fn protocol_grid(base: &SimConfig) -> Vec<SimConfig> {
    let mut grid = Vec::with_capacity(PROTOCOL_ANGLES.len() * 2);
    for speed in [SpeedMode::Normal, SpeedMode::Slow] {
        for &angle_deg in &PROTOCOL_ANGLES {
            grid.push(SimConfig {
                angle_deg,
                speed,
                ..*base
            });
        }
    }
    grid
}

/// Balanced dataset plan: `per_class` records of every gesture, cycling
/// through the configuration grid. Record seeds derive from the seed of the
/// first grid entry; records are synthesized lazily by the dataset.
pub fn generate_dataset(per_class: usize, cfg_grid: &[SimConfig]) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::InvalidConfig("per-class count must be at least 1".into()));
    }
    let first = cfg_grid
        .first()
        .ok_or(Error::EmptyInput("configuration grid"))?;
    for c in cfg_grid {
        c.validate()?;
    }
    let base_seed = first.seed;
    let mut entries = Vec::with_capacity(per_class * GestureLabel::COUNT);
    for label in GestureLabel::ALL {
        for i in 0..per_class {
            let id = entries.len();
            let cfg = SimConfig {
                seed: seed::sub_seed(base_seed, seed::SIMULATE, id as u64),
                ..cfg_grid[i % cfg_grid.len()]
            };
            entries.push(DatasetEntry {
                id,
                label,
                config: cfg,
                file: None,
            });
        }
    }
    Ok(Dataset::new(entries))
}
