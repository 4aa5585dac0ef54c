//! Synthetic gesture generator with known ground truth.
//!
//! Every participant draws a [`ParticipantSignature`] from a shared
//! population template: five step motifs, each a gravity posture plus a few
//! damped sinusoids per axis. Sessions are rendered as one continuous
//! timeline of rest, gestures and confounders, so posture transitions are
//! smooth across block boundaries. Annotation marks are jittered copies of
//! the true boundaries, and each mark carries a short button-press burst.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{Label, Span};
use crate::ingest::{self, AccelSample, AnnotationMark, GestureStyle, IngestError};
use crate::seed::{self, tag};

pub const GRAVITY: f64 = 9.81;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.3;

const TEMPLATE_SEED: u64 = 0x6D65_6473_656E_736F;
const MIN_GESTURE_S: f64 = 15.0;
const MAX_GESTURE_S: f64 = 25.0;
const POSTURE_BLEND_S: f64 = 0.35;
const WAVE_TAPER_S: f64 = 0.25;
/// Steps 3 (pill to mouth) and 4 (drink) are never dropped from a natural gesture.
const ESSENTIAL_STEPS: [usize; 2] = [2, 3];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(String),
}

/// What a generated block depicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SynthStyle {
    Protocol,
    Natural,
    NegativeDrink,
    NegativeIdle,
}

impl SynthStyle {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthStyle::Protocol => "protocol",
            SynthStyle::Natural => "natural",
            SynthStyle::NegativeDrink => "negative_drink",
            SynthStyle::NegativeIdle => "negative_idle",
        }
    }

    pub fn label(self) -> Label {
        match self {
            SynthStyle::Protocol | SynthStyle::Natural => Label::Medication,
            _ => Label::NonMedication,
        }
    }
}

impl From<GestureStyle> for SynthStyle {
    fn from(style: GestureStyle) -> Self {
        match style {
            GestureStyle::Protocol => SynthStyle::Protocol,
            GestureStyle::Natural => SynthStyle::Natural,
        }
    }
}

impl fmt::Display for SynthStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `amplitude · e^(-damping·τ) · sin(2π·freq·τ + phase)` on one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub axis: usize,
    pub amplitude: f64,
    pub freq_hz: f64,
    pub phase: f64,
    pub damping: f64,
}

impl Wave {
    fn at(&self, tau: f64) -> f64 {
        self.amplitude * (-self.damping * tau).exp() * (TAU * self.freq_hz * tau + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepMotif {
    pub duration_s: f64,
    /// Unit gravity direction held during the step.
    pub posture: [f64; 3],
    pub waves: Vec<Wave>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantSignature {
    pub seed: u64,
    pub steps: [StepMotif; 5],
    pub rest_posture: [f64; 3],
    pub idle_posture: [f64; 3],
    pub sway_angle_rad: f64,
    pub sway_freq_hz: f64,
    /// Habitual step order for natural gestures.
    pub natural_order: [usize; 5],
    /// Probability that a natural gesture follows the habitual order rather
    /// than a fresh random permutation.
    pub habit_strength: f64,
    pub dropout_prob: f64,
    pub swap_prob: f64,
    pub merge_prob: f64,
    /// Natural step durations are scaled by `U[1 - j, 1 + j]`.
    pub timing_jitter: f64,
    pub noise_sigma: f64,
}

struct StepTemplate {
    duration_s: f64,
    posture: [f64; 3],
    freq_band: (f64, f64),
}

/// Unscrew, dispense, pill to mouth, drink, recap.
const STEP_TEMPLATES: [StepTemplate; 5] = [
    StepTemplate { duration_s: 4.0, posture: [0.5, 0.0, 0.87], freq_band: (1.5, 2.5) },
    StepTemplate { duration_s: 3.0, posture: [-0.6, 0.3, 0.74], freq_band: (0.8, 1.5) },
    StepTemplate { duration_s: 2.5, posture: [0.2, -0.9, 0.4], freq_band: (0.7, 1.2) },
    StepTemplate { duration_s: 5.5, posture: [0.7, -0.6, 0.38], freq_band: (0.7, 1.0) },
    StepTemplate { duration_s: 4.5, posture: [0.5, 0.2, 0.84], freq_band: (1.5, 2.5) },
];
const REST_POSTURE: [f64; 3] = [0.0, 0.0, 1.0];
const IDLE_POSTURE: [f64; 3] = [-0.2, 0.5, 0.84];

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn perturb(rng: &mut ChaCha8Rng, v: [f64; 3], by: f64) -> [f64; 3] {
    normalize([
        v[0] + rng.random_range(-by..by),
        v[1] + rng.random_range(-by..by),
        v[2] + rng.random_range(-by..by),
    ])
}

/// Population-level waves for each step, identical for every participant.
fn template_waves() -> Vec<Vec<Wave>> {
    let mut rng = seed::rng(TEMPLATE_SEED);
    STEP_TEMPLATES
        .iter()
        .map(|t| {
            let mut waves = Vec::new();
            for axis in 0..3 {
                for _ in 0..rng.random_range(1..=3) {
                    waves.push(Wave {
                        axis,
                        amplitude: rng.random_range(1.5..2.5),
                        freq_hz: rng.random_range(t.freq_band.0..t.freq_band.1),
                        phase: rng.random_range(0.0..TAU),
                        damping: rng.random_range(0.05..0.15),
                    });
                }
            }
            waves
        })
        .collect()
}

/// Draws a participant's signature. Deterministic in `seed`.
pub fn gen_participant(seed: u64) -> ParticipantSignature {
    let mut rng = seed::rng(seed);
    let tempo: f64 = rng.random_range(0.9..1.1);
    let templates = template_waves();
    let steps = std::array::from_fn(|i| {
        let t = &STEP_TEMPLATES[i];
        let amp_scale: f64 = rng.random_range(0.75..1.25);
        let freq_scale: f64 = rng.random_range(0.85..1.15);
        let waves = templates[i]
            .iter()
            .map(|w| Wave {
                amplitude: w.amplitude * amp_scale * rng.random_range(0.9..1.1),
                freq_hz: w.freq_hz * freq_scale,
                phase: w.phase + rng.random_range(-0.5..0.5),
                ..w.clone()
            })
            .collect();
        StepMotif {
            duration_s: t.duration_s * tempo * rng.random_range(0.85..1.15),
            posture: perturb(&mut rng, t.posture, 0.2),
            waves,
        }
    });

    let mut natural_order = [0, 1, 2, 3, 4];
    while natural_order == [0, 1, 2, 3, 4] {
        natural_order.shuffle(&mut rng);
    }
    ParticipantSignature {
        seed,
        steps,
        rest_posture: perturb(&mut rng, REST_POSTURE, 0.1),
        idle_posture: perturb(&mut rng, IDLE_POSTURE, 0.15),
        sway_angle_rad: rng.random_range(0.03..0.1),
        sway_freq_hz: rng.random_range(0.1..0.3),
        natural_order,
        habit_strength: rng.random_range(0.3..0.6),
        dropout_prob: rng.random_range(0.2..0.5),
        swap_prob: rng.random_range(0.2..0.5),
        merge_prob: rng.random_range(0.1..0.3),
        timing_jitter: rng.random_range(0.1..0.2),
        noise_sigma: DEFAULT_NOISE_SIGMA,
    }
}

/// Slow rotation of a resting posture; keeps the gravity magnitude fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sway {
    angle_rad: f64,
    freq_hz: f64,
}

/// One constant-posture stretch of a timeline.
#[derive(Debug, Clone, PartialEq)]
struct Segment {
    samples: usize,
    posture: [f64; 3],
    sway: Option<Sway>,
    waves: Vec<Wave>,
}

impl Segment {
    fn rest(sig: &ParticipantSignature, posture: [f64; 3], seconds: f64, rate: f64) -> Self {
        Segment {
            samples: seconds_to_samples(seconds, rate),
            posture,
            sway: Some(Sway {
                angle_rad: sig.sway_angle_rad,
                freq_hz: sig.sway_freq_hz,
            }),
            waves: Vec::new(),
        }
    }

    fn posture_at(&self, tau: f64) -> [f64; 3] {
        let Some(sway) = self.sway else {
            return self.posture;
        };
        let theta = sway.angle_rad * (TAU * sway.freq_hz * tau).sin();
        let (s, c) = theta.sin_cos();
        let p = self.posture;
        [p[0] * c - p[2] * s, p[1], p[0] * s + p[2] * c]
    }

    fn motion_at(&self, tau: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for w in &self.waves {
            out[w.axis] += w.at(tau);
        }
        out
    }
}

fn seconds_to_samples(seconds: f64, rate: f64) -> usize {
    ((seconds * rate).round() as usize).max(1)
}

/// Raised-cosine ramp from 0 at `u = 0` to 1 at `u = 1`.
fn ease(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    0.5 - 0.5 * (PI * u).cos()
}

fn blend(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    let v = [
        a[0] + (b[0] - a[0]) * s,
        a[1] + (b[1] - a[1]) * s,
        a[2] + (b[2] - a[2]) * s,
    ];
    normalize(v)
}

/// Noise-free accelerations for a sequence of segments.
fn render(segments: &[Segment], rate: f64) -> Vec<[f64; 3]> {
    let total: usize = segments.iter().map(|s| s.samples).sum();
    let mut out = Vec::with_capacity(total);
    let half_blend = POSTURE_BLEND_S / 2.0;
    for (k, seg) in segments.iter().enumerate() {
        let duration = seg.samples as f64 / rate;
        for i in 0..seg.samples {
            let tau = i as f64 / rate;
            let mut posture = seg.posture_at(tau);
            if k > 0 && tau < half_blend && duration > POSTURE_BLEND_S {
                let prev = &segments[k - 1];
                let prev_tau = prev.samples as f64 / rate + tau;
                let s = ease(0.5 + tau / POSTURE_BLEND_S);
                posture = blend(prev.posture_at(prev_tau), posture, s);
            } else if k + 1 < segments.len() && duration - tau < half_blend && duration > POSTURE_BLEND_S {
                let next = &segments[k + 1];
                let to_boundary = duration - tau;
                let s = ease(0.5 - to_boundary / POSTURE_BLEND_S);
                posture = blend(posture, next.posture_at(-to_boundary), s);
            }
            let taper = ease(tau / WAVE_TAPER_S).min(ease((duration - tau) / WAVE_TAPER_S));
            let motion = seg.motion_at(tau);
            out.push(std::array::from_fn(|a| GRAVITY * posture[a] + taper * motion[a]));
        }
    }
    out
}

fn step_segment(step: &StepMotif, duration_s: f64, rate: f64) -> Segment {
    Segment {
        samples: seconds_to_samples(duration_s, rate),
        posture: step.posture,
        sway: None,
        waves: step.waves.clone(),
    }
}

/// Scales durations so their sum lies in the gesture length range.
fn fit_total(durations: &mut [f64]) {
    let total: f64 = durations.iter().sum();
    let target = total.clamp(MIN_GESTURE_S + 0.1, MAX_GESTURE_S - 0.1);
    durations.iter_mut().for_each(|d| *d *= target / total);
}

fn protocol_segments(sig: &ParticipantSignature, rate: f64) -> Vec<Segment> {
    let mut durations: Vec<f64> = sig.steps.iter().map(|s| s.duration_s).collect();
    fit_total(&mut durations);
    sig.steps
        .iter()
        .zip(&durations)
        .map(|(step, &d)| step_segment(step, d, rate))
        .collect()
}

fn natural_segments(sig: &ParticipantSignature, rate: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut order: Vec<usize> = sig.natural_order.to_vec();
    if !rng.random_bool(sig.habit_strength) {
        order.shuffle(rng);
    }
    if rng.random_bool(sig.dropout_prob) {
        let optional: Vec<usize> = order
            .iter()
            .copied()
            .filter(|s| !ESSENTIAL_STEPS.contains(s))
            .collect();
        let drop = optional[rng.random_range(0..optional.len())];
        order.retain(|&s| s != drop);
    }
    if rng.random_bool(sig.swap_prob) {
        let i = rng.random_range(0..order.len() - 1);
        order.swap(i, i + 1);
    }
    let j = sig.timing_jitter;
    let mut durations: Vec<f64> = order
        .iter()
        .map(|&s| sig.steps[s].duration_s * rng.random_range(1.0 - j..1.0 + j))
        .collect();

    let mut merged: Vec<(Vec<usize>, f64)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        if i + 1 < order.len() && rng.random_bool(sig.merge_prob) {
            merged.push((vec![order[i], order[i + 1]], 0.75 * (durations[i] + durations[i + 1])));
            i += 2;
        } else {
            merged.push((vec![order[i]], durations[i]));
            i += 1;
        }
    }
    durations = merged.iter().map(|m| m.1).collect();
    fit_total(&mut durations);

    merged
        .iter()
        .zip(&durations)
        .map(|((steps, _), &d)| {
            let mut seg = step_segment(&sig.steps[steps[0]], d, rate);
            if let Some(&other) = steps.get(1) {
                let b = &sig.steps[other];
                seg.posture = blend(seg.posture, b.posture, 0.5);
                seg.waves.extend(b.waves.iter().cloned());
            }
            seg
        })
        .collect()
}

fn drink_segments(sig: &ParticipantSignature, rate: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let total = rng.random_range(MIN_GESTURE_S..MAX_GESTURE_S);
    let drink = (sig.steps[3].duration_s * rng.random_range(0.9..1.3)).min(total - 4.0);
    let before = rng.random_range(2.0..total - drink - 2.0);
    let after = total - drink - before;
    vec![
        Segment::rest(sig, sig.idle_posture, before, rate),
        step_segment(&sig.steps[3], drink, rate),
        Segment::rest(sig, sig.idle_posture, after, rate),
    ]
}

fn idle_segments(sig: &ParticipantSignature, rate: f64, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let total = rng.random_range(MIN_GESTURE_S..MAX_GESTURE_S);
    vec![Segment::rest(sig, sig.idle_posture, total, rate)]
}

fn block_segments(
    sig: &ParticipantSignature,
    style: SynthStyle,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Segment> {
    match style {
        SynthStyle::Protocol => protocol_segments(sig, rate),
        SynthStyle::Natural => natural_segments(sig, rate, rng),
        SynthStyle::NegativeDrink => drink_segments(sig, rate, rng),
        SynthStyle::NegativeIdle => idle_segments(sig, rate, rng),
    }
}

fn timestamp_ms(index: usize, rate: f64) -> u64 {
    (index as f64 * 1000.0 / rate).round() as u64
}

fn add_noise(clean: &[[f64; 3]], sigma: f64, rate: f64, rng: &mut ChaCha8Rng) -> Vec<AccelSample> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("sigma is finite");
    clean
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut jitter = || if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            AccelSample::new(
                timestamp_ms(i, rate),
                (v[0] + jitter()) as f32,
                (v[1] + jitter()) as f32,
                (v[2] + jitter()) as f32,
            )
        })
        .collect()
}

/// A standalone rendered gesture.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedGesture {
    pub style: SynthStyle,
    pub samples: Vec<AccelSample>,
    /// Extent of the activity; always the whole sample range.
    pub span: Span,
}

/// Renders one gesture of `style` at `rate_hz`. Only noise and the natural
/// variations depend on `seed`; a protocol gesture without noise is fixed
/// by the signature alone.
pub fn gen_gesture(sig: &ParticipantSignature, style: SynthStyle, seed: u64, rate_hz: f64) -> GeneratedGesture {
    let mut rng = seed::rng(seed);
    let segments = block_segments(sig, style, rate_hz, &mut rng);
    let samples = add_noise(&render(&segments, rate_hz), sig.noise_sigma, rate_hz, &mut rng);
    let span = Span::new(0, samples.len()).expect("segments are non-empty");
    GeneratedGesture { style, samples, span }
}

/// Session-level knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionParams {
    pub rate_hz: f64,
    pub mark_jitter_ms: u64,
    pub spike_ms: u64,
    pub spike_amplitude: f64,
    pub lead_s: (f64, f64),
    pub gap_s: (f64, f64),
    pub confounders_per_gesture: usize,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            rate_hz: ingest::DEFAULT_RATE_HZ,
            mark_jitter_ms: 800,
            spike_ms: 300,
            spike_amplitude: 10.0,
            lead_s: (6.0, 8.0),
            gap_s: (6.5, 9.0),
            confounders_per_gesture: 2,
        }
    }
}

impl SessionParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi;
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(SynthError::InvalidConfig("rate_hz must be positive".into()));
        }
        if !range_ok(self.lead_s) || !range_ok(self.gap_s) {
            return Err(SynthError::InvalidConfig("lead_s and gap_s must be increasing positive ranges".into()));
        }
        // Marks must stay clear of the session edges and of neighbouring blocks.
        let jitter_s = self.mark_jitter_ms as f64 / 1000.0;
        if jitter_s >= self.lead_s.0 || jitter_s >= self.gap_s.0 {
            return Err(SynthError::InvalidConfig("mark jitter must be shorter than every gap".into()));
        }
        Ok(())
    }
}

/// A ground-truth block, with `end_ms` exclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthSpan {
    pub style: SynthStyle,
    pub start_ms: u64,
    pub end_ms: u64,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSession {
    pub samples: Vec<AccelSample>,
    pub marks: Vec<AnnotationMark>,
    /// Gestures and confounders in time order.
    pub truth: Vec<TruthSpan>,
}

fn add_spike(samples: &mut [AccelSample], from_ms: u64, to_ms: u64, amplitude: f64) {
    let lo = samples.partition_point(|s| s.t_ms < from_ms);
    let hi = samples.partition_point(|s| s.t_ms < to_ms);
    let width = (to_ms - from_ms).max(1) as f64;
    for s in &mut samples[lo..hi] {
        let u = (s.t_ms - from_ms) as f64 / width;
        let envelope = (PI * u).sin();
        let phase = TAU * 8.0 * u * width / 1000.0;
        s.x += (amplitude * envelope * phase.sin()) as f32;
        s.y += (amplitude * envelope * phase.cos()) as f32;
        s.z -= (0.8 * amplitude * envelope * phase.sin()) as f32;
    }
}

/// Renders a full annotated session: lead-in rest, then per gesture the
/// gesture itself followed by `confounders_per_gesture` confounders, each
/// separated by rest gaps.
pub fn gen_session(
    sig: &ParticipantSignature,
    style: GestureStyle,
    gestures: usize,
    seed: u64,
    params: &SessionParams,
) -> Result<GeneratedSession, SynthError> {
    params.validate()?;
    let rate = params.rate_hz;
    let mut rng = seed::rng(seed);
    let mut segments = Vec::new();
    let mut blocks = Vec::new();
    let mut cursor = 0usize;
    let push_rest = |segments: &mut Vec<Segment>, cursor: &mut usize, secs: f64| {
        let seg = Segment::rest(sig, sig.rest_posture, secs, rate);
        *cursor += seg.samples;
        segments.push(seg);
    };

    push_rest(&mut segments, &mut cursor, rng.random_range(params.lead_s.0..params.lead_s.1));
    for _ in 0..gestures {
        let mut kinds = vec![SynthStyle::from(style)];
        for _ in 0..params.confounders_per_gesture {
            kinds.push(if rng.random_bool(0.5) {
                SynthStyle::NegativeDrink
            } else {
                SynthStyle::NegativeIdle
            });
        }
        for kind in kinds {
            let block = block_segments(sig, kind, rate, &mut rng);
            let len: usize = block.iter().map(|s| s.samples).sum();
            blocks.push((kind, cursor, cursor + len));
            cursor += len;
            segments.extend(block);
            push_rest(&mut segments, &mut cursor, rng.random_range(params.gap_s.0..params.gap_s.1));
        }
    }

    let mut samples = add_noise(&render(&segments, rate), sig.noise_sigma, rate, &mut rng);
    let last_ms = samples.last().map_or(0, |s| s.t_ms);
    let jitter = params.mark_jitter_ms as i64;
    let mut marks = Vec::new();
    let mut truth = Vec::new();
    for (kind, start, end) in blocks {
        let (start_ms, end_ms) = (timestamp_ms(start, rate), timestamp_ms(end, rate));
        truth.push(TruthSpan {
            style: kind,
            start_ms,
            end_ms,
            span: Span::new(start, end).expect("blocks are non-empty"),
        });
        if kind.label() == Label::Medication {
            let mut jittered = |t: u64| {
                let dt = rng.random_range(-jitter..=jitter);
                (t as i64 + dt).clamp(0, last_ms as i64) as u64
            };
            let (s, e) = (jittered(start_ms), jittered(end_ms));
            marks.push(AnnotationMark::start(s));
            marks.push(AnnotationMark::end(e));
        }
    }
    for m in marks.chunks_exact(2) {
        let (s, e) = (m[0].t_ms, m[1].t_ms);
        add_spike(&mut samples, s, s + params.spike_ms, params.spike_amplitude);
        add_spike(&mut samples, e.saturating_sub(params.spike_ms), e, params.spike_amplitude);
    }
    Ok(GeneratedSession { samples, marks, truth })
}

/// Size and seed of a generated store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    pub participants: usize,
    pub sessions_per_style: usize,
    pub gestures_per_session: usize,
    pub noise_sigma: f64,
    pub styles: Vec<GestureStyle>,
    pub session: SessionParams,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            participants: 12,
            sessions_per_style: 2,
            gestures_per_session: 10,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            styles: GestureStyle::ALL.to_vec(),
            session: SessionParams::default(),
        }
    }
}

/// One session to generate, with its derived seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionPlan {
    pub participant_index: usize,
    pub participant_id: String,
    pub session_id: String,
    pub style: GestureStyle,
    pub seed: u64,
}

impl SessionPlan {
    pub fn relative_path(&self) -> PathBuf {
        Path::new(&self.participant_id)
            .join(self.style.dir_name())
            .join(format!("{}.zip", self.session_id))
    }
}

pub fn participant_id(index: usize) -> String {
    format!("p{:02}", index + 1)
}

impl StoreConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.participants == 0 {
            return Err(SynthError::InvalidConfig("participants must be >= 1".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        self.session.validate()
    }

    pub fn participant_seed(&self, master: u64, index: usize) -> u64 {
        seed::derive(master, &[tag::PARTICIPANT, index as u64])
    }

    pub fn signature(&self, master: u64, index: usize) -> ParticipantSignature {
        ParticipantSignature {
            noise_sigma: self.noise_sigma,
            ..gen_participant(self.participant_seed(master, index))
        }
    }

    /// Sessions in write order. Session ids are unique within a participant:
    /// protocol sessions are numbered first, natural ones after.
    pub fn plan(&self, master: u64) -> Vec<SessionPlan> {
        let mut out = Vec::new();
        for p in 0..self.participants {
            let mut number = 0;
            for &style in &GestureStyle::ALL {
                if !self.styles.contains(&style) {
                    continue;
                }
                for s in 0..self.sessions_per_style {
                    number += 1;
                    out.push(SessionPlan {
                        participant_index: p,
                        participant_id: participant_id(p),
                        session_id: format!("s{number:02}"),
                        style,
                        seed: seed::derive(master, &[tag::SESSION, p as u64, style as u64, s as u64]),
                    });
                }
            }
        }
        out
    }

    pub fn generate(&self, master: u64, plan: &SessionPlan) -> Result<GeneratedSession, SynthError> {
        let sig = self.signature(master, plan.participant_index);
        gen_session(&sig, plan.style, self.gestures_per_session, plan.seed, &self.session)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthRow {
    pub participant: String,
    pub session: String,
    pub style: SynthStyle,
    pub start_ms: u64,
    pub end_ms: u64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub rows: Vec<TruthRow>,
}

impl GroundTruth {
    pub const FILE_NAME: &'static str = "ground_truth.csv";

    pub fn to_csv(&self) -> String {
        let mut out = String::from("participant,session,style,start_ms,end_ms,label\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.participant,
                r.session,
                r.style,
                r.start_ms,
                r.end_ms,
                r.label.as_str()
            ));
        }
        out
    }

    pub fn positives(&self) -> impl Iterator<Item = &TruthRow> {
        self.rows.iter().filter(|r| r.label == Label::Medication)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SynthError> {
    let io = |source| SynthError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

/// Writes every planned session under `root` plus `ground_truth.csv`.
pub fn gen_store(root: &Path, config: &StoreConfig, master: u64) -> Result<GroundTruth, SynthError> {
    config.validate()?;
    let mut truth = GroundTruth::default();
    for plan in config.plan(master) {
        let session = config.generate(master, &plan)?;
        let archive = ingest::write_session_archive(&session.samples, &session.marks)?;
        write_file(&root.join(plan.relative_path()), &archive)?;
        truth.rows.extend(session.truth.iter().map(|t| TruthRow {
            participant: plan.participant_id.clone(),
            session: plan.session_id.clone(),
            style: t.style,
            start_ms: t.start_ms,
            end_ms: t.end_ms,
            label: t.style.label(),
        }));
    }
    write_file(&root.join(GroundTruth::FILE_NAME), truth.to_csv().as_bytes())?;
    Ok(truth)
}
