//! From self-reported START/END marks to trustworthy gesture spans.
//!
//! Raw marks are paired greedily, then each pair is refined by moving-variance
//! thresholding on the acceleration magnitude:
//!
//! * the search region extends the raw span by `search_back_s` before and
//!   `search_fwd_s` after;
//! * the first `guard_trim_s` after START and the last `guard_trim_s` before
//!   END are masked out of every variance window, which removes the
//!   button-press motion;
//! * the baseline is the magnitude variance of the 2 s preceding the search
//!   region, and a position is active when its centered moving variance
//!   exceeds `threshold_factor` times that baseline;
//! * the refined span runs from the first to the last active position.
//!
//! Negative (non-medication) segments are cut from whatever part of the
//! session is not covered by a positive span.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AccelSample, AnnotationMark, GestureStyle, MarkKind, SampleSeries};
use crate::seed;

/// Length of the quiet window used as the variance baseline.
pub const BASELINE_WINDOW_S: f64 = 2.0;

/// Variance floor in (m/s²)², well below any real accelerometer's resolution.
const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("no activity crosses the variance threshold")]
    NoActivityFound,
    #[error("span {0} is not valid for a series of {1} samples")]
    InvalidSpan(Span, usize),
    #[error("refinement parameters must all be positive")]
    InvalidParams,
}

/// Half-open range of sample indices, never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    start: usize,
    end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Option<Self> {
        (start < end).then_some(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn contains_span(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn intersection_len(&self, other: &Span) -> usize {
        self.end.min(other.end).saturating_sub(self.start.max(other.start))
    }

    /// Intersection over union.
    pub fn jaccard(&self, other: &Span) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        inter as f64 / union as f64
    }

    /// The span with `guard` samples removed from each end, if anything remains.
    pub fn trimmed(&self, guard: usize) -> Option<Span> {
        Span::new(self.start + guard, self.end.saturating_sub(guard))
    }

    pub fn fits(&self, len: usize) -> bool {
        self.end <= len
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NonMedication = 0,
    Medication = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::NonMedication),
            1 => Some(Label::Medication),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Medication => "MEDICATION",
            Label::NonMedication => "NON_MEDICATION",
        }
    }
}

/// A labeled contiguous slice of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSegment {
    pub participant_id: String,
    pub session_id: String,
    pub style: GestureStyle,
    pub label: Label,
    /// Location of the slice inside its session.
    pub span: Span,
    pub samples: Vec<AccelSample>,
}

impl GestureSegment {
    fn cut(series: &SampleSeries, style: GestureStyle, label: Label, span: Span) -> Self {
        Self {
            participant_id: series.participant_id.clone(),
            session_id: series.session_id.clone(),
            style,
            label,
            span,
            samples: series.samples[span.start..span.end].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub variance_window_s: f64,
    pub threshold_factor: f64,
    pub search_back_s: f64,
    pub search_fwd_s: f64,
    pub guard_trim_s: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            variance_window_s: 1.0,
            threshold_factor: 3.0,
            search_back_s: 2.0,
            search_fwd_s: 5.0,
            guard_trim_s: 0.5,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<(), RefineError> {
        let all = [
            self.variance_window_s,
            self.threshold_factor,
            self.search_back_s,
            self.search_fwd_s,
            self.guard_trim_s,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(RefineError::InvalidParams)
        }
    }
}

/// Problems found while pairing marks. Pairing continues past all of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairingIssue {
    DanglingStart(u64),
    DanglingEnd(u64),
    /// Both marks fall between the same two samples.
    EmptyPair { start_ms: u64, end_ms: u64 },
}

impl fmt::Display for PairingIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairingIssue::DanglingStart(t) => write!(f, "START at {t} ms has no matching END"),
            PairingIssue::DanglingEnd(t) => write!(f, "END at {t} ms has no preceding START"),
            PairingIssue::EmptyPair { start_ms, end_ms } => {
                write!(f, "pair {start_ms}..{end_ms} ms covers no samples")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub spans: Vec<Span>,
    pub issues: Vec<PairingIssue>,
}

/// Pairs every START with the next END. A START followed by another START is
/// reported as dangling; the later one stays open.
///
/// Mark times map to indices through the series timestamps: the span starts at
/// the first sample at or after START and ends (exclusive) at the first sample
/// at or after END.
pub fn pair_marks(series: &SampleSeries, marks: &[AnnotationMark]) -> Pairing {
    let mut sorted = marks.to_vec();
    sorted.sort_by_key(|m| m.t_ms);

    let mut pairing = Pairing::default();
    let mut open: Option<u64> = None;
    for mark in sorted {
        match (mark.kind, open) {
            (MarkKind::Start, prev) => {
                if let Some(t) = prev {
                    pairing.issues.push(PairingIssue::DanglingStart(t));
                }
                open = Some(mark.t_ms);
            }
            (MarkKind::End, None) => pairing.issues.push(PairingIssue::DanglingEnd(mark.t_ms)),
            (MarkKind::End, Some(start_ms)) => {
                open = None;
                let span = Span::new(
                    series.index_at_or_after(start_ms),
                    series.index_at_or_after(mark.t_ms),
                );
                match span {
                    Some(span) => pairing.spans.push(span),
                    None => pairing.issues.push(PairingIssue::EmptyPair {
                        start_ms,
                        end_ms: mark.t_ms,
                    }),
                }
            }
        }
    }
    if let Some(t) = open {
        pairing.issues.push(PairingIssue::DanglingStart(t));
    }
    pairing
}

fn variance(values: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return None;
    }
    let mean = sum / n as f64;
    Some(values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64)
}

/// Centered moving variance over unmasked samples; `None` where too few remain.
fn masked_moving_variance(
    magnitude: &[f64],
    masked: &[bool],
    center: usize,
    half: usize,
    min_count: usize,
) -> Option<f64> {
    let lo = center.saturating_sub(half);
    let hi = (center + half + 1).min(magnitude.len());
    let values = (lo..hi).filter(|&i| !masked[i]).map(|i| magnitude[i]);
    if values.clone().count() < min_count {
        return None;
    }
    variance(values)
}

/// Tightens a raw span to where the wrist is actually moving.
pub fn refine_span(
    series: &SampleSeries,
    span: Span,
    params: &RefineParams,
) -> Result<Span, RefineError> {
    params.validate()?;
    let n = series.len();
    if !span.fits(n) {
        return Err(RefineError::InvalidSpan(span, n));
    }

    let window = series.samples_for(params.variance_window_s).max(2);
    let half = window / 2;
    let min_count = (window / 4).max(3);
    let guard = series.samples_for(params.guard_trim_s);
    let lo = span.start.saturating_sub(series.samples_for(params.search_back_s));
    let hi = (span.end + series.samples_for(params.search_fwd_s)).min(n);

    let magnitude: Vec<f64> = series.samples.iter().map(AccelSample::magnitude).collect();
    let mut masked = vec![false; n];
    masked[span.start..(span.start + guard).min(span.end)].fill(true);
    masked[span.end.saturating_sub(guard).max(span.start)..span.end].fill(true);

    let moving: Vec<Option<f64>> = (lo..hi)
        .map(|i| masked_moving_variance(&magnitude, &masked, i, half, min_count))
        .collect();

    let baseline_len = series.samples_for(BASELINE_WINDOW_S);
    let before = lo.saturating_sub(baseline_len)..lo;
    let after = hi..(hi + baseline_len).min(n);
    let baseline = if before.len() >= window {
        variance(magnitude[before].iter().copied())
    } else if after.len() >= window {
        variance(magnitude[after].iter().copied())
    } else {
        // Session too short on both sides: fall back to the quietest window.
        moving.iter().flatten().copied().reduce(f64::min)
    }
    .unwrap_or(0.0);
    let threshold = params.threshold_factor * baseline.max(VARIANCE_FLOOR);

    let active = |v: &Option<f64>| v.is_some_and(|v| v > threshold);
    let first = moving.iter().position(active).ok_or(RefineError::NoActivityFound)?;
    let last = moving.iter().rposition(active).ok_or(RefineError::NoActivityFound)?;
    Ok(Span::new(lo + first, lo + last + 1).expect("first <= last"))
}

/// A mark pair whose refinement found no activity.
#[derive(Debug, Clone, PartialEq)]
pub struct FlaggedPair {
    pub raw: Span,
    /// Raw span minus the guard zones, kept for inspection.
    pub trimmed: Option<Span>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositiveExtraction {
    pub segments: Vec<GestureSegment>,
    /// Raw (paired, unrefined) span of every pair, in mark order.
    pub raw_spans: Vec<Span>,
    pub flagged: Vec<FlaggedPair>,
    pub issues: Vec<PairingIssue>,
}

impl PositiveExtraction {
    /// Every span a negative segment must avoid: refined, raw and flagged.
    pub fn occupied_spans(&self) -> Vec<Span> {
        self.segments
            .iter()
            .map(|s| s.span)
            .chain(self.raw_spans.iter().copied())
            .collect()
    }
}

/// One MEDICATION segment per mark pair that refines successfully. Pairs with
/// no detectable activity are flagged and left out.
pub fn extract_positives(
    series: &SampleSeries,
    style: GestureStyle,
    marks: &[AnnotationMark],
    params: &RefineParams,
) -> Result<PositiveExtraction, RefineError> {
    params.validate()?;
    let Pairing { spans, issues } = pair_marks(series, marks);
    let guard = series.samples_for(params.guard_trim_s);
    let mut out = PositiveExtraction {
        issues,
        ..Default::default()
    };
    for raw in spans {
        out.raw_spans.push(raw);
        match refine_span(series, raw, params) {
            Ok(refined) => out
                .segments
                .push(GestureSegment::cut(series, style, Label::Medication, refined)),
            Err(RefineError::NoActivityFound) => out.flagged.push(FlaggedPair {
                raw,
                trimmed: raw.trimmed(guard),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub segments: Vec<GestureSegment>,
    /// Set when fewer than the requested number of segments fit.
    pub shortfall: Option<InsufficientNegativeSpace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InsufficientNegativeSpace {
    pub requested: usize,
    pub placed: usize,
}

impl fmt::Display for InsufficientNegativeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "only {} of {} negative segments fit",
            self.placed, self.requested
        )
    }
}

const PLACEMENT_ATTEMPTS: usize = 16;

fn free_gaps(occupied: &[Span], n: usize) -> Vec<(usize, usize)> {
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for span in occupied {
        if span.start > cursor {
            gaps.push((cursor, span.start));
        }
        cursor = cursor.max(span.end);
    }
    if cursor < n {
        gaps.push((cursor, n));
    }
    gaps
}

/// Cuts `count` NON_MEDICATION segments from the parts of `series` not covered
/// by `occupied`. Lengths are drawn uniformly from `lengths` (the empirical
/// positive-length distribution) and placements uniformly among every
/// position where a segment of that length fits. Negatives never overlap each
/// other or any occupied span.
pub fn sample_negatives(
    series: &SampleSeries,
    style: GestureStyle,
    occupied: &[Span],
    count: usize,
    lengths: &[usize],
    seed: u64,
) -> NegativeSample {
    let n = series.len();
    let mut taken: Vec<Span> = occupied.iter().copied().filter(|s| s.start < n).collect();
    taken.sort();
    let mut rng = seed::rng(seed);
    let mut spans = Vec::with_capacity(count);

    if !lengths.is_empty() {
        'outer: for _ in 0..count {
            for _ in 0..PLACEMENT_ATTEMPTS {
                let len = lengths[rng.random_range(0..lengths.len())];
                if len == 0 {
                    continue;
                }
                let gaps = free_gaps(&taken, n);
                let slots: usize = gaps.iter().map(|(a, b)| (b - a + 1).saturating_sub(len)).sum();
                if slots == 0 {
                    continue;
                }
                let mut pick = rng.random_range(0..slots);
                for (a, b) in gaps {
                    let here = (b - a + 1).saturating_sub(len);
                    if pick < here {
                        let span = Span::new(a + pick, a + pick + len).expect("len > 0");
                        let at = taken.partition_point(|s| *s < span);
                        taken.insert(at, span);
                        spans.push(span);
                        continue 'outer;
                    }
                    pick -= here;
                }
            }
            break;
        }
    }

    let shortfall = (spans.len() < count).then_some(InsufficientNegativeSpace {
        requested: count,
        placed: spans.len(),
    });
    let segments = spans
        .into_iter()
        .map(|span| GestureSegment::cut(series, style, Label::NonMedication, span))
        .collect();
    NegativeSample { segments, shortfall }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_from(accel: impl IntoIterator<Item = [f32; 3]>) -> SampleSeries {
        let samples = accel
            .into_iter()
            .enumerate()
            .map(|(i, [x, y, z])| AccelSample::new(i as u64 * 40, x, y, z))
            .collect();
        SampleSeries::new("p01", "s01", 25.0, samples)
    }

    fn flat(n: usize) -> SampleSeries {
        series_from(std::iter::repeat_n([0.0, 0.0, 9.81], n))
    }

    #[test]
    fn pairing_maps_times_to_indices() {
        let series = flat(1500);
        let p = pair_marks(&series, &[AnnotationMark::start(1000), AnnotationMark::end(21000)]);
        assert_eq!(p.spans, vec![Span::new(25, 525).unwrap()]);
        assert!(p.issues.is_empty());
    }

    #[test]
    fn pairing_reports_dangling_marks() {
        let series = flat(1500);
        let p = pair_marks(
            &series,
            &[
                AnnotationMark::start(1000),
                AnnotationMark::start(2000),
                AnnotationMark::end(3000),
            ],
        );
        assert_eq!(p.spans, vec![Span::new(50, 75).unwrap()]);
        assert_eq!(p.issues, vec![PairingIssue::DanglingStart(1000)]);

        let p = pair_marks(&series, &[AnnotationMark::end(10), AnnotationMark::start(20)]);
        assert!(p.spans.is_empty());
        assert_eq!(
            p.issues,
            vec![PairingIssue::DanglingEnd(10), PairingIssue::DanglingStart(20)]
        );
        assert_eq!(pair_marks(&series, &[]), Pairing::default());
    }

    #[test]
    fn constant_signal_has_no_activity() {
        let series = flat(3000);
        let span = Span::new(1000, 1500).unwrap();
        assert_eq!(
            refine_span(&series, span, &RefineParams::default()),
            Err(RefineError::NoActivityFound)
        );
    }

    #[test]
    fn refinement_stays_inside_search_window() {
        // Motion from 1200 to 1700 inside a raw span of 1100..1600.
        let accel = (0..3000).map(|i| {
            if (1200..1700).contains(&i) {
                let t = i as f32 / 25.0;
                [3.0 * (6.0 * t).sin(), 0.0, 9.81 + 2.0 * (4.0 * t).cos()]
            } else {
                [0.0, 0.0, 9.81]
            }
        });
        let series = series_from(accel);
        let raw = Span::new(1100, 1600).unwrap();
        let params = RefineParams::default();
        let refined = refine_span(&series, raw, &params).unwrap();
        let window = Span::new(1100 - 50, 1600 + 125).unwrap();
        assert!(window.contains_span(&refined), "{refined}");
        assert!(refined.start() >= 1200 - 13 && refined.start() <= 1200);
        assert!(refined.end() >= 1700 && refined.end() <= 1700 + 13);
    }

    #[test]
    fn invalid_inputs() {
        let series = flat(100);
        let span = Span::new(10, 200).unwrap();
        assert!(matches!(
            refine_span(&series, span, &RefineParams::default()),
            Err(RefineError::InvalidSpan(..))
        ));
        let bad = RefineParams {
            guard_trim_s: 0.0,
            ..Default::default()
        };
        assert_eq!(
            refine_span(&series, Span::new(1, 2).unwrap(), &bad),
            Err(RefineError::InvalidParams)
        );
    }

    #[test]
    fn no_marks_no_positives() {
        let out =
            extract_positives(&flat(500), GestureStyle::Protocol, &[], &RefineParams::default())
                .unwrap();
        assert!(out.segments.is_empty() && out.flagged.is_empty());
    }

    #[test]
    fn negatives_avoid_positive_span() {
        let series = flat(1500); // 60 s
        let positive = Span::new(500, 1000).unwrap(); // [20 s, 40 s)
        let sample =
            sample_negatives(&series, GestureStyle::Protocol, &[positive], 2, &[250], 11);
        assert_eq!(sample.segments.len(), 2);
        assert!(sample.shortfall.is_none());
        for seg in &sample.segments {
            assert_eq!(seg.len(), 250);
            assert_eq!(seg.label, Label::NonMedication);
            assert!(!seg.span.overlaps(&positive));
        }
        assert!(!sample.segments[0].span.overlaps(&sample.segments[1].span));

        let again = sample_negatives(&series, GestureStyle::Protocol, &[positive], 2, &[250], 11);
        assert_eq!(again, sample);
        let none = sample_negatives(&series, GestureStyle::Protocol, &[positive], 0, &[250], 11);
        assert!(none.segments.is_empty() && none.shortfall.is_none());
    }

    #[test]
    fn negatives_report_shortfall() {
        let series = flat(1500);
        let positive = Span::new(500, 1000).unwrap();
        let sample = sample_negatives(&series, GestureStyle::Natural, &[positive], 5, &[400], 3);
        assert!(sample.segments.len() <= 2);
        assert_eq!(
            sample.shortfall,
            Some(InsufficientNegativeSpace {
                requested: 5,
                placed: sample.segments.len()
            })
        );
    }

    #[test]
    fn jaccard_of_spans() {
        let a = Span::new(0, 10).unwrap();
        let b = Span::new(5, 15).unwrap();
        assert!((a.jaccard(&b) - 5.0 / 15.0).abs() < 1e-12);
        assert_eq!(a.jaccard(&a), 1.0);
    }
}
