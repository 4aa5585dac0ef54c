//! Store to vectorized dataset: scan, load, refine, harvest negatives,
//! vectorize.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{self, GestureSegment, Label, RefineError, RefineParams};
use crate::ingest::{self, GestureStyle, IngestError, SampleSeries};
use crate::seed::{self, tag};
use crate::window::{self, FeatureVector, Normalization, WindowError, WindowSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error("no usable gestures found under {0}")]
    NoUsableGestures(PathBuf),
    #[error("negative_ratio must be finite and >= 0")]
    InvalidNegativeRatio,
}

/// Window settings for `prepare`. Without `timesteps` the window is fitted
/// to the longest segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub timesteps: Option<usize>,
    pub normalization: Normalization,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            timesteps: Some(window::DEFAULT_TIMESTEPS),
            normalization: Normalization::PerWindowZscore,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub refine: RefineParams,
    pub window: WindowConfig,
    /// Negatives harvested per positive, per session.
    pub negative_ratio: f64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            refine: RefineParams::default(),
            window: WindowConfig::default(),
            negative_ratio: 1.0,
        }
    }
}

/// Counts keyed by `(participant, style, label)`.
pub type Counts = BTreeMap<(String, GestureStyle, Label), usize>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrepareReport {
    pub warnings: Vec<String>,
    pub counts: Counts,
    pub flagged_pairs: usize,
}

impl fmt::Display for PrepareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        writeln!(f, "{:<12} {:<9} {:<15} {:>6}", "participant", "style", "label", "count")?;
        for ((pid, style, label), n) in &self.counts {
            writeln!(f, "{pid:<12} {style:<9} {:<15} {n:>6}", label.as_str())?;
        }
        let total = |l: Label| -> usize {
            self.counts.iter().filter(|(k, _)| k.2 == l).map(|(_, n)| n).sum()
        };
        write!(
            f,
            "total: {} positive, {} negative, {} flagged pairs",
            total(Label::Medication),
            total(Label::NonMedication),
            self.flagged_pairs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedDataset {
    pub spec: WindowSpec,
    pub vectors: Vec<FeatureVector>,
    pub report: PrepareReport,
}

struct LoadedSession {
    series: SampleSeries,
    style: GestureStyle,
    extraction: annotate::PositiveExtraction,
}

/// Positive and negative segments of every readable session, in store order
/// (participant, style directory, session). Problems that only affect one
/// session become warnings.
pub fn collect_segments(
    root: &Path,
    config: &PrepareConfig,
    master_seed: u64,
) -> Result<(Vec<GestureSegment>, PrepareReport), PipelineError> {
    if !(config.negative_ratio.is_finite() && config.negative_ratio >= 0.0) {
        return Err(PipelineError::InvalidNegativeRatio);
    }
    config.refine.validate()?;
    let (index, scan_warnings) = ingest::scan_store(root)?;
    let mut report = PrepareReport {
        warnings: scan_warnings.iter().map(ToString::to_string).collect(),
        ..Default::default()
    };

    let mut sessions = Vec::new();
    for participant in &index.participants {
        for session in &participant.sessions {
            let loaded = ingest::load_session_file(&session.path, &participant.participant_id, &session.session_id);
            let (series, marks) = match loaded {
                Ok(v) => v,
                Err(e) => {
                    report.warnings.push(format!("{}: {e}", session.path.display()));
                    continue;
                }
            };
            if let Some(m) = series.check_rate() {
                report.warnings.push(format!(
                    "{}: declared {} Hz but timestamps suggest {:.2} Hz",
                    session.path.display(),
                    m.declared_hz,
                    m.observed_hz
                ));
            }
            let extraction = annotate::extract_positives(&series, session.style, &marks, &config.refine)?;
            let where_ = session.path.display();
            for issue in &extraction.issues {
                report.warnings.push(format!("{where_}: {issue}"));
            }
            for flagged in &extraction.flagged {
                report.warnings.push(format!("{where_}: no activity found in {}", flagged.raw));
            }
            report.flagged_pairs += extraction.flagged.len();
            sessions.push(LoadedSession {
                series,
                style: session.style,
                extraction,
            });
        }
    }

    let lengths: Vec<usize> = sessions
        .iter()
        .flat_map(|s| s.extraction.segments.iter().map(GestureSegment::len))
        .collect();
    let mut segments = Vec::new();
    for s in sessions {
        let positives = s.extraction.segments.len();
        let count = (config.negative_ratio * positives as f64).round() as usize;
        let seed = seed::derive(
            master_seed,
            &[
                tag::NEGATIVES,
                seed::hash_str(&s.series.participant_id),
                seed::hash_str(&s.series.session_id),
            ],
        );
        let negatives = annotate::sample_negatives(
            &s.series,
            s.style,
            &s.extraction.occupied_spans(),
            count,
            &lengths,
            seed,
        );
        if let Some(short) = negatives.shortfall {
            report.warnings.push(format!(
                "{}/{}: {short}",
                s.series.participant_id, s.series.session_id
            ));
        }
        segments.extend(s.extraction.segments);
        segments.extend(negatives.segments);
    }
    for seg in &segments {
        *report
            .counts
            .entry((seg.participant_id.clone(), seg.style, seg.label))
            .or_default() += 1;
    }
    Ok((segments, report))
}

/// Values are rounded to `f32`, the precision of the cache file, so a
/// dataset read back from the cache equals the one returned here.
pub fn vectorize_all(segments: &[GestureSegment], spec: &WindowSpec) -> Vec<FeatureVector> {
    segments
        .iter()
        .map(|seg| {
            let mut v = window::vectorize(seg, spec);
            v.values.iter_mut().for_each(|x| *x = *x as f32 as f64);
            v
        })
        .collect()
}

pub fn prepare(root: &Path, config: &PrepareConfig, master_seed: u64) -> Result<PreparedDataset, PipelineError> {
    let (segments, report) = collect_segments(root, config, master_seed)?;
    if !segments.iter().any(|s| s.label == Label::Medication) {
        return Err(PipelineError::NoUsableGestures(root.to_path_buf()));
    }
    let spec = match config.window.timesteps {
        Some(0) => return Err(WindowError::ZeroTimesteps.into()),
        Some(w) => WindowSpec::new(w),
        None => window::fit_window(&segments)?,
    }
    .with_normalization(config.window.normalization);
    let vectors = vectorize_all(&segments, &spec);
    Ok(PreparedDataset { spec, vectors, report })
}
