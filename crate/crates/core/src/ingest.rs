//! Session archives and the on-disk participant store.
//!
//! A recording session travels as a zip holding exactly two CSV files:
//!
//! ```text
//! sensor.csv       timestamp_ms,x,y,z
//! annotation.csv   timestamp_ms,event        (event = START | END)
//! ```
//!
//! Files use LF line endings, `.` as decimal separator and no quoting.
//! Accelerations are stored as `f32` in m/s², which is what makes the text
//! form round-trip exactly (the shortest `f32` representation never needs more
//! than 9 significant digits).
//!
//! The store emulates the central upload area as a directory tree:
//! `<root>/<participant_id>/<protocol|natural>/<session_id>.zip`.

use std::fmt;
use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

pub const SENSOR_ENTRY: &str = "sensor.csv";
pub const ANNOTATION_ENTRY: &str = "annotation.csv";
pub const SENSOR_HEADER: &str = "timestamp_ms,x,y,z";
pub const ANNOTATION_HEADER: &str = "timestamp_ms,event";
pub const DEFAULT_RATE_HZ: f64 = 25.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8")]
    NotUtf8,
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: &'static str, found: String },
    #[error("non-numeric or invalid field on row {row}")]
    NonNumericField { row: usize },
    #[error("timestamp does not strictly increase on row {row}")]
    NonMonotonicTimestamp { row: usize },
    #[error("unknown annotation event on row {row}")]
    UnknownEvent { row: usize },
    #[error("archive is missing entry `{0}`")]
    MissingEntry(String),
    #[error("archive has unexpected entry `{0}`")]
    ExtraEntry(String),
    #[error("annotation mark at {0} ms lies outside the recorded samples")]
    MarkOutOfRange(u64),
    #[error("store root `{0}` does not exist")]
    MissingRoot(PathBuf),
    #[error("zip error: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One tri-axial accelerometer reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    /// Milliseconds since session start.
    pub t_ms: u64,
    pub x: f32,
    pub y: f32,
    pub z: f32,
}

impl AccelSample {
    pub fn new(t_ms: u64, x: f32, y: f32, z: f32) -> Self {
        Self { t_ms, x, y, z }
    }

    pub fn magnitude(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn axes(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }
}

/// Timestamped accelerometer stream of one recording session.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    pub participant_id: String,
    pub session_id: String,
    pub rate_hz: f64,
    pub samples: Vec<AccelSample>,
}

/// The declared sampling rate disagrees with the timestamps by more than 20%.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMismatch {
    pub declared_hz: f64,
    pub observed_hz: f64,
}

impl SampleSeries {
    pub fn new(
        participant_id: impl Into<String>,
        session_id: impl Into<String>,
        rate_hz: f64,
        samples: Vec<AccelSample>,
    ) -> Self {
        Self {
            participant_id: participant_id.into(),
            session_id: session_id.into(),
            rate_hz,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[first, last]` sample timestamps, if any samples exist.
    pub fn time_range(&self) -> Option<(u64, u64)> {
        Some((self.samples.first()?.t_ms, self.samples.last()?.t_ms))
    }

    /// Index of the first sample whose timestamp is `>= t_ms`.
    pub fn index_at_or_after(&self, t_ms: u64) -> usize {
        self.samples.partition_point(|s| s.t_ms < t_ms)
    }

    /// Number of samples covering `seconds` at the declared rate.
    pub fn samples_for(&self, seconds: f64) -> usize {
        (seconds * self.rate_hz).round().max(0.0) as usize
    }

    /// Median inter-sample rate derived from timestamps.
    pub fn observed_rate_hz(&self) -> Option<f64> {
        let mut deltas: Vec<u64> = self
            .samples
            .windows(2)
            .map(|w| w[1].t_ms - w[0].t_ms)
            .collect();
        if deltas.is_empty() {
            return None;
        }
        deltas.sort_unstable();
        let mid = deltas.len() / 2;
        let median = if deltas.len().is_multiple_of(2) {
            (deltas[mid - 1] + deltas[mid]) as f64 / 2.0
        } else {
            deltas[mid] as f64
        };
        Some(1000.0 / median)
    }

    pub fn check_rate(&self) -> Option<RateMismatch> {
        let observed = self.observed_rate_hz()?;
        let rel = (self.rate_hz - observed).abs() / observed;
        (rel > 0.2).then_some(RateMismatch {
            declared_hz: self.rate_hz,
            observed_hz: observed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MarkKind {
    Start,
    End,
}

impl MarkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MarkKind::Start => "START",
            MarkKind::End => "END",
        }
    }
}

/// A self-reported START or END button press.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotationMark {
    pub t_ms: u64,
    pub kind: MarkKind,
}

impl AnnotationMark {
    pub fn start(t_ms: u64) -> Self {
        Self { t_ms, kind: MarkKind::Start }
    }

    pub fn end(t_ms: u64) -> Self {
        Self { t_ms, kind: MarkKind::End }
    }
}

/// How the medication gesture was performed during a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GestureStyle {
    Protocol,
    Natural,
}

impl GestureStyle {
    pub const ALL: [GestureStyle; 2] = [GestureStyle::Protocol, GestureStyle::Natural];

    /// Directory name inside a participant folder.
    pub fn dir_name(self) -> &'static str {
        match self {
            GestureStyle::Protocol => "protocol",
            GestureStyle::Natural => "natural",
        }
    }

    pub fn from_dir_name(name: &str) -> Option<Self> {
        match name {
            "protocol" => Some(GestureStyle::Protocol),
            "natural" => Some(GestureStyle::Natural),
            _ => None,
        }
    }
}

impl fmt::Display for GestureStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

fn text(raw: &[u8]) -> Result<&str, IngestError> {
    std::str::from_utf8(raw).map_err(|_| IngestError::NotUtf8)
}

/// Splits on LF, dropping only the empty piece left by a trailing newline.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = body.is_empty();
    body.split('\n')
        .enumerate()
        .filter(move |_| !empty)
        .map(|(i, l)| (i + 1, l))
}

fn check_header(first: Option<(usize, &str)>, expected: &'static str) -> Result<(), IngestError> {
    match first {
        Some((_, line)) if line == expected => Ok(()),
        other => Err(IngestError::MalformedHeader {
            expected,
            found: other.map(|(_, l)| l.to_string()).unwrap_or_default(),
        }),
    }
}

fn parse_axis(field: &str, row: usize) -> Result<f32, IngestError> {
    field
        .parse::<f32>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or(IngestError::NonNumericField { row })
}

/// Parses `sensor.csv`. Row numbers in errors are 1-based file lines (the
/// header is row 1).
pub fn parse_sensor_csv(raw: &[u8]) -> Result<Vec<AccelSample>, IngestError> {
    let mut rows = lines(text(raw)?);
    check_header(rows.next(), SENSOR_HEADER)?;

    let mut samples: Vec<AccelSample> = Vec::new();
    for (row, line) in rows {
        let mut fields = line.split(',');
        let mut next = || fields.next().ok_or(IngestError::NonNumericField { row });
        let t_ms = next()?
            .parse::<u64>()
            .map_err(|_| IngestError::NonNumericField { row })?;
        let x = parse_axis(next()?, row)?;
        let y = parse_axis(next()?, row)?;
        let z = parse_axis(next()?, row)?;
        if fields.next().is_some() {
            return Err(IngestError::NonNumericField { row });
        }
        if samples.last().is_some_and(|prev| prev.t_ms >= t_ms) {
            return Err(IngestError::NonMonotonicTimestamp { row });
        }
        samples.push(AccelSample { t_ms, x, y, z });
    }
    Ok(samples)
}

/// Parses `annotation.csv`. Marks come back in file order; pairing and
/// alternation are checked later by the annotation stage.
pub fn parse_annotation_csv(raw: &[u8]) -> Result<Vec<AnnotationMark>, IngestError> {
    let mut rows = lines(text(raw)?);
    check_header(rows.next(), ANNOTATION_HEADER)?;

    rows.map(|(row, line)| {
        let (t, event) = line
            .split_once(',')
            .ok_or(IngestError::NonNumericField { row })?;
        let t_ms = t
            .parse::<u64>()
            .map_err(|_| IngestError::NonNumericField { row })?;
        let kind = match event {
            "START" => MarkKind::Start,
            "END" => MarkKind::End,
            _ => return Err(IngestError::UnknownEvent { row }),
        };
        Ok(AnnotationMark { t_ms, kind })
    })
    .collect()
}

pub fn write_sensor_csv(samples: &[AccelSample]) -> String {
    let mut out = String::with_capacity(32 * (samples.len() + 1));
    out.push_str(SENSOR_HEADER);
    out.push('\n');
    for s in samples {
        use std::fmt::Write as _;
        let _ = writeln!(out, "{},{},{},{}", s.t_ms, s.x, s.y, s.z);
    }
    out
}

pub fn write_annotation_csv(marks: &[AnnotationMark]) -> String {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for m in marks {
        out.push_str(&format!("{},{}\n", m.t_ms, m.kind.as_str()));
    }
    out
}

/// Builds a session archive. Entry timestamps are pinned so identical input
/// always produces identical bytes.
pub fn write_session_archive(
    samples: &[AccelSample],
    marks: &[AnnotationMark],
) -> Result<Vec<u8>, IngestError> {
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(DateTime::default());
    zip.start_file(SENSOR_ENTRY, options)?;
    zip.write_all(write_sensor_csv(samples).as_bytes())?;
    zip.start_file(ANNOTATION_ENTRY, options)?;
    zip.write_all(write_annotation_csv(marks).as_bytes())?;
    Ok(zip.finish()?.into_inner())
}

fn check_entries<R: Read + std::io::Seek>(zip: &ZipArchive<R>) -> Result<(), IngestError> {
    for name in zip.file_names() {
        if name != SENSOR_ENTRY && name != ANNOTATION_ENTRY {
            return Err(IngestError::ExtraEntry(name.to_string()));
        }
    }
    for required in [SENSOR_ENTRY, ANNOTATION_ENTRY] {
        if zip.index_for_name(required).is_none() {
            return Err(IngestError::MissingEntry(required.to_string()));
        }
    }
    Ok(())
}

fn read_entry<R: Read + std::io::Seek>(
    zip: &mut ZipArchive<R>,
    name: &str,
) -> Result<Vec<u8>, IngestError> {
    let mut entry = zip.by_name(name)?;
    let mut buf = Vec::with_capacity(entry.size() as usize);
    entry.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Reads one session archive. Every mark must fall inside the sampled time range.
pub fn load_session(
    archive: &[u8],
    participant_id: &str,
    session_id: &str,
) -> Result<(SampleSeries, Vec<AnnotationMark>), IngestError> {
    let mut zip = ZipArchive::new(Cursor::new(archive))?;
    check_entries(&zip)?;
    let samples = parse_sensor_csv(&read_entry(&mut zip, SENSOR_ENTRY)?)?;
    let marks = parse_annotation_csv(&read_entry(&mut zip, ANNOTATION_ENTRY)?)?;

    let range = samples.first().zip(samples.last()).map(|(a, b)| (a.t_ms, b.t_ms));
    for mark in &marks {
        match range {
            Some((lo, hi)) if (lo..=hi).contains(&mark.t_ms) => {}
            _ => return Err(IngestError::MarkOutOfRange(mark.t_ms)),
        }
    }
    let series = SampleSeries::new(participant_id, session_id, DEFAULT_RATE_HZ, samples);
    Ok((series, marks))
}

pub fn load_session_file(
    path: &Path,
    participant_id: &str,
    session_id: &str,
) -> Result<(SampleSeries, Vec<AnnotationMark>), IngestError> {
    load_session(&fs::read(path)?, participant_id, session_id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRef {
    pub session_id: String,
    pub style: GestureStyle,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub sessions: Vec<SessionRef>,
}

impl ParticipantRecord {
    pub fn sessions_of(&self, style: GestureStyle) -> impl Iterator<Item = &SessionRef> {
        self.sessions.iter().filter(move |s| s.style == style)
    }
}

/// Participant-keyed listing of every readable archive in a store.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    pub participants: Vec<ParticipantRecord>,
}

impl DatasetIndex {
    pub fn session_count(&self) -> usize {
        self.participants.iter().map(|p| p.sessions.len()).sum()
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantRecord> {
        self.participants.iter().find(|p| p.participant_id == id)
    }
}

/// Non-fatal problems met while scanning a store.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanWarning {
    UnreadableArchive { path: PathBuf, reason: String },
    UnknownStyleDir(PathBuf),
}

impl fmt::Display for ScanWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScanWarning::UnreadableArchive { path, reason } => {
                write!(f, "unreadable archive {}: {reason}", path.display())
            }
            ScanWarning::UnknownStyleDir(path) => {
                write!(f, "ignoring unknown style directory {}", path.display())
            }
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let mut entries = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()?;
    entries.sort();
    Ok(entries)
}

fn file_name(path: &Path) -> Option<&str> {
    path.file_name().and_then(|n| n.to_str())
}

fn probe_archive(path: &Path) -> Result<(), IngestError> {
    let zip = ZipArchive::new(fs::File::open(path)?)?;
    check_entries(&zip)
}

/// Lists `<root>/<participant>/<style>/<session>.zip`. Archives that cannot be
/// opened, or that do not hold exactly the two expected entries, are skipped
/// and reported as warnings.
pub fn scan_store(root: &Path) -> Result<(DatasetIndex, Vec<ScanWarning>), IngestError> {
    if !root.is_dir() {
        return Err(IngestError::MissingRoot(root.to_path_buf()));
    }
    let mut index = DatasetIndex::default();
    let mut warnings = Vec::new();

    for participant_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let Some(participant_id) = file_name(&participant_dir) else {
            continue;
        };
        let mut sessions = Vec::new();
        for style_dir in sorted_entries(&participant_dir)?.into_iter().filter(|p| p.is_dir()) {
            let Some(style) = file_name(&style_dir).and_then(GestureStyle::from_dir_name) else {
                warnings.push(ScanWarning::UnknownStyleDir(style_dir));
                continue;
            };
            for path in sorted_entries(&style_dir)? {
                if path.extension().and_then(|e| e.to_str()) != Some("zip") || !path.is_file() {
                    continue;
                }
                let Some(session_id) = path.file_stem().and_then(|s| s.to_str()) else {
                    continue;
                };
                match probe_archive(&path) {
                    Ok(()) => sessions.push(SessionRef {
                        session_id: session_id.to_string(),
                        style,
                        path: path.clone(),
                    }),
                    Err(e) => warnings.push(ScanWarning::UnreadableArchive {
                        path: path.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
        }
        if !sessions.is_empty() {
            sessions.sort_by(|a, b| (a.style, &a.session_id).cmp(&(b.style, &b.session_id)));
            index.participants.push(ParticipantRecord {
                participant_id: participant_id.to_string(),
                sessions,
            });
        }
    }
    Ok((index, warnings))
}
