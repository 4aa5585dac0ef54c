//! Evaluation protocols and their reports.
//!
//! * Exp1: random train/test splits of the protocol-guided data, repeated.
//! * Exp2: leave-one-participant-out over the protocol-guided data.
//! * Exp3: train on all protocol-guided data plus the other participants'
//!   natural data, test on the held-out participant's natural data.
//!
//! Each protocol builds index-based [`Fold`]s, then [`run_sweep`] trains one
//! network per `(fold, hidden size, repeat)` cell. Cells run on a bounded
//! worker pool; results are always collected in cell order. Every cell's
//! random streams are derived from the master seed and the cell coordinates:
//!
//! ```text
//! init    = derive(master, [INIT,    fold, hidden, repeat])
//! shuffle = derive(master, [SHUFFLE, fold, hidden, repeat])
//! split r = derive(master, [SPLIT, r])                       (Exp1 only)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::GestureStyle;
use crate::metrics;
use crate::mlp::{self, MlpArchitecture, MlpModel, TrainConfig};
use crate::seed::{self, tag};
use crate::window::FeatureVector;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("need at least 2 vectors to split, got {0}")]
    TooFewSamples(usize),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("leave-one-participant-out needs at least 2 participants")]
    SingleParticipant,
    #[error("participant {participant} has no {style} vectors")]
    MissingStyle {
        participant: String,
        style: GestureStyle,
    },
    #[error("no {0} vectors in the dataset")]
    NoData(GestureStyle),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("vectors have inconsistent widths")]
    RaggedVectors,
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("malformed report: {0}")]
    BadReport(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl From<ExperimentId> for u8 {
    fn from(id: ExperimentId) -> u8 {
        id.number()
    }
}

impl TryFrom<u8> for ExperimentId {
    type Error = String;

    fn try_from(n: u8) -> Result<Self, Self::Error> {
        ExperimentId::from_number(n).ok_or_else(|| format!("unknown experiment {n}, expected 1, 2 or 3"))
    }
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "EXP1",
            ExperimentId::Exp2 => "EXP2",
            ExperimentId::Exp3 => "EXP3",
        }
    }

    /// Prefix of the report files, e.g. `exp2`.
    pub fn file_stem(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(ExperimentId::Exp1),
            2 => Some(ExperimentId::Exp2),
            3 => Some(ExperimentId::Exp3),
            _ => None,
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = s.trim_start_matches("exp").trim_start_matches("EXP");
        n.parse::<u8>()
            .ok()
            .and_then(ExperimentId::from_number)
            .ok_or_else(|| format!("unknown experiment {s:?}, expected 1, 2 or 3"))
    }
}

/// Hidden-layer widths to train and how many runs per width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub hidden_sizes: Vec<usize>,
    /// Exp1: number of random splits. Exp2/Exp3: initializations per cell.
    /// Unset means 3 for Exp1 and 1 otherwise.
    pub repeats: Option<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            hidden_sizes: (1..=10).map(|k| 10 * k).collect(),
            repeats: None,
        }
    }
}

impl SweepSpec {
    pub fn new(hidden_sizes: Vec<usize>, repeats: usize) -> Self {
        Self {
            hidden_sizes,
            repeats: Some(repeats),
        }
    }

    pub fn repeats_for(&self, experiment: ExperimentId) -> usize {
        self.repeats.unwrap_or(match experiment {
            ExperimentId::Exp1 => 3,
            _ => 1,
        })
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.hidden_sizes.is_empty() {
            return Err(ExperimentError::InvalidSweep("no hidden sizes".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(ExperimentError::InvalidSweep("hidden sizes must be >= 1".into()));
        }
        if self.repeats == Some(0) {
            return Err(ExperimentError::InvalidSweep("repeats must be >= 1".into()));
        }
        Ok(())
    }
}

/// Parses a hidden-size grid: `10..100` (step defaults to the start value),
/// `10..100:5`, or a comma list such as `10,30,90`. Ranges are inclusive.
pub fn parse_hidden_grid(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("invalid hidden-size grid {s:?}");
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let sizes = if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (num(hi)?, num(step)?),
            None => (num(rest)?, num(lo)?),
        };
        let lo = num(lo)?;
        if lo == 0 || step == 0 || hi < lo {
            return Err(bad());
        }
        (lo..=hi).step_by(step).collect()
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>, _>>()?
    };
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(bad());
    }
    Ok(sizes)
}

/// How Exp1 assigns vectors to the train and test sides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitGranularity {
    #[default]
    Vector,
    /// Whole sessions go to one side, so near-duplicate gestures of one
    /// session never straddle the split.
    Session,
}

/// Indices into a vector slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub held_out: Option<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn check_ratio(ratio: f64) -> Result<(), ExperimentError> {
    if ratio > 0.0 && ratio < 1.0 {
        Ok(())
    } else {
        Err(ExperimentError::InvalidRatio(ratio))
    }
}

/// Train size for `n` items: `round(ratio·n)`, kept inside `[1, n-1]` so
/// neither side is empty.
fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
}

/// Random partition of `0..n`. Both sides are returned in ascending order.
pub fn split_random(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), ExperimentError> {
    check_ratio(ratio)?;
    if n < 2 {
        return Err(ExperimentError::TooFewSamples(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let k = train_count(n, ratio);
    let (mut train, mut test) = (order[..k].to_vec(), order[k..].to_vec());
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Like [`split_random`] but over groups: `round(ratio·G)` of the `G`
/// distinct keys go to train, and each item follows its key.
pub fn split_random_grouped(
    keys: &[String],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), ExperimentError> {
    check_ratio(ratio)?;
    let groups: Vec<&String> = keys.iter().collect::<BTreeSet<_>>().into_iter().collect();
    if groups.len() < 2 {
        return Err(ExperimentError::TooFewSamples(groups.len()));
    }
    let (train_groups, _) = split_random(groups.len(), ratio, seed)?;
    let train_keys: BTreeSet<&String> = train_groups.iter().map(|&g| groups[g]).collect();
    let (train, test) = (0..keys.len()).partition(|&i| train_keys.contains(&keys[i]));
    Ok((train, test))
}

fn participants(vectors: &[FeatureVector], indices: impl Iterator<Item = usize>) -> Vec<String> {
    indices
        .map(|i| vectors[i].participant_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// One fold per participant (sorted by id) over the vectors of `style`, or of
/// every style when `None`.
pub fn lopo_folds(vectors: &[FeatureVector], style: Option<GestureStyle>) -> Result<Vec<Fold>, ExperimentError> {
    let pool: Vec<usize> = (0..vectors.len())
        .filter(|&i| style.is_none_or(|s| vectors[i].style == s))
        .collect();
    let ids = participants(vectors, pool.iter().copied());
    if ids.len() < 2 {
        return Err(ExperimentError::SingleParticipant);
    }
    Ok(ids
        .into_iter()
        .map(|id| {
            let (test, train) = pool.iter().partition(|&&i| vectors[i].participant_id == id);
            Fold {
                held_out: Some(id),
                train,
                test,
            }
        })
        .collect())
}

/// For each participant `k`: train on every PROTOCOL vector (including
/// `k`'s) plus the NATURAL vectors of everyone else, test on `k`'s NATURAL
/// vectors.
pub fn exp3_folds(vectors: &[FeatureVector]) -> Result<Vec<Fold>, ExperimentError> {
    let ids = participants(vectors, 0..vectors.len());
    if ids.is_empty() {
        return Err(ExperimentError::NoData(GestureStyle::Natural));
    }
    for id in &ids {
        for style in GestureStyle::ALL {
            if !vectors.iter().any(|v| &v.participant_id == id && v.style == style) {
                return Err(ExperimentError::MissingStyle {
                    participant: id.clone(),
                    style,
                });
            }
        }
    }
    Ok(ids
        .into_iter()
        .map(|id| {
            let mut fold = Fold {
                held_out: Some(id.clone()),
                train: Vec::new(),
                test: Vec::new(),
            };
            for (i, v) in vectors.iter().enumerate() {
                match v.style {
                    GestureStyle::Protocol => fold.train.push(i),
                    GestureStyle::Natural if v.participant_id == id => fold.test.push(i),
                    GestureStyle::Natural => fold.train.push(i),
                }
            }
            fold
        })
        .collect())
}

/// Outcome of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub held_out: Option<String>,
    pub hidden_size: usize,
    pub repeat: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// NaN when the cell failed.
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub failure: Option<String>,
}

impl FoldResult {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
}

impl Extremes {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        let (mut max, mut min, mut sum, mut n) = (f64::NEG_INFINITY, f64::INFINITY, 0.0, 0usize);
        for v in values {
            max = max.max(v);
            min = min.min(v);
            sum += v;
            n += 1;
        }
        (n > 0).then(|| Extremes {
            max,
            min,
            mean: sum / n as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSummary {
    pub hidden_size: usize,
    pub runs: usize,
    pub train: Extremes,
    pub test: Extremes,
}

/// Best and worst accuracy of one participant, with the width achieving it.
/// Ties go to the smaller width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighLow {
    pub high: f64,
    pub high_hidden: usize,
    pub low: f64,
    pub low_hidden: usize,
    pub mean: f64,
}

impl HighLow {
    fn of(rows: &[&FoldResult], value: impl Fn(&FoldResult) -> f64) -> Option<Self> {
        let first = rows.first()?;
        let mut out = HighLow {
            high: value(first),
            high_hidden: first.hidden_size,
            low: value(first),
            low_hidden: first.hidden_size,
            mean: 0.0,
        };
        for r in rows {
            let v = value(r);
            if v > out.high || (v == out.high && r.hidden_size < out.high_hidden) {
                (out.high, out.high_hidden) = (v, r.hidden_size);
            }
            if v < out.low || (v == out.low && r.hidden_size < out.low_hidden) {
                (out.low, out.low_hidden) = (v, r.hidden_size);
            }
            out.mean += v;
        }
        out.mean /= rows.len() as f64;
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantSummary {
    pub participant: String,
    pub train: HighLow,
    pub test: HighLow,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: ExperimentId,
    /// One row per cell, in `(fold, hidden size, repeat)` order.
    pub rows: Vec<FoldResult>,
    /// One row per hidden size, in sweep order.
    pub architectures: Vec<ArchitectureSummary>,
    /// One row per held-out participant; empty for Exp1.
    pub participants: Vec<ParticipantSummary>,
    /// Max/min/average over every successful detail row.
    pub footer_train: Option<Extremes>,
    pub footer_test: Option<Extremes>,
}

impl ExperimentReport {
    /// Derives every summary from the detail rows.
    pub fn from_rows(experiment: ExperimentId, rows: Vec<FoldResult>) -> Self {
        let ok: Vec<&FoldResult> = rows.iter().filter(|r| r.is_ok()).collect();

        let mut widths: Vec<usize> = Vec::new();
        for r in &rows {
            if !widths.contains(&r.hidden_size) {
                widths.push(r.hidden_size);
            }
        }
        let architectures = widths
            .into_iter()
            .filter_map(|h| {
                let of_h: Vec<&&FoldResult> = ok.iter().filter(|r| r.hidden_size == h).collect();
                Some(ArchitectureSummary {
                    hidden_size: h,
                    runs: of_h.len(),
                    train: Extremes::of(of_h.iter().map(|r| r.train_accuracy))?,
                    test: Extremes::of(of_h.iter().map(|r| r.test_accuracy))?,
                })
            })
            .collect();

        let mut by_participant: BTreeMap<&str, Vec<&FoldResult>> = BTreeMap::new();
        for r in &ok {
            if let Some(p) = &r.held_out {
                by_participant.entry(p).or_default().push(r);
            }
        }
        let participants = by_participant
            .into_iter()
            .filter_map(|(p, rs)| {
                Some(ParticipantSummary {
                    participant: p.to_string(),
                    train: HighLow::of(&rs, |r| r.train_accuracy)?,
                    test: HighLow::of(&rs, |r| r.test_accuracy)?,
                    train_size: rs[0].train_size,
                    test_size: rs[0].test_size,
                })
            })
            .collect();

        let footer_train = Extremes::of(ok.iter().map(|r| r.train_accuracy));
        let footer_test = Extremes::of(ok.iter().map(|r| r.test_accuracy));
        Self {
            experiment,
            rows,
            architectures,
            participants,
            footer_train,
            footer_test,
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    /// Distinct models trained, failed ones included.
    pub fn models_examined(&self) -> usize {
        self.rows.len()
    }
}

/// Settings shared by all three experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sweep: SweepSpec,
    pub train: TrainConfig,
    /// Exp1 train fraction.
    pub split_ratio: f64,
    pub split_granularity: SplitGranularity,
    /// Worker threads; 0 uses every logical core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sweep: SweepSpec::default(),
            train: TrainConfig::default(),
            split_ratio: 0.8,
            split_granularity: SplitGranularity::Vector,
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    fold: usize,
    hidden: usize,
    repeat: usize,
}

fn accuracy_of(model: &MlpModel, vectors: &[FeatureVector], indices: &[usize]) -> Result<f64, String> {
    let mut predictions = Vec::with_capacity(indices.len());
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        predictions.push(model.predict(&vectors[i].values, 0.5).map_err(|e| e.to_string())?);
        labels.push(vectors[i].label.as_u8());
    }
    let counts = metrics::confusion(&predictions, &labels).map_err(|e| e.to_string())?;
    metrics::accuracy(&counts).map_err(|e| e.to_string())
}

fn run_cell(
    vectors: &[FeatureVector],
    fold: &Fold,
    cell: Cell,
    train: &TrainConfig,
    master: u64,
) -> FoldResult {
    let coords = [cell.fold as u64, cell.hidden as u64, cell.repeat as u64];
    let mut result = FoldResult {
        fold: cell.fold,
        held_out: fold.held_out.clone(),
        hidden_size: cell.hidden,
        repeat: cell.repeat,
        train_size: fold.train.len(),
        test_size: fold.test.len(),
        train_accuracy: f64::NAN,
        test_accuracy: f64::NAN,
        failure: None,
    };
    let outcome = (|| -> Result<(f64, f64), String> {
        let width = vectors[*fold.train.first().ok_or("empty training set")?].values.len();
        let arch = MlpArchitecture::new(width, cell.hidden).map_err(|e| e.to_string())?;
        let init = seed::derive(master, &[&[tag::INIT][..], &coords].concat());
        let config = TrainConfig {
            seed: seed::derive(master, &[&[tag::SHUFFLE][..], &coords].concat()),
            ..*train
        };
        let inputs: Vec<&[f64]> = fold.train.iter().map(|&i| &vectors[i].values[..]).collect();
        let labels: Vec<f64> = fold.train.iter().map(|&i| vectors[i].target()).collect();
        let trained = mlp::train(MlpModel::init(arch, init), &inputs, &labels, &config)
            .map_err(|e| e.to_string())?;
        Ok((
            accuracy_of(&trained.model, vectors, &fold.train)?,
            accuracy_of(&trained.model, vectors, &fold.test)?,
        ))
    })();
    match outcome {
        Ok((train_acc, test_acc)) => {
            result.train_accuracy = train_acc;
            result.test_accuracy = test_acc;
        }
        Err(e) => result.failure = Some(e),
    }
    result
}

/// Trains every `(fold, hidden size, repeat)` cell. A failing cell is
/// recorded and does not stop the sweep. `progress` sees each result as it
/// completes, in completion order.
pub fn run_sweep(
    experiment: ExperimentId,
    vectors: &[FeatureVector],
    folds: &[Fold],
    sweep: &SweepSpec,
    config: &ExperimentConfig,
    master: u64,
    progress: &(dyn Fn(&FoldResult) + Sync),
) -> Result<ExperimentReport, ExperimentError> {
    sweep.validate()?;
    config.train.validate().map_err(|e| ExperimentError::InvalidSweep(e.to_string()))?;
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.values.len() != first.values.len()) {
            return Err(ExperimentError::RaggedVectors);
        }
    }
    let repeats = sweep.repeats_for(experiment);
    let mut cells = Vec::new();
    for fold in 0..folds.len() {
        for &hidden in &sweep.hidden_sizes {
            for repeat in 0..repeats {
                cells.push(Cell { fold, hidden, repeat });
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let rows: Vec<FoldResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| {
                let r = run_cell(vectors, &folds[cell.fold], cell, &config.train, master);
                progress(&r);
                r
            })
            .collect()
    });
    Ok(ExperimentReport::from_rows(experiment, rows))
}

fn of_style(vectors: &[FeatureVector], style: GestureStyle) -> Result<Vec<FeatureVector>, ExperimentError> {
    let out: Vec<FeatureVector> = vectors.iter().filter(|v| v.style == style).cloned().collect();
    if out.is_empty() {
        Err(ExperimentError::NoData(style))
    } else {
        Ok(out)
    }
}

/// The random splits Exp1 trains on, one per repeat.
pub fn exp1_folds(
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
    master: u64,
) -> Result<Vec<Fold>, ExperimentError> {
    let repeats = config.sweep.repeats_for(ExperimentId::Exp1);
    (0..repeats)
        .map(|r| {
            let seed = seed::derive(master, &[tag::SPLIT, r as u64]);
            let (train, test) = match config.split_granularity {
                SplitGranularity::Vector => split_random(vectors.len(), config.split_ratio, seed)?,
                SplitGranularity::Session => {
                    let keys: Vec<String> = vectors
                        .iter()
                        .map(|v| format!("{}/{}", v.participant_id, v.session_id))
                        .collect();
                    split_random_grouped(&keys, config.split_ratio, seed)?
                }
            };
            Ok(Fold {
                held_out: None,
                train,
                test,
            })
        })
        .collect()
}

/// Protocol-guided data, `repeats` random splits, every hidden size once per split.
pub fn run_exp1(
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
    master: u64,
    progress: &(dyn Fn(&FoldResult) + Sync),
) -> Result<ExperimentReport, ExperimentError> {
    let data = of_style(vectors, GestureStyle::Protocol)?;
    let folds = exp1_folds(&data, config, master)?;
    let sweep = SweepSpec {
        repeats: Some(1),
        ..config.sweep.clone()
    };
    let mut report = run_sweep(ExperimentId::Exp1, &data, &folds, &sweep, config, master, progress)?;
    // Each split is one repeat of the experiment.
    for row in &mut report.rows {
        row.repeat = row.fold;
    }
    Ok(report)
}

/// Leave-one-participant-out over the protocol-guided data.
pub fn run_exp2(
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
    master: u64,
    progress: &(dyn Fn(&FoldResult) + Sync),
) -> Result<ExperimentReport, ExperimentError> {
    let data = of_style(vectors, GestureStyle::Protocol)?;
    let folds = lopo_folds(&data, None)?;
    run_sweep(ExperimentId::Exp2, &data, &folds, &config.sweep, config, master, progress)
}

/// Natural-gesture transfer, see [`exp3_folds`].
pub fn run_exp3(
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
    master: u64,
    progress: &(dyn Fn(&FoldResult) + Sync),
) -> Result<ExperimentReport, ExperimentError> {
    let folds = exp3_folds(vectors)?;
    run_sweep(ExperimentId::Exp3, vectors, &folds, &config.sweep, config, master, progress)
}

pub fn run_experiment(
    experiment: ExperimentId,
    vectors: &[FeatureVector],
    config: &ExperimentConfig,
    master: u64,
    progress: &(dyn Fn(&FoldResult) + Sync),
) -> Result<ExperimentReport, ExperimentError> {
    match experiment {
        ExperimentId::Exp1 => run_exp1(vectors, config, master, progress),
        ExperimentId::Exp2 => run_exp2(vectors, config, master, progress),
        ExperimentId::Exp3 => run_exp3(vectors, config, master, progress),
    }
}

pub const DETAIL_HEADER: &str =
    "experiment,fold,held_out,hidden_size,repeat,train_size,test_size,train_accuracy,test_accuracy,status";

fn status_field(r: &FoldResult) -> String {
    match &r.failure {
        None => "ok".to_string(),
        Some(msg) => format!("failed: {}", msg.replace([',', '\n', '\r'], ";")),
    }
}

/// Detail rows at full precision.
pub fn detail_csv(report: &ExperimentReport) -> String {
    let mut out = format!("{DETAIL_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            report.experiment,
            r.fold,
            r.held_out.as_deref().unwrap_or(""),
            r.hidden_size,
            r.repeat,
            r.train_size,
            r.test_size,
            r.train_accuracy,
            r.test_accuracy,
            status_field(r)
        );
    }
    out
}

/// Inverse of [`detail_csv`].
pub fn parse_detail_csv(text: &str) -> Result<(ExperimentId, Vec<FoldResult>), ExperimentError> {
    let bad = |line: usize, what: &str| ExperimentError::BadReport(format!("line {line}: {what}"));
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h == DETAIL_HEADER => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut experiment = None;
    let mut rows = Vec::new();
    for (n, line) in lines {
        let f: Vec<&str> = line.splitn(10, ',').collect();
        if f.len() != 10 {
            return Err(bad(n, "expected 10 fields"));
        }
        let exp: ExperimentId = f[0].parse().map_err(|_| bad(n, "unknown experiment"))?;
        if *experiment.get_or_insert(exp) != exp {
            return Err(bad(n, "mixed experiments"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad integer"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad accuracy"));
        let failure = match f[9] {
            "ok" => None,
            s => Some(
                s.strip_prefix("failed: ")
                    .ok_or_else(|| bad(n, "bad status"))?
                    .to_string(),
            ),
        };
        rows.push(FoldResult {
            fold: int(f[1])?,
            held_out: (!f[2].is_empty()).then(|| f[2].to_string()),
            hidden_size: int(f[3])?,
            repeat: int(f[4])?,
            train_size: int(f[5])?,
            test_size: int(f[6])?,
            train_accuracy: float(f[7])?,
            test_accuracy: float(f[8])?,
            failure,
        });
    }
    let experiment = experiment.ok_or_else(|| bad(2, "no rows"))?;
    Ok((experiment, rows))
}

/// Long-format summary: `section,key,metric,value`.
pub fn summary_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("section,key,metric,value\n");
    let mut put = |section: &str, key: &dyn fmt::Display, metric: &str, value: &dyn fmt::Display| {
        let _ = writeln!(out, "{section},{key},{metric},{value}");
    };
    for a in &report.architectures {
        let h = a.hidden_size;
        put("architecture", &h, "runs", &a.runs);
        put("architecture", &h, "train_mean", &a.train.mean);
        put("architecture", &h, "train_min", &a.train.min);
        put("architecture", &h, "train_max", &a.train.max);
        put("architecture", &h, "test_mean", &a.test.mean);
        put("architecture", &h, "test_min", &a.test.min);
        put("architecture", &h, "test_max", &a.test.max);
    }
    for p in &report.participants {
        let id = &p.participant;
        for (side, hl) in [("train", &p.train), ("test", &p.test)] {
            put("participant", id, &format!("{side}_high"), &hl.high);
            put("participant", id, &format!("{side}_high_hidden"), &hl.high_hidden);
            put("participant", id, &format!("{side}_low"), &hl.low);
            put("participant", id, &format!("{side}_low_hidden"), &hl.low_hidden);
            put("participant", id, &format!("{side}_mean"), &hl.mean);
        }
        put("participant", id, "train_size", &p.train_size);
        put("participant", id, "test_size", &p.test_size);
    }
    for (key, pick) in [("max", 0), ("min", 1), ("average", 2)] {
        for (metric, ex) in [("train", report.footer_train), ("test", report.footer_test)] {
            if let Some(e) = ex {
                let v = [e.max, e.min, e.mean][pick];
                put("footer", &key, metric, &v);
            }
        }
    }
    put("cells", &"all", "total", &report.rows.len());
    put("cells", &"all", "failed", &report.failed_cells());
    out
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn with_hidden(v: f64, h: usize) -> String {
    format!("{} ({h})", pct(v))
}

fn push_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "{}", line(&head));
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out.push('\n');
}

fn footer_rows(report: &ExperimentReport) -> Vec<Vec<String>> {
    let (Some(tr), Some(te)) = (report.footer_train, report.footer_test) else {
        return Vec::new();
    };
    vec![
        vec!["Max".into(), pct(tr.max), pct(te.max)],
        vec!["Min".into(), pct(tr.min), pct(te.min)],
        vec!["Average".into(), pct(tr.mean), pct(te.mean)],
    ]
}

/// Aligned plain-text tables with accuracies in percent.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}: {} models, {} failed\n",
        report.experiment,
        report.models_examined(),
        report.failed_cells()
    );

    if !report.participants.is_empty() {
        let _ = writeln!(out, "Per participant, accuracy % (hidden neurons)");
        let rows: Vec<Vec<String>> = report
            .participants
            .iter()
            .map(|p| {
                vec![
                    p.participant.clone(),
                    with_hidden(p.train.high, p.train.high_hidden),
                    with_hidden(p.train.low, p.train.low_hidden),
                    with_hidden(p.test.high, p.test.high_hidden),
                    with_hidden(p.test.low, p.test.low_hidden),
                    pct(p.test.mean),
                    p.train_size.to_string(),
                    p.test_size.to_string(),
                ]
            })
            .collect();
        push_table(
            &mut out,
            &[
                "Participant",
                "Train high",
                "Train low",
                "Test high",
                "Test low",
                "Test avg",
                "Train size",
                "Test size",
            ],
            &rows,
        );
    }

    let _ = writeln!(out, "Per architecture, accuracy %");
    let rows: Vec<Vec<String>> = report
        .architectures
        .iter()
        .map(|a| {
            vec![
                a.hidden_size.to_string(),
                pct(a.train.mean),
                pct(a.test.mean),
                pct(a.test.min),
                pct(a.test.max),
                a.runs.to_string(),
            ]
        })
        .collect();
    push_table(
        &mut out,
        &["Hidden", "Train", "Test", "Test min", "Test max", "Runs"],
        &rows,
    );

    let _ = writeln!(out, "Over all runs, accuracy %");
    push_table(&mut out, &["", "Train", "Test"], &footer_rows(report));

    let failed: Vec<&FoldResult> = report.rows.iter().filter(|r| !r.is_ok()).collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "Failed cells");
        for r in failed {
            let _ = writeln!(
                out,
                "fold {} hidden {} repeat {}: {}",
                r.fold,
                r.hidden_size,
                r.repeat,
                r.failure.as_deref().unwrap_or("")
            );
        }
    }
    out
}
