//! `medsensor` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use thiserror::Error;

use crate::annotate::{self, Label};
use crate::config::{self, ConfigError, RunConfig};
use crate::experiments::{self, ExperimentError, ExperimentId, ExperimentReport, FoldResult};
use crate::ingest::{self, IngestError};
use crate::mlp::Optimizer;
use crate::pipeline::{self, PipelineError};
use crate::plot::{self, PlotGesture};
use crate::synth::{self, SynthError};
use crate::window::{self, Normalization, WindowError};

pub const STORE_ENV: &str = "MEDSENSOR_STORE";
const DEFAULT_STORE: &str = "store";
const DEFAULT_CACHE: &str = "vectors.cache";
const DEFAULT_OUT: &str = "results";
const PLOT_CONTEXT_S: f64 = 2.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Window(#[from] WindowError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("no gesture matches {0}")]
    UnknownGesture(String),
    #[error("{failed} of {total} sweep cells failed; see the report for details")]
    FailedCells { failed: usize, total: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "medsensor", version, about = "Medication-gesture detection from wrist accelerometer data")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic store with ground truth.
    Synth(SynthArgs),
    /// Refine annotations, harvest negatives and write the vector cache.
    Prepare(PrepareArgs),
    /// Run experiment 1, 2 or 3 on a vector cache.
    Exp(ExpArgs),
    /// Plot one gesture, or several superimposed, as SVG and CSV.
    Plot(PlotArgs),
    /// Rebuild the summary and table of a report from its detail CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct StoreArg {
    /// Store root directory [default: store].
    #[arg(long, env = STORE_ENV, value_name = "DIR")]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub sessions_per_style: Option<usize>,
    #[arg(long)]
    pub gestures_per_session: Option<usize>,
    /// Standard deviation of the additive noise, m/s².
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output vector cache.
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Window length in samples.
    #[arg(long, conflicts_with = "fit_window")]
    pub timesteps: Option<usize>,
    /// Size the window to the longest segment.
    #[arg(long)]
    pub fit_window: bool,
    /// Skip per-window z-scoring.
    #[arg(long)]
    pub raw: bool,
    /// Negatives per positive.
    #[arg(long)]
    pub negative_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExpArgs {
    /// Experiment number: 1, 2 or 3.
    pub which: Option<ExperimentId>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub cache: Option<PathBuf>,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Hidden sizes, e.g. `10..100`, `10..100:5` or `10,30,90`.
    #[arg(long, value_parser = experiments::parse_hidden_grid)]
    pub hidden: Option<HiddenGrid>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<Optimizer>,
    /// Exp1 train fraction.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print each finished cell to stderr.
    #[arg(long)]
    pub verbose: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub store: StoreArg,
    #[arg(long)]
    pub participant: String,
    /// Restrict to one session.
    #[arg(long)]
    pub session: Option<String>,
    /// 1-based gesture numbers within the selection, e.g. `2` or `1,2,3`.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub gesture: Vec<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// An `expN_detail.csv` file.
    pub detail: PathBuf,
    /// Where to write the summary and table; defaults to the detail file's directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

/// A parsed `--hidden` value. Aliased so clap takes it as one value.
pub type HiddenGrid = Vec<usize>;

fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    match s.to_ascii_lowercase().as_str() {
        "adam" => Ok(Optimizer::Adam),
        "sgd" => Ok(Optimizer::Sgd),
        _ => Err(format!("unknown optimizer {s:?}, expected adam or sgd")),
    }
}

fn required<T: Clone>(flag: Option<T>, file: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (flag or config file)")))
}

fn store_root(arg: &StoreArg, cfg: &RunConfig) -> PathBuf {
    arg.store.clone().or(cfg.store.clone()).unwrap_or_else(|| DEFAULT_STORE.into())
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn archive_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    write(&dir.join(config::ARCHIVE_NAME), cfg.to_toml()?.as_bytes())
}

fn synth(args: SynthArgs, mut cfg: RunConfig) -> Result<(), CliError> {
    let seed = required(args.seed, &cfg.seed, "seed")?;
    let root = store_root(&args.store, &cfg);
    let s = &mut cfg.synth;
    s.participants = args.participants.unwrap_or(s.participants);
    s.sessions_per_style = args.sessions_per_style.unwrap_or(s.sessions_per_style);
    s.gestures_per_session = args.gestures_per_session.unwrap_or(s.gestures_per_session);
    s.noise_sigma = args.noise.unwrap_or(s.noise_sigma);
    cfg.seed = Some(seed);
    cfg.store = Some(root.clone());

    let truth = synth::gen_store(&root, &cfg.synth, seed)?;
    archive_config(&root, &cfg)?;
    println!(
        "wrote {} participants, {} sessions, {} medication gestures to {}",
        cfg.synth.participants,
        cfg.synth.plan(seed).len(),
        truth.positives().count(),
        root.display()
    );
    Ok(())
}

fn prepare(args: PrepareArgs, mut cfg: RunConfig) -> Result<(), CliError> {
    let seed = required(args.seed, &cfg.seed, "seed")?;
    let root = store_root(&args.store, &cfg);
    let cache = args.cache.or(cfg.cache.clone()).unwrap_or_else(|| DEFAULT_CACHE.into());
    let p = &mut cfg.prepare;
    if args.fit_window {
        p.window.timesteps = None;
    } else if let Some(w) = args.timesteps {
        p.window.timesteps = Some(w);
    }
    if args.raw {
        p.window.normalization = Normalization::None;
    }
    p.negative_ratio = args.negative_ratio.unwrap_or(p.negative_ratio);

    let dataset = pipeline::prepare(&root, &cfg.prepare, seed)?;
    let mut bytes = Vec::new();
    window::write_cache(&mut bytes, &dataset.spec, &dataset.vectors)?;
    write(&cache, &bytes)?;
    println!("{}", dataset.report);
    println!(
        "window {} timesteps, {} vectors written to {}",
        dataset.spec.timesteps,
        dataset.vectors.len(),
        cache.display()
    );
    Ok(())
}

/// Writes `expN_detail.csv`, `expN_summary.csv` and `expN_table.txt`.
pub fn write_report(dir: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    let stem = report.experiment.file_stem();
    write(&dir.join(format!("{stem}_detail.csv")), experiments::detail_csv(report).as_bytes())?;
    write_summaries(dir, report)
}

fn write_summaries(dir: &Path, report: &ExperimentReport) -> Result<(), CliError> {
    let stem = report.experiment.file_stem();
    write(&dir.join(format!("{stem}_summary.csv")), experiments::summary_csv(report).as_bytes())?;
    write(&dir.join(format!("{stem}_table.txt")), experiments::render_table(report).as_bytes())
}

fn exp(args: ExpArgs, mut cfg: RunConfig) -> Result<(), CliError> {
    let seed = required(args.seed, &cfg.seed, "seed")?;
    let which = required(args.which, &cfg.experiment, "experiment (positional)")?;
    let cache = args.cache.or(cfg.cache.clone()).unwrap_or_else(|| DEFAULT_CACHE.into());
    let out = args.out.or(cfg.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    let e = &mut cfg.experiments;
    if let Some(h) = args.hidden {
        e.sweep.hidden_sizes = h;
    }
    e.sweep.repeats = args.repeats.or(e.sweep.repeats);
    e.train.epochs = args.epochs.unwrap_or(e.train.epochs);
    e.train.learning_rate = args.learning_rate.unwrap_or(e.train.learning_rate);
    e.train.batch_size = args.batch_size.unwrap_or(e.train.batch_size);
    e.train.optimizer = args.optimizer.unwrap_or(e.train.optimizer);
    e.split_ratio = args.split_ratio.unwrap_or(e.split_ratio);
    e.jobs = args.jobs.unwrap_or(e.jobs);
    (cfg.seed, cfg.experiment) = (Some(seed), Some(which));
    (cfg.cache, cfg.out) = (Some(cache.clone()), Some(out.clone()));

    let file = fs::File::open(&cache).map_err(io_err(&cache))?;
    let (spec, vectors) = window::read_cache(&mut BufReader::new(file))?;
    cfg.prepare.window = pipeline::WindowConfig {
        timesteps: Some(spec.timesteps),
        normalization: spec.normalization,
    };
    let verbose = args.verbose;
    let progress = move |r: &FoldResult| {
        if verbose {
            eprintln!(
                "fold {} hidden {} repeat {}: train {:.4} test {:.4}{}",
                r.fold,
                r.hidden_size,
                r.repeat,
                r.train_accuracy,
                r.test_accuracy,
                r.failure.as_deref().map(|f| format!(" FAILED {f}")).unwrap_or_default()
            );
        }
    };
    let report = experiments::run_experiment(which, &vectors, &cfg.experiments, seed, &progress)?;
    write_report(&out, &report)?;
    archive_config(&out, &cfg)?;
    print!("{}", experiments::render_table(&report));
    match report.failed_cells() {
        0 => Ok(()),
        failed => Err(CliError::FailedCells {
            failed,
            total: report.rows.len(),
        }),
    }
}

fn plot(args: PlotArgs, cfg: RunConfig) -> Result<(), CliError> {
    let root = store_root(&args.store, &cfg);
    let out = args.out.or(cfg.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into());
    let selector = format!(
        "participant {} session {} gesture {:?}",
        args.participant,
        args.session.as_deref().unwrap_or("*"),
        args.gesture
    );
    let (index, _) = ingest::scan_store(&root)?;
    let participant = index
        .participant(&args.participant)
        .ok_or_else(|| CliError::UnknownGesture(selector.clone()))?;

    // (name, series, refined span) of every gesture in the selection.
    let mut found = Vec::new();
    for session in &participant.sessions {
        if args.session.as_ref().is_some_and(|s| s != &session.session_id) {
            continue;
        }
        let (series, marks) = ingest::load_session_file(&session.path, &participant.participant_id, &session.session_id)?;
        let extraction = annotate::extract_positives(&series, session.style, &marks, &cfg.prepare.refine)
            .map_err(PipelineError::from)?;
        for (k, seg) in extraction.segments.iter().enumerate() {
            debug_assert_eq!(seg.label, Label::Medication);
            let name = format!("{}/{}/{}", participant.participant_id, session.session_id, k + 1);
            found.push((name, series.clone(), seg.span));
        }
    }
    let mut picked = Vec::new();
    for &n in &args.gesture {
        let item = n.checked_sub(1).and_then(|i| found.get(i));
        picked.push(item.ok_or_else(|| CliError::UnknownGesture(selector.clone()))?);
    }

    let context = |series: &ingest::SampleSeries| series.samples_for(PLOT_CONTEXT_S);
    let gestures: Vec<PlotGesture> = picked
        .iter()
        .map(|(name, series, span)| {
            if args.gesture.len() == 1 {
                let lo = span.start().saturating_sub(context(series));
                let hi = (span.end() + context(series)).min(series.len());
                PlotGesture {
                    name,
                    samples: &series.samples[lo..hi],
                    start: span.start() - lo,
                    end: span.end() - lo,
                }
            } else {
                PlotGesture {
                    name,
                    samples: &series.samples[span.start()..span.end()],
                    start: 0,
                    end: span.len(),
                }
            }
        })
        .collect();

    let stem = format!(
        "{}{}_g{}",
        args.participant,
        args.session.as_deref().map(|s| format!("_{s}")).unwrap_or_default(),
        args.gesture.iter().map(ToString::to_string).collect::<Vec<_>>().join("-")
    );
    let svg = if gestures.len() == 1 {
        plot::single_svg(&gestures[0])
    } else {
        plot::superimposed_svg(&stem, &gestures)
    };
    let svg_path = out.join(format!("{stem}.svg"));
    write(&svg_path, svg.as_bytes())?;
    write(&out.join(format!("{stem}.csv")), plot::gestures_csv(&gestures).as_bytes())?;
    println!("wrote {}", svg_path.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.detail).map_err(io_err(&args.detail))?;
    let (experiment, rows) = experiments::parse_detail_csv(&text)?;
    let report = ExperimentReport::from_rows(experiment, rows);
    let dir = args
        .out
        .or_else(|| args.detail.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    write_summaries(&dir, &report)?;
    print!("{}", experiments::render_table(&report));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Synth(a) => synth(a, cfg),
        Command::Prepare(a) => prepare(a, cfg),
        Command::Exp(a) => exp(a, cfg),
        Command::Plot(a) => plot(a, cfg),
        Command::Report(a) => report(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => {
            let _ = io::stdout().flush();
            0
        }
        Err(CliError::Usage(msg)) => {
            let _ = Cli::command().error(ErrorKind::MissingRequiredArgument, msg).print();
            2
        }
        Err(e) => {
            let mut err = BufWriter::new(io::stderr());
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
