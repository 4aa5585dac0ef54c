//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any failed.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use medsensor::annotate::{self, Label, Span};
use medsensor::experiments::{self, ExperimentConfig, ExperimentId, ExperimentReport, FoldResult, SweepSpec};
use medsensor::ingest::{self, GestureStyle};
use medsensor::metrics::{self, ConfusionCounts};
use medsensor::mlp::{self, MlpArchitecture, MlpModel, TrainConfig};
use medsensor::pipeline::{self, PrepareConfig, PreparedDataset};
use medsensor::synth::{self, StoreConfig};
use medsensor::window::FeatureVector;
use medsensor::{cli, seed};
use rand::seq::SliceRandom;
use rand::Rng;

const MASTER: u64 = 7;
const DESK_TIMESTEPS: usize = 500;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn silent(_: &FoldResult) {}

// Independent forward pass straight from the flat parameter layout.
fn oracle_probability(params: &[f64], inputs: usize, hidden: usize, x: &[f64]) -> f64 {
    let (w1, rest) = params.split_at(hidden * inputs);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(hidden);
    let mut z = b2[0];
    for j in 0..hidden {
        let mut a = b1[j];
        for i in 0..inputs {
            a += w1[j * inputs + i] * x[i];
        }
        z += w2[j] * a.max(0.0);
    }
    1.0 / (1.0 + (-z).exp())
}

fn oracle_loss(params: &[f64], inputs: usize, hidden: usize, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let p = oracle_probability(params, inputs, hidden, x);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / xs.len() as f64
}

fn gradient_oracle() -> Outcome {
    let (inputs, hidden, batch, h) = (12, 5, 8, 1e-5);
    let arch = MlpArchitecture::new(inputs, hidden).unwrap();
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..100 {
        let mut rng = seed::rng(1000 + s);
        let model = MlpModel::init(arch, s);
        let xs: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..inputs).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<f64> = (0..batch).map(|_| rng.random_range(0..2) as f64).collect();
        let views: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let analytic = mlp::gradient(&model, &views, &ys).unwrap();

        let mut params = model.params().to_vec();
        for i in 0..params.len() {
            let orig = params[i];
            params[i] = orig + h;
            let up = oracle_loss(&params, inputs, hidden, &xs, &ys);
            params[i] = orig - h;
            let down = oracle_loss(&params, inputs, hidden, &xs, &ys);
            params[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.values()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    let elapsed = started.elapsed();
    check(
        worst < 1e-5 && elapsed < Duration::from_secs(10),
        format!("max relative error {worst:.2e} over 100 seeds, {elapsed:.1?}"),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = seed::rng(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let pred: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let truth: Vec<u8> = (0..1000).map(|_| rng.random_range(0..2)).collect();
        let mut brute = [0u64; 4];
        for (&p, &t) in pred.iter().zip(&truth) {
            brute[(p as usize) * 2 + t as usize] += 1;
        }
        let c = metrics::confusion(&pred, &truth).unwrap();
        let expected = ConfusionCounts {
            tp: brute[3],
            tn: brute[0],
            fp: brute[2],
            fn_: brute[1],
        };
        let acc = (brute[3] + brute[0]) as f64 / 1000.0;
        if c != expected || metrics::accuracy(&c).unwrap() != acc {
            mismatches += 1;
        }
    }
    let perfect = (1..50).all(|n| {
        let c = ConfusionCounts { tp: n, tn: n, fp: 0, fn_: 0 };
        metrics::accuracy(&c).unwrap() == 1.0
    });
    check(
        mismatches == 0 && perfect,
        format!("{mismatches} mismatches in 1000 trials; TP=TN, FP=FN=0 gives 1.0: {perfect}"),
    )
}

fn fake_vectors(rng: &mut impl Rng) -> Vec<FeatureVector> {
    let participants = rng.random_range(2..8);
    let mut out = Vec::new();
    for p in 0..participants {
        for style in GestureStyle::ALL {
            for _ in 0..rng.random_range(1..6) {
                let label = if rng.random_bool(0.5) { Label::Medication } else { Label::NonMedication };
                out.push(FeatureVector {
                    values: vec![0.0; 3],
                    label,
                    participant_id: format!("p{:02}", p + 1),
                    session_id: "s01".into(),
                    style,
                });
            }
        }
    }
    out.shuffle(rng);
    out
}

fn split_and_fold_properties() -> Outcome {
    let mut failures = Vec::new();
    for s in 0..100u64 {
        let mut rng = seed::rng(300 + s);
        let n = rng.random_range(5..500);
        let (train, test) = experiments::split_random(n, 0.8, s).unwrap();
        let all: BTreeSet<usize> = train.iter().chain(&test).copied().collect();
        let disjoint = train.iter().collect::<BTreeSet<_>>().is_disjoint(&test.iter().collect());
        let sizes = train.len() == (0.8 * n as f64).round() as usize && test.len() == n - train.len();
        if !(disjoint && sizes && all.len() == n && all.iter().all(|&i| i < n)) {
            failures.push(format!("split seed {s}"));
        }

        let vectors = fake_vectors(&mut rng);
        for style in [None, Some(GestureStyle::Protocol), Some(GestureStyle::Natural)] {
            for fold in experiments::lopo_folds(&vectors, style).unwrap() {
                let held = fold.held_out.as_deref().unwrap();
                let leak = fold.train.iter().any(|&i| vectors[i].participant_id == held);
                let wrong = fold.test.iter().any(|&i| vectors[i].participant_id != held);
                let pool = vectors.iter().filter(|v| style.is_none_or(|st| v.style == st)).count();
                if leak || wrong || fold.train.len() + fold.test.len() != pool {
                    failures.push(format!("lopo seed {s} {held}"));
                }
            }
        }
        for fold in experiments::exp3_folds(&vectors).unwrap() {
            let held = fold.held_out.as_deref().unwrap();
            let leak = fold
                .train
                .iter()
                .any(|&i| vectors[i].participant_id == held && vectors[i].style == GestureStyle::Natural);
            let wrong = fold
                .test
                .iter()
                .any(|&i| vectors[i].participant_id != held || vectors[i].style != GestureStyle::Natural);
            if leak || wrong || fold.train.len() + fold.test.len() != vectors.len() {
                failures.push(format!("exp3 seed {s} {held}"));
            }
        }
    }
    check(
        failures.is_empty(),
        format!("100 seeded runs, {} violations {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()),
    )
}

fn ingestion_round_trip(root: &Path, config: &StoreConfig) -> Outcome {
    let started = Instant::now();
    synth::gen_store(root, config, MASTER).unwrap();
    let (index, warnings) = ingest::scan_store(root).unwrap();
    let mut mismatched = Vec::new();
    let plan = config.plan(MASTER);
    for p in &plan {
        let session = index
            .participant(&p.participant_id)
            .and_then(|r| r.sessions.iter().find(|s| s.session_id == p.session_id));
        let Some(session) = session else {
            mismatched.push(format!("{}/{} missing", p.participant_id, p.session_id));
            continue;
        };
        let generated = config.generate(MASTER, p).unwrap();
        let (series, marks) = ingest::load_session_file(&session.path, &p.participant_id, &p.session_id).unwrap();
        if series.samples != generated.samples || marks != generated.marks || session.style != p.style {
            mismatched.push(format!("{}/{}", p.participant_id, p.session_id));
        }
    }
    let elapsed = started.elapsed();
    check(
        mismatched.is_empty() && warnings.is_empty() && index.session_count() == plan.len() && elapsed < Duration::from_secs(30),
        format!(
            "{} participants, {} sessions, {} mismatched, {} scan warnings, {elapsed:.1?}",
            index.participants.len(),
            index.session_count(),
            mismatched.len(),
            warnings.len()
        ),
    )
}

fn refinement_efficacy(root: &Path, config: &StoreConfig) -> Outcome {
    let params = annotate::RefineParams::default();
    let (mut good, mut total) = (0usize, 0usize);
    let mut worst: f64 = 1.0;
    for p in config.plan(MASTER) {
        let generated = config.generate(MASTER, &p).unwrap();
        let path = root.join(p.relative_path());
        let (series, marks) = ingest::load_session_file(&path, &p.participant_id, &p.session_id).unwrap();
        let found = annotate::extract_positives(&series, p.style, &marks, &params).unwrap();
        let refined: Vec<Span> = found.segments.iter().map(|s| s.span).collect();
        for truth in generated.truth.iter().filter(|t| t.style.label() == Label::Medication) {
            let best = refined.iter().map(|r| r.jaccard(&truth.span)).fold(0.0, f64::max);
            worst = worst.min(best);
            total += 1;
            good += usize::from(best >= 0.7);
        }
    }
    let share = good as f64 / total as f64;
    check(
        share >= 0.9,
        format!("{good}/{total} gestures ({:.1}%) reach Jaccard >= 0.7, worst {worst:.3}", share * 100.0),
    )
}

fn desk_config(hidden_sizes: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        sweep: SweepSpec { hidden_sizes, repeats: None },
        train: TrainConfig::default(),
        ..ExperimentConfig::default()
    }
}

fn prepare_desk(root: &Path) -> PreparedDataset {
    let mut config = PrepareConfig::default();
    config.window.timesteps = Some(DESK_TIMESTEPS);
    pipeline::prepare(root, &config, MASTER).unwrap()
}

struct DeskRun {
    reports: Vec<(ExperimentReport, Duration)>,
}

fn run_desk(vectors: &[FeatureVector]) -> DeskRun {
    let grid: Vec<usize> = (10..=100).step_by(10).collect();
    let runs = [
        (ExperimentId::Exp1, vec![30]),
        (ExperimentId::Exp2, grid.clone()),
        (ExperimentId::Exp3, grid),
    ];
    let reports = runs
        .into_iter()
        .map(|(exp, hidden)| {
            let started = Instant::now();
            let report = experiments::run_experiment(exp, vectors, &desk_config(hidden), MASTER, &silent).unwrap();
            (report, started.elapsed())
        })
        .collect();
    DeskRun { reports }
}

fn exp1_desk(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    let train = report.footer_train.map_or(f64::NAN, |e| e.mean);
    let test = report.footer_test.map_or(f64::NAN, |e| e.mean);
    check(
        test >= 0.95 && train >= 0.97 && report.failed_cells() == 0 && elapsed < Duration::from_secs(300),
        format!(
            "H=30 over {} splits: train {:.2}%, test {:.2}%, {elapsed:.1?}",
            report.rows.len(),
            train * 100.0,
            test * 100.0
        ),
    )
}

fn exp2_desk(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    let best = report
        .architectures
        .iter()
        .map(|a| (a.hidden_size, a.test.mean))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let table = experiments::render_table(report);
    let shapes = report.rows.len() == 120
        && report.participants.len() == 12
        && report.architectures.len() == 10
        && table.contains("Max")
        && table.contains("Min")
        && table.contains("Average");
    check(
        best.1 >= 0.90 && shapes && report.failed_cells() == 0 && elapsed < Duration::from_secs(45 * 60),
        format!(
            "best H={} at {:.2}% test; {} detail, {} participant, {} architecture rows; {elapsed:.1?}",
            best.0,
            best.1 * 100.0,
            report.rows.len(),
            report.participants.len(),
            report.architectures.len()
        ),
    )
}

fn exp3_desk(report: &ExperimentReport, vectors: &[FeatureVector], elapsed: Duration) -> Outcome {
    let test = report.footer_test.map_or(f64::NAN, |e| e.mean);
    let table = experiments::render_table(report);
    let columns = ["Train high", "Train low", "Test high", "Test low", "Test avg", "Train size", "Test size"];
    let sizes_ok = report.participants.iter().all(|p| {
        let natural = |v: &&FeatureVector| v.style == GestureStyle::Natural;
        let test_n = vectors.iter().filter(natural).filter(|v| v.participant_id == p.participant).count();
        p.test_size == test_n && p.train_size == vectors.len() - test_n
    });
    check(
        test >= 0.85 && columns.iter().all(|c| table.contains(c)) && sizes_ok && report.participants.len() == 12,
        format!(
            "average test {:.2}% over {} models, sizes match composition: {sizes_ok}; {elapsed:.1?}",
            test * 100.0,
            report.models_examined()
        ),
    )
}

fn report_files(dir: &Path, run: &DeskRun) -> Vec<(String, Vec<u8>)> {
    for (report, _) in &run.reports {
        cli::write_report(dir, report).unwrap();
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(first: &DeskRun, scratch: &Path) -> Outcome {
    let store = scratch.join("store-again");
    synth::gen_store(&store, &StoreConfig::default(), MASTER).unwrap();
    let dataset = prepare_desk(&store);
    let second = run_desk(&dataset.vectors);
    let a = report_files(&scratch.join("reports-a"), first);
    let b = report_files(&scratch.join("reports-b"), &second);
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.len() == 9 && a.len() == b.len() && differing.is_empty(),
        format!("{} report files compared byte for byte, differing: {differing:?}", a.len()),
    )
}

fn sweep_count_identity(scratch: &Path) -> Outcome {
    let root = scratch.join("store-31");
    let config = StoreConfig {
        participants: 31,
        sessions_per_style: 1,
        gestures_per_session: 2,
        styles: vec![GestureStyle::Protocol],
        ..StoreConfig::default()
    };
    synth::gen_store(&root, &config, MASTER).unwrap();
    let mut prepare = PrepareConfig::default();
    prepare.window.timesteps = Some(50);
    let dataset = pipeline::prepare(&root, &prepare, MASTER).unwrap();
    let mut exp = desk_config((10..=100).step_by(10).collect());
    exp.train.epochs = 1;
    let report = experiments::run_experiment(ExperimentId::Exp2, &dataset.vectors, &exp, MASTER, &silent).unwrap();
    check(
        report.models_examined() == 310 && report.rows.len() == 310 && report.participants.len() == 31,
        format!("{} models examined across {} participants", report.models_examined(), report.participants.len()),
    )
}

fn main() {
    let scratch = tempfile::tempdir().unwrap();
    let store = scratch.path().join("store");
    let config = StoreConfig::default();

    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "gradient oracle", gradient_oracle()),
        (2, "metric oracle", metric_oracle()),
        (3, "split and fold properties", split_and_fold_properties()),
        (4, "ingestion round trip", ingestion_round_trip(&store, &config)),
        (5, "refinement efficacy", refinement_efficacy(&store, &config)),
    ];
    let dataset = prepare_desk(&store);
    let desk = run_desk(&dataset.vectors);
    let [(r1, t1), (r2, t2), (r3, t3)] = &desk.reports[..] else {
        unreachable!()
    };
    results.push((6, "desk-scale exp1", exp1_desk(r1, *t1)));
    results.push((7, "desk-scale exp2", exp2_desk(r2, *t2)));
    results.push((8, "desk-scale exp3", exp3_desk(r3, &dataset.vectors, *t3)));
    results.push((9, "determinism", determinism(&desk, scratch.path())));
    results.push((10, "sweep count identity", sweep_count_identity(scratch.path())));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        let status = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("{status} criterion {n:>2} {name}: {}", outcome.detail);
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
