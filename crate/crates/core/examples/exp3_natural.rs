//! Train on everyone's protocol gestures plus other participants' naturaln//! ones, test on the held-out participant's natural gestures.
//!
//! Runs on a small synthetic store; pass a hidden grid such as `10..50`.

use std::error::Error;

use medsensor::experiments::{self, ExperimentConfig, ExperimentId, FoldResult, SweepSpec};
use medsensor::pipeline::{self, PrepareConfig};
use medsensor::synth::{self, StoreConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let grid = std::env::args().nth(1).unwrap_or_else(|| "10,30".into());
    let hidden_sizes = experiments::parse_hidden_grid(&grid)?;

    let store = tempfile::tempdir()?;
    let synth_config = StoreConfig {
        participants: 4,
        gestures_per_session: 5,
        ..StoreConfig::default()
    };
    synth::gen_store(store.path(), &synth_config, 7)?;
    let mut prepare_config = PrepareConfig::default();
    prepare_config.window.timesteps = Some(300);
    let dataset = pipeline::prepare(store.path(), &prepare_config, 7)?;
    println!("{} vectors of width {}", dataset.vectors.len(), dataset.spec.input_width());

    let config = ExperimentConfig {
        sweep: SweepSpec { hidden_sizes, repeats: None },
        ..ExperimentConfig::default()
    };
    let progress = |r: &FoldResult| {
        let fold = r.held_out.clone().unwrap_or_else(|| format!("split {}", r.fold));
        eprintln!("  {fold} hidden {}: test {:.3}", r.hidden_size, r.test_accuracy);
    };
    let report = experiments::run_experiment(ExperimentId::Exp3, &dataset.vectors, &config, 7, &progress)?;
    print!("{}", experiments::render_table(&report));
    Ok(())
}
