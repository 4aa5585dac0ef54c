//! Generate a synthetic store and summarize its ground truth.
//!
//! cargo run --example synth_store -- [DIR]

use std::collections::BTreeMap;
use std::error::Error;
use std::path::PathBuf;

use medsensor::synth::{self, GroundTruth, StoreConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let tmp = tempfile::tempdir()?;
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().to_path_buf());

    let config = StoreConfig {
        participants: 3,
        gestures_per_session: 4,
        ..StoreConfig::default()
    };
    let truth = synth::gen_store(&root, &config, 7)?;

    let mut per_style: BTreeMap<&str, usize> = BTreeMap::new();
    for row in &truth.rows {
        *per_style.entry(row.style.as_str()).or_default() += 1;
    }
    println!("store at {}", root.display());
    for plan in config.plan(7).iter().take(4) {
        println!("  {}", plan.relative_path().display());
    }
    println!("  ...");
    println!("{} ground-truth rows in {}:", truth.rows.len(), GroundTruth::FILE_NAME);
    for (style, n) in per_style {
        println!("  {style:<15} {n}");
    }
    Ok(())
}
