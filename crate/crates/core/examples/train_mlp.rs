//! Train a small network on two Gaussian blobs, then save and reload it.

use std::error::Error;

use medsensor::mlp::{self, MlpArchitecture, MlpModel, Optimizer, TrainConfig};
use medsensor::seed;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn Error>> {
    let mut rng = seed::rng(1);
    let noise = Normal::new(0.0, 0.6)?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let y = (i % 2) as f64;
        let centre = if y == 1.0 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..4).map(|_| centre + noise.sample(&mut rng)).collect();
        inputs.push(x);
        labels.push(y);
    }
    let views: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();

    let arch = MlpArchitecture::new(4, 8)?;
    let config = TrainConfig {
        learning_rate: 0.01,
        batch_size: 16,
        epochs: 30,
        optimizer: Optimizer::Adam,
        seed: 2,
        ..TrainConfig::default()
    };
    let outcome = mlp::train(MlpModel::init(arch, 3), &views, &labels, &config)?;
    for h in outcome.history.iter().step_by(5) {
        println!("epoch {:>2}  loss {:.4}  acc {:.3}", h.epoch, h.loss, h.train_accuracy);
    }

    let mut file = Vec::new();
    outcome.model.save(&mut file)?;
    let loaded = MlpModel::load(&mut file.as_slice())?;
    let (loss, acc) = mlp::evaluate(&loaded, &views, &labels)?;
    println!("{arch} model, {} bytes on disk; reloaded loss {loss:.4} accuracy {acc:.3}", file.len());
    Ok(())
}
