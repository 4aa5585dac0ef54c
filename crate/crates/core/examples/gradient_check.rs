//! Check backpropagation against central finite differences.

use std::error::Error;

use medsensor::mlp::{self, MlpArchitecture, MlpModel};
use rand::Rng;

fn batch_loss(model: &MlpModel, inputs: &[&[f64]], labels: &[f64]) -> Result<f64, mlp::MlpError> {
    let p = inputs.iter().map(|x| model.forward(x)).collect::<Result<Vec<_>, _>>()?;
    mlp::loss(&p, labels)
}

fn main() -> Result<(), Box<dyn Error>> {
    let arch = MlpArchitecture::new(6, 5)?;
    let mut model = MlpModel::init(arch, 9);
    let mut rng = medsensor::seed::rng(10);
    let inputs: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let labels: Vec<f64> = (0..8).map(|i| (i % 2) as f64).collect();
    let views: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();

    let analytic = mlp::gradient(&model, &views, &labels)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..arch.param_count() {
        let orig = model.params()[i];
        model.params_mut()[i] = orig + h;
        let up = batch_loss(&model, &views, &labels)?;
        model.params_mut()[i] = orig - h;
        let down = batch_loss(&model, &views, &labels)?;
        model.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.values()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
    }
    println!("{} parameters, worst relative error {worst:.2e}", arch.param_count());
    Ok(())
}
