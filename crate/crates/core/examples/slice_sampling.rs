//! Slice-samples a bimodal 1-D density, then GP length-scales from data.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spartan_bo::inference::{sample_hyperparameters, slice_sample_step, HyperLayout, HyperPrior, McmcSettings};
use spartan_bo::kernels::KernelSpec;
use spartan_bo::surrogate::{Dataset, MeanFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let logp = |x: &[f64]| ((-0.5 * (x[0] + 2.0).powi(2)).exp() + (-0.5 * (x[0] - 2.0).powi(2)).exp()).ln();
    let mut x = vec![0.0];
    let mut right = 0;
    for _ in 0..5000 {
        x = slice_sample_step(logp, &x, &[1.0], &mut rng)?;
        right += usize::from(x[0] > 0.0);
    }
    println!("fraction of draws in the right mode: {:.3}", right as f64 / 5000.0);

    let points: Vec<Vec<f64>> = (0..15).map(|i| vec![i as f64 / 14.0, (i * 7 % 15) as f64 / 14.0]).collect();
    let ys = points.iter().map(|p| (8.0 * p[0]).sin() + 0.2 * p[1]).collect();
    let data = Arc::new(Dataset::from_unit(points, ys)?);
    let layout = HyperLayout::new(&KernelSpec::matern52(), &HyperPrior::default(), 2)?;
    let ensemble = sample_hyperparameters(&data, &layout, MeanFunction::Gls, &McmcSettings::default(), None, &mut rng)?;
    for u in ensemble.samples() {
        println!("length-scales {:.3} {:.3}", u[0].exp(), u[1].exp());
    }
    Ok(())
}
