//! Expected improvement over a posterior ensemble and its maximizer.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spartan_bo::acquisition::{ei_component, expected_improvement, maximize_acquisition, AcquisitionBudget, Incumbent};
use spartan_bo::inference::{sample_hyperparameters, HyperLayout, HyperPrior, McmcSettings};
use spartan_bo::kernels::KernelSpec;
use spartan_bo::surrogate::{Dataset, MeanFunction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("EI of N(0, 1) below 0: {:.5}", ei_component(0.0, 1.0, 0.0));

    let xs = [0.05f64, 0.2, 0.45, 0.7, 0.9];
    let ys: Vec<f64> = xs.iter().map(|x| (10.0 * x).cos() + x).collect();
    let data = Arc::new(Dataset::from_unit(xs.iter().map(|&x| vec![x]).collect(), ys.clone())?);
    let layout = HyperLayout::new(&KernelSpec::spartan(), &HyperPrior::default(), 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ensemble = sample_hyperparameters(&data, &layout, MeanFunction::Gls, &McmcSettings::default(), None, &mut rng)?;
    let incumbent = Incumbent::from_observations(&ys)?;

    for x in [0.1, 0.3, 0.5, 0.8] {
        println!("EI({x:.1}) = {:.5}", expected_improvement(&ensemble, &[x], incumbent));
    }
    let best = maximize_acquisition(&ensemble, incumbent, &AcquisitionBudget::for_dim(1, 0))?;
    println!(
        "argmax {:.4}, EI {:.5} (best candidate before refinement {:.5})",
        best.x[0], best.value, best.candidate_max
    );
    Ok(())
}
