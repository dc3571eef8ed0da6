//! Fits a GP to noisy-free samples of a 1-D function, then appends a point.

use spartan_bo::kernels::{Family, Kernel, LengthScales};
use spartan_bo::surrogate::{Dataset, GpModel, MeanFunction};

fn f(x: f64) -> f64 {
    (6.0 * x).sin() + 0.5 * x
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let xs: Vec<f64> = (0..8).map(|i| i as f64 / 7.0).collect();
    let data = Dataset::from_raw(
        vec![(0.0, 1.0)],
        &xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(),
        &xs.iter().map(|&x| f(x)).collect::<Vec<_>>(),
    )?;
    let kernel = Kernel::Stationary { family: Family::Matern52, lengthscales: LengthScales::new(vec![0.2])? };
    let gp = GpModel::fit(data, kernel, 1e-6, MeanFunction::Gls)?;
    println!("log marginal likelihood {:.4}, constant mean {:.4}", gp.log_marginal_likelihood(), gp.beta());

    let report = |gp: &GpModel| {
        for x in [0.05, 0.33, 0.6, 0.95] {
            let p = gp.predict(&[x]);
            println!("  x {x:.2}: mean {:+.4} (true {:+.4}) sd {:.4}", p.mean, f(x), p.std_dev());
        }
    };
    report(&gp);
    let gp = gp.append_observation(vec![0.33], f(0.33))?;
    println!("after observing x = 0.33:");
    report(&gp);
    Ok(())
}
