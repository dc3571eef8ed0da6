//! Evaluates stationary, funnel and Hamming kernels on a few points.

use spartan_bo::kernels::{
    gram_matrix, hamming_eval, spartan_eval, spartan_weights, Family, Kernel, LengthScales, SpartanHyperparams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ls = LengthScales::new(vec![0.2, 0.5])?;
    let points = vec![vec![0.1, 0.1], vec![0.15, 0.1], vec![0.8, 0.9]];
    for family in [Family::Matern12, Family::Matern32, Family::Matern52, Family::SquaredExponential] {
        let k = Kernel::Stationary { family, lengthscales: ls.clone() };
        println!(
            "{family:?}: k(a,b) = {:.4}, k(a,c) = {:.4}",
            k.eval(&points[0], &points[1]),
            k.eval(&points[0], &points[2])
        );
    }

    // A sharp local kernel centered near the origin, a smooth global one elsewhere.
    let hp = SpartanHyperparams::single_local(
        LengthScales::isotropic(2, 0.5)?,
        LengthScales::isotropic(2, 0.01)?,
        vec![0.1, 0.1],
    )?;
    for p in &points {
        let w = spartan_weights(p, &hp)?;
        println!("weights at {p:?}: global {:.4}, local {:.4}", w.global, w.locals[0]);
    }
    println!("funnel k(a,b) = {:.4}", spartan_eval(&points[0], &points[1], &hp)?);

    let gram = gram_matrix(&points, &Kernel::Stationary { family: Family::Matern52, lengthscales: ls }, 1e-6)?;
    for row in &gram {
        println!("{}", row.iter().map(|v| format!("{v:8.4}")).collect::<String>());
    }

    println!("hamming k([0,2,1],[0,1,1]) = {:.4}", hamming_eval(&[0, 2, 1], &[0, 1, 1], 1.0)?);
    Ok(())
}
