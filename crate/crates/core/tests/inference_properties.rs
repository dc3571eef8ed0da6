use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spartan_bo::benchmarks::{Benchmark, Problem};
use spartan_bo::driver::{run, Method, RunConfig};
use spartan_bo::inference::{sample_hyperparameters, slice_sample_step, HyperLayout, HyperPrior, McmcSettings};
use spartan_bo::kernels::{gram_matrix, Family, Kernel, KernelSpec, LengthScales};
use spartan_bo::surrogate::{to_unit, Dataset, LikelihoodEvaluator, MeanFunction};

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[test]
fn standard_normal_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let logp = |x: &[f64]| -0.5 * x[0] * x[0];
    let mut x = vec![0.0];
    let draws: Vec<f64> = (0..5000)
        .map(|_| {
            x = slice_sample_step(logp, &x, &[1.0], &mut rng).unwrap();
            x[0]
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / 5000.0;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4999.0;
    assert!(mean.abs() <= 0.1, "{mean}");
    assert!((0.9..=1.1).contains(&var), "{var}");
}

#[test]
fn toy_posterior_kolmogorov_smirnov() {
    // Skewed bimodal toy: a normal likelihood times a two-bump prior.
    let logp = |x: f64| {
        -0.5 * (x - 0.5).powi(2) / 0.8 + (0.3 * (-(x + 1.5).powi(2)).exp() + (-4.0 * (x - 1.0).powi(2)).exp()).ln()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut x = vec![0.5];
    let mut draws: Vec<f64> = (0..10_000)
        .map(|_| {
            x = slice_sample_step(|v: &[f64]| logp(v[0]), &x, &[1.0], &mut rng).unwrap();
            x[0]
        })
        .collect();
    draws.sort_by(f64::total_cmp);

    let (lo, hi, m) = (-8.0, 8.0, 200_000);
    let h = (hi - lo) / m as f64;
    let dens: Vec<f64> = (0..=m).map(|i| logp(lo + i as f64 * h).exp()).collect();
    let mut cdf = vec![0.0; m + 1];
    for i in 1..=m {
        cdf[i] = cdf[i - 1] + 0.5 * h * (dens[i - 1] + dens[i]);
    }
    let total = cdf[m];
    let grid_cdf = |v: f64| {
        let t = ((v - lo) / h).clamp(0.0, m as f64);
        let i = (t.floor() as usize).min(m - 1);
        (cdf[i] + (t - i as f64) * (cdf[i + 1] - cdf[i])) / total
    };
    let n = draws.len() as f64;
    let ks = draws
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = grid_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks <= 0.05, "KS statistic {ks}");
}

fn gp_sample(rng: &mut ChaCha8Rng, points: &[Vec<f64>], lengthscale: f64) -> Vec<f64> {
    let kernel =
        Kernel::Stationary { family: Family::Matern52, lengthscales: LengthScales::new(vec![lengthscale]).unwrap() };
    let k = gram_matrix(points, &kernel, 1e-8).unwrap();
    let n = points.len();
    let l = DMatrix::from_fn(n, n, |i, j| k[i][j]).cholesky().unwrap().unpack();
    let z = nalgebra::DVector::from_fn(n, |_, _| gaussian(rng));
    (l * z).iter().copied().collect()
}

/// Median of the length-scale posterior by quadrature over a log grid.
fn grid_posterior_median(data: &Dataset, layout: &HyperLayout) -> f64 {
    let mut eval = LikelihoodEvaluator::new(data);
    let grid: Vec<f64> = (0..=2000).map(|i| -9.0 + 11.0 * i as f64 / 2000.0).collect();
    let logp: Vec<f64> = grid
        .iter()
        .map(|&u| {
            let (k, nugget) = layout.bind(&[u], data.points()).unwrap();
            eval.log_marginal_likelihood(&k, nugget, MeanFunction::Gls).unwrap_or(f64::NEG_INFINITY)
                + layout.log_prior(&[u])
        })
        .collect();
    let max = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    for (u, wi) in grid.iter().zip(&w) {
        acc += wi;
        if acc >= 0.5 * total {
            return u.exp();
        }
    }
    unreachable!()
}

#[test]
fn recovers_known_lengthscale() {
    let layout = HyperLayout::new(&KernelSpec::matern52(), &HyperPrior::default(), 1).unwrap();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let points: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 + rng.gen::<f64>()) / 30.0]).collect();
        let ys = gp_sample(&mut rng, &points, 0.1);
        // The generating process has unit variance, so fit without rescaling.
        let data = Arc::new(Dataset::from_unit_unscaled(points, ys).unwrap());
        let e = sample_hyperparameters(&data, &layout, MeanFunction::Gls, &McmcSettings::default(), None, &mut rng)
            .unwrap();
        let mut ls: Vec<f64> = e.samples().iter().map(|u| u[0].exp()).collect();
        ls.sort_by(f64::total_cmp);
        let median = 0.5 * (ls[4] + ls[5]);
        let exact = grid_posterior_median(&data, &layout);
        assert!((0.03..=0.3).contains(&median), "seed {seed}: sampled median {median}, grid median {exact}");
        assert!((median / exact).ln().abs() < 0.5, "seed {seed}: sampled median {median}, grid median {exact}");
    }
}

fn exp2d_after_sbo() -> (Arc<Dataset>, Vec<f64>) {
    let problem = Problem::Continuous(Benchmark::Exp2d);
    let trace = run(&RunConfig::new(Method::Sbo, 40, 4), &problem).unwrap();
    let bounds = vec![(-2.0, 18.0); 2];
    let points: Vec<Vec<f64>> = trace.records.iter().map(|r| to_unit(&bounds, &r.x).unwrap()).collect();
    let ys: Vec<f64> = trace.records.iter().map(|r| r.y).collect();
    let target = to_unit(&bounds, &[-std::f64::consts::FRAC_1_SQRT_2, 0.0]).unwrap();
    (Arc::new(Dataset::from_unit(points, ys).unwrap()), target)
}

#[test]
fn funnel_center_profile_peaks_at_exp2d_basin() {
    // Profile posterior over the funnel center, maximizing over one length-scale per part.
    let (data, target) = exp2d_after_sbo();
    let layout = HyperLayout::new(&KernelSpec::spartan(), &HyperPrior::default(), 2).unwrap();
    let mut eval = LikelihoodEvaluator::new(&data);
    let grid: Vec<f64> = (0..14).map(|i| -8.0 + 0.75 * i as f64).collect();
    let mut best = (f64::NEG_INFINITY, [0.0; 2]);
    for jx in 0..=10 {
        for jy in 0..=10 {
            let center = [jx as f64 / 10.0, jy as f64 / 10.0];
            for &g in &grid {
                for &l in &grid {
                    let u = [g, g, l, l, center[0], center[1]];
                    let (k, nugget) = layout.bind(&u, data.points()).unwrap();
                    let lp = eval.log_marginal_likelihood(&k, nugget, MeanFunction::Gls).unwrap_or(f64::NEG_INFINITY)
                        + layout.log_prior(&u);
                    if lp > best.0 {
                        best = (lp, center);
                    }
                }
            }
        }
    }
    assert!(best.1.iter().zip(&target).all(|(a, b)| (a - b).abs() <= 0.25), "profile mode at {:?}", best.1);
}

// Fails: the posterior after 40 evaluations is multimodal. Chains from a cold start settle in a
// mode where the global part carries the short length-scale and the center drifts away from the
// basin. Even a chain started at the profile mode keeps the center's second coordinate inside the
// box only about a third of the time.
#[test]
#[ignore = "posterior is multimodal; center samples do not concentrate"]
fn funnel_center_concentrates_on_exp2d_basin() {
    let (data, target) = exp2d_after_sbo();
    let layout = HyperLayout::new(&KernelSpec::spartan(), &HyperPrior::default(), 2).unwrap();
    let settings = McmcSettings { samples: 50, ..McmcSettings::default() };
    let e =
        sample_hyperparameters(&data, &layout, MeanFunction::Gls, &settings, None, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
    let near = e.samples().iter().filter(|u| u[4..6].iter().zip(&target).all(|(a, b)| (a - b).abs() <= 0.25)).count();
    assert!(near as f64 >= 0.6 * e.len() as f64, "{near} of {} samples near the basin", e.len());
}

#[test]
fn sampling_is_deterministic_and_in_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.gen(), rng.gen()]).collect();
    let ys = points.iter().map(|p| (6.0 * p[0]).sin() + p[1]).collect();
    let data = Arc::new(Dataset::from_unit(points, ys).unwrap());
    let layout = HyperLayout::new(&KernelSpec::spartan(), &HyperPrior::default(), 2).unwrap();
    let settings = McmcSettings { burnin: 20, thinning: 3, ..McmcSettings::default() };
    let draw = |seed| {
        sample_hyperparameters(&data, &layout, MeanFunction::Gls, &settings, None, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    };
    let (a, b) = (draw(7), draw(7));
    let bits = |e: &spartan_bo::inference::PosteriorEnsemble| {
        e.samples().iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&draw(8)));
    for u in a.samples() {
        assert!(u[4..6].iter().all(|c| (0.0..=1.0).contains(c)));
        assert!(u[..4].iter().all(|v| v.exp() > 0.0));
    }
}
