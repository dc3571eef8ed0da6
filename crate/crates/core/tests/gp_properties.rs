use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spartan_bo::kernels::{gram_matrix, Family, Kernel, LengthScales, SpartanHyperparams, SpartanKernel};
use spartan_bo::surrogate::{Dataset, GpModel, MeanFunction};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn m52(d: usize, l: f64) -> Kernel {
    Kernel::Stationary { family: Family::Matern52, lengthscales: LengthScales::isotropic(d, l).unwrap() }
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen()).collect()).collect();
    let ys = pts.iter().map(|p| p.iter().map(|v| (5.0 * v).sin()).sum::<f64>() * 3.0 + 7.0).collect();
    Dataset::from_unit(pts, ys).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn interpolates_training_data(seed in any::<u64>(), n in 1usize..=40, d in 2usize..=5, l in 0.01..0.2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&mut rng, n, d);
        let model = GpModel::fit(data.clone(), m52(d, l), 1e-10, MeanFunction::Gls).unwrap();
        let scale2 = data.output_scale().powi(2);
        for (x, y) in data.points().iter().zip(data.raw_targets()) {
            let p = model.predict(x);
            prop_assert!((p.mean - y).abs() <= 1e-4, "{} vs {}", p.mean, y);
            prop_assert!(p.variance / scale2 <= 1e-10 + model.jitter() + 1e-6);
        }
    }

    #[test]
    fn variance_is_nonnegative(seed in any::<u64>(), n in 1usize..=30, l in 0.01..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&mut rng, n, 3);
        let hp = SpartanHyperparams::single_local(
            LengthScales::isotropic(3, l).unwrap(),
            LengthScales::isotropic(3, 0.01).unwrap(),
            vec![rng.gen(), rng.gen(), rng.gen()],
        ).unwrap();
        let kernel = Kernel::Spartan(SpartanKernel::new(Family::Matern52, Family::Matern52, hp).unwrap());
        let model = GpModel::fit(data, kernel, 1e-6, MeanFunction::Gls).unwrap();
        for _ in 0..250 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
            prop_assert!(model.predict(&q).variance >= 0.0);
        }
    }
}

#[test]
fn variance_nonnegative_on_ten_thousand_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = GpModel::fit(random_data(&mut rng, 25, 2), m52(2, 0.05), 1e-6, MeanFunction::Gls).unwrap();
    for _ in 0..10_000 {
        let q = [rng.gen(), rng.gen()];
        assert!(model.predict(&q).variance >= 0.0);
    }
}

#[test]
fn cholesky_recomposes_gram() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_data(&mut rng, 5, 3);
    let kernel = m52(3, 0.3);
    let model = GpModel::fit(data.clone(), kernel.clone(), 1e-6, MeanFunction::Gls).unwrap();
    let k = gram_matrix(data.points(), &kernel, 0.0).unwrap();
    let n = 5;
    let l = DMatrix::from_row_slice(n, n, model.cholesky());
    let llt = &l * l.transpose();
    let shift = model.nugget() + model.jitter();
    let kn = DMatrix::from_fn(n, n, |i, j| k[i][j] + if i == j { shift } else { 0.0 });
    let kf = DMatrix::from_fn(n, n, |i, j| k[i][j]).norm();
    assert!((llt - kn).norm() / kf <= 1e-10);
}

#[test]
fn single_point_fit() {
    let data = Dataset::from_unit_unscaled(vec![vec![0.5]], vec![3.0]).unwrap();
    let model = GpModel::fit(data, m52(1, 1.0), 0.0, MeanFunction::Gls).unwrap();
    assert_eq!(model.cholesky(), &[1.0]);
    assert_eq!(model.beta(), 3.0);
    assert_eq!(model.alpha(), &[0.0]);
}

#[test]
fn duplicate_without_nugget_is_an_error() {
    let data = Dataset::from_unit(vec![vec![0.3], vec![0.3]], vec![1.0, 2.0]).unwrap();
    assert!(GpModel::fit(data, m52(1, 0.5), 0.0, MeanFunction::Gls).is_err());
}

#[test]
fn two_point_hand_solve() {
    // 2x2 system solved independently: K = [[1, k(1)], [k(1), 1]], k* = [k(.5), k(.5)].
    let data = Dataset::from_unit_unscaled(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
    let model = GpModel::fit(data, m52(1, 1.0), 0.0, MeanFunction::Constant(0.0)).unwrap();
    let p = model.predict(&[0.5]);
    assert!((p.mean - 0.543_735_134_943_077_9).abs() < 1e-12);
    assert!((p.variance - 0.098_868_693_453_629_59).abs() < 1e-12);
}

#[test]
fn far_query_reverts_to_prior() {
    let data = Dataset::from_unit(vec![vec![0.0], vec![0.05]], vec![2.0, 6.0]).unwrap();
    let model = GpModel::fit(data.clone(), m52(1, 1e-4), 1e-6, MeanFunction::Gls).unwrap();
    let p = model.predict(&[1.0]);
    assert!((p.mean - model.beta()).abs() < 1e-9);
    assert!((p.variance - data.output_scale().powi(2)).abs() < 1e-9);
}

#[test]
fn likelihood_small_cases() {
    let one = Dataset::from_unit_unscaled(vec![vec![0.5]], vec![2.0]).unwrap();
    let m = GpModel::fit(one, m52(1, 1.0), 0.0, MeanFunction::Constant(2.0)).unwrap();
    assert!((m.log_marginal_likelihood() + 0.5 * LN_2PI).abs() < 1e-14);

    let two = Dataset::from_unit_unscaled(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
    let m = GpModel::fit(two, m52(1, 1e-4), 0.0, MeanFunction::Constant(0.0)).unwrap();
    assert!((m.log_marginal_likelihood() + LN_2PI).abs() < 1e-12);
}

#[test]
fn likelihood_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = random_data(&mut rng, 10, 2);
    let kernel = m52(2, 0.2);
    let model = GpModel::fit(data.clone(), kernel.clone(), 1e-6, MeanFunction::Gls).unwrap();
    let n = 10;
    let k = gram_matrix(data.points(), &kernel, 1e-6 + model.jitter()).unwrap();
    let k = DMatrix::from_fn(n, n, |i, j| k[i][j]);
    let kinv = k.clone().try_inverse().unwrap();
    let y = DVector::from_column_slice(data.targets());
    let one = DVector::from_element(n, 1.0);
    let beta = (one.transpose() * &kinv * &y)[0] / (one.transpose() * &kinv * &one)[0];
    let r = &y - &one * beta;
    let lml = -0.5 * (r.transpose() * &kinv * &r)[0] - 0.5 * k.determinant().ln() - 0.5 * n as f64 * LN_2PI;
    assert!((model.log_marginal_likelihood() - lml).abs() < 1e-8, "{} vs {lml}", model.log_marginal_likelihood());

    let worse = GpModel::fit(data, m52(2, 50.0), 1e-6, MeanFunction::Gls).unwrap();
    assert!(worse.log_marginal_likelihood() < model.log_marginal_likelihood());
}

#[test]
fn appends_match_batch_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let all = random_data(&mut rng, 25, 3);
    let kernel = m52(3, 0.2);
    let base = Dataset::from_unit(all.points()[..5].to_vec(), all.raw_targets()[..5].to_vec()).unwrap();
    let mut model = GpModel::fit(base, kernel.clone(), 1e-6, MeanFunction::Gls).unwrap();
    for i in 5..25 {
        model = model.append_observation(all.points()[i].clone(), all.raw_targets()[i]).unwrap();
    }
    let batch = GpModel::fit(Arc::new(all), kernel, 1e-6, MeanFunction::Gls).unwrap();
    assert_eq!(batch.jitter(), model.jitter());
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| rng.gen()).collect();
        let (a, b) = (model.predict(&q), batch.predict(&q));
        assert!((a.mean - b.mean).abs() <= 1e-8);
        assert!((a.variance - b.variance).abs() <= 1e-8);
    }
    assert!((model.log_marginal_likelihood() - batch.log_marginal_likelihood()).abs() < 1e-8);
}

#[test]
fn append_to_single_point_equals_two_point_fit() {
    let kernel = m52(1, 0.3);
    let one = Dataset::from_unit(vec![vec![0.2]], vec![1.0]).unwrap();
    let appended =
        GpModel::fit(one, kernel.clone(), 1e-6, MeanFunction::Gls).unwrap().append_observation(vec![0.7], 4.0).unwrap();
    let two = Dataset::from_unit(vec![vec![0.2], vec![0.7]], vec![1.0, 4.0]).unwrap();
    let batch = GpModel::fit(two, kernel, 1e-6, MeanFunction::Gls).unwrap();
    for q in [0.0, 0.2, 0.45, 1.0] {
        assert!((appended.predict(&[q]).mean - batch.predict(&[q]).mean).abs() < 1e-12);
    }
}

#[test]
fn duplicate_append_with_nugget_shrinks_variance() {
    let kernel = m52(1, 0.3);
    let data = Dataset::from_unit(vec![vec![0.2], vec![0.9]], vec![1.0, 4.0]).unwrap();
    let model = GpModel::fit(data, kernel, 1e-6, MeanFunction::Gls).unwrap();
    let after = model.append_observation(vec![0.2], 1.0).unwrap();
    let s0 = model.predict(&[0.2]).variance / model.dataset().output_scale().powi(2);
    let s1 = after.predict(&[0.2]).variance / after.dataset().output_scale().powi(2);
    assert!(s1 < s0, "{s1} vs {s0}");
}
