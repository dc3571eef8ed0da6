//! Derivative-free local minimization on the unit hypercube.

/// Result of a [`nelder_mead`] run.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder–Mead on `[0, 1]^d`; every trial point is projected onto the box.
///
/// `step` is the initial simplex edge; the search stops after
/// `max_evaluations` function calls or when the simplex values agree to
/// within `1e-12`. The returned value is never worse than `f(x0)`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, max_evaluations: usize) -> Minimum {
    let d = x0.len();
    let clamp = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    clamp(&mut start);
    let f0 = eval(&start, &mut evals);
    let mut simplex = vec![(start.clone(), f0)];
    for j in 0..d {
        if evals >= max_evaluations {
            break;
        }
        let mut x = start.clone();
        x[j] = if x[j] + step <= 1.0 { x[j] + step } else { x[j] - step };
        clamp(&mut x);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    if simplex.len() < d + 1 || d == 0 {
        let (x, value) = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty simplex");
        return Minimum { x, value, evaluations: evals };
    }

    let point = |c: &[f64], toward: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(toward).map(|(&ci, &wi)| (ci + t * (wi - ci)).clamp(0.0, 1.0)).collect()
    };
    while evals < max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[d].1 - simplex[0].1).abs() <= 1e-12 * (1.0 + simplex[0].1.abs()) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let worst = simplex[d].0.clone();
        let fw = simplex[d].1;
        let reflected = point(&centroid, &worst, -1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < simplex[0].1 {
            if evals < max_evaluations {
                let expanded = point(&centroid, &worst, -2.0);
                let fe = eval(&expanded, &mut evals);
                simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            } else {
                simplex[d] = (reflected, fr);
            }
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
            continue;
        }
        if evals >= max_evaluations {
            break;
        }
        let (contracted, fc) = if fr < fw {
            let c = point(&centroid, &reflected, 0.5);
            let v = eval(&c, &mut evals);
            (c, v)
        } else {
            let c = point(&centroid, &worst, 0.5);
            let v = eval(&c, &mut evals);
            (c, v)
        };
        if fc < fw.min(fr) {
            simplex[d] = (contracted, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for entry in simplex.iter_mut().skip(1) {
            if evals >= max_evaluations {
                break;
            }
            let x = point(&best, &entry.0, 0.5);
            let v = eval(&x, &mut evals);
            *entry = (x, v);
        }
    }
    let (x, value) = simplex.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty simplex");
    Minimum { x, value, evaluations: evals }
}
