//! Expected improvement over a hyperparameter ensemble and its maximization.
//!
//! The ensemble EI is the plain sum of the per-sample EI values (not their
//! mean); the argmax is the same either way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Sobol;
use crate::error::{Error, Result};
use crate::inference::PosteriorEnsemble;
use crate::optim::nelder_mead;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Best observed outcome, the improvement threshold ρ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub rho: f64,
}

impl Incumbent {
    /// Minimum of the observed outcomes.
    pub fn from_observations(ys: &[f64]) -> Result<Self> {
        ys.iter()
            .copied()
            .min_by(f64::total_cmp)
            .map(|rho| Self { rho })
            .ok_or_else(|| Error::InvalidParameter("incumbent needs at least one observation".into()))
    }
}

/// Evaluation counts for [`maximize_acquisition`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionBudget {
    /// Size of the shifted Sobol candidate set.
    pub global_evaluations: usize,
    /// Nelder–Mead evaluations per refined candidate.
    pub local_refinement_evaluations: usize,
    /// Number of top candidates refined.
    pub refined_candidates: usize,
    /// Seed of the random shift applied to the candidate set.
    pub seed: u64,
}

impl AcquisitionBudget {
    /// 1000·d candidates, top 5 refined with 200 evaluations each.
    pub fn for_dim(dim: usize, seed: u64) -> Self {
        Self { global_evaluations: 1000 * dim.max(1), local_refinement_evaluations: 200, refined_candidates: 5, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.global_evaluations == 0 || self.local_refinement_evaluations == 0 || self.refined_candidates == 0 {
            return Err(Error::InvalidParameter("acquisition budget counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `E[max(0, ρ − Y)]` for `Y ~ N(μ, σ²)`; tends to `max(0, ρ − μ)` as `σ → 0`.
pub fn ei_component(mean: f64, std_dev: f64, rho: f64) -> f64 {
    let gap = rho - mean;
    if !(std_dev > 0.0) || !std_dev.is_finite() {
        return gap.max(0.0);
    }
    let z = gap / std_dev;
    (gap * normal_cdf(z) + std_dev * normal_pdf(z)).max(0.0)
}

/// Sum over the ensemble members of their expected improvement at the unit
/// point `x`.
pub fn expected_improvement(ensemble: &PosteriorEnsemble, x: &[f64], incumbent: Incumbent) -> f64 {
    ensemble
        .models()
        .iter()
        .map(|m| {
            let p = m.predict(x);
            ei_component(p.mean, p.std_dev(), incumbent.rho)
        })
        .sum()
}

/// Maximizer of the acquisition with its value.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value over the global candidate set.
    pub candidate_max: f64,
}

/// Randomly shifted Sobol candidates (Cranley–Patterson rotation) in `[0, 1)^d`.
pub fn candidate_set(dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen()).collect();
    let mut sobol = Sobol::new(dim)?;
    Ok((0..count)
        .map(|_| {
            let mut p = sobol.next_point();
            for (v, s) in p.iter_mut().zip(&shift) {
                *v = (*v + s).fract();
            }
            p
        })
        .collect())
}

/// Maximizes any acquisition `f` over `[0, 1]^dim`: scores the candidate set,
/// refines the best few with bounded Nelder–Mead and returns the overall
/// best. Ties go to the lowest candidate index.
pub fn maximize<F>(f: F, dim: usize, budget: &AcquisitionBudget) -> Result<Proposal>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    budget.validate()?;
    let candidates = candidate_set(dim, budget.global_evaluations, budget.seed)?;
    let scores: Vec<f64> = candidates.par_iter().map(|c| finite_or_zero(f(c))).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let candidate_max = scores[order[0]];

    let refined: Vec<(Vec<f64>, f64)> = order
        .iter()
        .take(budget.refined_candidates)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            let m = nelder_mead(|x| -finite_or_zero(f(x)), &candidates[i], 0.05, budget.local_refinement_evaluations);
            if -m.value > scores[i] {
                (m.x, -m.value)
            } else {
                (candidates[i].clone(), scores[i])
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in refined.iter().enumerate() {
        if r.1 > refined[best].1 {
            best = i;
        }
    }
    let (x, value) = refined.into_iter().nth(best).expect("at least one refined candidate");
    Ok(Proposal { x, value, candidate_max })
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Global maximization of the ensemble EI over the unit hypercube.
pub fn maximize_acquisition(
    ensemble: &PosteriorEnsemble,
    incumbent: Incumbent,
    budget: &AcquisitionBudget,
) -> Result<Proposal> {
    let dim = ensemble.models().first().map(|m| m.dataset().dim()).unwrap_or(0);
    maximize(|x| expected_improvement(ensemble, x, incumbent), dim, budget)
}
