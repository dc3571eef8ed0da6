//! Posterior sampling of kernel hyperparameters by coordinate-wise slice
//! sampling.
//!
//! Positive parameters (length-scales, variances, the Hamming θ) are sampled
//! in log space; the funnel center is sampled directly in `[0, 1]^d` under a
//! uniform prior. Parameters whose prior is a point mass are bound to their
//! value and never enter the sampled vector.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    HammingKernel, Kernel, KernelSpec, LengthScales, LocalVarianceMode, SpartanHyperparams, SpartanKernel,
};
use crate::surrogate::{Dataset, GpModel, LikelihoodEvaluator, MeanFunction, DEFAULT_NUGGET};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Prior over one positive scalar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarPrior {
    /// Point mass; the parameter is not sampled.
    Fixed { value: f64 },
    /// `ln v ~ N(ln_mean, ln_std²)`.
    LogNormal { ln_mean: f64, ln_std: f64 },
}

impl ScalarPrior {
    pub fn fixed(value: f64) -> Self {
        ScalarPrior::Fixed { value }
    }

    pub fn log_normal(median: f64, ln_std: f64) -> Self {
        ScalarPrior::LogNormal { ln_mean: median.ln(), ln_std }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            ScalarPrior::Fixed { value } => value.is_finite() && value >= 0.0,
            ScalarPrior::LogNormal { ln_mean, ln_std } => ln_mean.is_finite() && ln_std.is_finite() && ln_std > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid prior for {what}: {self:?}")))
        }
    }
}

/// Prior over a point of the unit hypercube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointPrior {
    /// Every coordinate fixed to the same value.
    Fixed { value: f64 },
    /// Fixed to an explicit point.
    At { point: Vec<f64> },
    /// Uniform on `[0, 1]^d`.
    Uniform,
}

/// Priors for every kernel hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperPrior {
    pub lengthscale: ScalarPrior,
    pub hamming_theta: ScalarPrior,
    /// θ^p, the shared center of the local kernels.
    pub funnel_center: PointPrior,
    /// ψ, the center of the global weight.
    pub global_center: PointPrior,
    pub global_variance: ScalarPrior,
    /// One entry per local kernel.
    pub local_variances: Vec<ScalarPrior>,
    pub noise: ScalarPrior,
}

impl Default for HyperPrior {
    fn default() -> Self {
        Self {
            lengthscale: ScalarPrior::log_normal(0.3, 1.0),
            hamming_theta: ScalarPrior::log_normal(1.0, 1.0),
            funnel_center: PointPrior::Uniform,
            global_center: PointPrior::Fixed { value: 0.5 },
            global_variance: ScalarPrior::fixed(10.0),
            local_variances: vec![ScalarPrior::fixed(0.05)],
            noise: ScalarPrior::fixed(DEFAULT_NUGGET),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Slot {
    Lengthscale { block: usize, dim: usize },
    FunnelCenter(usize),
    GlobalCenter(usize),
    HammingTheta,
    GlobalVariance,
    LocalVariance(usize),
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum SlotPrior {
    /// Normal density on the log-transformed value.
    LogNormal {
        ln_mean: f64,
        ln_std: f64,
    },
    UnitUniform,
}

impl SlotPrior {
    fn log_density(&self, u: f64) -> f64 {
        match *self {
            SlotPrior::LogNormal { ln_mean, ln_std } => {
                let z = (u - ln_mean) / ln_std;
                -0.5 * z * z - ln_std.ln() - 0.5 * LN_2PI
            }
            SlotPrior::UnitUniform => {
                if (0.0..=1.0).contains(&u) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn center(&self) -> f64 {
        match *self {
            SlotPrior::LogNormal { ln_mean, .. } => ln_mean,
            SlotPrior::UnitUniform => 0.5,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SlotPrior::LogNormal { ln_mean, ln_std } => {
                // Box–Muller; only used for restarts, so one draw is enough.
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                ln_mean + ln_std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            }
            SlotPrior::UnitUniform => rng.gen(),
        }
    }
}

/// Mapping between the flat sampled vector and a bound kernel.
#[derive(Clone, Debug)]
pub struct HyperLayout {
    spec: KernelSpec,
    dim: usize,
    slots: Vec<(Slot, SlotPrior)>,
    prior: HyperPrior,
}

fn scalar_slot(slots: &mut Vec<(Slot, SlotPrior)>, slot: Slot, prior: &ScalarPrior) {
    if let ScalarPrior::LogNormal { ln_mean, ln_std } = *prior {
        slots.push((slot, SlotPrior::LogNormal { ln_mean, ln_std }));
    }
}

fn point_slots(slots: &mut Vec<(Slot, SlotPrior)>, dim: usize, prior: &PointPrior, f: fn(usize) -> Slot) {
    if let PointPrior::Uniform = prior {
        slots.extend((0..dim).map(|j| (f(j), SlotPrior::UnitUniform)));
    }
}

impl HyperLayout {
    pub fn new(spec: &KernelSpec, prior: &HyperPrior, dim: usize) -> Result<Self> {
        spec.validate()?;
        prior.lengthscale.validate("length-scale")?;
        prior.hamming_theta.validate("Hamming theta")?;
        prior.global_variance.validate("global variance")?;
        prior.noise.validate("noise")?;
        for v in &prior.local_variances {
            v.validate("local variance")?;
        }
        for p in [&prior.funnel_center, &prior.global_center] {
            match p {
                PointPrior::At { point } if point.len() != dim => {
                    return Err(Error::DimensionMismatch { expected: dim, got: point.len() })
                }
                PointPrior::Fixed { value } if !(0.0..=1.0).contains(value) => {
                    return Err(Error::InvalidParameter(format!("fixed center {value} outside [0, 1]")))
                }
                _ => {}
            }
        }
        let mut slots = Vec::new();
        match spec {
            KernelSpec::Stationary { .. } => {
                for j in 0..dim {
                    scalar_slot(&mut slots, Slot::Lengthscale { block: 0, dim: j }, &prior.lengthscale);
                }
            }
            KernelSpec::Spartan { locals, .. } => {
                if prior.local_variances.len() != *locals {
                    return Err(Error::DimensionMismatch { expected: *locals, got: prior.local_variances.len() });
                }
                for block in 0..=*locals {
                    for j in 0..dim {
                        scalar_slot(&mut slots, Slot::Lengthscale { block, dim: j }, &prior.lengthscale);
                    }
                }
                point_slots(&mut slots, dim, &prior.funnel_center, Slot::FunnelCenter);
                point_slots(&mut slots, dim, &prior.global_center, Slot::GlobalCenter);
                scalar_slot(&mut slots, Slot::GlobalVariance, &prior.global_variance);
                for (m, v) in prior.local_variances.iter().enumerate() {
                    scalar_slot(&mut slots, Slot::LocalVariance(m), v);
                }
            }
            KernelSpec::Hamming { cardinalities } => {
                if cardinalities.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: cardinalities.len() });
                }
                scalar_slot(&mut slots, Slot::HammingTheta, &prior.hamming_theta);
            }
        }
        scalar_slot(&mut slots, Slot::Noise, &prior.noise);
        Ok(Self { spec: spec.clone(), dim, slots, prior: prior.clone() })
    }

    /// Length of the sampled vector.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// Prior medians (log-normal) and centers (uniform).
    pub fn initial_point(&self) -> Vec<f64> {
        self.slots.iter().map(|(_, p)| p.center()).collect()
    }

    /// [`initial_point`](Self::initial_point) with sampled funnel-center
    /// coordinates moved to `center`.
    pub fn initial_point_at(&self, center: &[f64]) -> Vec<f64> {
        self.slots
            .iter()
            .map(|(slot, p)| match slot {
                Slot::FunnelCenter(j) => center.get(*j).copied().unwrap_or_else(|| p.center()),
                _ => p.center(),
            })
            .collect()
    }

    pub fn log_prior(&self, u: &[f64]) -> f64 {
        self.slots.iter().zip(u).map(|((_, p), &v)| p.log_density(v)).sum()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.slots.iter().map(|(_, p)| p.draw(rng)).collect()
    }

    /// Binds a sampled vector to a concrete kernel and nugget.
    pub fn bind(&self, u: &[f64], points: &[Vec<f64>]) -> Result<(Kernel, f64)> {
        if u.len() != self.slots.len() {
            return Err(Error::DimensionMismatch { expected: self.slots.len(), got: u.len() });
        }
        let fixed = |p: &ScalarPrior| match *p {
            ScalarPrior::Fixed { value } => value,
            ScalarPrior::LogNormal { ln_mean, .. } => ln_mean.exp(),
        };
        let point = |p: &PointPrior| match p {
            PointPrior::Fixed { value } => vec![*value; self.dim],
            PointPrior::At { point } => point.clone(),
            PointPrior::Uniform => vec![0.5; self.dim],
        };
        let blocks = match &self.spec {
            KernelSpec::Spartan { locals, .. } => 1 + locals,
            _ => 1,
        };
        let mut ls = vec![vec![fixed(&self.prior.lengthscale); self.dim]; blocks];
        let mut funnel = point(&self.prior.funnel_center);
        let mut psi = point(&self.prior.global_center);
        let mut theta = fixed(&self.prior.hamming_theta);
        let mut global_variance = fixed(&self.prior.global_variance);
        let mut local_variances: Vec<f64> = self.prior.local_variances.iter().map(fixed).collect();
        let mut noise = fixed(&self.prior.noise);
        for ((slot, _), &v) in self.slots.iter().zip(u) {
            match *slot {
                Slot::Lengthscale { block, dim } => ls[block][dim] = v.exp(),
                Slot::FunnelCenter(j) => funnel[j] = v,
                Slot::GlobalCenter(j) => psi[j] = v,
                Slot::HammingTheta => theta = v.exp(),
                Slot::GlobalVariance => global_variance = v.exp(),
                Slot::LocalVariance(m) => local_variances[m] = v.exp(),
                Slot::Noise => noise = v.exp(),
            }
        }
        let kernel = match &self.spec {
            KernelSpec::Stationary { family } => {
                Kernel::Stationary { family: *family, lengthscales: LengthScales::new(ls.swap_remove(0))? }
            }
            KernelSpec::Spartan { global, local, local_variance_mode, .. } => {
                if let LocalVarianceMode::Adaptive { .. } = local_variance_mode {
                    for v in &mut local_variances {
                        *v = local_variance_mode.effective(*v, &funnel, points);
                    }
                }
                let mut blocks = ls.into_iter();
                let g = LengthScales::new(blocks.next().expect("global block"))?;
                let locals = blocks.map(LengthScales::new).collect::<Result<Vec<_>>>()?;
                let hp = SpartanHyperparams::new(g, locals, funnel, psi, global_variance, local_variances)?;
                Kernel::Spartan(SpartanKernel::new(*global, *local, hp)?)
            }
            KernelSpec::Hamming { cardinalities } => {
                if !(theta.is_finite() && theta > 0.0) {
                    return Err(Error::InvalidParameter(format!("Hamming theta {theta}")));
                }
                Kernel::Hamming(HammingKernel { theta, cardinalities: cardinalities.clone() })
            }
        };
        Ok((kernel, noise))
    }
}

/// Coordinate-wise univariate slice sampler. The bracket is expanded by
/// doubling and sampled by shrinkage, with the acceptance check that keeps
/// doubling reversible.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceSampler {
    /// Initial bracket width per coordinate (a single entry is broadcast).
    pub widths: Vec<f64>,
    /// Maximum number of bracket doublings.
    pub max_doublings: usize,
    /// Maximum number of shrinkage proposals before giving up.
    pub max_shrinks: usize,
}

impl Default for SliceSampler {
    fn default() -> Self {
        Self { widths: vec![1.0], max_doublings: 32, max_shrinks: 100 }
    }
}

/// Outcome of one coordinate sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub point: Vec<f64>,
    pub log_density: f64,
    /// Coordinates left unchanged because a cap was hit.
    pub rejected: usize,
}

impl SliceSampler {
    fn width(&self, k: usize) -> f64 {
        match self.widths.len() {
            0 => 1.0,
            1 => self.widths[0],
            _ => self.widths[k],
        }
    }

    /// One sweep over all coordinates starting from `x0` whose log density is `logp0`.
    pub fn sweep<F, R>(&self, logdensity: &mut F, x0: &[f64], logp0: f64, rng: &mut R) -> Sweep
    where
        F: FnMut(&[f64]) -> f64,
        R: Rng + ?Sized,
    {
        let mut x = x0.to_vec();
        let mut logp = logp0;
        let mut rejected = 0;
        for k in 0..x.len() {
            let w = self.width(k);
            let x_k = x[k];
            let level = logp + (1.0 - rng.gen::<f64>()).ln();
            let mut at = |v: f64| {
                let old = x[k];
                x[k] = v;
                let lp = logdensity(&x);
                x[k] = old;
                lp
            };

            let mut left = x_k - w * rng.gen::<f64>();
            let mut right = left + w;
            let mut f_left = at(left);
            let mut f_right = at(right);
            let mut doublings = 0;
            while f_left > level || f_right > level {
                if doublings == self.max_doublings {
                    break;
                }
                doublings += 1;
                if rng.gen::<f64>() < 0.5 {
                    left -= right - left;
                    f_left = at(left);
                } else {
                    right += right - left;
                    f_right = at(right);
                }
            }
            if f_left > level || f_right > level {
                rejected += 1;
                continue;
            }

            let (mut lo, mut hi) = (left, right);
            let mut accepted = None;
            for _ in 0..self.max_shrinks {
                let proposal = lo + rng.gen::<f64>() * (hi - lo);
                let lp = at(proposal);
                if lp > level && doubling_accepts(&mut at, x_k, proposal, left, right, w, level) {
                    accepted = Some((proposal, lp));
                    break;
                }
                if proposal < x_k {
                    lo = proposal;
                } else {
                    hi = proposal;
                }
            }
            match accepted {
                Some((v, lp)) => {
                    x[k] = v;
                    logp = lp;
                }
                None => rejected += 1,
            }
        }
        Sweep { point: x, log_density: logp, rejected }
    }
}

/// Checks that the doubling procedure started from `proposal` could have
/// produced the bracket `[left, right]`.
fn doubling_accepts<F: FnMut(f64) -> f64>(
    at: &mut F,
    x0: f64,
    proposal: f64,
    mut left: f64,
    mut right: f64,
    w: f64,
    level: f64,
) -> bool {
    let mut differ = false;
    let mut f_left = None;
    let mut f_right = None;
    while right - left > 1.1 * w {
        let mid = 0.5 * (left + right);
        if (x0 < mid) != (proposal < mid) {
            differ = true;
        }
        if proposal < mid {
            right = mid;
            f_right = None;
        } else {
            left = mid;
            f_left = None;
        }
        if differ {
            let fl = *f_left.get_or_insert_with(|| at(left));
            let fr = *f_right.get_or_insert_with(|| at(right));
            if !(fl > level) && !(fr > level) {
                return false;
            }
        }
    }
    true
}

/// One coordinate-wise slice-sampling sweep from `x0`.
///
/// Coordinates whose bracket still lies inside the slice after 32 doublings
/// keep their previous value.
pub fn slice_sample_step<F, R>(mut logdensity: F, x0: &[f64], widths: &[f64], rng: &mut R) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let logp0 = logdensity(x0);
    if !logp0.is_finite() {
        return Err(Error::Sampling(format!("log density at the starting point is {logp0}")));
    }
    let sampler = SliceSampler { widths: widths.to_vec(), ..SliceSampler::default() };
    Ok(sampler.sweep(&mut logdensity, x0, logp0, rng).point)
}

/// Chain length settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcSettings {
    /// Retained samples `m`.
    pub samples: usize,
    /// Sweeps discarded before the first retained sample.
    pub burnin: usize,
    /// Sweeps between consecutive retained samples.
    pub thinning: usize,
    /// Initial slice width in transformed coordinates.
    pub width: f64,
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self { samples: 10, burnin: 100, thinning: 10, width: 1.0 }
    }
}

impl McmcSettings {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.thinning == 0 || !(self.width > 0.0) {
            return Err(Error::Config("mcmc needs samples >= 1, thinning >= 1 and width > 0".into()));
        }
        Ok(())
    }
}

/// Hyperparameter samples with one fitted GP each.
#[derive(Clone, Debug)]
pub struct PosteriorEnsemble {
    samples: Vec<Vec<f64>>,
    models: Vec<GpModel>,
    last_state: Vec<f64>,
    rejected: usize,
}

impl PosteriorEnsemble {
    /// Wraps already fitted models (for example a single fixed-θ GP).
    pub fn from_models(models: Vec<GpModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter("ensemble needs at least one model".into()));
        }
        Ok(Self { samples: vec![Vec::new(); models.len()], models, last_state: Vec::new(), rejected: 0 })
    }

    /// Sampled vectors in transformed coordinates.
    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }

    pub fn models(&self) -> &[GpModel] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Chain state to warm-start the next refit from.
    pub fn last_state(&self) -> &[f64] {
        &self.last_state
    }

    /// Coordinate updates rejected because the doubling or shrinkage cap was hit.
    pub fn rejected_updates(&self) -> usize {
        self.rejected
    }

    /// Appends an observation to every model without resampling.
    pub fn append_observation(&self, x: Vec<f64>, y: f64) -> Result<Self> {
        let models = self.models.iter().map(|m| m.append_observation(x.clone(), y)).collect::<Result<Vec<_>>>()?;
        Ok(Self { samples: self.samples.clone(), models, last_state: self.last_state.clone(), rejected: 0 })
    }
}

/// Draws `settings.samples` hyperparameter vectors from
/// `p(θ | data) ∝ p(y | X, θ) p(θ)` and fits one GP per sample.
///
/// `start` warm-starts the chain (for example from the previous iteration's
/// last state); otherwise it begins at the prior medians.
pub fn sample_hyperparameters<R: Rng + ?Sized>(
    data: &Arc<Dataset>,
    layout: &HyperLayout,
    mean: MeanFunction,
    settings: &McmcSettings,
    start: Option<&[f64]>,
    rng: &mut R,
) -> Result<PosteriorEnsemble> {
    settings.validate()?;
    let points = data.points();
    let mut eval = LikelihoodEvaluator::new(data);
    let mut logdensity = |u: &[f64]| -> f64 {
        let prior = layout.log_prior(u);
        if !prior.is_finite() {
            return f64::NEG_INFINITY;
        }
        match layout.bind(u, points) {
            Ok((kernel, noise)) => {
                eval.log_marginal_likelihood(&kernel, noise, mean).map_or(f64::NEG_INFINITY, |l| l + prior)
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };

    // A warm start continues the previous chain. A cold start begins at the
    // prior medians, with the funnel centered either at the prior center or
    // on the best observation, whichever is more probable.
    let mut state =
        start.filter(|s| s.len() == layout.len()).map(|s| (s.to_vec(), logdensity(s))).filter(|(_, lp)| lp.is_finite());
    if state.is_none() {
        let best = data
            .targets()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| points[i].clone())
            .unwrap_or_default();
        for c in [layout.initial_point(), layout.initial_point_at(&best)] {
            let lp = logdensity(&c);
            if lp.is_finite() && state.as_ref().is_none_or(|(_, best_lp)| lp > *best_lp) {
                state = Some((c, lp));
            }
        }
    }
    if state.is_none() {
        for _ in 0..64 {
            let c = layout.draw(rng);
            let lp = logdensity(&c);
            if lp.is_finite() {
                state = Some((c, lp));
                break;
            }
        }
    }
    let (mut x, mut lp) = state.ok_or_else(|| {
        Error::Sampling(format!(
            "no hyperparameter vector with a factorable Gram matrix (n = {}, layout length {})",
            data.len(),
            layout.len()
        ))
    })?;

    let sampler = SliceSampler { widths: vec![settings.width], ..SliceSampler::default() };
    let mut rejected = 0;
    let mut run = |x: &mut Vec<f64>, lp: &mut f64, sweeps: usize, rng: &mut R, rejected: &mut usize| {
        if x.is_empty() {
            return;
        }
        for _ in 0..sweeps {
            let s = sampler.sweep(&mut logdensity, x, *lp, rng);
            *x = s.point;
            *lp = s.log_density;
            *rejected += s.rejected;
        }
    };
    run(&mut x, &mut lp, settings.burnin, rng, &mut rejected);
    let mut samples = Vec::with_capacity(settings.samples);
    samples.push(x.clone());
    for _ in 1..settings.samples {
        run(&mut x, &mut lp, settings.thinning, rng, &mut rejected);
        samples.push(x.clone());
    }

    let models = samples
        .par_iter()
        .map(|u| {
            let (kernel, noise) = layout.bind(u, points)?;
            GpModel::fit(Arc::clone(data), kernel, noise, mean)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorEnsemble { samples, models, last_state: x, rejected })
}
