//! Optimization loops: plain BO with a stationary kernel, SBO with the
//! Spartan kernel, and hierarchical BO over mixed continuous/categorical
//! spaces.
//!
//! Every loop draws its initial design from the run RNG before anything
//! else, so two methods given the same seed start from the same points.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{expected_improvement, maximize_acquisition, AcquisitionBudget, Incumbent};
use crate::benchmarks::Problem;
use crate::design::{initial_design, DesignKind};
use crate::error::{Error, Result};
use crate::inference::{sample_hyperparameters, HyperLayout, HyperPrior, McmcSettings, PosteriorEnsemble};
use crate::kernels::{category_to_unit, Family, KernelSpec, LocalVarianceMode};
use crate::surrogate::{from_unit, validate_bounds, Dataset, MeanFunction};

/// A black-box function on a box-bounded continuous domain.
pub trait Objective: Sync {
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

/// A function of continuous variables and categorical indices.
pub trait MixedObjective: Sync {
    fn bounds(&self) -> Vec<(f64, f64)>;
    /// Number of admissible values of each categorical variable.
    fn cardinalities(&self) -> Vec<usize>;
    fn evaluate(&self, x: &[f64], categories: &[usize]) -> Result<f64>;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    pub bounds: Vec<(f64, f64)>,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn bounds(&self) -> Vec<(f64, f64)> {
        self.bounds.clone()
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bo,
    Sbo,
    Hierarchical,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bo => "bo",
            Method::Sbo => "sbo",
            Method::Hierarchical => "hierarchical",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignConfig {
    pub kind: DesignKind,
    /// Number of initial points `p`.
    pub points: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self { kind: DesignKind::Lhs, points: 10 }
    }
}

/// Kernel families and the Spartan structure. Fixed values and opt-in
/// sampling of ψ, σ²_g, σ²_m and the nugget live in [`HyperPrior`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Stationary kernel for BO and the global part of SBO.
    pub family: Family,
    /// Family of the local parts of SBO.
    pub local_family: Family,
    /// Number of local kernels `M`.
    pub locals: usize,
    pub local_variance_mode: LocalVarianceMode,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: Family::Matern52,
            local_family: Family::Matern52,
            locals: 1,
            local_variance_mode: LocalVarianceMode::Fixed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Global candidates per input dimension.
    pub candidates_per_dim: usize,
    pub refined_candidates: usize,
    pub refinement_evaluations: usize,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self { candidates_per_dim: 1000, refined_candidates: 5, refinement_evaluations: 200 }
    }
}

impl AcquisitionConfig {
    fn budget(&self, dim: usize, seed: u64) -> AcquisitionBudget {
        AcquisitionBudget {
            global_evaluations: self.candidates_per_dim * dim.max(1),
            local_refinement_evaluations: self.refinement_evaluations,
            refined_candidates: self.refined_candidates,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchicalConfig {
    /// Outer continuous queries `N_c`.
    pub outer: usize,
    /// Inner categorical queries per outer query `N_d`.
    pub inner: usize,
    /// Surrogate of the outer loop (`bo` or `sbo`).
    pub outer_method: Method,
    /// Inner candidate sets larger than this are subsampled.
    pub max_enumeration: usize,
}

impl Default for HierarchicalConfig {
    fn default() -> Self {
        Self { outer: 15, inner: 6, outer_method: Method::Sbo, max_enumeration: 4096 }
    }
}

/// Settings of one optimization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    /// Total objective evaluations `N`, including the initial design.
    pub budget: usize,
    pub initial_design: DesignConfig,
    pub mcmc: McmcSettings,
    pub kernel: KernelConfig,
    pub prior: HyperPrior,
    pub mean: MeanFunction,
    /// Standardize observed outputs to zero mean and unit variance before
    /// fitting; when false the GP sees raw outputs with unit prior variance.
    pub standardize_outputs: bool,
    /// Resample hyperparameters every `refit_every` iterations; in between,
    /// observations are appended to the current ensemble.
    pub refit_every: usize,
    pub acquisition: AcquisitionConfig,
    pub hierarchical: Option<HierarchicalConfig>,
    pub seed: u64,
    /// Optimization domain; defaults to the objective's bounds.
    pub bounds: Option<Vec<(f64, f64)>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Sbo,
            budget: 40,
            initial_design: DesignConfig::default(),
            mcmc: McmcSettings::default(),
            kernel: KernelConfig::default(),
            prior: HyperPrior::default(),
            mean: MeanFunction::Gls,
            standardize_outputs: true,
            refit_every: 1,
            acquisition: AcquisitionConfig::default(),
            hierarchical: None,
            seed: 0,
            bounds: None,
        }
    }
}

impl RunConfig {
    pub fn new(method: Method, budget: usize, seed: u64) -> Self {
        Self { method, budget, seed, ..Self::default() }
    }

    /// Kernel structure used by a continuous loop of `method`.
    pub fn kernel_spec(&self, method: Method) -> KernelSpec {
        match method {
            Method::Sbo => KernelSpec::Spartan {
                global: self.kernel.family,
                local: self.kernel.local_family,
                locals: self.kernel.locals,
                local_variance_mode: self.kernel.local_variance_mode,
            },
            _ => KernelSpec::Stationary { family: self.kernel.family },
        }
    }

    fn dataset(&self, points: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Dataset> {
        if self.standardize_outputs {
            Dataset::from_unit(points, ys)
        } else {
            Dataset::from_unit_unscaled(points, ys)
        }
    }

    /// Checks counts and cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.budget == 0 {
            return bad("budget must be >= 1");
        }
        if self.initial_design.points == 0 {
            return bad("initial design needs at least one point");
        }
        if self.refit_every == 0 {
            return bad("refit_every must be >= 1");
        }
        let a = &self.acquisition;
        if a.candidates_per_dim == 0 || a.refined_candidates == 0 || a.refinement_evaluations == 0 {
            return bad("acquisition counts must be >= 1");
        }
        self.mcmc.validate()?;
        if let Some(b) = &self.bounds {
            validate_bounds(b)?;
        }
        let outer = match self.method {
            Method::Hierarchical => {
                let h = self
                    .hierarchical
                    .ok_or_else(|| Error::Config("hierarchical method needs a `hierarchical` section".into()))?;
                if h.outer == 0 || h.inner == 0 || h.max_enumeration == 0 {
                    return bad("hierarchical counts must be >= 1");
                }
                if h.outer_method == Method::Hierarchical {
                    return bad("hierarchical outer_method must be bo or sbo");
                }
                if h.outer * h.inner != self.budget {
                    return Err(Error::Config(format!(
                        "budget {} must equal outer x inner = {} x {}",
                        self.budget, h.outer, h.inner
                    )));
                }
                h.outer
            }
            _ => self.budget,
        };
        if self.initial_design.points > outer {
            return Err(Error::Config(format!(
                "initial design size {} exceeds the number of continuous queries {outer}",
                self.initial_design.points
            )));
        }
        let spec = self.kernel_spec(match self.method {
            Method::Hierarchical => self.hierarchical.map(|h| h.outer_method).unwrap_or(Method::Sbo),
            m => m,
        });
        HyperLayout::new(&spec, &self.prior, self.bounds.as_ref().map_or(1, Vec::len))?;
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Zero-based evaluation index.
    pub iteration: usize,
    /// Continuous query in raw units.
    pub x: Vec<f64>,
    /// Categorical part of the query (hierarchical runs only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<usize>,
    pub y: f64,
    /// Best outcome up to and including this evaluation.
    pub y_best: f64,
    /// Wall-clock seconds since the previous record (model fitting,
    /// acquisition and evaluation).
    pub wall_seconds: f64,
    /// Process CPU seconds since the previous record.
    pub cpu_seconds: f64,
}

/// Evaluations of one run plus the best point found.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub method: Option<Method>,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Incumbent sequence `y_best`.
    pub fn incumbents(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y_best).collect()
    }

    /// Record with the lowest `y` (earliest on ties).
    pub fn best(&self) -> Option<&TraceRecord> {
        self.records.iter().reduce(|a, b| if b.y < a.y { b } else { a })
    }

    pub fn best_y(&self) -> Option<f64> {
        self.best().map(|r| r.y)
    }

    pub fn total_cpu_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.cpu_seconds).sum()
    }

    pub fn total_wall_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.wall_seconds).sum()
    }
}

/// A run that stopped early; `partial` holds every completed evaluation.
#[derive(Debug)]
pub struct RunError {
    pub error: Error,
    pub partial: Trace,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} evaluations)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type RunResult = std::result::Result<Trace, Box<RunError>>;

/// CPU time consumed by the whole process, in seconds.
pub fn process_cpu_seconds() -> f64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    if rc == 0 {
        ts.tv_sec as f64 + ts.tv_nsec as f64 * 1e-9
    } else {
        0.0
    }
}

struct Recorder {
    trace: Trace,
    wall: Instant,
    cpu: f64,
}

impl Recorder {
    fn new(method: Method) -> Self {
        Self {
            trace: Trace { method: Some(method), records: Vec::new() },
            wall: Instant::now(),
            cpu: process_cpu_seconds(),
        }
    }

    fn push(&mut self, x: Vec<f64>, categories: Vec<usize>, y: f64) {
        let now = Instant::now();
        let cpu = process_cpu_seconds();
        let y_best = self.trace.records.last().map_or(y, |r| r.y_best.min(y));
        self.trace.records.push(TraceRecord {
            iteration: self.trace.records.len(),
            x,
            categories,
            y,
            y_best,
            wall_seconds: now.duration_since(self.wall).as_secs_f64(),
            cpu_seconds: (cpu - self.cpu).max(0.0),
        });
        self.wall = now;
        self.cpu = cpu;
    }
}

fn objective_error(e: Error) -> Error {
    match e {
        Error::Objective(_) => e,
        other => Error::Objective(other.to_string()),
    }
}

fn checked(y: f64) -> Result<f64> {
    if y.is_finite() {
        Ok(y)
    } else {
        Err(Error::Objective(format!("objective returned {y}")))
    }
}

/// Sequential model-based loop on `[0, 1]^dim`. `query` evaluates a unit
/// point and returns the value the surrogate should see.
#[allow(clippy::too_many_arguments)]
fn model_based_loop<R: Rng + ?Sized>(
    config: &RunConfig,
    spec: &KernelSpec,
    dim: usize,
    queries: usize,
    rng: &mut R,
    query: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<()> {
    let layout = HyperLayout::new(spec, &config.prior, dim)?;
    let design = initial_design(config.initial_design.kind, config.initial_design.points.min(queries), dim, rng)?;
    let mut points = Vec::with_capacity(queries);
    let mut ys = Vec::with_capacity(queries);
    for u in design {
        ys.push(query(&u)?);
        points.push(u);
    }
    let mut ensemble: Option<PosteriorEnsemble> = None;
    let mut warm: Option<Vec<f64>> = None;
    let mut since_refit = 0usize;
    while points.len() < queries {
        let refit = ensemble.is_none() || since_refit >= config.refit_every;
        if refit {
            let data = Arc::new(config.dataset(points.clone(), ys.clone())?);
            let e = sample_hyperparameters(&data, &layout, config.mean, &config.mcmc, warm.as_deref(), rng)?;
            warm = Some(e.last_state().to_vec());
            ensemble = Some(e);
            since_refit = 0;
        }
        let current = ensemble.as_ref().expect("ensemble fitted above");
        let incumbent = Incumbent::from_observations(&ys)?;
        let budget = config.acquisition.budget(dim, rng.gen());
        let proposal = maximize_acquisition(current, incumbent, &budget)?;
        let y = query(&proposal.x)?;
        since_refit += 1;
        if since_refit < config.refit_every {
            ensemble = Some(current.append_observation(proposal.x.clone(), y)?);
        }
        points.push(proposal.x);
        ys.push(y);
    }
    Ok(())
}

pub(crate) fn domain(config: &RunConfig, objective_bounds: Vec<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    validate_bounds(&objective_bounds)?;
    match &config.bounds {
        None => Ok(objective_bounds),
        Some(b) => {
            if b.len() != objective_bounds.len() {
                return Err(Error::Config(format!(
                    "bounds have {} dimensions, objective has {}",
                    b.len(),
                    objective_bounds.len()
                )));
            }
            validate_bounds(b)?;
            for (i, (&(l, u), &(ol, ou))) in b.iter().zip(&objective_bounds).enumerate() {
                if l < ol || u > ou {
                    return Err(Error::Config(format!(
                        "bounds of dimension {i} exceed the objective domain [{ol}, {ou}]"
                    )));
                }
            }
            Ok(b.clone())
        }
    }
}

fn run_continuous<R: Rng + ?Sized>(
    method: Method,
    config: &RunConfig,
    objective: &dyn Objective,
    rng: &mut R,
) -> RunResult {
    let mut rec = Recorder::new(method);
    let fail = |error: Error, rec: Recorder| Box::new(RunError { error, partial: rec.trace });
    let bounds = match config.validate().and_then(|_| domain(config, objective.bounds())) {
        Ok(b) => b,
        Err(e) => return Err(fail(e, rec)),
    };
    let spec = config.kernel_spec(method);
    let mut query = |u: &[f64]| -> Result<f64> {
        let x = from_unit(&bounds, u);
        let y = objective.evaluate(&x).map_err(objective_error).and_then(checked)?;
        rec.push(x, Vec::new(), y);
        Ok(y)
    };
    let outcome = model_based_loop(config, &spec, bounds.len(), config.budget, rng, &mut query);
    match outcome {
        Ok(()) => Ok(rec.trace),
        Err(e) => Err(fail(e, rec)),
    }
}

/// Standard BO: stationary ARD kernel with hyperparameters integrated by
/// slice sampling and EI summed over the samples.
pub fn run_bo<R: Rng + ?Sized>(config: &RunConfig, objective: &dyn Objective, rng: &mut R) -> RunResult {
    run_continuous(Method::Bo, config, objective, rng)
}

/// BO with the Spartan kernel; the funnel center is sampled along with the
/// length-scales.
pub fn run_sbo<R: Rng + ?Sized>(config: &RunConfig, objective: &dyn Objective, rng: &mut R) -> RunResult {
    run_continuous(Method::Sbo, config, objective, rng)
}

/// Stream of the inner (categorical) RNG of hierarchical runs.
const INNER_STREAM: u64 = 0x1d;

struct InnerLoop<'a> {
    config: &'a RunConfig,
    cardinalities: Vec<usize>,
    combinations: usize,
    layout: HyperLayout,
    max_enumeration: usize,
}

fn combination(mut index: usize, cardinalities: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cardinalities.len()];
    for (slot, &c) in out.iter_mut().zip(cardinalities).rev() {
        *slot = index % c;
        index /= c;
    }
    out
}

impl InnerLoop<'_> {
    fn random_combination<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        self.cardinalities.iter().map(|&c| rng.gen_range(0..c)).collect()
    }

    /// Runs `n` categorical queries at a fixed continuous point.
    fn run<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
        eval: &mut dyn FnMut(&[usize]) -> Result<f64>,
    ) -> Result<f64> {
        let n_init = 3.min(n.saturating_sub(1)).min(self.combinations).max(1);
        let mut seen: Vec<Vec<usize>> = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        if self.combinations <= self.max_enumeration {
            for i in index::sample(rng, self.combinations, n_init) {
                seen.push(combination(i, &self.cardinalities));
            }
        } else {
            while seen.len() < n_init {
                let c = self.random_combination(rng);
                if !seen.contains(&c) {
                    seen.push(c);
                }
            }
        }
        for c in &seen {
            ys.push(eval(c)?);
        }
        while ys.len() < n {
            let units: Vec<Vec<f64>> = seen.iter().map(|c| category_to_unit(c, &self.cardinalities)).collect();
            let data = Arc::new(self.config.dataset(units, ys.clone())?);
            let ensemble = sample_hyperparameters(&data, &self.layout, self.config.mean, &self.config.mcmc, None, rng)?;
            let incumbent = Incumbent::from_observations(&ys)?;
            let candidates: Vec<Vec<usize>> = if self.combinations <= self.max_enumeration {
                (0..self.combinations).map(|i| combination(i, &self.cardinalities)).collect()
            } else {
                (0..self.max_enumeration).map(|_| self.random_combination(rng)).collect()
            };
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, c) in candidates.iter().enumerate() {
                let v = expected_improvement(&ensemble, &category_to_unit(c, &self.cardinalities), incumbent);
                if v > best.0 {
                    best = (v, i);
                }
            }
            let choice = candidates[best.1].clone();
            ys.push(eval(&choice)?);
            seen.push(choice);
        }
        Ok(ys.into_iter().fold(f64::INFINITY, f64::min))
    }
}

/// Hierarchical BO: an outer BO/SBO loop over the continuous variables
/// where each outer query runs an inner Hamming-kernel BO loop over the
/// categorical variables. The outer surrogate sees the best inner value.
pub fn run_hierarchical<R: Rng + ?Sized>(config: &RunConfig, objective: &dyn MixedObjective, rng: &mut R) -> RunResult {
    let mut rec = Recorder::new(Method::Hierarchical);
    let fail = |error: Error, rec: Recorder| Box::new(RunError { error, partial: rec.trace });
    let setup = (|| {
        config.validate()?;
        let h = config.hierarchical.ok_or_else(|| Error::Config("missing hierarchical section".into()))?;
        let bounds = domain(config, objective.bounds())?;
        let cardinalities = objective.cardinalities();
        if cardinalities.is_empty() || cardinalities.contains(&0) {
            return Err(Error::Config("categorical cardinalities must be >= 1".into()));
        }
        let combinations = cardinalities.iter().try_fold(1usize, |acc, &c| acc.checked_mul(c)).unwrap_or(usize::MAX);
        let layout = HyperLayout::new(
            &KernelSpec::Hamming { cardinalities: cardinalities.clone() },
            &config.prior,
            cardinalities.len(),
        )?;
        Ok((h, bounds, InnerLoop { config, cardinalities, combinations, layout, max_enumeration: h.max_enumeration }))
    })();
    let (h, bounds, inner) = match setup {
        Ok(s) => s,
        Err(e) => return Err(fail(e, rec)),
    };
    let mut inner_rng = ChaCha8Rng::seed_from_u64(config.seed);
    inner_rng.set_stream(INNER_STREAM);
    let spec = config.kernel_spec(h.outer_method);
    let mut query = |u: &[f64]| -> Result<f64> {
        let x = from_unit(&bounds, u);
        let mut eval = |c: &[usize]| -> Result<f64> {
            let y = objective.evaluate(&x, c).map_err(objective_error).and_then(checked)?;
            rec.push(x.clone(), c.to_vec(), y);
            Ok(y)
        };
        inner.run(h.inner, &mut inner_rng, &mut eval)
    };
    match model_based_loop(config, &spec, bounds.len(), h.outer, rng, &mut query) {
        Ok(()) => Ok(rec.trace),
        Err(e) => Err(fail(e, rec)),
    }
}

/// Runs `config.method` on `problem` with an RNG seeded from `config.seed`.
pub fn run(config: &RunConfig, problem: &Problem) -> RunResult {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match (config.method, problem) {
        (Method::Bo, Problem::Continuous(b)) => run_bo(config, b, &mut rng),
        (Method::Sbo, Problem::Continuous(b)) => run_sbo(config, b, &mut rng),
        (Method::Hierarchical, Problem::Mixed(m)) => run_hierarchical(config, m, &mut rng),
        (method, p) => Err(Box::new(RunError {
            error: Error::Config(format!("method {method} cannot run on benchmark {}", p.name())),
            partial: Trace::default(),
        })),
    }
}
