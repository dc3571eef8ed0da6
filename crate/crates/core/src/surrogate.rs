//! Gaussian-process regression on normalized inputs and standardized outputs.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::{discretize, Family, Kernel, LengthScales};
use crate::linalg;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Diagonal jitter escalation applied when the Gram matrix fails to factor.
pub const JITTER_SCHEDULE: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Default nugget for deterministic objectives.
pub const DEFAULT_NUGGET: f64 = 1e-6;

/// Observations with inputs mapped to the unit hypercube and outputs
/// standardized to zero mean and unit variance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    bounds: Vec<(f64, f64)>,
    points: Vec<Vec<f64>>,
    raw_targets: Vec<f64>,
    targets: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    standardize: bool,
}

impl Dataset {
    /// Builds a dataset from raw-space inputs inside `bounds`.
    pub fn from_raw(bounds: Vec<(f64, f64)>, inputs: &[Vec<f64>], outputs: &[f64]) -> Result<Self> {
        validate_bounds(&bounds)?;
        let points = inputs.iter().map(|x| to_unit(&bounds, x)).collect::<Result<Vec<_>>>()?;
        Self::assemble(bounds, points, outputs.to_vec(), true)
    }

    /// Builds a dataset from inputs already in `[0, 1]^d`.
    pub fn from_unit(points: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        Self::assemble(vec![(0.0, 1.0); d], points, outputs, true)
    }

    /// Unit-space inputs with the identity output transform (no standardization).
    pub fn from_unit_unscaled(points: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        let d = points.first().map(Vec::len).unwrap_or(0);
        Self::assemble(vec![(0.0, 1.0); d], points, outputs, false)
    }

    fn assemble(bounds: Vec<(f64, f64)>, points: Vec<Vec<f64>>, raw: Vec<f64>, standardize: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("dataset needs at least one observation".into()));
        }
        check_dim(points.len(), raw.len())?;
        let d = bounds.len();
        for p in &points {
            check_dim(d, p.len())?;
            if let Some((index, &value)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(Error::OutOfBounds { index, value, lower: 0.0, upper: 1.0 });
            }
        }
        if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite observation {v}")));
        }
        let (y_mean, y_scale) = if standardize { output_stats(&raw) } else { (0.0, 1.0) };
        let targets = raw.iter().map(|y| (y - y_mean) / y_scale).collect();
        Ok(Self { bounds, points, raw_targets: raw, targets, y_mean, y_scale, standardize })
    }

    /// New dataset with one more unit-space observation; output statistics are recomputed.
    pub fn with_point(&self, unit: Vec<f64>, y: f64) -> Result<Self> {
        let mut points = self.points.clone();
        points.push(unit);
        let mut raw = self.raw_targets.clone();
        raw.push(y);
        Self::assemble(self.bounds.clone(), points, raw, self.standardize)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Unit-space inputs.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Standardized outputs used for fitting.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn raw_targets(&self) -> &[f64] {
        &self.raw_targets
    }

    pub fn output_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn output_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn best(&self) -> f64 {
        self.raw_targets.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn to_raw(&self, unit: &[f64]) -> Vec<f64> {
        from_unit(&self.bounds, unit)
    }
}

fn output_stats(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    let scale = if sd.is_finite() && sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
    (mean, scale)
}

pub(crate) fn validate_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::InvalidParameter("bounds must not be empty".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("invalid bound [{lo}, {hi}]")));
        }
    }
    Ok(())
}

/// Maps a raw point into the unit hypercube.
pub fn to_unit(bounds: &[(f64, f64)], x: &[f64]) -> Result<Vec<f64>> {
    check_dim(bounds.len(), x.len())?;
    x.iter()
        .zip(bounds)
        .enumerate()
        .map(|(index, (&v, &(lo, hi)))| {
            if v < lo || v > hi || !v.is_finite() {
                Err(Error::OutOfBounds { index, value: v, lower: lo, upper: hi })
            } else {
                Ok((v - lo) / (hi - lo))
            }
        })
        .collect()
}

/// Maps a unit-hypercube point back to raw coordinates.
pub fn from_unit(bounds: &[(f64, f64)], u: &[f64]) -> Vec<f64> {
    u.iter().zip(bounds).map(|(&v, &(lo, hi))| (lo + v.clamp(0.0, 1.0) * (hi - lo)).clamp(lo, hi)).collect()
}

/// Prior mean of the process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MeanFunction {
    /// Constant mean whose coefficient is the generalized least-squares estimate.
    #[default]
    Gls,
    /// Constant mean pinned to a value in raw output units.
    Constant(f64),
}

impl MeanFunction {
    fn standardized(&self, data: &Dataset) -> Option<f64> {
        match *self {
            MeanFunction::Gls => None,
            MeanFunction::Constant(c) => Some((c - data.y_mean) / data.y_scale),
        }
    }
}

/// Predictive mean and latent variance in raw output units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

struct Component {
    family: Family,
    key: Vec<f64>,
    values: Vec<f64>,
}

/// Pairwise geometry of a fixed point set plus cached per-kernel component
/// matrices, so that repeated Gram builds during hyperparameter sampling only
/// recompute the part whose hyperparameters actually changed.
pub(crate) struct GramWorkspace {
    n: usize,
    d: usize,
    points: Vec<Vec<f64>>,
    sq: Vec<f64>,
    mismatch: Option<(Vec<usize>, Vec<f64>)>,
    comps: Vec<Component>,
    weights: Vec<f64>,
    pub(crate) gram: Vec<f64>,
}

impl GramWorkspace {
    pub(crate) fn new(points: &[Vec<f64>]) -> Self {
        let n = points.len();
        let d = points.first().map(Vec::len).unwrap_or(0);
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * d);
        for i in 1..n {
            for j in 0..i {
                sq.extend(points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)));
            }
        }
        Self {
            n,
            d,
            points: points.to_vec(),
            sq,
            mismatch: None,
            comps: Vec::new(),
            weights: Vec::new(),
            gram: vec![0.0; n * n],
        }
    }

    fn refresh_component(&mut self, slot: usize, family: Family, ls: &LengthScales) {
        if self.comps.len() <= slot {
            self.comps.push(Component { family, key: Vec::new(), values: Vec::new() });
        }
        let c = &mut self.comps[slot];
        if c.family == family && c.key == ls.as_slice() {
            return;
        }
        c.family = family;
        c.key.clear();
        c.key.extend_from_slice(ls.as_slice());
        let inv = ls.inverse();
        let d = self.d;
        c.values.clear();
        c.values.extend(self.sq.chunks_exact(d.max(1)).map(|s| {
            let r2: f64 = s.iter().zip(inv).map(|(a, w)| a * w).sum();
            family.eval_sq(r2)
        }));
    }

    /// Fills the lower triangle (and diagonal) of `self.gram`.
    pub(crate) fn build(&mut self, kernel: &Kernel, diag_add: f64) {
        let n = self.n;
        match kernel {
            Kernel::Stationary { family, lengthscales } => {
                self.refresh_component(0, *family, lengthscales);
                let vals = &self.comps[0].values;
                let mut p = 0;
                for i in 0..n {
                    let row = &mut self.gram[i * n..i * n + i];
                    row.copy_from_slice(&vals[p..p + i]);
                    p += i;
                    self.gram[i * n + i] = 1.0 + diag_add;
                }
            }
            Kernel::Spartan(k) => {
                let w = k.weight_len();
                self.refresh_component(0, k.global, &k.hp.global_lengthscales);
                for (m, ls) in k.hp.local_lengthscales.iter().enumerate() {
                    self.refresh_component(1 + m, k.local, ls);
                }
                self.weights.resize(n * w, 0.0);
                for (i, p) in self.points.iter().enumerate() {
                    k.weights_into(p, &mut self.weights[i * w..(i + 1) * w]);
                }
                let mut p = 0;
                for i in 0..n {
                    let wi = &self.weights[i * w..(i + 1) * w];
                    for j in 0..i {
                        let wj = &self.weights[j * w..(j + 1) * w];
                        let mut v = 0.0;
                        for c in 0..w {
                            v += wi[c] * wj[c] * self.comps[c].values[p];
                        }
                        self.gram[i * n + j] = v;
                        p += 1;
                    }
                    let diag: f64 = wi.iter().map(|v| v * v).sum();
                    self.gram[i * n + i] = diag + diag_add;
                }
            }
            Kernel::Hamming(k) => {
                let stale = self.mismatch.as_ref().is_none_or(|(c, _)| *c != k.cardinalities);
                if stale {
                    let cats: Vec<Vec<usize>> = self.points.iter().map(|p| discretize(p, &k.cardinalities)).collect();
                    let mut g = Vec::with_capacity(n * n.saturating_sub(1) / 2);
                    for i in 1..n {
                        for j in 0..i {
                            g.push(cats[i].iter().zip(&cats[j]).filter(|(a, b)| a != b).count() as f64);
                        }
                    }
                    self.mismatch = Some((k.cardinalities.clone(), g));
                }
                let g = &self.mismatch.as_ref().expect("mismatch counts").1;
                let mut p = 0;
                for i in 0..n {
                    for j in 0..i {
                        self.gram[i * n + j] = (-0.5 * k.theta * g[p] * g[p]).exp();
                        p += 1;
                    }
                    self.gram[i * n + i] = 1.0 + diag_add;
                }
            }
        }
    }
}

/// Copies `gram` into `chol` and factors it, escalating diagonal jitter on
/// failure. Returns the jitter that succeeded.
fn factor_with_jitter(gram: &[f64], n: usize, chol: &mut Vec<f64>) -> Result<f64> {
    for &jitter in &JITTER_SCHEDULE {
        chol.clear();
        chol.extend_from_slice(gram);
        for i in 0..n {
            chol[i * n + i] += jitter;
        }
        if linalg::cholesky_in_place(chol, n) {
            return Ok(jitter);
        }
    }
    Err(Error::Factorization { jitter: JITTER_SCHEDULE[JITTER_SCHEDULE.len() - 1] })
}

struct MeanSolve {
    beta: f64,
    z_one: Vec<f64>,
    z_y: Vec<f64>,
    quad: f64,
}

fn solve_mean(chol: &[f64], n: usize, targets: &[f64], fixed_beta: Option<f64>) -> MeanSolve {
    let mut z_one = vec![1.0; n];
    linalg::forward_solve(chol, n, &mut z_one);
    let mut z_y = targets.to_vec();
    linalg::forward_solve(chol, n, &mut z_y);
    let beta = fixed_beta.unwrap_or_else(|| linalg::dot(&z_one, &z_y) / linalg::dot(&z_one, &z_one));
    let quad = z_y.iter().zip(&z_one).map(|(a, b)| (a - beta * b) * (a - beta * b)).sum();
    MeanSolve { beta, z_one, z_y, quad }
}

fn log_likelihood_from(quad: f64, chol: &[f64], n: usize) -> f64 {
    -0.5 * quad - linalg::half_log_det(chol, n) - 0.5 * n as f64 * LN_2PI
}

/// Reusable evaluator of the log marginal likelihood for one dataset.
pub struct LikelihoodEvaluator<'a> {
    data: &'a Dataset,
    ws: GramWorkspace,
    chol: Vec<f64>,
}

impl<'a> LikelihoodEvaluator<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data, ws: GramWorkspace::new(data.points()), chol: Vec::new() }
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// `log N(y; β·1, K + σ²_n I)` on standardized targets, or `None` when the
    /// Gram matrix cannot be factored even with maximal jitter.
    pub fn log_marginal_likelihood(&mut self, kernel: &Kernel, nugget: f64, mean: MeanFunction) -> Option<f64> {
        let n = self.data.len();
        if nugget == 0.0 && has_duplicates(self.data.points()) {
            return None;
        }
        self.ws.build(kernel, nugget);
        factor_with_jitter(&self.ws.gram, n, &mut self.chol).ok()?;
        let fixed = mean.standardized(self.data);
        let s = solve_mean(&self.chol, n, self.data.targets(), fixed);
        let v = log_likelihood_from(s.quad, &self.chol, n);
        v.is_finite().then_some(v)
    }
}

/// A fitted Gaussian process.
#[derive(Clone, Debug)]
pub struct GpModel {
    data: Arc<Dataset>,
    kernel: Kernel,
    nugget: f64,
    jitter: f64,
    mean: MeanFunction,
    beta: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    z_one: Vec<f64>,
    lml: f64,
    weights: Vec<f64>,
    weight_len: usize,
}

impl GpModel {
    /// Factors `K(X, X) + σ²_n I` and precomputes the predictive weights.
    pub fn fit(data: impl Into<Arc<Dataset>>, kernel: Kernel, nugget: f64, mean: MeanFunction) -> Result<Self> {
        let data = data.into();
        check_dim(data.dim(), kernel.dim())?;
        if !(nugget >= 0.0) {
            return Err(Error::InvalidParameter(format!("nugget must be nonnegative, got {nugget}")));
        }
        let n = data.len();
        if nugget == 0.0 && has_duplicates(data.points()) {
            return Err(Error::Factorization { jitter: 0.0 });
        }
        let mut ws = GramWorkspace::new(data.points());
        ws.build(&kernel, nugget);
        let mut chol = Vec::new();
        let jitter = factor_with_jitter(&ws.gram, n, &mut chol)?;
        let (weights, weight_len) = training_weights(&kernel, data.points());
        Ok(Self::finish(data, kernel, nugget, jitter, mean, chol, weights, weight_len))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        data: Arc<Dataset>,
        kernel: Kernel,
        nugget: f64,
        jitter: f64,
        mean: MeanFunction,
        chol: Vec<f64>,
        weights: Vec<f64>,
        weight_len: usize,
    ) -> Self {
        let n = data.len();
        let s = solve_mean(&chol, n, data.targets(), mean.standardized(&data));
        let lml = log_likelihood_from(s.quad, &chol, n);
        let mut alpha: Vec<f64> = s.z_y.iter().zip(&s.z_one).map(|(a, b)| a - s.beta * b).collect();
        linalg::backward_solve(&chol, n, &mut alpha);
        Self { data, kernel, nugget, jitter, mean, beta: s.beta, chol, alpha, z_one: s.z_one, lml, weights, weight_len }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Extra diagonal jitter that was needed to factor the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Constant-mean coefficient in raw output units.
    pub fn beta(&self) -> f64 {
        self.data.y_mean + self.data.y_scale * self.beta
    }

    /// Lower Cholesky factor, row-major `n × n`.
    pub fn cholesky(&self) -> &[f64] {
        &self.chol
    }

    /// `K⁻¹ (y − β·1)` on standardized targets.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Log marginal likelihood of the standardized targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    fn cross_covariance(&self, x: &[f64]) -> Vec<f64> {
        let pts = self.data.points();
        match &self.kernel {
            Kernel::Spartan(k) => {
                let w = self.weight_len;
                let mut wx = vec![0.0; w];
                k.weights_into(x, &mut wx);
                pts.iter()
                    .enumerate()
                    .map(|(i, p)| k.eval_weighted(x, &wx, p, &self.weights[i * w..(i + 1) * w]))
                    .collect()
            }
            other => pts.iter().map(|p| other.eval(x, p)).collect(),
        }
    }

    /// Predictive mean and latent variance in standardized units.
    pub(crate) fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let n = self.data.len();
        let mut k = self.cross_covariance(x);
        let mean = self.beta + linalg::dot(&k, &self.alpha);
        linalg::forward_solve(&self.chol, n, &mut k);
        let var = (1.0 - linalg::dot(&k, &k)).max(0.0);
        (mean, var)
    }

    /// Prediction at a unit-space query point.
    pub fn predict(&self, x: &[f64]) -> Prediction {
        let (m, v) = self.predict_standardized(x);
        let s = self.data.y_scale;
        Prediction { mean: self.data.y_mean + s * m, variance: s * s * v }
    }

    /// Adds one observation by extending the Cholesky factor by a row,
    /// keeping the hyperparameters fixed.
    pub fn append_observation(&self, x: Vec<f64>, y: f64) -> Result<Self> {
        check_dim(self.data.dim(), x.len())?;
        let n = self.data.len();
        if self.nugget == 0.0 && self.data.points().contains(&x) {
            return Err(Error::Factorization { jitter: self.jitter });
        }
        let mut c = self.cross_covariance(&x);
        linalg::forward_solve(&self.chol, n, &mut c);
        let pivot = 1.0 + self.nugget + self.jitter - linalg::dot(&c, &c);
        if !(pivot > 0.0) {
            return Err(Error::Factorization { jitter: self.jitter });
        }
        let m = n + 1;
        let mut chol = vec![0.0; m * m];
        for i in 0..n {
            chol[i * m..i * m + i + 1].copy_from_slice(&self.chol[i * n..i * n + i + 1]);
        }
        chol[n * m..n * m + n].copy_from_slice(&c);
        chol[n * m + n] = pivot.sqrt();

        let mut weights = self.weights.clone();
        if let Kernel::Spartan(k) = &self.kernel {
            let start = weights.len();
            weights.resize(start + self.weight_len, 0.0);
            k.weights_into(&x, &mut weights[start..]);
        }
        let data = Arc::new(self.data.with_point(x, y)?);
        Ok(Self::finish(data, self.kernel.clone(), self.nugget, self.jitter, self.mean, chol, weights, self.weight_len))
    }

    /// `L⁻¹ 1`, exposed for diagnostics.
    pub fn whitened_ones(&self) -> &[f64] {
        &self.z_one
    }
}

/// Identical inputs give identical Gram rows; jitter only patches round-off,
/// so an exact duplicate without a nugget is treated as singular.
fn has_duplicates(points: &[Vec<f64>]) -> bool {
    points.iter().enumerate().any(|(i, p)| points[..i].contains(p))
}

fn training_weights(kernel: &Kernel, points: &[Vec<f64>]) -> (Vec<f64>, usize) {
    match kernel {
        Kernel::Spartan(k) => {
            let w = k.weight_len();
            let mut out = vec![0.0; points.len() * w];
            for (i, p) in points.iter().enumerate() {
                k.weights_into(p, &mut out[i * w..(i + 1) * w]);
            }
            (out, w)
        }
        _ => (Vec::new(), 0),
    }
}

/// Convenience wrapper around [`GpModel::fit`].
pub fn fit(data: impl Into<Arc<Dataset>>, kernel: Kernel, nugget: f64, mean: MeanFunction) -> Result<GpModel> {
    GpModel::fit(data, kernel, nugget, mean)
}

/// Convenience wrapper around [`GpModel::predict`].
pub fn predict(model: &GpModel, x: &[f64]) -> Prediction {
    model.predict(x)
}

/// Convenience wrapper around [`GpModel::log_marginal_likelihood`].
pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// Convenience wrapper around [`GpModel::append_observation`].
pub fn append_observation(model: &GpModel, x: Vec<f64>, y: f64) -> Result<GpModel> {
    model.append_observation(x, y)
}
