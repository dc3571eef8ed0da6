//! Covariance functions.
//!
//! Every kernel here has unit signal variance, so `k(x, x) = 1`. Inputs are
//! expected in the normalized unit hypercube.
//!
//! The ARD distance follows `r² = Σ_j (x_j − x'_j)² / ℓ_j`: the length-scale
//! enters to the *first* power. Much of the GP literature divides by `ℓ_j²`
//! instead, so a length-scale of `0.01` here corresponds to `0.1` there.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stationary base covariance family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Matern12,
    Matern32,
    #[default]
    Matern52,
    SquaredExponential,
}

impl Family {
    /// Matérn family for a half-integer smoothness `nu`.
    pub fn matern(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Family::Matern12),
            1.5 => Ok(Family::Matern32),
            2.5 => Ok(Family::Matern52),
            v => Err(Error::UnsupportedSmoothness(v)),
        }
    }

    /// Smoothness `ν`, or `None` for the squared exponential.
    pub fn nu(self) -> Option<f64> {
        match self {
            Family::Matern12 => Some(0.5),
            Family::Matern32 => Some(1.5),
            Family::Matern52 => Some(2.5),
            Family::SquaredExponential => None,
        }
    }

    /// Kernel value as a function of the scaled distance `r ≥ 0`.
    #[inline]
    pub fn eval(self, r: f64) -> f64 {
        match self {
            Family::Matern12 => (-r).exp(),
            Family::Matern32 => {
                let s = 3f64.sqrt() * r;
                (-s).exp() * (1.0 + s)
            }
            Family::Matern52 => {
                let s = 5f64.sqrt() * r;
                (-s).exp() * (1.0 + s + 5.0 / 3.0 * r * r)
            }
            Family::SquaredExponential => (-0.5 * r * r).exp(),
        }
    }

    /// Same as [`Family::eval`] but from the squared distance, which lets the
    /// squared exponential skip the square root.
    #[inline]
    pub(crate) fn eval_sq(self, r2: f64) -> f64 {
        match self {
            Family::SquaredExponential => (-0.5 * r2).exp(),
            f => f.eval(r2.sqrt()),
        }
    }
}

/// Base stationary kernel as a function of the scaled distance.
pub fn base_kernel(r: f64, family: Family) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be nonnegative, got {r}")));
    }
    Ok(family.eval(r))
}

/// Per-dimension length-scales (ARD).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LengthScales {
    values: Vec<f64>,
    inverse: Vec<f64>,
}

impl LengthScales {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("length-scales must not be empty".into()));
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonPositiveLengthScale(bad));
        }
        let inverse = values.iter().map(|v| 1.0 / v).collect();
        Ok(Self { values, inverse })
    }

    pub fn isotropic(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn inverse(&self) -> &[f64] {
        &self.inverse
    }
}

impl TryFrom<Vec<f64>> for LengthScales {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LengthScales> for Vec<f64> {
    fn from(l: LengthScales) -> Self {
        l.values
    }
}

#[inline]
pub(crate) fn scaled_sq_distance(x: &[f64], y: &[f64], inverse: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(inverse)
        .map(|((a, b), w)| {
            let d = a - b;
            d * d * w
        })
        .sum()
}

/// ARD distance `r = sqrt(Σ_j (x_j − x'_j)² / ℓ_j)`.
pub fn ard_distance(x: &[f64], y: &[f64], lengthscales: &LengthScales) -> Result<f64> {
    check_dim(lengthscales.dim(), x.len())?;
    check_dim(lengthscales.dim(), y.len())?;
    Ok(scaled_sq_distance(x, y, lengthscales.inverse()).sqrt())
}

/// How the local weight variances are chosen at binding time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LocalVarianceMode {
    /// Use the configured variances unchanged.
    #[default]
    Fixed,
    /// Shrink each local variance as more observations fall inside its
    /// funnel: `σ²_m · min(1, reference_count / n_inside)`, floored at `floor`.
    /// A point is inside when its distance to the center is at most `σ_m`.
    Adaptive { reference_count: usize, floor: f64 },
}

impl LocalVarianceMode {
    pub(crate) fn effective(&self, variance: f64, center: &[f64], points: &[Vec<f64>]) -> f64 {
        match *self {
            LocalVarianceMode::Fixed => variance,
            LocalVarianceMode::Adaptive { reference_count, floor } => {
                let radius2 = variance;
                let inside = points
                    .iter()
                    .filter(|p| p.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() <= radius2)
                    .count();
                let shrink = if inside > reference_count { reference_count as f64 / inside as f64 } else { 1.0 };
                (variance * shrink).max(floor)
            }
        }
    }
}

/// Structure of a kernel before hyperparameters are bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Stationary {
        family: Family,
    },
    /// Global kernel plus `locals` funnel kernels sharing one moving center.
    Spartan {
        global: Family,
        local: Family,
        locals: usize,
        #[serde(default)]
        local_variance_mode: LocalVarianceMode,
    },
    Hamming {
        cardinalities: Vec<usize>,
    },
}

impl KernelSpec {
    pub fn matern52() -> Self {
        KernelSpec::Stationary { family: Family::Matern52 }
    }

    /// One global and one local Matérn 5/2 kernel.
    pub fn spartan() -> Self {
        KernelSpec::Spartan {
            global: Family::Matern52,
            local: Family::Matern52,
            locals: 1,
            local_variance_mode: LocalVarianceMode::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Spartan { locals, local_variance_mode, .. } => {
                if *locals == 0 {
                    return Err(Error::InvalidParameter("Spartan kernel needs at least one local kernel".into()));
                }
                if let LocalVarianceMode::Adaptive { reference_count, floor } = local_variance_mode {
                    if *reference_count == 0 || !(*floor > 0.0) {
                        return Err(Error::InvalidParameter(
                            "adaptive local variance needs reference_count >= 1 and floor > 0".into(),
                        ));
                    }
                }
                Ok(())
            }
            KernelSpec::Hamming { cardinalities } => {
                if cardinalities.is_empty() || cardinalities.contains(&0) {
                    return Err(Error::InvalidParameter("Hamming cardinalities must be nonempty and positive".into()));
                }
                Ok(())
            }
            KernelSpec::Stationary { .. } => Ok(()),
        }
    }
}

/// Full hyperparameter set of the funnel kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpartanHyperparams {
    pub global_lengthscales: LengthScales,
    pub local_lengthscales: Vec<LengthScales>,
    /// Shared center of the local kernels (θ^p).
    pub funnel_center: Vec<f64>,
    /// Center of the global weight (ψ).
    pub global_center: Vec<f64>,
    pub global_variance: f64,
    pub local_variances: Vec<f64>,
}

impl SpartanHyperparams {
    pub fn new(
        global_lengthscales: LengthScales,
        local_lengthscales: Vec<LengthScales>,
        funnel_center: Vec<f64>,
        global_center: Vec<f64>,
        global_variance: f64,
        local_variances: Vec<f64>,
    ) -> Result<Self> {
        let hp = Self {
            global_lengthscales,
            local_lengthscales,
            funnel_center,
            global_center,
            global_variance,
            local_variances,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Defaults for one local kernel: `ψ = 0.5`, `σ²_g = 10`, `σ²_1 = 0.05`.
    pub fn single_local(global: LengthScales, local: LengthScales, center: Vec<f64>) -> Result<Self> {
        let d = global.dim();
        Self::new(global, vec![local], center, vec![0.5; d], 10.0, vec![0.05])
    }

    pub fn dim(&self) -> usize {
        self.global_lengthscales.dim()
    }

    pub fn locals(&self) -> usize {
        self.local_lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.local_lengthscales.is_empty() {
            return Err(Error::InvalidParameter("at least one local kernel required".into()));
        }
        check_dim(self.local_lengthscales.len(), self.local_variances.len())?;
        for l in &self.local_lengthscales {
            check_dim(d, l.dim())?;
        }
        check_dim(d, self.funnel_center.len())?;
        check_dim(d, self.global_center.len())?;
        for &v in std::iter::once(&self.global_variance).chain(&self.local_variances) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositiveVariance(v));
            }
        }
        if let Some(&c) = self.funnel_center.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::InvalidParameter(format!("funnel center coordinate {c} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Normalized weights `λ` of the global and local kernels at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightProfile {
    pub global: f64,
    pub locals: Vec<f64>,
}

impl WeightProfile {
    pub fn sum_of_squares(&self) -> f64 {
        self.global * self.global + self.locals.iter().map(|l| l * l).sum::<f64>()
    }
}

#[inline]
fn log_isotropic_gaussian(x: &[f64], center: &[f64], variance: f64) -> f64 {
    let sq: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (LN_2PI + variance.ln()) - 0.5 * sq / variance
}

/// Writes `[λ_g, λ_1, …, λ_M]` for `x` into `out`.
///
/// The unnormalized weights are full Gaussian densities; normalization is done
/// in log space so that far-away points do not underflow to `0/0`.
pub(crate) fn spartan_weights_into(x: &[f64], hp: &SpartanHyperparams, out: &mut [f64]) {
    debug_assert_eq!(out.len(), 1 + hp.locals());
    out[0] = log_isotropic_gaussian(x, &hp.global_center, hp.global_variance);
    for (m, &v) in hp.local_variances.iter().enumerate() {
        out[1 + m] = log_isotropic_gaussian(x, &hp.funnel_center, v);
    }
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + out.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
    for w in out.iter_mut() {
        *w = (0.5 * (*w - lse)).exp();
    }
}

/// Normalized kernel weights at `x`.
pub fn spartan_weights(x: &[f64], hp: &SpartanHyperparams) -> Result<WeightProfile> {
    hp.validate()?;
    check_dim(hp.dim(), x.len())?;
    let mut w = vec![0.0; 1 + hp.locals()];
    spartan_weights_into(x, hp, &mut w);
    Ok(WeightProfile { global: w[0], locals: w[1..].to_vec() })
}

/// Funnel kernel with bound hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpartanKernel {
    pub global: Family,
    pub local: Family,
    pub hp: SpartanHyperparams,
}

impl SpartanKernel {
    pub fn new(global: Family, local: Family, hp: SpartanHyperparams) -> Result<Self> {
        hp.validate()?;
        Ok(Self { global, local, hp })
    }

    /// Number of weight slots per point (`1 + M`).
    pub fn weight_len(&self) -> usize {
        1 + self.hp.locals()
    }

    pub(crate) fn weights_into(&self, x: &[f64], out: &mut [f64]) {
        spartan_weights_into(x, &self.hp, out)
    }

    /// Kernel value given precomputed weights for both points.
    #[inline]
    pub(crate) fn eval_weighted(&self, x: &[f64], wx: &[f64], y: &[f64], wy: &[f64]) -> f64 {
        let r2 = scaled_sq_distance(x, y, self.hp.global_lengthscales.inverse());
        let mut k = wx[0] * wy[0] * self.global.eval_sq(r2);
        for (m, ls) in self.hp.local_lengthscales.iter().enumerate() {
            let r2 = scaled_sq_distance(x, y, ls.inverse());
            k += wx[1 + m] * wy[1 + m] * self.local.eval_sq(r2);
        }
        k
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.weight_len();
        let mut wx = vec![0.0; n];
        let mut wy = vec![0.0; n];
        self.weights_into(x, &mut wx);
        self.weights_into(y, &mut wy);
        self.eval_weighted(x, &wx, y, &wy)
    }
}

/// Funnel kernel value `k(x, x')` for Matérn 5/2 global and local parts.
pub fn spartan_eval(x: &[f64], y: &[f64], hp: &SpartanHyperparams) -> Result<f64> {
    hp.validate()?;
    check_dim(hp.dim(), x.len())?;
    check_dim(hp.dim(), y.len())?;
    Ok(SpartanKernel { global: Family::Matern52, local: Family::Matern52, hp: hp.clone() }.eval(x, y))
}

/// Number of coordinates where two discrete vectors differ.
pub fn hamming_distance<T: PartialEq>(x: &[T], y: &[T]) -> usize {
    x.iter().zip(y).filter(|(a, b)| a != b).count()
}

/// `exp(−θ/2 · g(x, x')²)` with `g` the Hamming distance.
pub fn hamming_eval<T: PartialEq>(x: &[T], y: &[T], theta: f64) -> Result<f64> {
    check_dim(x.len(), y.len())?;
    if !(theta.is_finite() && theta > 0.0) {
        return Err(Error::InvalidParameter(format!("Hamming theta must be positive, got {theta}")));
    }
    let g = hamming_distance(x, y) as f64;
    Ok((-0.5 * theta * g * g).exp())
}

/// Maps unit-interval coordinates onto category indices `0..c_j` by scaling
/// with `c_j − 1` and rounding half up.
pub fn discretize(u: &[f64], cardinalities: &[usize]) -> Vec<usize> {
    u.iter()
        .zip(cardinalities)
        .map(|(&v, &c)| {
            let top = c.saturating_sub(1);
            let scaled = v.clamp(0.0, 1.0) * top as f64;
            ((scaled + 0.5).floor() as usize).min(top)
        })
        .collect()
}

/// Inverse of [`discretize`] on category indices.
pub fn category_to_unit(index: &[usize], cardinalities: &[usize]) -> Vec<f64> {
    index.iter().zip(cardinalities).map(|(&i, &c)| if c <= 1 { 0.0 } else { i as f64 / (c - 1) as f64 }).collect()
}

/// Hamming kernel over unit-encoded categorical inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HammingKernel {
    pub theta: f64,
    pub cardinalities: Vec<usize>,
}

impl HammingKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = discretize(x, &self.cardinalities)
            .into_iter()
            .zip(discretize(y, &self.cardinalities))
            .filter(|(a, b)| a != b)
            .count() as f64;
        (-0.5 * self.theta * g * g).exp()
    }
}

/// A covariance function with all hyperparameters bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Stationary { family: Family, lengthscales: LengthScales },
    Spartan(SpartanKernel),
    Hamming(HammingKernel),
}

impl Kernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Kernel::Stationary { family, lengthscales } => {
                family.eval_sq(scaled_sq_distance(x, y, lengthscales.inverse()))
            }
            Kernel::Spartan(k) => k.eval(x, y),
            Kernel::Hamming(k) => k.eval(x, y),
        }
    }

    /// Input dimension the kernel was bound for.
    pub fn dim(&self) -> usize {
        match self {
            Kernel::Stationary { lengthscales, .. } => lengthscales.dim(),
            Kernel::Spartan(k) => k.hp.dim(),
            Kernel::Hamming(k) => k.cardinalities.len(),
        }
    }
}

/// Gram matrix `K_ij = k(x_i, x_j)` with `nugget` added on the diagonal.
pub fn gram_matrix(points: &[Vec<f64>], kernel: &Kernel, nugget: f64) -> Result<Vec<Vec<f64>>> {
    if !(nugget >= 0.0) {
        return Err(Error::InvalidParameter(format!("nugget must be nonnegative, got {nugget}")));
    }
    for p in points {
        check_dim(kernel.dim(), p.len())?;
    }
    let n = points.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&points[i], &points[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
        k[i][i] += nugget;
    }
    Ok(k)
}
