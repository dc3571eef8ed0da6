//! Test objectives: analytic functions, mountain-car policy search and a
//! mixed continuous/categorical toy problem.
//!
//! All objectives are minimized. Rewards are negated at the boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::driver::{MixedObjective, Objective};
use crate::error::{Error, Result};

/// Known global optimum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownOptimum {
    pub x: Vec<f64>,
    pub value: f64,
}

fn check_bounds(x: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch { expected: bounds.len(), got: x.len() });
    }
    for (index, (&value, &(lower, upper))) in x.iter().zip(bounds).enumerate() {
        if !(value >= lower && value <= upper) {
            return Err(Error::OutOfBounds { index, value, lower, upper });
        }
    }
    Ok(())
}

pub const EXP2D_BOUNDS: [(f64, f64); 2] = [(-2.0, 18.0), (-2.0, 18.0)];

/// `x₁ exp(−x₁² − x₂²)` on `[−2, 18]²`.
pub fn exp2d(x: &[f64]) -> Result<f64> {
    check_bounds(x, &EXP2D_BOUNDS)?;
    Ok(x[0] * (-x[0] * x[0] - x[1] * x[1]).exp())
}

/// `−Σ sin(xᵢ) sin^{2m}(i xᵢ²/π)` on `[0, π]^d`.
pub fn michalewicz(x: &[f64], m: u32) -> Result<f64> {
    michalewicz_signed(x, m, true)
}

/// Michalewicz with an explicit sign; `negate = false` gives the
/// nonnegative sum without the leading minus.
pub fn michalewicz_signed(x: &[f64], m: u32, negate: bool) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("Michalewicz steepness m must be >= 1".into()));
    }
    check_bounds(x, &vec![(0.0, PI); x.len()])?;
    let s: f64 =
        x.iter().enumerate().map(|(i, &xi)| xi.sin() * ((i + 1) as f64 * xi * xi / PI).sin().powi(2 * m as i32)).sum();
    Ok(if negate { -s } else { s })
}

pub const BRANIN_BOUNDS: [(f64, f64); 2] = [(-5.0, 10.0), (0.0, 15.0)];

fn branin_unchecked(x: &[f64]) -> f64 {
    let t = x[1] - 5.1 / (4.0 * PI * PI) * x[0] * x[0] + 5.0 / PI * x[0] - 6.0;
    t * t + 10.0 * (1.0 - 1.0 / (8.0 * PI)) * x[0].cos() + 10.0
}

/// Branin–Hoo on `[−5, 10] × [0, 15]`.
pub fn branin(x: &[f64]) -> Result<f64> {
    check_bounds(x, &BRANIN_BOUNDS)?;
    Ok(branin_unchecked(x))
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

/// Hartmann 6-D on `[0, 1]^6`.
pub fn hartmann6(x: &[f64]) -> Result<f64> {
    hartmann6_scaled(x, &HARTMANN_ALPHA)
}

/// Hartmann 6-D with custom α weights.
pub fn hartmann6_scaled(x: &[f64], alpha: &[f64; 4]) -> Result<f64> {
    check_bounds(x, &[(0.0, 1.0); 6])?;
    let mut s = 0.0;
    for i in 0..4 {
        let e: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
        s += alpha[i] * (-e).exp();
    }
    Ok(-s)
}

/// ε used to keep mapped policy weights finite.
pub const POLICY_EPSILON: f64 = 1e-4;

/// `w = tan((π − ε) w01 − π/2)` elementwise.
pub fn map_policy_weights(w01: &[f64], epsilon: f64) -> Vec<f64> {
    w01.iter().map(|&u| ((PI - epsilon) * u - PI / 2.0).tan()).collect()
}

/// How `w7` enters the perceptron policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyWiring {
    /// `a = tanh(w7 · (w1 + w2 x + w3 v + w4 v̇ + w6 tanh(w5 v̇)))`.
    #[default]
    Gated,
    /// Same sum without the `w7` gain.
    Ungated,
}

/// Mountain-car simulation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MountainCar {
    pub horizon: usize,
    pub epsilon: f64,
    pub wiring: PolicyWiring,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self { horizon: 500, epsilon: POLICY_EPSILON, wiring: PolicyWiring::Gated }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Goal,
    Horizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub total_reward: f64,
    pub steps: usize,
    pub termination: Termination,
}

impl EpisodeResult {
    pub fn reached_goal(&self) -> bool {
        self.termination == Termination::Goal
    }
}

pub const MOUNTAIN_CAR_MIN_X: f64 = -1.2;
pub const MOUNTAIN_CAR_MAX_X: f64 = 0.6;
pub const MOUNTAIN_CAR_GOAL: f64 = 0.5;
pub const MOUNTAIN_CAR_MAX_SPEED: f64 = 0.07;

impl MountainCar {
    /// Throttle in `[−1, 1]` for position `x`, velocity `v` and acceleration `dv`.
    pub fn action(&self, w: &[f64], x: f64, v: f64, dv: f64) -> f64 {
        let s = w[0] + w[1] * x + w[2] * v + w[3] * dv + w[5] * (w[4] * dv).tanh();
        let a = match self.wiring {
            PolicyWiring::Gated => (w[6] * s).tanh(),
            PolicyWiring::Ungated => s.tanh(),
        };
        if a.is_nan() {
            0.0
        } else {
            a
        }
    }

    /// Runs one episode from `x = −0.5, v = 0`. Reward is −1 per step
    /// until the goal is reached or the horizon runs out.
    pub fn episode(&self, w01: &[f64]) -> Result<EpisodeResult> {
        if w01.len() != 7 {
            return Err(Error::DimensionMismatch { expected: 7, got: w01.len() });
        }
        check_bounds(w01, &[(0.0, 1.0); 7])?;
        let w = map_policy_weights(w01, self.epsilon);
        let (mut x, mut v) = (-0.5f64, 0.0f64);
        let (mut obs_v, mut obs_prev_v) = (0.0f64, 0.0f64);
        let mut reward = 0.0;
        for step in 1..=self.horizon {
            let a = self.action(&w, x, obs_v, obs_v - obs_prev_v);
            let x_prev = x;
            v = (v + 0.001 * a - 0.0025 * (3.0 * x).cos()).clamp(-MOUNTAIN_CAR_MAX_SPEED, MOUNTAIN_CAR_MAX_SPEED);
            x = (x + v).clamp(MOUNTAIN_CAR_MIN_X, MOUNTAIN_CAR_MAX_X);
            if x <= MOUNTAIN_CAR_MIN_X && v < 0.0 {
                v = 0.0;
            }
            obs_prev_v = obs_v;
            obs_v = x - x_prev;
            reward -= 1.0;
            if x >= MOUNTAIN_CAR_GOAL {
                return Ok(EpisodeResult { total_reward: reward, steps: step, termination: Termination::Goal });
            }
        }
        Ok(EpisodeResult { total_reward: reward, steps: self.horizon, termination: Termination::Horizon })
    }
}

/// Mountain-car episode with default settings and horizon `horizon`.
pub fn mountain_car_episode(w01: &[f64], horizon: usize) -> Result<EpisodeResult> {
    MountainCar { horizon, ..MountainCar::default() }.episode(w01)
}

/// Per-category offsets of [`mixed_toy`]; category 1 is best.
pub const MIXED_TOY_PENALTY: [f64; 3] = [1.5, 0.0, 4.0];

/// Branin over the continuous part plus a lookup penalty on one
/// three-valued categorical variable.
pub fn mixed_toy(x: &[f64], category: usize) -> Result<f64> {
    check_bounds(x, &BRANIN_BOUNDS)?;
    let penalty = MIXED_TOY_PENALTY
        .get(category)
        .ok_or_else(|| Error::InvalidParameter(format!("mixed_toy category {category} not in 0..3")))?;
    Ok(branin_unchecked(x) + penalty)
}

/// A continuous benchmark addressable by name.
#[derive(Clone, Debug, PartialEq)]
pub enum Benchmark {
    Exp2d,
    /// `negate = false` evaluates the sum without the leading minus.
    Michalewicz {
        dim: usize,
        m: u32,
        negate: bool,
    },
    Branin,
    Hartmann6,
    MountainCar(MountainCar),
}

impl Benchmark {
    pub fn name(&self) -> String {
        match self {
            Benchmark::Exp2d => "exp2d".into(),
            Benchmark::Michalewicz { dim, m, .. } => format!("michalewicz({dim},{m})"),
            Benchmark::Branin => "branin".into(),
            Benchmark::Hartmann6 => "hartmann6".into(),
            Benchmark::MountainCar(_) => "mountain_car".into(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Benchmark::Exp2d | Benchmark::Branin => 2,
            Benchmark::Michalewicz { dim, .. } => *dim,
            Benchmark::Hartmann6 => 6,
            Benchmark::MountainCar(_) => 7,
        }
    }

    /// Known optimum, where one has been established numerically.
    pub fn optimum(&self) -> Option<KnownOptimum> {
        match self {
            Benchmark::Exp2d => {
                Some(KnownOptimum { x: vec![-std::f64::consts::FRAC_1_SQRT_2, 0.0], value: -0.428_881_942_480_353_4 })
            }
            Benchmark::Branin => Some(KnownOptimum { x: vec![PI, 2.275], value: 0.397_887_357_729_738_2 }),
            Benchmark::Hartmann6 => Some(KnownOptimum {
                x: vec![0.201_689_506, 0.150_010_698, 0.476_873_979, 0.275_332_431, 0.311_651_617, 0.657_300_535],
                value: -3.322_368_011_415_514,
            }),
            Benchmark::Michalewicz { dim: 2, m: 10, negate: true } => Some(KnownOptimum {
                x: vec![2.202_905_520, std::f64::consts::FRAC_PI_2],
                value: -1.801_303_410_098_553,
            }),
            Benchmark::Michalewicz { dim: 5, m: 10, negate: true } => Some(KnownOptimum {
                x: vec![2.202_905_518, 1.570_796_325, 1.284_991_570, 1.923_058_470, 1.720_469_773],
                value: -4.687_658_179_088_15,
            }),
            _ => None,
        }
    }
}

impl Objective for Benchmark {
    fn bounds(&self) -> Vec<(f64, f64)> {
        match self {
            Benchmark::Exp2d => EXP2D_BOUNDS.to_vec(),
            Benchmark::Michalewicz { dim, .. } => vec![(0.0, PI); *dim],
            Benchmark::Branin => BRANIN_BOUNDS.to_vec(),
            Benchmark::Hartmann6 => vec![(0.0, 1.0); 6],
            Benchmark::MountainCar(_) => vec![(0.0, 1.0); 7],
        }
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match self {
            Benchmark::Exp2d => exp2d(x),
            Benchmark::Michalewicz { m, negate, .. } => michalewicz_signed(x, *m, *negate),
            Benchmark::Branin => branin(x),
            Benchmark::Hartmann6 => hartmann6(x),
            Benchmark::MountainCar(mc) => mc.episode(x).map(|e| -e.total_reward),
        }
    }
}

/// The mixed toy problem as a [`MixedObjective`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedToy;

impl MixedToy {
    pub const BEST_CATEGORY: usize = 1;

    pub fn optimum(&self) -> KnownOptimum {
        KnownOptimum { x: vec![PI, 2.275, Self::BEST_CATEGORY as f64], value: 0.397_887_357_729_738_2 }
    }
}

impl MixedObjective for MixedToy {
    fn bounds(&self) -> Vec<(f64, f64)> {
        BRANIN_BOUNDS.to_vec()
    }

    fn cardinalities(&self) -> Vec<usize> {
        vec![MIXED_TOY_PENALTY.len()]
    }

    fn evaluate(&self, x: &[f64], categories: &[usize]) -> Result<f64> {
        if categories.len() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: categories.len() });
        }
        mixed_toy(x, categories[0])
    }
}

/// Any registered problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Problem {
    Continuous(Benchmark),
    Mixed(MixedToy),
}

impl Problem {
    pub fn name(&self) -> String {
        match self {
            Problem::Continuous(b) => b.name(),
            Problem::Mixed(_) => "mixed_toy".into(),
        }
    }
}

/// Registered benchmark names with a short description.
pub fn list_benchmarks() -> Vec<(&'static str, &'static str)> {
    vec![
        ("exp2d", "x1 exp(-x1^2 - x2^2) on [-2, 18]^2"),
        ("michalewicz(d,m)", "Michalewicz on [0, pi]^d with steepness m (default d=10, m=10)"),
        ("branin", "Branin-Hoo on [-5, 10] x [0, 15]"),
        ("hartmann6", "Hartmann 6-D on [0, 1]^6"),
        ("mountain_car", "mountain-car perceptron policy, 7 weights in [0, 1], returns steps to goal"),
        ("mixed_toy", "Branin plus a 3-category penalty (hierarchical only)"),
    ]
}

/// Looks a problem up by name: `exp2d`, `michalewicz`, `michalewicz(d,m)`,
/// `branin`, `hartmann6`, `mountain_car`, `mixed_toy`.
pub fn benchmark(name: &str) -> Result<Problem> {
    let name = name.trim();
    let b = match name {
        "exp2d" => Benchmark::Exp2d,
        "branin" => Benchmark::Branin,
        "hartmann6" => Benchmark::Hartmann6,
        "mountain_car" => Benchmark::MountainCar(MountainCar::default()),
        "mixed_toy" => return Ok(Problem::Mixed(MixedToy)),
        "michalewicz" => Benchmark::Michalewicz { dim: 10, m: 10, negate: true },
        _ => {
            let args = name
                .strip_prefix("michalewicz(")
                .and_then(|s| s.strip_suffix(')'))
                .ok_or_else(|| Error::Config(format!("unknown benchmark '{name}'")))?;
            let parts: Vec<&str> = args.split(',').map(str::trim).collect();
            let parse =
                |s: &str| s.parse::<usize>().map_err(|_| Error::Config(format!("bad michalewicz argument '{s}'")));
            match parts.as_slice() {
                [d, m] => {
                    let (dim, m) = (parse(d)?, parse(m)?);
                    if dim == 0 || m == 0 {
                        return Err(Error::Config("michalewicz needs d >= 1 and m >= 1".into()));
                    }
                    Benchmark::Michalewicz { dim, m: m as u32, negate: true }
                }
                _ => return Err(Error::Config(format!("expected michalewicz(d,m), got '{name}'"))),
            }
        }
    };
    Ok(Problem::Continuous(b))
}
