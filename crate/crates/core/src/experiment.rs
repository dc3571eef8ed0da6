//! Repeated-run experiments: configuration, seeded repeats on a worker pool,
//! trace files, aggregate convergence curves and a manifest.
//!
//! Layout of an output directory:
//!
//! ```text
//! manifest.json                    resolved config, its SHA-256, seeds, timings
//! traces/<method>/run_000.jsonl    one JSON record per evaluation
//! aggregate_<method>.csv           eval_index,median,q25,q75,mean,std
//! ```
//!
//! Trace files carry no timing, so reruns of the same config produce
//! byte-identical traces. Timing lives in the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{benchmark, Problem};
use crate::driver::{
    domain, run, Method, MixedObjective, Objective, RunConfig, RunError, RunResult, Trace, TraceRecord,
};
use crate::error::{Error, Result};

/// Environment variable holding the worker count used by the CLI.
pub const WORKERS_ENV: &str = "SPARTAN_WORKERS";

fn default_repeats() -> usize {
    20
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// A comparison of one or more methods on a single benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registered benchmark name, e.g. `branin` or `michalewicz(5,10)`.
    pub benchmark: String,
    /// One run configuration per method; their `seed` fields are replaced by
    /// the per-repeat seeds.
    pub methods: Vec<RunConfig>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Base seed from which per-repeat seeds are derived.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the config and resolves the benchmark.
    pub fn validate(&self) -> Result<Problem> {
        let problem = benchmark(&self.benchmark)?;
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        let budget = self.methods[0].budget;
        let mut seen = Vec::new();
        for m in &self.methods {
            if seen.contains(&m.method) {
                return Err(Error::Config(format!("method {} listed twice", m.method)));
            }
            seen.push(m.method);
            if m.budget != budget {
                return Err(Error::Config("all methods must share the same budget".into()));
            }
            let objective_bounds = match &problem {
                Problem::Continuous(b) => b.bounds(),
                Problem::Mixed(p) => p.bounds(),
            };
            match (&problem, m.method) {
                (Problem::Continuous(_), Method::Bo | Method::Sbo) | (Problem::Mixed(_), Method::Hierarchical) => {}
                (p, method) => return Err(Error::Config(format!("method {method} cannot run on {}", p.name()))),
            }
            let mut resolved = m.clone();
            resolved.bounds = Some(domain(m, objective_bounds)?);
            resolved.validate()?;
        }
        Ok(problem)
    }

    /// SHA-256 of the canonical JSON form of the config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of repeat `index` under base seed `base`; shared by all methods.
pub fn repeat_seed(base: u64, index: usize) -> u64 {
    splitmix64(base ^ splitmix64(index as u64))
}

/// Per-evaluation statistics of `y_best` across repeats.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (zero for a single repeat).
    pub std: Vec<f64>,
}

impl AggregateCurve {
    pub fn len(&self) -> usize {
        self.median.len()
    }

    pub fn is_empty(&self) -> bool {
        self.median.is_empty()
    }

    /// CSV with header `eval_index,median,q25,q75,mean,std`; `eval_index`
    /// counts evaluations from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eval_index,median,q25,q75,mean,std\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                self.median[i],
                self.q25[i],
                self.q75[i],
                self.mean[i],
                self.std[i]
            );
        }
        out
    }
}

/// Quantile by linear interpolation between order statistics of a sorted
/// sample (position `(n − 1)·q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates incumbent sequences of equal length.
pub fn aggregate(incumbents: &[Vec<f64>]) -> Result<AggregateCurve> {
    let first =
        incumbents.first().ok_or_else(|| Error::InvalidParameter("aggregate needs at least one trace".into()))?;
    let n = first.len();
    if let Some(bad) = incumbents.iter().find(|t| t.len() != n) {
        return Err(Error::LengthMismatch { expected: n, got: bad.len() });
    }
    let mut curve = AggregateCurve::default();
    let k = incumbents.len() as f64;
    for i in 0..n {
        let mut col: Vec<f64> = incumbents.iter().map(|t| t[i]).collect();
        col.sort_by(f64::total_cmp);
        let mean = col.iter().sum::<f64>() / k;
        let var = if col.len() > 1 { col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
        curve.median.push(quantile_sorted(&col, 0.5));
        curve.q25.push(quantile_sorted(&col, 0.25));
        curve.q75.push(quantile_sorted(&col, 0.75));
        curve.mean.push(mean);
        curve.std.push(var.sqrt());
    }
    Ok(curve)
}

/// A trace record without timing, as written to trace files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub iteration: usize,
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<usize>,
    pub y: f64,
    pub y_best: f64,
}

impl From<&TraceRecord> for TraceLine {
    fn from(r: &TraceRecord) -> Self {
        Self { iteration: r.iteration, x: r.x.clone(), categories: r.categories.clone(), y: r.y, y_best: r.y_best }
    }
}

/// Serializes a trace as JSON lines.
pub fn trace_to_jsonl(trace: &Trace) -> String {
    let mut out = String::new();
    for r in &trace.records {
        out.push_str(&serde_json::to_string(&TraceLine::from(r)).expect("trace line serializes"));
        out.push('\n');
    }
    out
}

/// Parses a JSON-lines trace file.
pub fn read_trace(path: &Path) -> Result<Vec<TraceLine>> {
    let text = fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub repeat: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub best_y: Option<f64>,
    pub cpu_seconds: f64,
    pub wall_seconds: f64,
    /// Mean process CPU seconds per post-design iteration.
    pub cpu_seconds_per_iteration: f64,
    pub trace_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
}

/// Outcome of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub curves: BTreeMap<Method, AggregateCurve>,
    pub traces: BTreeMap<Method, Vec<Trace>>,
}

fn design_size(cfg: &RunConfig) -> usize {
    match (cfg.method, cfg.hierarchical) {
        (Method::Hierarchical, Some(h)) => cfg.initial_design.points * h.inner,
        _ => cfg.initial_design.points,
    }
}

/// Runs every method for every repeat on a pool of `workers` threads
/// (all available cores when `None`) and writes the artifacts.
///
/// When a run fails on an objective error its partial trace is still
/// written and the error is returned after all artifacts are on disk.
pub fn run_experiment(config: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    let problem = config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        builder = builder.num_threads(w.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let jobs: Vec<(usize, usize)> =
        (0..config.repeats).flat_map(|r| (0..config.methods.len()).map(move |m| (m, r))).collect();
    let outcomes: Vec<(usize, usize, u64, RunResult)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, r)| {
                let seed = repeat_seed(config.seed, r);
                let cfg = RunConfig { seed, ..config.methods[m].clone() };
                (m, r, seed, run(&cfg, &problem))
            })
            .collect()
    });

    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    let mut runs = Vec::new();
    let mut traces: BTreeMap<Method, Vec<Trace>> = BTreeMap::new();
    let mut first_error: Option<Error> = None;
    for (m, r, seed, outcome) in outcomes {
        let method_cfg = &config.methods[m];
        let method = method_cfg.method;
        let (trace, error) = match outcome {
            Ok(t) => (t, None),
            Err(e) => {
                let RunError { error, partial } = *e;
                let msg = error.to_string();
                if first_error.is_none() {
                    first_error = Some(error);
                }
                (partial, Some(msg))
            }
        };
        let dir = out.join("traces").join(method.as_str());
        fs::create_dir_all(&dir)?;
        let file = format!("traces/{}/run_{r:03}.jsonl", method.as_str());
        fs::write(out.join(&file), trace_to_jsonl(&trace))?;
        let p = design_size(method_cfg);
        let iter_cpu: Vec<f64> = trace.records.iter().skip(p).map(|rec| rec.cpu_seconds).collect();
        runs.push(RunSummary {
            method,
            repeat: r,
            seed,
            evaluations: trace.len(),
            best_y: trace.best_y(),
            cpu_seconds: trace.total_cpu_seconds(),
            wall_seconds: trace.total_wall_seconds(),
            cpu_seconds_per_iteration: if iter_cpu.is_empty() {
                0.0
            } else {
                iter_cpu.iter().sum::<f64>() / iter_cpu.len() as f64
            },
            trace_file: file,
            error,
        });
        traces.entry(method).or_default().push(trace);
    }

    let mut curves = BTreeMap::new();
    for (method, ts) in &traces {
        let inc: Vec<Vec<f64>> = ts.iter().map(Trace::incumbents).collect();
        match aggregate(&inc) {
            Ok(curve) => {
                fs::write(out.join(format!("aggregate_{}.csv", method.as_str())), curve.to_csv())?;
                curves.insert(*method, curve);
            }
            // Partial traces of failed runs have unequal lengths; the run
            // error is reported below instead.
            Err(_) if first_error.is_some() => {}
            Err(e) => return Err(e),
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.hash(),
        config: config.clone(),
        runs,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    if let Some(e) = first_error {
        return Err(e);
    }
    Ok(ExperimentResult { output_dir: out.clone(), manifest, curves, traces })
}

/// Recomputes aggregate files from the traces under `dir` and returns one
/// curve per method directory.
pub fn aggregate_dir(dir: &Path) -> Result<BTreeMap<String, AggregateCurve>> {
    let traces_dir = dir.join("traces");
    let mut out = BTreeMap::new();
    let mut methods: Vec<PathBuf> =
        fs::read_dir(&traces_dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    methods.sort();
    for m in methods {
        let name = m.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut files: Vec<PathBuf> = fs::read_dir(&m)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        files.sort();
        let inc = files
            .iter()
            .map(|f| read_trace(f).map(|lines| lines.iter().map(|l| l.y_best).collect()))
            .collect::<Result<Vec<Vec<f64>>>>()?;
        if inc.is_empty() {
            continue;
        }
        let curve = aggregate(&inc)?;
        fs::write(dir.join(format!("aggregate_{name}.csv")), curve.to_csv())?;
        out.insert(name, curve);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("no traces found under {}", traces_dir.display())));
    }
    Ok(out)
}

/// Process exit code for an error: 2 for invalid configuration, 3 for an
/// objective failure, 1 otherwise.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Json(_) | Error::InvalidParameter(_) | Error::DimensionMismatch { .. } => 2,
        Error::Objective(_) => 3,
        _ => 1,
    }
}
