//! Seeded experiment sweeps and table emission.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{GaugeError, Result};
use crate::harness::descriptor::{ProblemDescriptor, ProblemType};
use crate::harness::instance::{Instance, Truth};
use crate::harness::metrics::{metric_rerr, metric_xerr, metric_xerr_vector};
use crate::linalg::{CMat, C64};
use crate::operator::AsymmetricMap;
use crate::recover::{solve_gauge, SolveMode, SolveOptions, SolveReport};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    /// Instances run on the rayon pool; falls back to sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ProblemDescriptor>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Box<ProblemDescriptor>),
        Many(Vec<ProblemDescriptor>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(p) => vec![*p],
        OneOrMany::Many(v) => v,
    })
}

fn default_threshold() -> f64 {
    1e-2
}

fn default_modes() -> Vec<SolveMode> {
    vec![SolveMode::Gauge]
}

fn default_instances() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(alias = "problem", deserialize_with = "one_or_many")]
    pub problems: Vec<ProblemDescriptor>,
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_modes")]
    pub modes: Vec<SolveMode>,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Record wall time per run. Off by default so tables are reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(problems: Vec<ProblemDescriptor>, instances: usize) -> Self {
        Self {
            problems,
            instances,
            threshold: default_threshold(),
            modes: default_modes(),
            seed_base: 0,
            out: None,
            timing: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 {
            return Err(GaugeError::Config("instance count must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(GaugeError::Config("success threshold must be positive".into()));
        }
        if self.problems.is_empty() || self.modes.is_empty() {
            return Err(GaugeError::Config("need at least one problem and one mode".into()));
        }
        for p in &self.problems {
            p.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: String,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub eta: f64,
    pub n: usize,
    pub instance: usize,
    pub status: String,
    pub iterations: usize,
    #[serde(rename = "nDFT")]
    pub n_dft: u64,
    #[serde(rename = "nDWT")]
    pub n_dwt: u64,
    #[serde(rename = "xErr")]
    pub x_err: f64,
    #[serde(rename = "rErr")]
    pub r_err: f64,
    pub gap: f64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: String,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub eta: f64,
    pub n: usize,
    pub runs: usize,
    #[serde(rename = "median_xErr")]
    pub median_x_err: f64,
    pub success_pct: f64,
    #[serde(rename = "total_nDFT")]
    pub total_n_dft: u64,
    #[serde(rename = "median_nDFT")]
    pub median_n_dft: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

/// Relative errors `(xErr, rErr)` of a factor against the instance truth.
///
/// For bilinear truths `xErr` is the vector error of `x1` against the scaled
/// top left singular vector of `Z1 Z2^*`, and `rErr` compares the complex
/// measurements.
pub fn score(inst: &Instance, z: &CMat) -> Result<(f64, f64)> {
    match &inst.truth {
        Truth::Lifted { x0 } => {
            let bhat = inst.prob.map.forward_factored(z)?;
            Ok((metric_xerr(x0, z), metric_rerr(&inst.prob.b, &bhat)))
        }
        Truth::Bilinear { x1, amap, emb, b, .. } => {
            let (z1, z2) = emb.split_factor(z);
            let bhat = amap.apply_forward(&z1, &z2);
            let xhat = &z1 * z2.adjoint();
            let svd = xhat.svd(true, false);
            let (i, s) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
            let u = svd.u.as_ref().expect("left vectors requested").column(i) * C64::from(s.sqrt());
            Ok((metric_xerr_vector(x1, &u.into_owned()), metric_rerr(b, &bhat)))
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

struct Job<'a> {
    problem: &'a ProblemDescriptor,
    instance: usize,
    mode: SolveMode,
}

fn run_job(cfg: &ExperimentConfig, base: &SolveOptions, job: &Job) -> RunRecord {
    let p = job.problem;
    let mut rec = RunRecord {
        mode: job.mode.label().to_string(),
        l: if p.kind == ProblemType::PhaseRetrieval { p.l } else { None },
        eta: p.eta.unwrap_or(0.0),
        n: p.size(),
        instance: job.instance,
        status: "error".into(),
        iterations: 0,
        n_dft: 0,
        n_dwt: 0,
        x_err: f64::INFINITY,
        r_err: f64::INFINITY,
        gap: f64::NAN,
        seconds: None,
    };
    let start = Instant::now();
    let seed = cfg.seed_base.wrapping_add(p.seed).wrapping_add(job.instance as u64);
    let outcome = p.build(seed).and_then(|inst| {
        let opts = p.options(base).with_mode(job.mode);
        let report: SolveReport = solve_gauge(&inst.prob, &opts, &mut |_| {})?;
        let (x_err, r_err) = score(&inst, &report.factor.z)?;
        Ok((report, x_err, r_err))
    });
    if let Ok((report, x_err, r_err)) = outcome {
        rec.status = report.status.label().to_string();
        rec.iterations = report.iterations;
        rec.n_dft = report.counts.dft;
        rec.n_dwt = report.counts.dwt;
        rec.x_err = x_err;
        rec.r_err = r_err;
        rec.gap = report.gap;
    }
    if cfg.timing {
        rec.seconds = Some(start.elapsed().as_secs_f64());
    }
    rec
}

fn aggregate(cfg: &ExperimentConfig, records: &[RunRecord]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for r in records {
        let key = (&r.mode, r.l, r.eta.to_bits(), r.n);
        if out.iter().any(|a| (&a.mode, a.l, a.eta.to_bits(), a.n) == key) {
            continue;
        }
        let group: Vec<&RunRecord> = records
            .iter()
            .filter(|s| (&s.mode, s.l, s.eta.to_bits(), s.n) == key)
            .collect();
        let mut xerr: Vec<f64> = group.iter().map(|s| s.x_err).collect();
        let mut ndft: Vec<f64> = group.iter().map(|s| s.n_dft as f64).collect();
        let successes = group.iter().filter(|s| s.x_err <= cfg.threshold).count();
        out.push(Aggregate {
            mode: r.mode.clone(),
            l: r.l,
            eta: r.eta,
            n: r.n,
            runs: group.len(),
            median_x_err: median(&mut xerr),
            success_pct: 100.0 * successes as f64 / group.len() as f64,
            total_n_dft: group.iter().map(|s| s.n_dft).sum(),
            median_n_dft: median(&mut ndft),
        });
    }
    out
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentTable> {
    run_experiment_with(cfg, &SolveOptions::default(), Execution::default())
}

pub fn run_experiment_with(cfg: &ExperimentConfig, base: &SolveOptions, exec: Execution) -> Result<ExperimentTable> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for problem in &cfg.problems {
        for mode in &cfg.modes {
            for instance in 0..cfg.instances {
                jobs.push(Job {
                    problem,
                    instance,
                    mode: *mode,
                });
            }
        }
    }
    let mut records: Vec<RunRecord> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(|j| run_job(cfg, base, j)).collect()
        }
        _ => jobs.iter().map(|j| run_job(cfg, base, j)).collect(),
    };
    records.sort_by(|a, b| {
        (&a.mode, a.n, a.l, a.eta.to_bits(), a.instance).cmp(&(&b.mode, b.n, b.l, b.eta.to_bits(), b.instance))
    });
    let aggregates = aggregate(cfg, &records);
    Ok(ExperimentTable { records, aggregates })
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| GaugeError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

impl ExperimentTable {
    pub fn records_csv(&self) -> Result<String> {
        csv_string(&self.records)
    }

    pub fn summary_csv(&self) -> Result<String> {
        csv_string(&self.aggregates)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Write `path`, `path.summary.csv`, and `path.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.records_csv()?)?;
        std::fs::write(sibling(path, "summary.csv"), self.summary_csv()?)?;
        std::fs::write(sibling(path, "json"), self.to_json()?)?;
        Ok(())
    }
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{ext}"))
}
