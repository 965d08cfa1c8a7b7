use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gaugeopt::harness::experiment::score;
use gaugeopt::harness::{run_checks, run_experiment_with, Execution, ExperimentConfig, ProblemDescriptor};
use gaugeopt::linalg::interleave;
use gaugeopt::recover::{solve_gauge, SolveMode, SolveOptions, SolveStatus};

#[derive(Parser)]
#[command(name = "gaugeopt", version, about = "Gauge-dual solver for low-rank trace and nuclear-norm problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and print the result as JSON.
    Solve(SolveArgs),
    /// Run a seeded sweep from a JSON config.
    Experiment(ExperimentArgs),
    /// Run the property and oracle suite.
    Check,
}

#[derive(Args, Clone)]
struct CommonArgs {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SolveMode>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    tol_gap: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// JSON problem descriptor; overrides --n/--L/--eta.
    #[arg(long)]
    problem: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "L")]
    l: Option<usize>,
    /// Noise level; selects a certified octanary instance.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: CommonArgs,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one JSON line per iteration.
    #[arg(long)]
    log_jsonl: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
    /// Run instances one at a time.
    #[arg(long)]
    sequential: bool,
}

fn parse_mode(s: &str) -> Result<SolveMode, String> {
    s.parse().map_err(|e: gaugeopt::GaugeError| e.to_string())
}

fn options(common: &CommonArgs) -> SolveOptions {
    let mut opts = SolveOptions::default();
    if let Some(m) = common.mode {
        opts.mode = m;
    }
    if let Some(t) = common.tol_feas {
        opts.tol_feas = t;
    }
    if let Some(t) = common.tol_gap {
        opts.tol_gap = t;
    }
    if let Some(k) = common.max_iter {
        opts.max_iter = k;
    }
    opts
}

#[derive(Serialize)]
struct SolveOutput {
    status: &'static str,
    iterations: usize,
    f: f64,
    gap: f64,
    residual: f64,
    #[serde(rename = "xErr")]
    x_err: f64,
    #[serde(rename = "rErr")]
    r_err: f64,
    #[serde(rename = "nDFT")]
    n_dft: u64,
    #[serde(rename = "nDWT")]
    n_dwt: u64,
    /// Interleaved `[re, im]` column-major factor entries.
    z: Vec<f64>,
    z_shape: [usize; 2],
    y: Vec<f64>,
}

fn run_solve(args: SolveArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let descriptor = match &args.problem {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => {
            let (Some(n), Some(l)) = (args.n, args.l) else {
                eprintln!("solve needs --problem or both --n and --L");
                return Ok(ExitCode::from(2));
            };
            match args.eta {
                Some(eta) => ProblemDescriptor::certified(n, l, eta),
                None => ProblemDescriptor::phase_retrieval(n, l),
            }
        }
    };
    if let Err(e) = descriptor.validate() {
        eprintln!("{e}");
        return Ok(ExitCode::from(2));
    }
    let inst = descriptor.build(descriptor.seed.wrapping_add(args.seed))?;
    let opts = options(&args.common);
    let opts = descriptor.options(&opts);
    let opts = match args.common.mode {
        Some(m) => opts.with_mode(m),
        None => opts,
    };

    let mut log: Option<BufWriter<File>> = args.log_jsonl.as_ref().map(File::create).transpose()?.map(BufWriter::new);
    let mut log_err = None;
    let report = solve_gauge(&inst.prob, &opts, &mut |entry| {
        if let Some(w) = log.as_mut() {
            let line = serde_json::to_string(entry).map_err(std::io::Error::other);
            if let Err(e) = line.and_then(|l| writeln!(w, "{l}")) {
                log_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    if let Some(mut w) = log {
        w.flush()?;
    }

    let (x_err, r_err) = score(&inst, &report.factor.z)?;
    let out = SolveOutput {
        status: report.status.label(),
        iterations: report.iterations,
        f: report.f,
        gap: report.gap,
        residual: report.residual,
        x_err,
        r_err,
        n_dft: report.counts.dft,
        n_dwt: report.counts.dwt,
        z: interleave(report.factor.z.as_slice()),
        z_shape: [report.factor.z.nrows(), report.factor.z.ncols()],
        y: report.y.as_slice().to_vec(),
    };
    let text = serde_json::to_string_pretty(&out)?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(if report.status == SolveStatus::MaxIter { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn run_experiment_cmd(args: ExperimentArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut cfg = match ExperimentConfig::from_json_file(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return Ok(ExitCode::from(2));
        }
    };
    if let Some(m) = args.common.mode {
        cfg.modes = vec![m];
    }
    let base = options(&args.common);
    let exec = if args.sequential { Execution::Sequential } else { Execution::Parallel };
    let table = run_experiment_with(&cfg, &base, exec)?;
    match args.out.or(cfg.out.clone()) {
        Some(path) => table.write(&path)?,
        None => print!("{}", table.records_csv()?),
    }
    eprint!("{}", table.summary_csv()?);
    Ok(ExitCode::SUCCESS)
}

fn run_check() -> ExitCode {
    let mut failed = 0;
    for c in run_checks() {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        if !c.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Solve(args) => run_solve(args),
        Command::Experiment(args) => run_experiment_cmd(args),
        Command::Check => Ok(run_check()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
