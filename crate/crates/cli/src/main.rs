//! `gpu-rental`: plan fixed-width GPU rentals and replay job traces.
//!
//! Exit codes: 0 success, 1 validation failure, 2 unstable workload
//! (total load not below the budget), 3 I/O or parse error.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rental_core::optimizer::{budget_grid, DEFAULT_K_MAX};
use rental_core::{
    budget_timeseries, compare_policies, generate_trace_with, pareto_frontier, read_trace,
    simulate, solve_allocation, write_trace, ArrivalProcess, Policy, SimError, SolveError,
    SolverConfig, TraceError, WorkloadError, WorkloadSpec,
};

use crate::output::{fmt_num, rounded_json};

#[derive(Parser)]
#[command(
    name = "gpu-rental",
    version,
    about = "Budget-constrained GPU rental planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every speedup function and the stability condition.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Compute the optimal fixed width for each job type.
    Solve {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic arrival trace.
    GenTrace {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        jobs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Arrivals::Poisson)]
        arrivals: Arrivals,
    },
    /// Replay a trace under a policy and report measured metrics.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// optimal | fixed:k1,...,kM | uniform:k | cluster:C | srf:C,kcap
        #[arg(long)]
        policy: String,
        #[arg(long)]
        per_job: Option<PathBuf>,
        /// Write sampled K(t) as CSV.
        #[arg(long)]
        timeseries: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: f64,
    },
    /// Sweep the budget and emit the response-time frontier.
    Pareto {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        b_min: f64,
        #[arg(long)]
        b_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: f64,
    },
    /// Simulate several policies on one trace.
    Compare {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Policies separated by `;`, e.g. "optimal;uniform:1;srf:4,2".
        #[arg(long)]
        policies: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K_MAX)]
        k_max: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Arrivals {
    Poisson,
    Deterministic,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<WorkloadError> for Failure {
    fn from(e: WorkloadError) -> Self {
        match e {
            WorkloadError::Unstable { .. } => Self {
                code: 2,
                message: e.to_string(),
            },
            WorkloadError::Io(_) | WorkloadError::Parse(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Unstable { .. } => Self {
                code: 2,
                message: e.to_string(),
            },
            _ => Self::validation(e.to_string()),
        }
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::UnknownType { .. } => Self::validation(e.to_string()),
            _ => Self::io(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Trace(t) => t.into(),
            SimError::Parse(_) => Self::io(e.to_string()),
            _ => Self::validation(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = std::env::var("RENTAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult {
    match command {
        Command::Validate { spec } => validate(&input(&spec)?),
        Command::Solve { spec, k_max, out } => solve(&input(&spec)?, k_max, out.as_deref()),
        Command::GenTrace {
            spec,
            jobs,
            seed,
            out,
            arrivals,
        } => {
            let spec = load_spec(&input(&spec)?)?;
            let process = match arrivals {
                Arrivals::Poisson => ArrivalProcess::Poisson,
                Arrivals::Deterministic => ArrivalProcess::Deterministic,
            };
            let trace = generate_trace_with(&spec, jobs, seed, process);
            write_trace(&trace, output_path(&out)?).map_err(|e| Failure::io(e.to_string()))
        }
        Command::Simulate {
            spec,
            trace,
            policy,
            per_job,
            timeseries,
            step,
            k_max,
        } => {
            let spec_path = input(&spec)?;
            let trace_path = input(&trace)?;
            let per_job = per_job.as_deref().map(output_path).transpose()?;
            let timeseries = timeseries.as_deref().map(output_path).transpose()?;
            let spec = load_spec(&spec_path)?;
            let trace = read_trace(&trace_path)?;
            let policy = resolve_policy(&policy, &spec, k_max)?;
            let metrics = simulate(&trace, &spec, &policy)?;
            println!("{}", rounded_json(&metrics));
            if let Some(path) = per_job {
                write_file(&path, &output::per_job_csv(&metrics.per_job))?;
            }
            if let Some(path) = timeseries {
                let series = budget_timeseries(&trace, &spec, &policy, step)?;
                write_file(&path, &output::timeseries_csv(&series))?;
            }
            Ok(())
        }
        Command::Pareto {
            spec,
            b_min,
            b_max,
            points,
            out,
            k_max,
        } => {
            let spec = load_spec(&input(&spec)?)?;
            let out = output_path(&out)?;
            if !(b_min.is_finite() && b_max.is_finite() && b_min <= b_max) || points == 0 {
                return Err(Failure::validation(
                    "need b-min <= b-max and at least one point",
                ));
            }
            let budgets = budget_grid(b_min, b_max, points);
            let frontier =
                pareto_frontier(&spec, &budgets, &SolverConfig::default().with_k_max(k_max));
            for p in &frontier {
                if let Err(e) = &p.result {
                    eprintln!("budget {}: {e}", fmt_num(p.budget));
                }
            }
            write_file(&out, &output::frontier_csv(&frontier, spec.len()))?;
            match frontier.iter().find_map(|p| p.result.as_ref().err()) {
                Some(e) if frontier.iter().all(|p| p.result.is_err()) => Err(e.clone().into()),
                _ => Ok(()),
            }
        }
        Command::Compare {
            spec,
            trace,
            policies,
            out,
            k_max,
        } => {
            let spec_path = input(&spec)?;
            let trace_path = input(&trace)?;
            let out = output_path(&out)?;
            let spec = load_spec(&spec_path)?;
            let trace = read_trace(&trace_path)?;
            let names: Vec<&str> = policies
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .collect();
            let resolved = names
                .iter()
                .map(|p| resolve_policy(p, &spec, k_max))
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare_policies(&trace, &spec, &resolved)?;
            let rows: Vec<(&str, _)> = names
                .iter()
                .copied()
                .zip(table.iter().map(|(_, m)| m))
                .collect();
            write_file(&out, &output::comparison_csv(&rows))
        }
    }
}

fn validate(spec_path: &Path) -> CliResult {
    let spec = load_spec(spec_path)?;
    let mut failed = false;
    for (i, t) in spec.types().iter().enumerate() {
        let report = t.speedup.validate();
        println!("type {i} ({}): {}", t.name, t.speedup);
        print!("{report}");
        failed |= !report.is_valid();
    }
    let stable = spec.check_stability();
    match &stable {
        Ok(()) => println!(
            "stability: pass (load {} < budget {})",
            fmt_num(spec.total_load()),
            fmt_num(spec.budget())
        ),
        Err(e) => println!("stability: FAIL ({e})"),
    }
    if failed {
        return Err(Failure::validation("speedup axioms violated"));
    }
    stable.map_err(Failure::from)
}

fn solve(spec_path: &Path, k_max: f64, out: Option<&Path>) -> CliResult {
    let out = out.map(output_path).transpose()?;
    let spec = load_spec(spec_path)?;
    let alloc = solve_allocation(&spec, &SolverConfig::default().with_k_max(k_max))?;
    let doc = rounded_json(&alloc);
    println!("{doc}");
    if let Some(path) = out {
        write_file(&path, &format!("{doc}\n"))?;
    }
    Ok(())
}

/// `optimal` solves for the fixed widths from the workload itself.
fn resolve_policy(text: &str, spec: &WorkloadSpec, k_max: f64) -> Result<Policy, Failure> {
    if text.trim() == "optimal" {
        let alloc = solve_allocation(spec, &SolverConfig::default().with_k_max(k_max))?;
        return Ok(Policy::FixedWidth(alloc.ks));
    }
    let policy: Policy = text.parse()?;
    policy.check(spec.len())?;
    Ok(policy)
}

fn load_spec(path: &Path) -> Result<WorkloadSpec, Failure> {
    WorkloadSpec::load(path).map_err(|e| match e {
        WorkloadError::Io(_) | WorkloadError::Parse(_) => {
            Failure::io(format!("{}: {e}", path.display()))
        }
        other => other.into(),
    })
}

fn input(path: &Path) -> Result<PathBuf, Failure> {
    fs::canonicalize(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn output_path(path: &Path) -> Result<PathBuf, Failure> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let dir =
        fs::canonicalize(parent).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
    let name = path
        .file_name()
        .ok_or_else(|| Failure::io(format!("{}: not a file path", path.display())))?;
    Ok(dir.join(name))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    fs::write(path, contents).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}
