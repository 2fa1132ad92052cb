//! `regdfo`: single runs, benchmark matrices and profile plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use regdfo::bench::{
    compute_np, data_alpha_grid, data_profile, emit_profiles, performance_alpha_grid, performance_profile,
    read_records_jsonl, run_benchmark, write_np_csv, write_records_jsonl, Execution, NpEntry, RunRecord, RunSpec,
    SolverId,
};
use regdfo::smoothing::{self, SmoothingConfig, SmoothingEvent};
use regdfo::testbed::{get_problem, list_problems, NoiseModel, NoisyProblem};
use regdfo::{solver, Regularizer};

#[derive(Parser)]
#[command(name = "regdfo", version, about = "Derivative-free regularized least squares")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem and print the trajectory.
    Solve(SolveArgs),
    /// Run the (solver, problem, seed) matrix and write records.
    Bench(BenchArgs),
    /// Turn records into N_p tables and profile plots.
    Profiles(ProfileArgs),
}

#[derive(Args)]
struct Common {
    /// `l1:<lambda>`, `zero`, `ball:<r>` or `box:<lo>,<hi>`.
    #[arg(long, default_value = "l1:1")]
    reg: String,
    /// `none`, `mult:<sigma>` or `add:<sigma>`.
    #[arg(long, default_value = "none")]
    noise: String,
    /// Budget is this many times (n + 1) evaluations.
    #[arg(long = "budget-mult", default_value_t = 100)]
    budget_mult: usize,
    /// File of `key=value` lines overriding solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value = "dfolsr")]
    solver: SolverId,
    /// Problem name.
    #[arg(long, alias = "problems")]
    problem: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated solver ids.
    #[arg(long, value_delimiter = ',', default_value = "dfolsr,dfolssr")]
    solver: Vec<SolverId>,
    /// Comma-separated problem names or `all`.
    #[arg(long, default_value = "all")]
    problems: String,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Tolerances for the CSV summary.
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-5,1e-7")]
    tau: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Run cells one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
    /// Exit nonzero when any cell fails.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ProfileArgs {
    /// Records written by `bench`.
    #[arg(long)]
    records: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-5,1e-7")]
    tau: Vec<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Largest alpha on the data-profile axis.
    #[arg(long, default_value_t = 100.0)]
    max_alpha: f64,
}

fn load_config(path: Option<&Path>) -> Result<SmoothingConfig> {
    let mut cfg = SmoothingConfig::default();
    if let Some(path) = path {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), i + 1))?;
            cfg.set(k, v).with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn problem_list(spec: &str) -> Result<Vec<String>> {
    if spec.trim() == "all" {
        return Ok(list_problems().into_iter().map(String::from).collect());
    }
    let names: Vec<String> = spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        bail!("empty problem list");
    }
    for name in &names {
        get_problem(name)?;
    }
    Ok(names)
}

fn tau_tag(tau: f64) -> String {
    format!("{tau:e}")
}

fn solve_cmd(args: SolveArgs) -> Result<ExitCode> {
    let problem = get_problem(&args.problem)?;
    let h: Regularizer = args.common.reg.parse()?;
    let noise: NoiseModel = args.common.noise.parse()?;
    let mut cfg = load_config(args.common.config.as_deref())?;
    cfg.inner.max_evals = args.common.budget_mult * (problem.n + 1);
    let mut noisy = NoisyProblem::new(&problem, noise.with_seed(args.seed));
    println!("{:>6} {:>8} {:>16} {:>12} {:>12} {:>12}", "k", "phase", "phi", "delta", "rho", "eta");
    let print = |p: &solver::Progress<'_>| {
        println!(
            "{:>6} {:>8} {:>16.9e} {:>12.4e} {:>12.4e} {:>12.4e}",
            p.k,
            format!("{:?}", p.phase).to_lowercase(),
            p.phi,
            p.delta,
            p.rho,
            p.eta_bar
        )
    };
    let use_smoothing = args.solver == SolverId::Dfolssr && h.lipschitz(problem.n) > 0.0;
    let result = if use_smoothing {
        smoothing::solve_with_callback(&mut noisy, &problem.x0, &h, &cfg, |e| match e {
            SmoothingEvent::Outer { j, gamma, mu } => println!("# outer {j}: gamma = {gamma:e}, mu = {mu:e}"),
            SmoothingEvent::Inner(p) => print(p),
        })?
        .solve
    } else {
        solver::solve_with_callback(&mut noisy, &problem.x0, &h, &cfg.inner, print)?
    };
    println!("termination: {:?}", result.termination);
    println!("evaluations: {}", result.history.len());
    println!("phi_best: {:.12e}", result.phi_best);
    println!("x_best: {:?}", result.x_best.as_slice());
    Ok(ExitCode::SUCCESS)
}

fn write_summary(records: &[RunRecord], taus: &[f64], out: &Path) -> Result<Vec<NpEntry>> {
    let mut all = Vec::new();
    for &tau in taus {
        all.extend(compute_np(records, tau)?);
    }
    write_np_csv(&all, &out.join("np.csv"))?;
    Ok(all)
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let mut spec = RunSpec::new(
        args.solver.clone(),
        problem_list(&args.problems)?,
        args.common.reg.parse()?,
    );
    spec.noise = args.common.noise.parse()?;
    spec.seeds = args.seeds;
    spec.budget_mult = args.common.budget_mult;
    spec.config = load_config(args.common.config.as_deref())?;
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let records = run_benchmark(&spec, exec)?;
    fs::create_dir_all(&args.out)?;
    let jsonl = args.out.join("records.jsonl");
    write_records_jsonl(&records, &jsonl)?;
    write_summary(&records, &args.tau, &args.out)?;

    let failed: Vec<&RunRecord> = records.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!("cell failed: {} {} seed {}: {}", r.solver, r.problem, r.seed, r.error.as_deref().unwrap_or(""));
    }
    let violations: usize = records.iter().map(|r| r.audit_violations.len()).sum();
    println!(
        "{} records ({} failed, {} audit violations) written to {}",
        records.len(),
        failed.len(),
        violations,
        args.out.display()
    );
    if args.strict && !failed.is_empty() {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn profiles_cmd(args: ProfileArgs) -> Result<ExitCode> {
    let records = read_records_jsonl(&args.records)?;
    if records.is_empty() {
        eprintln!("warning: no records in {}; nothing written", args.records.display());
        return Ok(ExitCode::SUCCESS);
    }
    fs::create_dir_all(&args.out)?;
    write_summary(&records, &args.tau, &args.out)?;
    let data_grid = data_alpha_grid(args.max_alpha);
    let mut curves = Vec::new();
    for &tau in &args.tau {
        let entries = compute_np(&records, tau)?;
        curves.extend(data_profile(&entries, &data_grid));
        let worst = entries
            .iter()
            .filter_map(|e| e.np)
            .max()
            .unwrap_or(1)
            .max(2) as f64;
        curves.extend(performance_profile(&entries, &performance_alpha_grid(worst, 200)));
        for c in curves.iter().filter(|c| c.tau == tau) {
            println!(
                "{} tau={} {}: final fraction {:.3}",
                c.kind,
                tau_tag(tau),
                c.solver,
                c.fraction.last().copied().unwrap_or(0.0)
            );
        }
    }
    let paths = emit_profiles(&curves, &args.out)?;
    if paths.is_empty() {
        eprintln!("warning: empty curve set; no plots written");
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(a) => solve_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Profiles(a) => profiles_cmd(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
