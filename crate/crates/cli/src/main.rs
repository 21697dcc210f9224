//! `lsot` — generate OT instances, solve them (exact, entropic, or
//! low-rank-plus-sparse), evaluate error bounds, run the numerical
//! verification suites, and produce benchmark CSVs.
//!
//! Exit codes: 0 success, 1 error, 2 solver reported non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lsot_core::bench::{bench_threads, outcome_to_csv, run_scenario, BenchScenario};
use lsot_core::bounds::{measure_bound_gap, theorem_bound, BoundVariant, Decomposition};
use lsot_core::entropic::{default_eta, sinkhorn_solve_traced, SinkhornTraceRow};
use lsot_core::io;
use lsot_core::solver::{ialm, AlmConfig, GradientPath, Mode, SolveReport};
use lsot_core::verify::run_suite;
use lsot_core::{
    gen_permutation_instance, gen_planted_instance, gen_points_instance, oracle_tiny,
    solve_exact, Error,
};

#[derive(Parser)]
#[command(name = "lsot", version, about = "Optimal transport with low-rank-plus-sparse plans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Solve an instance with one of the solvers
    Solve(SolveArgs),
    /// Evaluate the approximation-error bound on a planted instance
    Bound(BoundArgs),
    /// Run a named verification suite
    Verify(VerifyArgs),
    /// Run a benchmark scenario and emit a CSV
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum GenKind {
    /// Uniform marginals with a 0/1 cost built from a random permutation
    Permutation {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Planted decomposition with known rank and sparsity
    Planted {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long)]
        rho: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Point clouds with a factored squared-Euclidean cost
    Points {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Sinkhorn,
    Lsot,
    Lot,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathArg {
    Dense,
    Factored,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(value_enum)]
    method: Method,
    #[arg(long)]
    instance: PathBuf,
    /// Report JSON destination (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trace CSV destination
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    // low-rank-plus-sparse options
    #[arg(long, default_value_t = 2)]
    rank: usize,
    /// KKT target for lsot/lot (default 1e-2); accuracy target for
    /// sinkhorn (default 0.05·‖C‖∞)
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    beta0: f64,
    #[arg(long, default_value_t = 3.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    w0: f64,
    #[arg(long, default_value_t = 20)]
    t_max: usize,
    #[arg(long, default_value_t = 200_000)]
    s_max: usize,
    #[arg(long, default_value_t = 2_000)]
    bcd_max_iter: usize,
    #[arg(long, value_enum, default_value_t = PathArg::Factored)]
    path: PathArg,
    /// Use α(x_{t+1}) instead of α(x_t) in the dual update
    #[arg(long)]
    dual_at_next: bool,
    // entropic options
    /// Regularization weight; derived from --epsilon when omitted
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 500_000)]
    max_iter: usize,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    r: usize,
    #[arg(long)]
    rho: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Theorem1)]
    variant: VariantArg,
    /// Sweep r = 0..=r* and rho over {0..=rho*+1} instead of one point
    #[arg(long)]
    sweep: bool,
    /// Also run warm-started solves and report measured gaps
    #[arg(long)]
    solve: bool,
    #[arg(long, default_value_t = 1e-2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Theorem1,
    Corollary2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct VerifyArgs {
    /// gradients | convexity | projection | oracle | bounds | all
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario JSON; the standard grid when omitted
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Gen { kind } => {
            let inst = match kind {
                GenKind::Permutation { n, seed, ref out } => {
                    let inst = gen_permutation_instance(n, seed)?;
                    io::save_instance(out, &inst)?;
                    inst
                }
                GenKind::Planted {
                    m,
                    n,
                    r,
                    rho,
                    seed,
                    ref out,
                } => {
                    let inst = gen_planted_instance(m, n, r, rho, seed)?;
                    io::save_instance(out, &inst)?;
                    inst
                }
                GenKind::Points {
                    m,
                    n,
                    d,
                    seed,
                    ref out,
                } => {
                    let inst = gen_points_instance(m, n, d, seed)?;
                    io::save_instance(out, &inst)?;
                    inst
                }
            };
            println!(
                "wrote {} ({}x{}, cost {})",
                inst.name,
                inst.m(),
                inst.n(),
                match inst.cost {
                    lsot_core::CostMatrix::Dense(_) => "dense",
                    lsot_core::CostMatrix::Factored { .. } => "factored",
                }
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve(args) => cmd_solve(args),
        Command::Bound(args) => cmd_bound(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

#[derive(Serialize)]
struct ExactReport {
    method: &'static str,
    value: f64,
    support_size: usize,
    iterations: usize,
    tiny_oracle_value: Option<f64>,
    plan: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct SinkhornReport {
    method: &'static str,
    value: f64,
    eta: f64,
    iterations: usize,
    marginal_error: f64,
    plan: Vec<Vec<f64>>,
}

fn cmd_solve(args: SolveArgs) -> anyhow::Result<ExitCode> {
    let inst = io::load_instance(&args.instance)?;
    match args.method {
        Method::Exact => {
            let sol = solve_exact(&inst)?;
            let tiny = if inst.m() + inst.n() <= lsot_core::exact::TINY_GUARD {
                Some(oracle_tiny(&inst)?)
            } else {
                None
            };
            let report = ExactReport {
                method: "exact",
                value: sol.value,
                support_size: sol.support_size,
                iterations: sol.iterations,
                tiny_oracle_value: tiny,
                plan: matrix_rows(sol.plan.entries()),
            };
            emit(&args.out, &io::to_json_string(&report)?)?;
            println!("exact value {:.12e}", sol.value);
            Ok(ExitCode::SUCCESS)
        }
        Method::Sinkhorn => {
            let eta = args.eta.unwrap_or_else(|| {
                let target = args.epsilon.unwrap_or(0.05 * inst.cost.inf_norm());
                default_eta(target, inst.m(), inst.n())
            });
            let mut trace_rows = Vec::new();
            let result = sinkhorn_solve_traced(
                &inst,
                eta,
                args.tol,
                args.max_iter,
                args.trace.as_ref().map(|_| &mut trace_rows),
            );
            match result {
                Ok(res) => {
                    let report = SinkhornReport {
                        method: "sinkhorn",
                        value: res.value,
                        eta: res.eta,
                        iterations: res.iterations,
                        marginal_error: res.marginal_error,
                        plan: matrix_rows(res.plan.entries()),
                    };
                    emit(&args.out, &io::to_json_string(&report)?)?;
                    if let Some(path) = &args.trace {
                        std::fs::write(path, sinkhorn_trace_csv(&trace_rows))?;
                    }
                    println!(
                        "sinkhorn value {:.12e} (marginal error {:.3e}, {} sweeps)",
                        res.value, res.marginal_error, res.iterations
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(Error::SinkhornNonConvergence {
                    residual,
                    iterations,
                    best,
                }) => {
                    let report = SinkhornReport {
                        method: "sinkhorn",
                        value: best.value,
                        eta: best.eta,
                        iterations,
                        marginal_error: best.marginal_error,
                        plan: matrix_rows(best.plan.entries()),
                    };
                    emit(&args.out, &io::to_json_string(&report)?)?;
                    if let Some(path) = &args.trace {
                        std::fs::write(path, sinkhorn_trace_csv(&trace_rows))?;
                    }
                    eprintln!("did not converge: residual {residual:.3e} after {iterations} sweeps");
                    Ok(ExitCode::from(2))
                }
                Err(e) => Err(e.into()),
            }
        }
        Method::Lsot | Method::Lot => {
            let mut config = AlmConfig::new(args.rank);
            config.epsilon = args.epsilon.unwrap_or(1e-2);
            config.lambda = args.lambda;
            config.beta0 = args.beta0;
            config.sigma = args.sigma;
            config.w0 = args.w0;
            config.t_max = args.t_max;
            config.s_max = args.s_max;
            config.bcd_max_iter = args.bcd_max_iter;
            config.seed = args.seed;
            config.mode = if args.method == Method::Lot {
                Mode::Lot
            } else {
                Mode::Lsot
            };
            config.gradient_path = match args.path {
                PathArg::Dense => GradientPath::Dense,
                PathArg::Factored => GradientPath::Factored,
            };
            config.dual_step_at_next = args.dual_at_next;
            let (report, code) = match ialm(&inst, &config) {
                Ok(r) => (r, ExitCode::SUCCESS),
                Err(Error::NotConverged { report, .. }) => (*report, ExitCode::from(2)),
                Err(e) => return Err(e.into()),
            };
            write_solve_report(&args, &report)?;
            println!(
                "{} objective {:.12e} feasibility {:.3e} stationarity {:.3e} ({})",
                if config.mode == Mode::Lot { "lot" } else { "lsot" },
                report.objective,
                report.feasibility,
                report.kkt_stationarity,
                if report.converged { "certified" } else { "not converged" },
            );
            Ok(code)
        }
    }
}

fn write_solve_report(args: &SolveArgs, report: &SolveReport) -> anyhow::Result<()> {
    emit(&args.out, &report.to_json()?)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, report.trace_csv())?;
    }
    Ok(())
}

fn matrix_rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn sinkhorn_trace_csv(rows: &[SinkhornTraceRow]) -> String {
    let mut out = String::from("iteration,marginal_error,value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.iteration,
            io::fmt_f64(r.marginal_error),
            io::fmt_f64(r.value)
        ));
    }
    out
}

#[derive(Serialize)]
struct BoundRow {
    r: usize,
    rho: usize,
    rhs: f64,
    delta: Option<f64>,
    informative: Option<bool>,
    measured_gap: Option<f64>,
}

fn cmd_bound(args: BoundArgs) -> anyhow::Result<ExitCode> {
    let inst = io::load_instance(&args.instance)?;
    let parts = inst.planted.as_ref().ok_or(Error::NoCertificate)?;
    let dec = Decomposition::from_planted(parts);
    let variant = match args.variant {
        VariantArg::Theorem1 => BoundVariant::Theorem1,
        VariantArg::Corollary2 => BoundVariant::Corollary2,
    };
    let grid: Vec<(usize, usize)> = if args.sweep {
        let mut g = Vec::new();
        for r in 0..=dec.r_star() {
            for rho in 0..=dec.rho_star() + 1 {
                g.push((r, rho));
            }
        }
        g
    } else {
        vec![(args.r, args.rho)]
    };
    let mut rows = Vec::new();
    for (r, rho) in grid {
        if args.solve && r >= 1 {
            let m = measure_bound_gap(&inst, r, rho, args.epsilon, args.seed)?;
            rows.push(BoundRow {
                r,
                rho,
                rhs: m.bound.rhs,
                delta: Some(m.bound.delta),
                informative: Some(m.bound.informative),
                measured_gap: Some(m.gap),
            });
        } else {
            match theorem_bound(&dec, r, rho, &inst.cost, variant) {
                Ok(rep) => rows.push(BoundRow {
                    r,
                    rho,
                    rhs: rep.rhs,
                    delta: Some(rep.delta),
                    informative: Some(rep.informative),
                    measured_gap: None,
                }),
                Err(Error::AllZero) => rows.push(BoundRow {
                    r,
                    rho,
                    rhs: f64::INFINITY,
                    delta: None,
                    informative: Some(false),
                    measured_gap: None,
                }),
                Err(e) => return Err(e.into()),
            }
        }
    }
    match args.format {
        FormatArg::Json => emit(&args.out, &io::to_json_string(&rows)?)?,
        FormatArg::Csv => {
            let mut csv = String::from("r,rho,rhs,measured_gap\n");
            for row in &rows {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    row.r,
                    row.rho,
                    io::fmt_f64(row.rhs),
                    row.measured_gap.map(io::fmt_f64).unwrap_or_default()
                ));
            }
            emit(&args.out, &csv)?;
        }
    }
    println!("evaluated {} grid point(s)", rows.len());
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let reports = run_suite(&args.suite, args.seed)?;
    let all_passed = reports.iter().all(|r| r.passed());
    emit(&args.out, &io::to_json_string(&reports)?)?;
    for r in &reports {
        println!(
            "{}: {} ({} cases, {} failures, max err {:.3e})",
            r.suite,
            if r.passed() { "pass" } else { "FAIL" },
            r.cases,
            r.failures,
            r.max_err
        );
    }
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_bench(args: BenchArgs) -> anyhow::Result<ExitCode> {
    let scenario: BenchScenario = match &args.scenario {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => BenchScenario::standard(),
    };
    let outcome = run_scenario(&scenario, bench_threads())?;
    emit(&args.out, &outcome_to_csv(&outcome))?;
    println!(
        "factored slope {:.3}, dense slope {:.3}",
        outcome.factored_slope, outcome.dense_slope
    );
    Ok(ExitCode::SUCCESS)
}
