use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlp_cli::commands::{failed_checks, ComplexityReport, ConvergenceReport};
use mlp_cli::{cmd_complexity, cmd_converge, cmd_run, cmd_verify, CliError, Context, RunConfig};

#[derive(Parser)]
#[command(
    name = "mlp",
    version,
    about = "Multilevel Picard approximation of semi-linear heat equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate Y_{n,n}(0, ξ) once.
    Run(Common),
    /// RMSE, error bound and cost for n = 1..n_max.
    Converge(Common),
    /// Cost-error exponent, N_ε table and dimension sweep.
    Complexity(Common),
    /// Run the verification suite (uses a built-in config without --config).
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "MLP_SEED")]
    seed: Option<u64>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow n_max above the runaway-cost guard.
    #[arg(long)]
    i_know: bool,
    /// Write 0 in wall-time columns so outputs depend only on config and seed.
    #[arg(long)]
    no_timing: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let (common, verify) = match &command {
        Command::Run(c) | Command::Converge(c) | Command::Complexity(c) => (c, false),
        Command::Verify(c) => (c, true),
    };
    let config = match (&common.config, verify) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, true) => RunConfig::default(),
        (None, false) => return Err(CliError::Config("--config <file.json> is required".into())),
    };
    config.validate(common.i_know)?;
    let mut ctx = Context::new(&config, common.seed, common.out.clone());
    ctx.timing = !common.no_timing;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be ≥ 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| match command {
        Command::Run(_) => {
            let record = cmd_run(&config, &ctx)?;
            println!("{}", serde_json::to_string_pretty(&record).expect("serializable"));
            Ok(())
        }
        Command::Converge(_) => {
            let report = cmd_converge(&config, &ctx)?;
            print_convergence(&report);
            println!("wrote {}", ctx.out_dir.display());
            Ok(())
        }
        Command::Complexity(_) => {
            let report = cmd_complexity(&config, &ctx)?;
            print_complexity(&report);
            println!("wrote {}", ctx.out_dir.display());
            Ok(())
        }
        Command::Verify(_) => {
            let reports = cmd_verify(&config, &ctx)?;
            println!(
                "{:<24} {:>6} {:>14} {:>14} {:>11} {:>11}",
                "check", "result", "lhs", "rhs", "se_lhs", "se_rhs"
            );
            for r in &reports {
                println!(
                    "{:<24} {:>6} {:>14.6e} {:>14.6e} {:>11.3e} {:>11.3e}",
                    r.check,
                    if r.pass { "PASS" } else { "FAIL" },
                    r.lhs,
                    r.rhs,
                    r.se_lhs,
                    r.se_rhs
                );
            }
            let failed = failed_checks(&reports);
            if failed.is_empty() {
                println!("all {} checks passed", reports.len());
                Ok(())
            } else {
                Err(CliError::VerifyFailed(failed))
            }
        }
    })
}

fn print_convergence(report: &ConvergenceReport) {
    println!(
        "{}: reference {:.10} ± {:.2e} ({:?}), C = {:.6}",
        report.problem, report.reference.value, report.reference.uncertainty, report.reference.method, report.c_const
    );
    println!(
        "{:>3} {:>5} {:>12} {:>10} {:>12} {:>12} {:>10}",
        "n", "M_n", "rmse", "se", "bound", "normals", "uniforms"
    );
    for r in &report.rows {
        println!(
            "{:>3} {:>5} {:>12.5e} {:>10.2e} {:>12.5e} {:>12} {:>10}",
            r.n, r.m_n, r.rmse, r.se, r.bound, r.normals, r.uniforms
        );
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

fn print_complexity(report: &ComplexityReport) {
    print_convergence(&report.convergence);
    match (report.slope, report.slope_se) {
        (Some(s), Some(se)) => println!(
            "cost-error slope {s:.3} ± {se:.3} (asymptotic target {:.3}){}",
            report.slope_target,
            if report.reliable { "" } else { " [unreliable]" }
        ),
        _ => println!("cost-error slope unavailable (fewer than two positive RMSE values)"),
    }
    for e in &report.epsilons {
        println!(
            "ε = {:<8} N_ε(bound) = {:<6} empirical n = {}",
            e.epsilon,
            e.n_theory.map_or("-".into(), |v| v.to_string()),
            e.n_empirical.map_or("-".into(), |v| v.to_string())
        );
    }
    println!("exact normals per unit d: {}", report.exact_normals_per_d);
    for r in &report.sweep {
        println!(
            "d = {:<4} normals = {:<10} cost at target = {}{}",
            r.d,
            r.normals,
            r.cost_at_target.map_or("-".into(), |c| format!("{c:.4e}")),
            if r.extrapolated { " (extrapolated)" } else { "" }
        );
    }
    if let Some(fit) = report.dimension_fit {
        println!(
            "dimension exponent {:.3} (reference 1 + p(1 + δ) = {:.3})",
            fit.slope, report.dimension_target
        );
    }
}
