use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dslad_bench::kernels::{Burgers, BurgersConfig, CASES};
use dslad_bench::{make_kernel, run, BenchReport, Kernel, Result, RunOptions};

/// Runs one benchmark kernel and reports timings, tape statistics and the
/// finite-difference gradient check.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(CASES))]
    case: String,
    /// Grid points per axis (burgers) or matrix dimension.
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Compare adjoints against central finite differences.
    #[arg(long)]
    check_gradient: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Timing repetitions; reported times are means.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    /// Burgers time step. Defaults to 0.1 dx capped by the stability limit.
    #[arg(long)]
    dt: Option<f64>,
    /// Burgers Reynolds number.
    #[arg(long)]
    reynolds: Option<f64>,
}

fn kernel(cli: &Cli) -> Result<Box<dyn Kernel>> {
    if cli.case != "burgers" || (cli.dt.is_none() && cli.reynolds.is_none()) {
        return make_kernel(&cli.case, cli.size, cli.steps, cli.seed);
    }
    let mut cfg = BurgersConfig::new(cli.size, cli.steps);
    if let Some(r) = cli.reynolds {
        cfg.reynolds = r;
        cfg.dt = (0.1 * cfg.dx).min(cfg.stability_limit());
    }
    if let Some(dt) = cli.dt {
        cfg.dt = dt;
    }
    Ok(Box::new(Burgers::new(cfg)?))
}

fn print_summary(r: &BenchReport) {
    println!("case {} size {} steps {}", r.case, r.size, r.steps);
    println!(
        "primal {:.6e} s  recording {:.6e} s  reversal {:.6e} s",
        r.primal_time_s, r.recording_time_s, r.reversal_time_s
    );
    println!("recording factor {:.3}  reversal factor {:.3}", r.recording_factor(), r.reversal_factor());
    println!(
        "statements {}  payload {} B  handles {} B  sizes {} B",
        r.tape.statement_count, r.tape.bytes_payload, r.tape.bytes_handles, r.tape.bytes_sizes
    );
    if let Some(g) = r.gradient_check {
        println!("gradient check max_rel_err {:.3e}  {}", g.max_rel_err, if g.pass { "pass" } else { "FAIL" });
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = kernel(&cli).and_then(|k| {
        let opts = RunOptions { check_gradient: cli.check_gradient, repeat: cli.repeat, seed: cli.seed };
        let report = run(k.as_ref(), opts)?;
        if let Some(path) = &cli.json {
            std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
        }
        Ok(report)
    });
    match result {
        Ok(report) => {
            print_summary(&report);
            for w in report.factor_warnings() {
                eprintln!("warning: {w}");
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
