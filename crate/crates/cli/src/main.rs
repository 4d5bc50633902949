mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use kljn_core::analytic::{self, AnalyticReport, NullStatistic};
use kljn_core::protocol::{apply_defense, run_session, SessionSummary};
use kljn_core::sweep::{run_sweep, write_sweep_csv, SweepSpec};
use kljn_core::validate_config;

use args::{BetaArgs, Cli, Command, SessionFlags, SimulateArgs, SweepArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or values: exit 2.
    Usage(String),
    /// I/O and other runtime failures: exit 1.
    Runtime(String),
}

impl From<kljn_core::Error> for CliError {
    fn from(e: kljn_core::Error) -> Self {
        if e.is_usage() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analytic(f) => cmd_analytic(&f),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Beta(a) => cmd_beta(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")?;
    Ok(())
}

fn cmd_analytic(flags: &SessionFlags) -> Result<(), CliError> {
    let cfg = validate_config(flags.to_config()?)?;
    let rule = apply_defense(&cfg)?;
    let noise = kljn_core::NoiseSpec {
        beta: rule.beta,
        ..cfg.noise
    };
    let report = AnalyticReport::compute(&cfg.pair, &rule.cable(cfg.cable.r_c), &noise)?;
    print_json(&report)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = validate_config(args.session.to_config()?)?;
    let result = run_session(&cfg)?;
    if let Some(path) = &args.rounds_csv {
        let file = File::create(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        result.write_rounds_csv(BufWriter::new(file))?;
    }
    print_json(&SessionSummary::new(&cfg, &result))
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let spec = SweepSpec {
        parameter: args.param,
        values: args.values.clone(),
        base: args.session.to_config()?,
        attacks: args.attacks.iter().map(|&a| a.into()).collect(),
    };
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let rows = pool.install(|| run_sweep(&spec, !args.analytic_only))?;
    match &args.output {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            write_sweep_csv(BufWriter::new(file), &rows)?;
        }
        None => write_sweep_csv(io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn cmd_beta(args: &BetaArgs) -> Result<(), CliError> {
    let (pair, rc) = args.pair_and_rc()?;
    let published = analytic::beta_published(&pair, rc);
    let null = analytic::beta_null(&pair, rc, NullStatistic::NetPower)?;
    let mut out = io::stdout().lock();
    writeln!(out, "beta_paper = {published}")?;
    writeln!(out, "beta_null = {null}")?;
    Ok(())
}
