use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use grac::harness::{
    run_constraint_audit, run_convergence, run_export_geometry, run_patch_test, ExperimentConfig, Report,
};
use grac::{Error, Result};

/// Experiments for the geometry-reconstruction a/c coupling on the triangular lattice.
#[derive(Parser, Debug)]
#[command(name = "grac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ghost forces and energy consistency at random homogeneous gradients.
    PatchTest(Common),
    /// Consistency-error rates of the modified a/c stress over a range of scales.
    Convergence(Common),
    /// Dimension of the force-consistent parameter space against the predicted count.
    ConstraintAudit(Common),
    /// Partition and parameter CSVs for every configured geometry.
    ExportGeometry(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for the random samples.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the quasicontinuum interface (V^i = V) instead of the configured parameters.
    #[arg(long)]
    qce: bool,
    /// Comma-separated scales for the convergence study, e.g. "16,32,64,128".
    #[arg(long)]
    scales: Option<String>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, String)> {
        let (mut cfg, source) = match &self.config {
            Some(path) => (ExperimentConfig::load(path)?, path.display().to_string()),
            None => (ExperimentConfig::default(), "defaults".to_string()),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(scales) = &self.scales {
            cfg.convergence.scales = scales
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|e| Error::Config(format!("--scales: {s:?}: {e}"))))
                .collect::<Result<_>>()?;
        }
        if self.qce {
            cfg.parameters.policy = grac::harness::Policy::Qce;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok((cfg, source))
    }
}

fn run(cli: &Cli) -> Result<Report> {
    let (Command::PatchTest(c) | Command::Convergence(c) | Command::ConstraintAudit(c) | Command::ExportGeometry(c)) =
        &cli.command;
    let (cfg, source) = c.load()?;
    let out = cfg.output_dir.clone();
    let out = out.as_deref();
    match &cli.command {
        Command::PatchTest(_) => run_patch_test(&cfg, c.qce, out, &source),
        Command::Convergence(_) => run_convergence(&cfg, out, &source).map(|s| s.report),
        Command::ConstraintAudit(_) => run_constraint_audit(&cfg, out, &source),
        Command::ExportGeometry(_) => run_export_geometry(&cfg, out, &source),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{report}");
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
