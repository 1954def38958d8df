use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rheoflow::harness::{
    cmd_convergence, cmd_defect_study, cmd_relative_energy, cmd_simulate, cmd_verify, parse_config,
    ConvergencePlan, Manifest,
};
use rheoflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "rheoflow",
    version,
    about = "Galerkin solver and verification harness for implicitly constituted fluids"
)]
struct Cli {
    /// Seed for randomized property suites.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Also write SVG plots next to the CSV output.
    #[arg(long, global = true)]
    svg: bool,
    /// Output directory.
    #[arg(long, global = true, default_value = "rheoflow-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver and write the energy ledger.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a property suite: rheology, measure, transport or basis.
    Verify { suite: String },
    /// Compare a Newtonian single-mode run with its exact solution.
    RelativeEnergy {
        #[arg(long)]
        config: PathBuf,
    },
    /// Concentration defect of an oscillating sequence.
    DefectStudy {
        /// Oscillation frequencies, increasing.
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        n: Vec<usize>,
        /// Amplitude direction, orthogonal to e1.
        #[arg(
            long,
            value_delimiter = ',',
            num_args = 3,
            default_value = "0,1,0",
            allow_negative_numbers = true
        )]
        w: Vec<f64>,
        /// Cells per axis of the coarse partition.
        #[arg(long, default_value_t = 4)]
        cells: usize,
        /// Use the sequence itself as the limit, which must give zero.
        #[arg(long)]
        identical: bool,
    },
    /// dt, alpha and kmax refinement ladders over a base config.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of dt, alpha, kmax.
        #[arg(long, value_delimiter = ',', default_value = "dt,alpha,kmax")]
        ladders: Vec<String>,
    },
}

fn report(manifest: &Manifest, out: Option<&Path>) -> u8 {
    for c in &manifest.checks {
        println!("{}", c.line());
    }
    if let Some(dir) = out {
        println!("outputs in {}", dir.display());
    }
    if manifest.all_pass() {
        0
    } else {
        1
    }
}

fn execute(cli: Cli) -> Result<u8> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { config } => {
            let cfg = parse_config(&config)?;
            let (m, _) = cmd_simulate(&cfg, out, cli.svg)?;
            Ok(report(&m, Some(out)))
        }
        Command::Verify { suite } => {
            let m = cmd_verify(&suite, cli.seed, Some(out))?;
            Ok(report(&m, None))
        }
        Command::RelativeEnergy { config } => {
            let cfg = parse_config(&config)?;
            let (m, _) = cmd_relative_energy(&cfg, out, cli.svg)?;
            Ok(report(&m, Some(out)))
        }
        Command::DefectStudy {
            n,
            w,
            cells,
            identical,
        } => {
            let w: [f64; 3] = w
                .try_into()
                .map_err(|_| Error::Usage("--w expects three comma-separated numbers".into()))?;
            let (m, _) = cmd_defect_study(&n, w, cells, identical, out)?;
            Ok(report(&m, Some(out)))
        }
        Command::Convergence { config, ladders } => {
            let mut plan = ConvergencePlan {
                dt: false,
                alpha: false,
                kmax: false,
            };
            for l in &ladders {
                match l.as_str() {
                    "dt" => plan.dt = true,
                    "alpha" => plan.alpha = true,
                    "kmax" => plan.kmax = true,
                    other => {
                        return Err(Error::Usage(format!(
                            "unknown ladder `{other}` (expected dt, alpha, kmax)"
                        )))
                    }
                }
            }
            let cfg = parse_config(&config)?;
            let (m, _) = cmd_convergence(&cfg, plan, out)?;
            Ok(report(&m, Some(out)))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
