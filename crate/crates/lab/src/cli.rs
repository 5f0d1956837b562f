//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wkahler_core::fixtures;

use crate::format::{to_json, write_atomic};
use crate::plot::{plotdata, View};
use crate::run::{apply, load_ledger, run, Overrides};
use crate::verify::verify;
use crate::{config, LabError};

#[derive(Debug, Parser)]
#[command(name = "wkahler-lab", version, about = "Weighted Kähler functionals on toric geometries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiments of a config and write the ledger.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// also evaluate the s-grid path of every functional
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        grid_scale: Option<f64>,
    },
    /// Diff two ledgers.
    Verify {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// write the diff report here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a plot-ready CSV view of a ledger.
    Plotdata {
        ledger: PathBuf,
        #[arg(long, value_enum)]
        view: View,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Named polytope fixtures.
    Fixtures {
        #[command(subcommand)]
        action: FixturesAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixturesAction {
    List,
}

fn emit(out: Option<PathBuf>, bytes: &[u8]) -> Result<(), LabError> {
    match out {
        Some(p) => write_atomic(&p, bytes),
        None => match std::io::stdout().write_all(bytes) {
            // a closed reader (`| head`) is not an error
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(LabError::Io(e.to_string())),
            _ => Ok(()),
        },
    }
}

pub fn dispatch(cli: Cli) -> Result<(), LabError> {
    match cli.command {
        Command::Run { config: path, out, seed, oracle, grid_scale } => {
            let cfg = apply(config::load(&path)?, &Overrides { out, seed, oracle, grid_scale })?;
            let o = run(&cfg)?;
            eprintln!("run {} -> {} ({} files)", &o.ledger.run_id[..12], o.out_dir.display(), o.files.len());
            if o.failures.is_empty() {
                Ok(())
            } else {
                Err(LabError::Invariant(o.failures))
            }
        }
        Command::Verify { a, b, tolerance, out } => {
            let r = verify(&load_ledger(&a)?, &load_ledger(&b)?, tolerance)?;
            emit(out, &to_json(&r))?;
            if r.pass {
                Ok(())
            } else {
                let bad: Vec<String> = r.rows.iter().filter(|d| !d.pass).map(|d| d.path.clone()).collect();
                Err(LabError::Invariant(bad))
            }
        }
        Command::Plotdata { ledger, view, out } => emit(out, &plotdata(&load_ledger(&ledger)?, view)?),
        Command::Fixtures { action: FixturesAction::List } => {
            let mut s = String::new();
            for n in fixtures::NAMES {
                s.push_str(&format!("{n:<10} {}\n", fixtures::describe(n)));
            }
            emit(None, s.as_bytes())
        }
    }
}

pub fn main() -> ExitCode {
    // clap exits 2 on usage errors by itself
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wkahler-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
