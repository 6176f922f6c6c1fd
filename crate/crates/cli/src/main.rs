use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tokenlab::scenario::{self, ScenarioError};

/// Run token-tracking scenarios and re-emit their analyses.
#[derive(Parser)]
#[command(name = "tokenlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario and write its output directory.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
    /// Regenerate linkage, audit and growth reports from a run directory.
    Report { dir: PathBuf },
}

fn fail(err: ScenarioError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, out, seed } => {
            let loaded = match scenario::load_file(&file, seed.is_some()) {
                Ok(l) => l,
                Err(e) => return fail(e),
            };
            match scenario::run(&loaded, seed, &out) {
                Ok(exec) => {
                    let accepted = exec.records.iter().filter(|r| r.outcome == "OK").count();
                    println!(
                        "{}: {} steps, {} accepted, {} ledger entries",
                        loaded.scenario.name,
                        exec.records.len(),
                        accepted,
                        exec.log.len()
                    );
                    if let Some(f) = &exec.failure {
                        eprintln!("unexpected outcome: {f}");
                    }
                    ExitCode::from(exec.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Validate { file } => match scenario::load_file(&file, false) {
            Ok(l) => {
                println!("ok: {} ({} steps)", l.scenario.name, l.scenario.script.len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Report { dir } => match scenario::report(&dir) {
            Ok(r) => {
                if let Some(l) = &r.linkage {
                    println!("linkage {}: {}/{} linked", l.mode, l.pairs_linked, l.pairs_total);
                }
                println!(
                    "ledger audit: {}",
                    if r.audit.ledger.is_clean() { "clean" } else { "violation" }
                );
                if let Some(e) = &r.audit.equivocation {
                    match e {
                        tokenlab::analysis::EquivocationAudit::Undetectable => {
                            println!("equivocation audit: UNDETECTABLE")
                        }
                        a => println!("equivocation audit: {} findings", a.findings().len()),
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
