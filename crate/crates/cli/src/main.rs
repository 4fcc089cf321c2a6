use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rr_replay::SamplerKind;
use rr_replay_cli::bench::{cmd_bench, parse_sizes, BenchArgs};
use rr_replay_cli::simulate::{cmd_simulate, SimulateArgs};
use rr_replay_cli::verify::{cmd_verify, render};
use rr_replay_cli::CliError;

#[derive(Parser)]
#[command(
    name = "rr-replay",
    version,
    about = "Replay sampler simulation, verification and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-seed simulation and write sample-count statistics.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        sampler: Option<SamplerKind>,
        #[arg(long)]
        seeds: Option<usize>,
        /// Also write the per-seed count matrix.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named verification suite.
    Verify {
        suite: String,
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Measure per-minibatch sampling latency across buffer sizes.
    Bench {
        #[arg(long, default_value = "1e3,1e4,1e5,1e6")]
        sizes: String,
        #[arg(long, default_value = "rrc")]
        sampler: SamplerKind,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1.0)]
        secs: f64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate {
            config,
            preset,
            sampler,
            seeds,
            raw,
            out,
        } => {
            let outcome = cmd_simulate(&SimulateArgs {
                config,
                preset,
                sampler,
                seeds,
                raw,
                out,
            })?;
            let s = &outcome.summary;
            println!(
                "{} seeds, sampler {}, max count {}, conservation {}",
                s.seeds,
                s.sampler,
                s.max_count,
                if s.conservation.ok { "ok" } else { "VIOLATED" }
            );
            if let Some(o) = &s.oracle {
                println!("oracle: {}/{} ids within band", o.passed, o.checked);
            }
            for path in &outcome.manifest.outputs {
                println!("wrote {path}");
            }
            Ok(())
        }
        Command::Verify { suite, seeds } => {
            let report = cmd_verify(&suite, seeds)?;
            print!("{}", render(&report));
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Failed(report.suite.to_string()))
            }
        }
        Command::Bench {
            sizes,
            sampler,
            batch,
            secs,
        } => {
            let report = cmd_bench(&BenchArgs {
                sizes: parse_sizes(&sizes)?,
                sampler,
                batch,
                secs,
            })?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("serializable")
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
