use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pvx::ledger::DecoySampler;
use pvx::observer::{calibrate, SyntheticConfig};
use pvx::policy::{render_matrix, Mode};
use pvx::scenario::{emit_report, parse_scenario, run_scenario, Format, EXIT_PARSE};

#[derive(Parser)]
#[command(name = "pvx", version, about = "Private value exchange simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and report on it.
    Run {
        file: PathBuf,
        /// Overrides the consensus seed declared in the file.
        #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
        seed: Option<u64>,
        #[arg(long, default_value = "text", value_parser = parse_format)]
        format: Format,
        /// Also write the structured report to this path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the policy allow/deny matrix of a mode.
    Matrix {
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
    },
    /// Measure linkability heuristics on a synthetic spending history.
    Attack {
        #[arg(long, value_parser = parse_sampler)]
        sampler: DecoySampler,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        ring_size: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_format(s: &str) -> Result<Format, String> {
    Format::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (expected supported or mediated)"))
}

fn parse_sampler(s: &str) -> Result<DecoySampler, String> {
    DecoySampler::parse(s)
        .ok_or_else(|| format!("unknown sampler `{s}` (expected uniform or age-biased)"))
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                code(EXIT_PARSE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run {
            file,
            seed,
            format,
            report,
        } => {
            let src = match std::fs::read_to_string(&file) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return code(EXIT_PARSE);
                }
            };
            let mut scenario = match parse_scenario(&src) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return code(EXIT_PARSE);
                }
            };
            if let Some(seed) = seed {
                scenario.consensus.seed = seed;
            }
            let result = run_scenario(&scenario);
            print!("{}", emit_report(&result, format));
            if let Some(path) = report {
                if let Err(e) = std::fs::write(&path, emit_report(&result, Format::Structured)) {
                    eprintln!("{}: {e}", path.display());
                    return code(EXIT_PARSE);
                }
            }
            code(result.exit_code())
        }
        Command::Matrix { mode } => {
            print!("{}", render_matrix(mode));
            ExitCode::SUCCESS
        }
        Command::Attack {
            sampler,
            ring_size,
            trials,
            seed,
        } => {
            let stats = calibrate(&SyntheticConfig::new(
                sampler,
                ring_size as usize,
                trials,
                seed,
            ));
            println!(
                "{:<16} {:>8} {:>9} {:>9} {:>8}",
                "heuristic", "trials", "accuracy", "baseline", "z"
            );
            for s in stats {
                println!(
                    "{:<16} {:>8} {:>9.4} {:>9.4} {:>+8.2}",
                    s.heuristic.as_str(),
                    s.trials,
                    s.accuracy,
                    s.baseline,
                    s.z
                );
            }
            ExitCode::SUCCESS
        }
    }
}
