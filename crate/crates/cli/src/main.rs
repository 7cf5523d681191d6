//! Command-line front door: generate group parameters, run configured
//! auctions, verify transcripts, and emit the bundled worked example.
//!
//! Exit codes: 0 success; 1 configuration, file or usage problems;
//! 2 auction aborted; 3 transcript verification failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use auction_core::group::generate_group_params;
use auction_core::harness::{run_auction, verify_transcript_text};
use auction_core::protocol::{Mode, Outcome, PaymentRule};

use config::{example_config, RunConfigFile};

#[derive(Parser)]
#[command(
    name = "knapsack-auction",
    about = "Sealed-bid knapsack auction simulator: no auctioneer, verifiable transcripts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Honest,
    Malicious,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Self {
        match arg {
            ModeArg::Honest => Mode::Honest,
            ModeArg::Malicious => Mode::MaliciousDetecting,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate fresh group parameters and write them as a JSON document.
    GenParams {
        /// Bit length of the subgroup order q (minimum 8).
        #[arg(long = "q-bits")]
        q_bits: u64,
        /// Seed string; identical seeds reproduce identical parameters.
        #[arg(long)]
        seed: String,
        /// Output path for the parameter file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one auction from a config file.
    Run {
        /// Run config (JSON; see `example-config`).
        #[arg(long)]
        config: PathBuf,
        /// Write the line-delimited transcript here.
        #[arg(long = "transcript-out")]
        transcript_out: Option<PathBuf>,
        /// Override the config's protocol mode.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Replay a transcript's public checks offline.
    Verify {
        /// Transcript file produced by `run`.
        #[arg(long)]
        transcript: PathBuf,
        /// The config the run used.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's protocol mode, as in `run`.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Emit the bundled worked-example run config.
    ExampleConfig {
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::GenParams { q_bits, seed, out } => cmd_gen_params(q_bits, &seed, &out),
        Command::Run {
            config,
            transcript_out,
            mode,
        } => cmd_run(&config, transcript_out.as_deref(), mode.map(Mode::from)),
        Command::Verify {
            transcript,
            config,
            mode,
        } => cmd_verify(&transcript, &config, mode.map(Mode::from)),
        Command::ExampleConfig { out } => cmd_example_config(out.as_deref()),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn cmd_gen_params(q_bits: u64, seed: &str, out: &Path) -> Result<u8, String> {
    let params = generate_group_params(q_bits, seed.as_bytes()).map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(&params).map_err(|e| e.to_string())?;
    std::fs::write(out, text + "\n").map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    println!(
        "wrote group parameters (q = {} bits) to {}",
        q_bits,
        out.display()
    );
    Ok(0)
}

fn cmd_run(
    config_path: &Path,
    transcript_out: Option<&Path>,
    mode: Option<Mode>,
) -> Result<u8, String> {
    let file = RunConfigFile::load(config_path).map_err(|e| e.to_string())?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = file.resolve(base, mode).map_err(|e| e.to_string())?;
    let payment_rule = resolved.config.payment_rule;
    let (report, transcript) =
        run_auction(&resolved.config, &resolved.bids, resolved.script.as_ref())
            .map_err(|e| e.to_string())?;
    if let Some(path) = transcript_out {
        std::fs::write(path, transcript.to_text())
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    for detection in &report.detections {
        eprintln!(
            "detected: {} (culprit {}, reported by {})",
            detection.check, detection.culprit, detection.reporter
        );
    }
    match report.outcome {
        Outcome::Winner {
            highest,
            payer,
            paid,
        } => {
            let second = match report.announced_second {
                Some(s) => s.to_string(),
                None => "none".to_string(),
            };
            println!("highest={highest} second={second} winner=B{payer}");
            let rule = match payment_rule {
                PaymentRule::FirstPrice => "first-price",
                PaymentRule::SecondPrice => "second-price",
            };
            println!("B{payer} pays {paid} tokens under the {rule} rule");
            Ok(0)
        }
        Outcome::Aborted { reason, culprit } => {
            match culprit {
                Some(party) => eprintln!("aborted: {} (culprit {party})", reason.tag()),
                None => eprintln!("aborted: {}", reason.tag()),
            }
            Ok(2)
        }
    }
}

fn cmd_verify(
    transcript_path: &Path,
    config_path: &Path,
    mode: Option<Mode>,
) -> Result<u8, String> {
    let file = RunConfigFile::load(config_path).map_err(|e| e.to_string())?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let resolved = file.resolve(base, mode).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(transcript_path)
        .map_err(|e| format!("cannot read {}: {e}", transcript_path.display()))?;
    let report = verify_transcript_text(&text, &resolved.config).map_err(|e| e.to_string())?;
    print!("{}", report.render());
    if report.all_passed() {
        Ok(0)
    } else {
        Ok(3)
    }
}

fn cmd_example_config(out: Option<&Path>) -> Result<u8, String> {
    let text = serde_json::to_string_pretty(&example_config()).map_err(|e| e.to_string())?;
    match out {
        Some(path) => {
            std::fs::write(path, text + "\n")
                .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            println!("wrote example run config to {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(0)
}
