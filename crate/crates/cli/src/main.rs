//! `agcsim` command-line front end.
//!
//! Stages run in order, each reading the artifacts of the previous one from
//! the output directory:
//!
//! ```text
//! agcsim sweep -> synth -> split -> train -> eval -> report
//! ```
//!
//! `flip` only needs the sweep output; `all` runs everything.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use agcsim::config::ExperimentConfig;
use agcsim::pipeline;
use agcsim::runtime::Mode;

#[derive(Parser, Debug)]
#[command(name = "agcsim", version, about = "ML-assisted AGC receiver simulation pipeline")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label every sweep configuration with its optimal gain class.
    Sweep,
    /// Build the synthetic packet signal from the labeled dataset.
    Synth,
    /// Cross-validation splits and sliding windows.
    Split,
    /// Train one model per cross-validation repeat.
    Train,
    /// Test-set accuracy against the majority baseline.
    Eval,
    /// PER versus interferer level.
    Report {
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Preamble/payload flip experiment over the labeled dataset.
    Flip,
    /// Run every stage.
    All {
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Reference,
    Scenario4,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::Reference => vec![Mode::Reference],
            ModeArg::Scenario4 => vec![Mode::Scenario4],
            ModeArg::Both => vec![Mode::Reference, Mode::Scenario4],
        }
    }
}

fn load_config(cli: &Cli) -> agcsim::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> agcsim::Result<Vec<PathBuf>> {
    let cfg = load_config(cli)?;
    let out = cfg.out_dir.clone();
    log::info!("config hash {}, seed {}, output {}", cfg.hash(), cfg.seed, out.display());
    match &cli.command {
        Command::Sweep => pipeline::cmd_sweep(&cfg, &out),
        Command::Synth => pipeline::cmd_synth(&cfg, &out),
        Command::Split => pipeline::cmd_split(&cfg, &out),
        Command::Train => pipeline::cmd_train(&cfg, &out),
        Command::Eval => pipeline::cmd_eval(&cfg, &out),
        Command::Report { mode } => pipeline::cmd_report(&cfg, &out, &mode.modes()),
        Command::Flip => {
            let (report, paths) = pipeline::cmd_flip(&cfg, &out)?;
            match report.flip_fraction {
                Some(f) => println!(
                    "flip: {}/{} qualifying configs recovered ({:.1}%, hardware reference {:.0}%)",
                    report.flipped,
                    report.qualifying,
                    100.0 * f,
                    100.0 * report.hardware_reference_fraction
                ),
                None => println!("flip: no qualifying configs among {}", report.configs_examined),
            }
            Ok(paths)
        }
        Command::All { mode } => pipeline::run_all(&cfg, &out, &mode.modes()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(paths) => {
            let mut stdout = std::io::stdout().lock();
            for p in paths {
                // a closed pipe (`| head`) is not a failure of the run
                if writeln!(stdout, "{}", p.display()).is_err() {
                    break;
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 3 })
        }
    }
}
