use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bilevel_cli::{ablate, ablation_series, emit_plot, mean_final, parse_config, selftest, train, Fault, PlotSpec, Series};
use bilevel_core::trainer::{RunConfig, Trainer};
use bilevel_core::worldmodel::{AblationMode, Checkpoint};
use bilevel_core::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_SELFTEST: u8 = 3;

/// Bi-level world model lab: train, evaluate, compare ablations, plot.
#[derive(Parser, Debug)]
#[command(name = "bilevel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set horizon=15`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one run and write metrics.csv, log.jsonl and checkpoint.bin.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `eval_episodes` of the configuration.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train every ablation mode for each seed and plot the comparison.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot learning curves from metrics CSVs.
    Plot {
        /// `label=path/to/metrics.csv`; repeat a label to add seeds.
        #[arg(long = "input", value_name = "LABEL=CSV")]
        inputs: Vec<String>,
        /// Output directory of `ablate`; adds one series per mode.
        #[arg(long)]
        ablation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.6)]
        ema: f64,
        #[arg(long, default_value = "env_steps")]
        x: String,
        #[arg(long, default_value = "eval_return")]
        y: String,
    },
    /// Run the fast invariant checks.
    Selftest {
        /// Break one component on purpose to see its check fail.
        #[arg(long)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    Kl,
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn load(cfg: &ConfigArgs) -> Result<RunConfig, Error> {
    parse_config(cfg.config.as_deref(), &cfg.overrides)
}

fn execute(command: Command) -> Result<u8, Error> {
    match command {
        Command::Train { cfg, out } => {
            let s = train(&load(&cfg)?, &out)?;
            println!(
                "mode {} seed {}: {} episodes, {} env steps, final evaluation return {:.4}",
                s.mode, s.seed, s.episodes, s.env_steps, s.final_eval
            );
        }
        Command::Eval { cfg, checkpoint, episodes } => {
            let cfg = load(&cfg)?;
            let n = episodes.unwrap_or(cfg.eval_episodes);
            let mut t = Trainer::new(cfg)?;
            t.restore(&Checkpoint::load(&checkpoint)?)?;
            println!("mean evaluation return over {n} episodes: {:.4}", t.evaluate(n)?);
        }
        Command::Ablate { cfg, seeds, out } => {
            let runs = ablate(&load(&cfg)?, &seeds, &out)?;
            for mode in AblationMode::ALL {
                if let Some(mean) = mean_final(&runs, mode) {
                    println!("{mode:<14} mean final evaluation return {mean:.4} over {} seeds", seeds.len());
                }
            }
        }
        Command::Plot { inputs, ablation, out, ema, x, y } => {
            let mut series: Vec<Series> = ablation.as_deref().map(ablation_series).unwrap_or_default();
            for input in &inputs {
                let (label, path) = input
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("--input `{input}` is not of the form label=path")))?;
                match series.iter_mut().find(|s| s.label == label) {
                    Some(s) => s.runs.push(path.into()),
                    None => series.push(Series { label: label.into(), runs: vec![path.into()] }),
                }
            }
            if series.is_empty() {
                return Err(Error::Config("nothing to plot: give --input or --ablation".into()));
            }
            let spec = PlotSpec { ema, title: format!("{y} vs {x}"), x, y, ..PlotSpec::default() };
            emit_plot(&series, &spec, &out, "curves")?;
            println!("wrote {}", out.join("curves.svg").display());
        }
        Command::Selftest { inject_fault } => {
            let report = selftest(inject_fault.map(|FaultArg::Kl| Fault::Kl));
            print!("{report}");
            if !report.passed() {
                return Ok(EXIT_SELFTEST);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
