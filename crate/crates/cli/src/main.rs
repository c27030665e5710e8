use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thermsynth::config::Config;
use thermsynth::mixture::{table_regimes, MixtureSpec};
use thermsynth::pipeline::Experiment;
use thermsynth::toy::write_toy_experiment;
use thermsynth::{Error, Result};

/// Visible-to-thermal synthesis and pedestrian detection experiments.
#[derive(Parser, Debug)]
#[command(name = "thermsynth", version)]
struct Cli {
    /// Print the ablation regime labels and exit.
    #[arg(long, global = true)]
    list_regimes: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Experiment configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` entry of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for every artifact of the run.
    #[arg(long)]
    out: PathBuf,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug, Clone)]
struct WithRegime {
    #[command(flatten)]
    common: Common,
    /// Regime label such as `real`, `combined` or `mixed-80-20`; defaults
    /// to the `mixture.regime` entry.
    #[arg(long)]
    regime: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the visible-to-thermal translator.
    TrainGan(Common),
    /// Translate every training frame with the trained generator.
    Synthesize(Common),
    /// Write the training manifest for one regime.
    BuildMixture(WithRegime),
    /// Fine-tune the detector on one regime.
    TrainDetector(WithRegime),
    /// Evaluate a regime's detector on the test manifest.
    Evaluate(WithRegime),
    /// Train and evaluate every regime and write the summary table.
    Ablation(Common),
    /// Generate a procedural paired dataset and a matching experiment config.
    MakeToy {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        train_frames: usize,
        #[arg(long, default_value_t = 32)]
        test_frames: usize,
    },
}

/// `println!` that tolerates a closed stdout (e.g. piping into `head`).
macro_rules! say {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

fn open(c: &Common) -> Result<Experiment> {
    let mut config = Config::load(&c.config)?;
    config.apply_overrides(&c.overrides)?;
    Experiment::open(config, &c.out, c.seed)
}

fn regime(exp: &Experiment, label: &Option<String>) -> Result<MixtureSpec> {
    let mut spec = exp.mixture_spec()?;
    if let Some(l) = label {
        let sampling = spec.sampling;
        spec = MixtureSpec::from_label(l, exp.seed).map_err(|e| Error::Argument(e.to_string()))?;
        spec.sampling = sampling;
    }
    Ok(spec)
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::TrainGan(c) => {
            let state = open(&c)?.cmd_train_gan()?;
            say!("trained translator for {} steps", state.step);
        }
        Command::Synthesize(c) => {
            let m = open(&c)?.cmd_synthesize()?;
            say!("synthesized {} frames", m.len());
        }
        Command::BuildMixture(r) => {
            let exp = open(&r.common)?;
            let spec = regime(&exp, &r.regime)?;
            let m = exp.cmd_build_mixture(&spec)?;
            say!("{}: {} frames -> {}", spec.label(), m.len(), exp.mixture_path(&spec).display());
        }
        Command::TrainDetector(r) => {
            let exp = open(&r.common)?;
            let spec = regime(&exp, &r.regime)?;
            let ck = exp.cmd_train_detector(&spec)?;
            say!(
                "{}: train loss {:.4} -> {:.4}",
                spec.label(),
                ck.history.initial_train_loss,
                ck.history.final_train_loss
            );
        }
        Command::Evaluate(r) => {
            let exp = open(&r.common)?;
            let spec = regime(&exp, &r.regime)?;
            let report = exp.cmd_evaluate(&spec)?;
            for s in report.subsets() {
                say!("{}\tlamr {:.2}%", s.name, 100.0 * s.lamr);
            }
        }
        Command::Ablation(c) => {
            let exp = open(&c)?;
            exp.cmd_ablation()?;
            let table = exp.out.join("ablation.tsv");
            let text = std::fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?;
            let _ = std::io::stdout().write_all(text.as_bytes());
        }
        Command::MakeToy {
            out,
            seed,
            train_frames,
            test_frames,
        } => {
            let cfg = write_toy_experiment(&out, train_frames, test_frames, seed)?;
            say!("{}", cfg.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if cli.list_regimes {
        for spec in table_regimes(0) {
            say!("{}", spec.label());
        }
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("no command given; see --help");
        return ExitCode::from(2);
    };
    match run(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
