use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ris_amc::error::{Error, Result};
use ris_amc::harness::{self, EvalSource, Scenario};
use ris_amc::impairments::Partition;
use ris_amc::ris::{RisConfiguration, User};

#[derive(Parser)]
#[command(name = "ris-amc", version, about = "Modulation classification behind a reconfigurable intelligent surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; built-in defaults when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let s = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        Ok(match self.seed {
            Some(seed) => s.with_seed(seed),
            None => s,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled, impaired dataset.
    Gen {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        frames_per_class: Option<usize>,
    },
    /// Train the classifier on a generated dataset.
    Train {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Write confusion matrices for a checkpoint.
    Evaluate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluate on a stored dataset.
        #[arg(long, conflicts_with_all = ["snr_db", "config"])]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test", requires = "dataset")]
        partition: String,
        /// Evaluate on fresh frames at this SNR.
        #[arg(long, allow_hyphen_values = true, conflicts_with = "config")]
        snr_db: Option<f64>,
        /// Evaluate through the RIS channel with this configuration (hex).
        #[arg(long, requires = "user")]
        config: Option<String>,
        #[arg(long)]
        user: Option<String>,
    },
    /// Search RIS configurations.
    Optimize {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// greedy, random or exhaustive.
        #[arg(long)]
        strategy: Option<String>,
        /// accuracy or gain.
        #[arg(long)]
        objective: Option<String>,
    },
    /// Time-frequency magnitudes of one dataset record.
    Spectrogram {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 128)]
        window: usize,
        #[arg(long, default_value_t = 64)]
        hop: usize,
    },
}

fn parse_user(s: &str) -> Result<User> {
    match s {
        "user1" | "1" => Ok(User::User1),
        "user2" | "2" => Ok(User::User2),
        _ => Err(Error::Config(format!("unknown user {s:?}; use user1 or user2"))),
    }
}

fn checked(s: Scenario) -> Result<Scenario> {
    s.validate()?;
    Ok(s)
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen {
            scenario,
            out,
            frames_per_class,
        } => {
            let mut s = scenario.load()?;
            if let Some(n) = frames_per_class {
                s.dataset.frames_per_class = n;
            }
            let d = harness::run_gen(&checked(s)?, &out)?;
            println!("wrote {} frames to {}", d.records.len(), out.display());
        }
        Command::Train {
            scenario,
            dataset,
            out,
            epochs,
        } => {
            let mut s = scenario.load()?;
            if let Some(e) = epochs {
                s.train.max_epochs = e;
            }
            let s = checked(s)?;
            let outcome = harness::run_train(&s, &dataset, &out, |r| {
                println!(
                    "epoch {:>2}  lr {:.4}  train loss {:.4}  train acc {:.4}  val acc {:.4}",
                    r.epoch, r.learning_rate, r.train_loss, r.train_accuracy, r.val_accuracy
                );
            })?;
            println!(
                "best epoch {} written to {}",
                outcome.best_epoch,
                out.join(harness::MODEL_FILE).display()
            );
        }
        Command::Evaluate {
            scenario,
            checkpoint,
            out,
            dataset,
            partition,
            snr_db,
            config,
            user,
        } => {
            let expected = scenario.scenario.is_some();
            let s = scenario.load()?;
            let model = harness::load_model(&checkpoint, expected.then_some(&s))?;
            let source = match (dataset, snr_db, config) {
                (Some(dir), _, _) => EvalSource::Dataset {
                    dir,
                    partition: Partition::parse(&partition)?,
                },
                (_, Some(snr), _) => EvalSource::Snr(snr),
                (_, _, Some(hex)) => {
                    let user = parse_user(user.as_deref().unwrap_or_default())?;
                    let bits = s.geometry_with_floor([0.0; 2]).pixel_count();
                    EvalSource::Channel {
                        user,
                        config: RisConfiguration::from_hex(&hex, bits)?,
                    }
                }
                _ => return Err(Error::Config("give one of --dataset, --snr-db or --config".into())),
            };
            let cm = harness::run_evaluate(&model, &s, &source, &out)?;
            println!("accuracy {:.4}", cm.accuracy());
        }
        Command::Optimize {
            scenario,
            checkpoint,
            out,
            strategy,
            objective,
        } => {
            let mut s = scenario.load()?;
            if let Some(v) = strategy {
                s.optimizer.strategy = v;
            }
            if let Some(v) = objective {
                s.optimizer.objective = v;
            }
            let s = checked(s)?;
            let model = harness::load_model(&checkpoint, Some(&s))?;
            let summary = harness::run_optimize(&model, &s, &out, |run| {
                let r = &run.result;
                print!(
                    "{}: best {:.4} after {} evaluations",
                    run.target.name(),
                    r.best_value,
                    r.evaluations
                );
                for (u, cm) in &run.report {
                    print!("  {u} {:.4}", cm.accuracy());
                }
                println!();
            })?;
            if let Some(c) = &summary.calibration {
                println!(
                    "calibrated noise floor {:?} dBm (chance edge {} dB, start {} dB)",
                    c.noise_floor_dbm, c.chance_edge_db, c.start_snr_db
                );
            }
        }
        Command::Spectrogram {
            dataset,
            index,
            out,
            window,
            hop,
        } => {
            harness::run_spectrogram(&dataset, index, &out, window, hop)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
