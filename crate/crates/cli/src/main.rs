use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphspot::evaluator::EvalOptions;
use graphspot::plotting::TraceSettings;
use graphspot::spotter::{DEFAULT_CONF_THRESHOLD, DEFAULT_NMS_WINDOW_S};
use graphspot::trainer::TrainConfig;
use graphspot_cli::commands::{
    cmd_eval, cmd_generate, cmd_plot, cmd_spot, cmd_train, load_config, parse_classes,
    GenerateConfig, PlotRequest, SpotSettings, TrainArgs,
};
use graphspot_cli::replicate::{cmd_replicate, ReplicateConfig};
use graphspot_cli::CliError;

/// Event spotting on football tracking data.
#[derive(Parser)]
#[command(name = "graphspot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with train/, val/ and test/ splits.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes the checkpoint and `<name>.history.csv`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score matches and write curve and prediction CSVs.
    Spot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "match", required = true)]
        matches: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Window length, overriding the checkpoint's.
        #[arg(long)]
        window_s: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
        conf_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_NMS_WINDOW_S)]
        nms_window_s: f64,
    },
    /// Evaluate prediction CSVs against ground-truth match files, paired in
    /// order.
    Eval {
        #[arg(long, required = true)]
        predictions: Vec<PathBuf>,
        #[arg(long, required = true)]
        ground_truth: Vec<PathBuf>,
        /// Report JSON path; the table goes next to it as `.txt`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        include_zero_gt_classes: bool,
    },
    /// Render SVG figures.
    Plot(PlotArgs),
    /// Generate, train, spot, evaluate and plot a grid of pooling methods
    /// and window lengths.
    Replicate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: one per core).
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Args)]
struct PlotArgs {
    #[command(subcommand)]
    kind: PlotKind,
    /// Comma-separated class names to show (default: all).
    #[arg(long, global = true)]
    classes: Option<String>,
}

#[derive(Subcommand)]
enum PlotKind {
    /// Precision/recall panels from a report.
    Pr {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        delta_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class confidence traces with ground truth marked.
    Confidence {
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
        conf_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_NMS_WINDOW_S)]
        nms_window_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out, seed } => {
            let mut cfg: GenerateConfig = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_generate(&cfg, &out)?;
        }
        Command::Train {
            config,
            train,
            val,
            out,
            seed,
        } => {
            let mut cfg: TrainConfig = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_train(&TrainArgs {
                config: &cfg,
                train_dir: &train,
                val_dir: &val,
                out: &out,
            })?;
        }
        Command::Spot {
            checkpoint,
            matches,
            out,
            window_s,
            conf_threshold,
            nms_window_s,
        } => {
            let settings = SpotSettings {
                window_s,
                conf_threshold,
                nms_window_s,
            };
            cmd_spot(&checkpoint, &matches, &settings, &out)?;
        }
        Command::Eval {
            predictions,
            ground_truth,
            out,
            include_zero_gt_classes,
        } => {
            let options = EvalOptions {
                include_zero_gt_classes,
            };
            let (_, table) = cmd_eval(&predictions, &ground_truth, options, &out)?;
            print!("{table}");
        }
        Command::Plot(PlotArgs { kind, classes }) => {
            let classes = classes.as_deref().map(parse_classes).transpose()?;
            let (request, out) = match kind {
                PlotKind::Pr {
                    report,
                    delta_s,
                    out,
                } => (PlotRequest::Pr { report, delta_s }, out),
                PlotKind::Confidence {
                    curve,
                    ground_truth,
                    conf_threshold,
                    nms_window_s,
                    out,
                } => (
                    PlotRequest::Confidence {
                        curve,
                        ground_truth,
                        settings: TraceSettings {
                            nms_window_s,
                            threshold: conf_threshold,
                        },
                    },
                    out,
                ),
            };
            cmd_plot(&request, classes.as_deref(), &out)?;
        }
        Command::Replicate {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg: ReplicateConfig = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            let outcome = cmd_replicate(&cfg, &out)?;
            print!("{}", outcome.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
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
