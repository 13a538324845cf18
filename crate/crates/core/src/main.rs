use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trayscan::config::PipelineConfig;
use trayscan::eval::{count_accuracy, EvalOptions};
use trayscan::pipeline::{
    evaluate_segmentation, load_counts_file, write_report, Pipeline, RunOptions, StageSummary,
};
use trayscan::{Error, Taxonomy};

const EXIT_CONFIG: u8 = 1;
const EXIT_NO_SUCCESS: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "trayscan",
    version,
    about = "Detect, crop and segment beetles in tray photographs"
)]
struct Cli {
    /// Pipeline config (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Only process trays whose id or file name matches this glob
    #[arg(long, global = true)]
    trays: Option<String>,
    /// Worker threads (tray-level parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Skip trays whose stage already completed in the manifest
    #[arg(long, global = true)]
    resume: bool,
    /// Output root (overrides the config)
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Iterative detection with verifier check
    Detect,
    /// Reading-order crops and per-tray CSV
    Crop,
    /// Part masks, overlays and defect flags
    Segment,
    /// detect, crop and segment in sequence
    RunAll,
    /// Score counts or segmentation masks
    Evaluate {
        #[command(subcommand)]
        mode: EvalMode,
    },
}

#[derive(Subcommand, Debug)]
enum EvalMode {
    /// Exact-match count accuracy
    Counts {
        /// CSV of tray_id,detected_count,ground_truth_count (instead of the manifest)
        #[arg(long)]
        counts: Option<PathBuf>,
        /// CSV of tray_id,ground_truth_count (overrides the config)
        #[arg(long)]
        ground_truth: Option<PathBuf>,
    },
    /// Per-class IoU and mIoU of predicted vs ground-truth masks
    Segmentation {
        /// Directory of predicted masks
        #[arg(long)]
        pred: PathBuf,
        /// Directory of ground-truth masks, paired by file name
        #[arg(long)]
        gt: PathBuf,
        /// beetle5 or beetle9 (defaults to the config's taxonomy)
        #[arg(long)]
        taxonomy: Option<String>,
        /// Score classes absent from both masks as 1.0
        #[arg(long)]
        absent_as_one: bool,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(o) = &cli.output {
        cfg.output_dir = o.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn report_stages(summaries: &[StageSummary]) -> ExitCode {
    for s in summaries {
        print!("{}", s.render());
    }
    if summaries.iter().any(|s| s.successes() == 0) {
        ExitCode::from(EXIT_NO_SUCCESS)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let opts = RunOptions {
        trays: cli.trays.clone(),
        resume: cli.resume,
    };
    match &cli.command {
        Command::Detect => Ok(report_stages(&[
            Pipeline::new(load_config(cli)?)?.detect(&opts)?
        ])),
        Command::Crop => Ok(report_stages(&[
            Pipeline::new(load_config(cli)?)?.crop(&opts)?
        ])),
        Command::Segment => Ok(report_stages(&[
            Pipeline::new(load_config(cli)?)?.segment(&opts)?
        ])),
        Command::RunAll => Ok(report_stages(
            &Pipeline::new(load_config(cli)?)?.run_all(&opts)?,
        )),
        Command::Evaluate {
            mode: EvalMode::Counts {
                counts: Some(file), ..
            },
        } => {
            let report = count_accuracy(&load_counts_file(file)?)?;
            let out = match (&cli.output, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => load_config(cli)?.output_dir,
                (None, None) => PathBuf::from("."),
            };
            let text = report.to_text();
            write_report(&out.join("reports"), "counts", &report, &text)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            mode:
                EvalMode::Counts {
                    counts: None,
                    ground_truth,
                },
        } => {
            let pipeline = Pipeline::new(load_config(cli)?)?;
            let report = pipeline.evaluate_counts(ground_truth.as_deref())?;
            print!("{}", report.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            mode:
                EvalMode::Segmentation {
                    pred,
                    gt,
                    taxonomy,
                    absent_as_one,
                },
        } => {
            let cfg = cli.config.as_ref().map(|_| load_config(cli)).transpose()?;
            let taxonomy = match (taxonomy, &cfg) {
                (Some(name), _) => Taxonomy::by_name(name)?,
                (None, Some(c)) => c.segmentation.taxonomy(),
                (None, None) => Taxonomy::by_name("beetle5")?,
            };
            let options = EvalOptions {
                absent_as_one: *absent_as_one,
            };
            let report = evaluate_segmentation(pred, gt, &taxonomy, options)?;
            let out = cli
                .output
                .clone()
                .or(cfg.map(|c| c.output_dir))
                .unwrap_or_else(|| PathBuf::from("."));
            let text = report.to_text();
            write_report(&out.join("reports"), "segmentation", &report, &text)?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
