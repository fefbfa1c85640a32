use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kpgen::eval::{PrecisionDenominator, Profile};
use kpgen::model::Mode;
use kpgen::pipeline::{Overrides, Pipeline, PipelineConfig, Split};

/// Keyphrase generation with retrieval, extraction and merging.
#[derive(Parser)]
#[command(name = "kpgen", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, short, default_value = "config.toml")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// KG-KE, KG-KR, KG-KE-KR or KG-KE-KR-M.
    #[arg(long)]
    mode: Option<Mode>,
    /// kp20k, other or semeval.
    #[arg(long)]
    profile: Option<Profile>,
    /// Use artifacts produced under a different configuration.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn pipeline(&self) -> kpgen::Result<Pipeline> {
        let overrides = Overrides {
            seed: self.seed,
            threads: self.threads,
            mode: self.mode,
            profile: self.profile,
        };
        Pipeline::new(PipelineConfig::load(&self.config, &overrides)?, self.force)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate the corpus splits and build the vocabulary.
    Preprocess(Common),
    /// Index the training documents for retrieval.
    BuildIndex(Common),
    /// Train the generator.
    Train(Common),
    /// Train the candidate scorer.
    TrainScorer(Common),
    /// Write ranked keyphrases for a split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score predictions against gold keyphrases.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Prediction file; defaults to this configuration's predictions for the split.
        #[arg(long, requires = "gold")]
        pred: Option<PathBuf>,
        /// Gold JSONL corpus.
        #[arg(long, requires = "pred")]
        gold: Option<PathBuf>,
        /// Report path, used with --pred and --gold.
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        #[arg(long)]
        precision_denominator: Option<PrecisionDenominatorArg>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PrecisionDenominatorArg {
    MinK,
    K,
}

fn run(cli: Cli) -> kpgen::Result<()> {
    match cli.command {
        Command::Preprocess(c) => c.pipeline()?.preprocess(),
        Command::BuildIndex(c) => c.pipeline()?.build_index(),
        Command::Train(c) => c.pipeline()?.train(),
        Command::TrainScorer(c) => c.pipeline()?.train_scorer(),
        Command::Predict { common, split } => common.pipeline()?.predict(split).map(|_| ()),
        Command::Evaluate {
            common,
            split,
            pred,
            gold,
            out,
            precision_denominator,
        } => {
            let denom = precision_denominator.map(|d| match d {
                PrecisionDenominatorArg::MinK => PrecisionDenominator::MinK,
                PrecisionDenominatorArg::K => PrecisionDenominator::K,
            });
            let report = match (pred, gold) {
                (Some(pred), Some(gold)) => {
                    let profile = common.profile.unwrap_or_default();
                    Pipeline::evaluate_files(&pred, &gold, profile, denom.unwrap_or_default(), &out)?
                }
                _ => {
                    let mut p = common.pipeline()?;
                    if let Some(d) = denom {
                        p.cfg.precision_denominator = d;
                    }
                    p.evaluate(split)?
                }
            };
            println!(
                "documents {}  F1@5 {:.4}  F1@10 {:.4}  MAP@10 {:.4}  present F1@5 {:.4}  absent R@10 {:.4}",
                report.documents, report.f1_at_5, report.f1_at_10, report.map_at_10, report.present_f1_at_5, report.absent_r_at_10
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
