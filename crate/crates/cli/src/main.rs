use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ppgbp::commands::{
    cmd_evaluate, cmd_grade, cmd_preprocess, cmd_synth, cmd_train, CommandReport, ExitStatus,
};
use ppgbp::eval::{FoldMode, ModelKind};
use ppgbp::{Execution, Result, RunConfig};

#[derive(Parser)]
#[command(
    name = "ppgbp",
    version,
    about = "Blood pressure estimation from PPG windows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic subject record (CSV `t,ppg,abp`) from a spec file.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align, resample to 20 Hz, filter and window a record into a dataset CSV.
    Preprocess {
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Alignment search range in seconds.
        #[arg(long)]
        max_lag: Option<f64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train one network and write its checkpoint and epoch log.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Hold out this window and its exclusion-radius neighbours.
        #[arg(long)]
        exclude: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Cross-validate on a dataset and write records, metrics and plot tables.
    Evaluate {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grade a records CSV (`index,target_sbp,target_dbp,est_sbp,est_dbp`).
    Grade {
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FoldModeArg {
    Lowo,
    BlockKfold,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Net,
    Oracle,
    Mean,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    fold_mode: Option<FoldModeArg>,
    /// Number of blocks for block k-fold.
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    exclusion_radius: Option<usize>,
    /// Normalize targets once over all windows instead of per fold.
    #[arg(long)]
    paper_faithful: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Run everything on the calling thread.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn resolve(&self, input: &Path, out: &Path) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.input = Some(input.display().to_string());
        cfg.out = Some(out.display().to_string());
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.fold_mode {
            cfg.fold_mode = match v {
                FoldModeArg::Lowo => FoldMode::Lowo,
                FoldModeArg::BlockKfold => FoldMode::BlockKfold,
            };
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = self.exclusion_radius {
            cfg.exclusion_radius = v;
        }
        cfg.paper_faithful |= self.paper_faithful;
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.model {
            cfg.model = match v {
                ModelArg::Net => ModelKind::Net,
                ModelArg::Oracle => ModelKind::Oracle,
                ModelArg::Mean => ModelKind::Mean,
            };
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<CommandReport> {
    match cli.command {
        Command::Synth { spec, out } => cmd_synth(&spec, &out),
        Command::Preprocess {
            record,
            out,
            max_lag,
            run,
        } => {
            let mut cfg = run.resolve(&record, &out)?;
            if let Some(v) = max_lag {
                cfg.max_lag_s = v;
                cfg.validate()?;
            }
            cmd_preprocess(&record, &out, &cfg)
        }
        Command::Train {
            dataset,
            out,
            exclude,
            run,
        } => {
            let cfg = run.resolve(&dataset, &out)?;
            cmd_train(&dataset, &cfg, &out, exclude)
        }
        Command::Evaluate { dataset, out, run } => {
            let cfg = run.resolve(&dataset, &out)?;
            cmd_evaluate(&dataset, &cfg, &out)
        }
        Command::Grade { records, out } => cmd_grade(&records, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(report) => {
            print!("{}", report.summary);
            if report.status == ExitStatus::Error {
                eprintln!("error: evaluation did not meet the fold success threshold");
            }
            ExitCode::from(report.status.code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitStatus::Error.code() as u8)
        }
    }
}
