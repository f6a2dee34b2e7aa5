//! `hmmprobe`: command-line driver for the experiment workbench.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 on a data error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hmmprobe_core::config::ExperimentConfig;
use hmmprobe_core::repro::EXPERIMENTS;

#[derive(Parser)]
#[command(name = "hmmprobe", version, about = "Probe HMM assumptions with simulated and resampled speech data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Seed for every random stream; overrides the config file
    #[arg(long)]
    pub seed: Option<u64>,
    /// Experiment configuration (`key = value` lines)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the config's `out`, then the current directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Inputs {
    /// Model bundle (model, lexicon, language model); defaults to the config's `model`
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Corpus file; defaults to the config's training or test corpus
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlignMode {
    Hard,
    Fractional,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a ground-truth model, lexicon, language model and train/test corpora
    GenCorpus {
        #[command(flatten)]
        common: Common,
    },
    /// Baum-Welch training on a corpus's transcriptions
    TrainMl {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Forced alignment of a corpus
    Align {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_enum, default_value = "hard")]
        mode: AlignMode,
    },
    /// One-best recognition of a corpus
    Decode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Word error rate of hypothesis transcripts against references
    Wer {
        #[command(flatten)]
        common: Common,
        /// Reference transcripts, one `id word word ...` per line
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Hypothesis transcripts in the same format
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Simulate a pseudo corpus from a model with the transcripts of a corpus
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Resample a pseudo corpus from urns filled with the frames of a corpus
    Resample {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Corpus whose aligned state sequences the pseudo corpus follows; defaults to --corpus
        #[arg(long)]
        template: Option<PathBuf>,
    },
    /// Rearrange a real corpus and its parallel resampled corpus by region code
    Regions {
        #[command(flatten)]
        common: Common,
        /// Model bundle used to align the real corpus
        #[arg(long)]
        model: Option<PathBuf>,
        /// Real corpus
        #[arg(long)]
        real: PathBuf,
        /// Resampled corpus with recorded state sequences, parallel to --real
        #[arg(long)]
        resampled: PathBuf,
    },
    /// Score-variance test and frame correlations of a corpus under a model
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Extended Baum-Welch on lattices, once per configured acoustic scale map
    TrainMmi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Check a run directory and index its tables in report.json
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory; defaults to --out
        dir: Option<PathBuf>,
    },
    /// Run one end-to-end experiment
    Repro {
        #[command(flatten)]
        common: Common,
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENTS))]
        experiment: String,
    },
}

/// Failure classes mapped onto exit codes.
pub enum Failure {
    Usage(String),
    Data(hmmprobe_core::Error),
}

impl From<hmmprobe_core::Error> for Failure {
    fn from(e: hmmprobe_core::Error) -> Self {
        Failure::Data(e)
    }
}

/// Configuration with the command-line overrides applied.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub command: &'static str,
}

impl Run {
    fn new(command: &'static str, common: &Common) -> Result<Self, Failure> {
        let mut cfg = match &common.config {
            Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
                hmmprobe_core::Error::Io { .. } => Failure::Data(e),
                other => Failure::Usage(other.to_string()),
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        let out = common
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        log::info!("{command}: seed {} config {}", cfg.seed, cfg.hash());
        Ok(Run { cfg, out, command })
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("HMMPROBE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("HMMPROBE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot build a pool of {n} threads: {e}")))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    match cli.command {
        Command::GenCorpus { common } => commands::gen_corpus(&Run::new("gen-corpus", &common)?),
        Command::TrainMl { common, inputs } => commands::train_ml(&Run::new("train-ml", &common)?, &inputs),
        Command::Align { common, inputs, mode } => commands::align(&Run::new("align", &common)?, &inputs, mode),
        Command::Decode { common, inputs } => commands::decode(&Run::new("decode", &common)?, &inputs),
        Command::Wer { common, reference, hyp } => {
            let out = common.out.is_some();
            commands::wer(&Run::new("wer", &common)?, &reference, &hyp, out)
        }
        Command::Simulate { common, inputs } => commands::simulate(&Run::new("simulate", &common)?, &inputs),
        Command::Resample { common, inputs, template } => {
            commands::resample(&Run::new("resample", &common)?, &inputs, template.as_deref())
        }
        Command::Regions { common, model, real, resampled } => {
            commands::regions(&Run::new("regions", &common)?, model.as_deref(), &real, &resampled)
        }
        Command::Diagnose { common, inputs } => commands::diagnose(&Run::new("diagnose", &common)?, &inputs),
        Command::TrainMmi { common, inputs } => commands::train_mmi(&Run::new("train-mmi", &common)?, &inputs),
        Command::Report { common, dir } => {
            let run = Run::new("report", &common)?;
            commands::report(dir.as_deref().unwrap_or(&run.out))
        }
        Command::Repro { common, experiment } => commands::repro(&Run::new("repro", &common)?, &experiment),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
