use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use addressee_core::config::KeyValues;
use addressee_core::corpus::{corpus_stats, load_corpus};
use addressee_core::eval::{write_reports, Aggregation};
use addressee_core::gradsuite::gradient_suite;
use addressee_core::model::{load_checkpoint, Experiment, ModelProfile};
use addressee_core::preprocess::{load_dataset, preprocess_corpus, save_dataset, Dataset, PreprocessConfig};
use addressee_core::synth::{generate, ScenarioConfig};
use addressee_core::train::{crossval_folds, evaluate_model, task_sequences, TrainConfig};
use addressee_core::Error;

/// Addressee estimation from ego-centric face and body-pose sequences.
#[derive(Parser)]
#[command(name = "addressee", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        interactions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a corpus into 10-frame sequences (utterance split, crops, flip, shift).
    Preprocess {
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Model profile whose face resolution the crops should match.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-interaction-out cross-validation of one experiment.
    Crossval {
        dataset: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        experiment: Option<Experiment>,
        #[arg(long)]
        profile: Option<String>,
        /// Folds trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated fold indices to run instead of all.
        #[arg(long, value_delimiter = ',')]
        folds: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        /// Suppress per-epoch progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Score a checkpoint on a processed dataset.
    Eval {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Only sequences of this interaction, e.g. the fold's held-out one.
        #[arg(long)]
        interaction: Option<String>,
        #[arg(long, default_value_t = Aggregation::ConfidenceWeighted)]
        aggregation: Aggregation,
        #[arg(long, default_value_t = 10)]
        batch_size: usize,
    },
    /// Finite-difference check of every differentiable operation and model variant.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        /// Skip the whole-model checks.
        #[arg(long)]
        ops_only: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Plain-text `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<KeyValues, Error> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::read(p)?,
            None => KeyValues::new(),
        };
        if let Some(seed) = self.seed {
            kv.set("seed", seed);
        }
        Ok(kv)
    }
}

fn write_text(path: &Path, text: String) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io { context: format!("writing {}", path.display()), source: e })
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io { context: format!("creating {}", dir.display()), source: e })
}

/// Splits `kv` into the keys each of `groups` knows; anything left over is an error.
fn split_keys(kv: &KeyValues, groups: &[&[&str]]) -> Result<Vec<KeyValues>, Error> {
    kv.check_known(&groups.concat())?;
    Ok(groups
        .iter()
        .map(|known| {
            let mut part = KeyValues::new();
            for k in kv.keys().filter(|k| known.contains(k)) {
                part.set(k, kv.get(k).unwrap());
            }
            part
        })
        .collect())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { common, interactions, out } => {
            let mut kv = common.load()?;
            if let Some(n) = interactions {
                kv.set("interactions", n);
            }
            let mut cfg = ScenarioConfig::default();
            cfg.apply(&kv)?;
            create_dir(&out)?;
            let summary = generate(&cfg, &out)?;
            write_text(&out.join("effective_config.txt"), cfg.to_key_values().to_string())?;
            eprintln!(
                "wrote {} interactions, {} utterances, {} frames to {}",
                summary.interactions,
                summary.utterances,
                summary.frames,
                out.display()
            );
        }
        Command::Preprocess { corpus, common, profile, out } => {
            let mut kv = common.load()?;
            if let Some(p) = profile {
                kv.set("profile", p);
                kv.remove("face_resolution");
            }
            if let Some(p) = kv.get("profile").map(str::to_string) {
                if kv.get("face_resolution").is_none() {
                    kv.set("face_resolution", ModelProfile::by_name(&p)?.face_resolution);
                }
                kv.remove("profile");
            }
            kv.check_known(&PreprocessConfig::KEYS)?;
            let mut cfg = PreprocessConfig::default();
            cfg.apply(&kv)?;
            let corpus = load_corpus(&corpus)?;
            let (utterances, report) = preprocess_corpus(&corpus, &cfg)?;
            eprintln!("{report}");
            eprintln!("{}", corpus_stats(&utterances));
            let dataset = Dataset { face_resolution: cfg.face_resolution, utterances };
            save_dataset(&dataset, &out)?;
            write_text(&out.join("effective_config.txt"), cfg.to_key_values().to_string())?;
        }
        Command::Crossval { dataset, common, experiment, profile, jobs, folds, out, quiet } => {
            let mut kv = common.load()?;
            if let Some(e) = experiment {
                kv.set("experiment", e);
            }
            if let Some(p) = profile {
                kv.set("profile", p);
            }
            let parts = split_keys(&kv, &[&TrainConfig::KEYS, &ModelProfile::KEYS])?;
            let mut cfg = TrainConfig::default();
            cfg.apply(&parts[0])?;
            let mut profile = ModelProfile::from_key_values(&parts[1])?;
            profile.class_count = cfg.experiment.task().class_count();
            let dataset = load_dataset(&dataset)?;
            let report = |fold: usize, r: &addressee_core::train::EpochRecord| {
                if !quiet {
                    eprintln!("fold {fold} {r}");
                }
            };
            let outcome = crossval_folds(&dataset, &profile, &cfg, folds.as_deref(), jobs.max(1), Some(&out), &report)?;
            print!("{}", outcome.summary_text());
        }
        Command::Eval { checkpoint, dataset, out, interaction, aggregation, batch_size } => {
            if batch_size == 0 {
                return Err(Error::Config("batch_size must be at least 1".into()));
            }
            let model = load_checkpoint(&checkpoint)?;
            let dataset = load_dataset(&dataset)?;
            if dataset.face_resolution != model.profile.face_resolution {
                return Err(Error::Config(format!(
                    "checkpoint expects {}px faces but the dataset holds {}px faces",
                    model.profile.face_resolution, dataset.face_resolution
                )));
            }
            let refs = task_sequences(&dataset, model.experiment.task(), interaction.as_deref());
            if refs.is_empty() {
                return Err(Error::Validation("no sequences to evaluate".into()));
            }
            let evaluation = evaluate_model(&model, &dataset, &refs, aggregation, batch_size)?;
            write_reports(&out, &evaluation)?;
            print!("{}", evaluation.to_key_values());
        }
        Command::Gradcheck { seeds, ops_only } => {
            let rows = gradient_suite(seeds.max(1), !ops_only)?;
            for r in &rows {
                println!("{r}");
            }
            let failed = rows.iter().filter(|r| !r.passed()).count();
            if failed > 0 {
                return Err(Error::Numeric(format!("{failed} of {} gradient checks failed", rows.len())));
            }
        }
    }
    Ok(())
}

/// Parse errors exit with 2 and always end with the usage of the subcommand at fault.
fn parse_args() -> Result<Cli, ExitCode> {
    Cli::try_parse().map_err(|e| {
        if !e.use_stderr() {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        let text = e.render().to_string();
        eprint!("{text}");
        if !text.contains("Usage:") {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(c) => c.render_usage(),
                None => cmd.render_usage(),
            };
            eprintln!("\n{usage}");
        }
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(code) => return code,
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
