use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::Settings;
use crate::error::Result;
use crate::pipeline::{self, Ctx};

#[derive(Debug, Parser)]
#[command(name = "strandforge", version, about = "Strand extraction, execution-aware pre-training and binary-code benchmarks")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Model size: desk, paper or tiny.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Work directory for all artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// `key = value` settings file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a functions.jsonl file into the work directory.
    Ingest { input: PathBuf },
    /// Extract strands from every basic block.
    Strands,
    /// Symbolically execute the strands.
    Symexec,
    /// Attach normalized expressions to the strands.
    Normalize,
    /// Train the subword vocabulary.
    TokTrain {
        #[arg(long)]
        max_vocab: Option<usize>,
        #[arg(long)]
        max_seq: Option<usize>,
    },
    /// Build a training corpus: elm, ssm, exec, pairs or synth.
    Corpus {
        #[arg(long)]
        task: String,
        /// Strand source for ssm, exec and pairs: functions or synth.
        #[arg(long)]
        source: Option<String>,
        /// Synthetic strands to generate.
        #[arg(long)]
        n: Option<usize>,
        /// Similarity task for `pairs`.
        #[arg(long)]
        pair_task: Option<String>,
    },
    /// Pre-train on the mapping corpus with masked-token and mapping losses.
    Pretrain {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
    },
    /// Fine-tune the pre-trained model on one task.
    Finetune {
        #[arg(long)]
        task: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
    },
    /// Embed a similarity task's retrieval database.
    Embed {
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        source: Option<String>,
    },
    /// Score a task and write results-{task}.csv.
    Bench {
        #[arg(long)]
        task: String,
        /// Cut-offs for retrieval tasks, comma separated.
        #[arg(short, long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        source: Option<String>,
        /// Repetitions for the outlier tasks.
        #[arg(long)]
        runs: Option<usize>,
    },
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

impl Cli {
    /// File settings overlaid with every flag that was given.
    pub fn settings(&self) -> Result<Settings> {
        let base = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        let mut flags: Vec<(&'static str, Option<String>)> = vec![
            ("seed", s(&self.seed)),
            ("jobs", s(&self.jobs)),
            ("preset", self.preset.clone()),
            ("out_dir", self.out_dir.as_ref().map(|p| p.to_string_lossy().into_owned())),
        ];
        match &self.command {
            Command::Ingest { .. } | Command::Strands | Command::Symexec | Command::Normalize => {}
            Command::TokTrain { max_vocab, max_seq } => {
                flags.extend([("max_vocab", s(max_vocab)), ("max_seq", s(max_seq))]);
            }
            Command::Corpus { source, n, pair_task, .. } => {
                flags.extend([("source", source.clone()), ("n", s(n)), ("task", pair_task.clone())]);
            }
            Command::Pretrain { steps, lr, batch, warmup } => {
                flags.extend([("steps", s(steps)), ("lr", s(lr)), ("batch", s(batch)), ("warmup", s(warmup))]);
            }
            Command::Finetune { task, epochs, source, lr, batch } => {
                flags.extend([
                    ("task", Some(task.clone())),
                    ("epochs", s(epochs)),
                    ("source", source.clone()),
                    ("lr", s(lr)),
                    ("batch", s(batch)),
                ]);
            }
            Command::Embed { task, mode, source } => {
                flags.extend([("task", task.clone()), ("mode", mode.clone()), ("source", source.clone())]);
            }
            Command::Bench { task, k, mode, source, runs } => {
                let k = k.as_ref().map(|k| k.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
                flags.extend([
                    ("task", Some(task.clone())),
                    ("k", k),
                    ("mode", mode.clone()),
                    ("source", source.clone()),
                    ("runs", s(runs)),
                ]);
            }
        }
        Ok(base.overlay(flags))
    }
}

/// Runs one parsed invocation; `argv` is recorded in the manifest.
pub fn run(cli: &Cli, argv: Vec<String>) -> Result<()> {
    let ctx = Ctx::new(cli.settings()?, argv)?;
    match &cli.command {
        Command::Ingest { input } => pipeline::ingest(&ctx, input),
        Command::Strands => pipeline::strands(&ctx),
        Command::Symexec => pipeline::symexec(&ctx),
        Command::Normalize => pipeline::normalize(&ctx),
        Command::TokTrain { .. } => pipeline::tok_train(&ctx),
        Command::Corpus { task, .. } => pipeline::corpus(&ctx, task),
        Command::Pretrain { .. } => pipeline::pretrain_cmd(&ctx),
        Command::Finetune { .. } => pipeline::finetune(&ctx),
        Command::Embed { .. } => pipeline::embed(&ctx),
        Command::Bench { .. } => pipeline::bench(&ctx),
    }
}
