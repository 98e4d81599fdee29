//! The subcommands. Every command reads from and writes to one work
//! directory and leaves a `{command}.manifest.json` behind.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde_json::json;
use strandforge_core::bench::{
    auc, build_task_datasets, cosine64, encode_exec, encode_unit, evaluate, function_strands, mean_std,
    outlier_accuracy, BenchCorpus, DbEntry, SimilarityDb, Task, TaskConfig, TaskData, TaskItem, Unit,
};
use strandforge_core::cfg::FunctionCfg;
use strandforge_core::corpus::{build_exec_dataset, build_ssm_corpus, mask_tokens, MaskConfig, EXEC_LABEL_MAX};
use strandforge_core::neural::pretrain::{pretrain, ssm_accuracy};
use strandforge_core::neural::{
    finetune_classifier_step, finetune_siamese_step, finetune_token_step, random_embedding, EmbedMode, Model,
    ModelConfig, NeuralError, StepStats, TrainConfig, Trainer,
};
use strandforge_core::normalize::{normalize_symexpr, NormRules};
use strandforge_core::rng::{seeded, sub_rng};
use strandforge_core::slicer::Strand;
use strandforge_core::sym::{execute_strand, RepresentativeSet};
use strandforge_core::synth::equiv::{strand_of, synth_equivalence_corpus, SynthCorpus};
use strandforge_core::tokenizer::{encode, train_vocab, Sample, Vocab, DEFAULT_MAX_VOCAB};

use crate::checkpoint::{encode_checkpoint, load_checkpoint, vocab_hash};
use crate::config::Settings;
use crate::error::{CliError, Result};
use crate::formats::*;
use crate::manifest::Recorder;

pub const CLASS_HEAD: &str = "cls";
pub const TOKEN_HEAD: &str = "rec";

/// Resolved run context shared by all subcommands.
pub struct Ctx {
    pub settings: Settings,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub preset: String,
    pub rules: NormRules,
    pub command_line: Vec<String>,
    pool: rayon::ThreadPool,
}

impl Ctx {
    pub fn new(settings: Settings, command_line: Vec<String>) -> Result<Self> {
        let seed = settings.get("seed", 0u64)?;
        let jobs = settings.get("jobs", 1usize)?.max(1);
        let preset = settings.string("preset", "desk");
        if ModelConfig::preset(&preset, 1).is_none() {
            return Err(CliError::Config(format!("unknown preset `{}`", preset)));
        }
        let rules = NormRules { imm_threshold: settings.get("imm_threshold", 5000u64)?, ..NormRules::default() };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Ctx {
            out_dir: PathBuf::from(settings.string("out_dir", "out")),
            settings,
            seed,
            jobs,
            preset,
            rules,
            command_line,
            pool,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn recorder(&self, command: &str) -> Recorder {
        Recorder::new(command, &self.out_dir, self.seed, self.jobs)
    }

    fn finish(&self, rec: Recorder) -> Result<()> {
        rec.finish(self.command_line.clone()).map(|_| ())
    }

    /// Order-preserving parallel map on the `--jobs` pool.
    fn par_map<T: Sync, U: Send>(&self, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn read_input<T: serde::de::DeserializeOwned>(&self, rec: &mut Recorder, name: &str) -> Result<Vec<T>> {
        let p = self.path(name);
        let rows = read_jsonl(&p)?;
        rec.input(&p)?;
        Ok(rows)
    }

    fn train_config(&self) -> Result<TrainConfig> {
        let base = if self.preset == "paper" { TrainConfig::default() } else { TrainConfig::desk() };
        Ok(TrainConfig {
            lr: self.settings.get("lr", base.lr)?,
            warmup_steps: self.settings.get("warmup", base.warmup_steps)?,
            batch: self.settings.get("batch", base.batch)?.max(1),
            grad_accum: self.settings.get("grad_accum", base.grad_accum)?.max(1),
            epochs: self.settings.get("epochs", 20usize)?,
            seed: self.seed,
            ..base
        })
    }

    fn task_config(&self) -> Result<TaskConfig> {
        let d = TaskConfig::default();
        Ok(TaskConfig {
            seed: self.seed,
            ratios: (self.settings.get("train_ratio", d.ratios.0)?, self.settings.get("val_ratio", d.ratios.1)?),
            max_items: self.settings.get("max_items", d.max_items)?,
            pairs_per_group: self.settings.get("pairs_per_group", d.pairs_per_group)?,
            outlier_sets: self.settings.get("sets", d.outlier_sets)?,
        })
    }

    fn task(&self) -> Result<Task> {
        let name = self.settings.string("task", "strand-sim");
        Task::parse(&name).ok_or_else(|| CliError::Usage(format!("unknown task `{}`", name)))
    }
}

fn load_store(ctx: &Ctx, rec: &mut Recorder) -> Result<Vec<FunctionCfg>> {
    let p = ctx.path("functions.jsonl");
    if !p.exists() {
        return Err(CliError::MissingInput(p));
    }
    let (fs, _) = load_functions(&p)?;
    rec.input(&p)?;
    Ok(fs)
}

fn all_strands(ctx: &Ctx, fs: &[FunctionCfg]) -> Vec<Strand> {
    ctx.par_map(fs, |f| function_strands(f, &ctx.rules)).into_iter().flatten().collect()
}

fn execute_all(ctx: &Ctx, strands: &[Strand]) -> Vec<std::result::Result<RepresentativeSet, String>> {
    ctx.par_map(strands, |s| execute_strand(s).map_err(|e| e.to_string()))
}

fn load_vocab(ctx: &Ctx, rec: &mut Recorder) -> Result<Vocab> {
    let p = ctx.path("vocab.txt");
    if !p.exists() {
        return Err(CliError::MissingInput(p));
    }
    let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    rec.input(&p)?;
    Ok(Vocab::from_text(&text)?)
}

fn load_model(ctx: &Ctx, rec: &mut Recorder, name: &str, vocab: &Vocab) -> Result<Model<f32>> {
    let p = ctx.path(name);
    let (model, hash) = load_checkpoint(&p)?;
    rec.input(&p)?;
    if hash != vocab_hash(vocab) {
        return Err(CliError::Checkpoint { path: p, detail: "trained with a different vocabulary".into() });
    }
    Ok(model)
}

// ---------------------------------------------------------------- ingest

pub fn ingest(ctx: &Ctx, input: &Path) -> Result<()> {
    let mut rec = ctx.recorder("ingest");
    let (fs, unsupported) = load_functions(input)?;
    rec.input(input)?;
    let total: usize = unsupported.values().sum();
    if total > 0 {
        log::warn!("{} unsupported instructions ({} distinct mnemonics)", total, unsupported.len());
    }
    log::info!("{} functions", fs.len());
    rec.output("functions.jsonl", functions_jsonl(&fs).as_bytes())?;
    let report = json!({ "total": total, "mnemonics": unsupported });
    rec.output("unsupported.json", format!("{}\n", report).as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- strands

fn strand_row(s: &Strand) -> StrandRow {
    StrandRow {
        strand_id: s.strand_id.clone(),
        function_id: s.function_id.clone(),
        block_id: s.block_id.clone(),
        role: s.role.kind().into(),
        indices: s.indices.clone(),
        executable: s.executable,
        asm: s.asm.clone(),
    }
}

pub fn strands(ctx: &Ctx) -> Result<()> {
    let mut rec = ctx.recorder("strands");
    let fs = load_store(ctx, &mut rec)?;
    let strands = all_strands(ctx, &fs);
    log::info!("{} strands from {} functions", strands.len(), fs.len());
    let rows: Vec<StrandRow> = strands.iter().map(strand_row).collect();
    rec.output("strands.jsonl", to_jsonl(&rows).as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- symexec

pub fn symexec(ctx: &Ctx) -> Result<()> {
    let mut rec = ctx.recorder("symexec");
    let fs = load_store(ctx, &mut rec)?;
    let strands = all_strands(ctx, &fs);
    let results = execute_all(ctx, &strands);
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (s, r) in strands.iter().zip(results) {
        match r {
            Ok(set) => ok.push(SymRow { strand_id: s.strand_id.clone(), assigns: set.printed() }),
            Err(reason) => bad.push(UnexecutableRow { strand_id: s.strand_id.clone(), reason }),
        }
    }
    log::info!("{} executed, {} not executable", ok.len(), bad.len());
    rec.output("symexprs.jsonl", to_jsonl(&ok).as_bytes())?;
    rec.output("unexecutable.jsonl", to_jsonl(&bad).as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- normalize

pub fn normalize(ctx: &Ctx) -> Result<()> {
    let mut rec = ctx.recorder("normalize");
    let strands: Vec<StrandRow> = ctx.read_input(&mut rec, "strands.jsonl")?;
    let syms: Vec<SymRow> = ctx.read_input(&mut rec, "symexprs.jsonl")?;
    let by_id: BTreeMap<&str, &SymRow> = syms.iter().map(|r| (r.strand_id.as_str(), r)).collect();
    let rows: Vec<NormalizedRow> = strands
        .iter()
        .map(|s| NormalizedRow {
            strand_id: s.strand_id.clone(),
            asm: s.asm.clone(),
            symexprs: by_id
                .get(s.strand_id.as_str())
                .map(|r| r.assigns.iter().map(|a| normalize_symexpr(a, &ctx.rules)).collect())
                .unwrap_or_default(),
        })
        .collect();
    rec.output("normalized.jsonl", to_jsonl(&rows).as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- tok-train

/// Training text: every normalized instruction and expression found in the
/// work directory's corpora.
fn tokenizer_lines(ctx: &Ctx, rec: &mut Recorder) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    let mut found = false;
    if ctx.path("normalized.jsonl").exists() {
        found = true;
        for r in ctx.read_input::<NormalizedRow>(rec, "normalized.jsonl")? {
            lines.extend(r.asm);
            lines.extend(r.symexprs);
        }
    }
    if ctx.path("synth.jsonl").exists() {
        found = true;
        for r in ctx.read_input::<SynthRow>(rec, "synth.jsonl")? {
            lines.extend(r.asm);
            lines.extend(r.assigns.iter().map(|a| normalize_symexpr(a, &ctx.rules)));
        }
    }
    if ctx.path("ssm.jsonl").exists() {
        found = true;
        for r in ctx.read_input::<SsmRow>(rec, "ssm.jsonl")? {
            lines.push(r.symexpr);
        }
    }
    if !found {
        return Err(CliError::MissingInput(ctx.path("normalized.jsonl")));
    }
    Ok(lines)
}

pub fn tok_train(ctx: &Ctx) -> Result<()> {
    let mut rec = ctx.recorder("tok-train");
    let lines = tokenizer_lines(ctx, &mut rec)?;
    let mut vocab = train_vocab(&lines, ctx.settings.get("max_vocab", DEFAULT_MAX_VOCAB)?)?;
    let preset_seq = ModelConfig::preset(&ctx.preset, 1).map(|c| c.max_seq).unwrap_or(vocab.max_seq);
    vocab.max_seq = ctx.settings.get("max_seq", preset_seq)?;
    log::info!("vocabulary of {} tokens from {} lines", vocab.len(), lines.len());
    rec.output("vocab.txt", vocab.to_text().as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- corpus

fn synth_rows(c: &SynthCorpus) -> Vec<SynthRow> {
    c.strands
        .iter()
        .zip(&c.sets)
        .zip(&c.family)
        .map(|((s, set), &family)| SynthRow {
            strand_id: s.strand_id.clone(),
            function_id: s.function_id.clone(),
            block_id: s.block_id.clone(),
            family,
            code: s.instructions.iter().map(|i| i.text.clone()).collect(),
            asm: s.asm.clone(),
            assigns: set.printed(),
        })
        .collect()
}

/// Rebuilds the synthetic corpus from `synth.jsonl`; each strand is re-sliced
/// and re-executed from its code and must reproduce the stored assigns.
fn load_synth(ctx: &Ctx, rec: &mut Recorder) -> Result<SynthCorpus> {
    let rows: Vec<SynthRow> = ctx.read_input(rec, "synth.jsonl")?;
    let mut out = SynthCorpus { strands: Vec::new(), sets: Vec::new(), family: Vec::new() };
    let built = ctx.par_map(&rows, |r| strand_of(&r.function_id, &r.block_id, &r.code));
    for (i, (r, b)) in rows.iter().zip(built).enumerate() {
        let (mut s, mut set) = b.ok_or_else(|| CliError::Schema { line: i + 1, field: "code".into() })?;
        if set.printed() != r.assigns {
            return Err(CliError::Schema { line: i + 1, field: "assigns".into() });
        }
        s.strand_id = r.strand_id.clone();
        set.strand_id = r.strand_id.clone();
        out.strands.push(s);
        out.sets.push(set);
        out.family.push(r.family);
    }
    Ok(out)
}

/// Executed strands of the selected source (`functions` or `synth`).
fn source_strands(ctx: &Ctx, rec: &mut Recorder) -> Result<(Vec<Strand>, Vec<RepresentativeSet>)> {
    match ctx.settings.string("source", "functions").as_str() {
        "synth" => {
            let c = load_synth(ctx, rec)?;
            Ok((c.strands, c.sets))
        }
        "functions" => {
            let fs = load_store(ctx, rec)?;
            let strands = all_strands(ctx, &fs);
            let sets = execute_all(ctx, &strands);
            Ok(strands.into_iter().zip(sets).filter_map(|(s, r)| r.ok().map(|r| (s, r))).unzip())
        }
        other => Err(CliError::Usage(format!("unknown source `{}`", other))),
    }
}

pub fn corpus(ctx: &Ctx, task: &str) -> Result<()> {
    let mut rec = ctx.recorder(&format!("corpus-{}", task));
    match task {
        "synth" => {
            let n = ctx.settings.get("n", 250usize)?;
            let c = synth_equivalence_corpus(n, ctx.seed);
            rec.output("synth.jsonl", to_jsonl(&synth_rows(&c)).as_bytes())?;
        }
        "ssm" => {
            let (strands, sets) = source_strands(ctx, &mut rec)?;
            let pairs = build_ssm_corpus(&strands, &sets, ctx.seed, &ctx.rules)?;
            log::info!("{} mapping pairs from {} strands", pairs.len(), strands.len());
            let rows: Vec<SsmRow> = pairs
                .into_iter()
                .map(|p| SsmRow { strand_id: p.strand_id, asm: p.asm, symexpr: p.symexpr, label: p.label })
                .collect();
            rec.output("ssm.jsonl", to_jsonl(&rows).as_bytes())?;
        }
        "elm" => {
            let vocab = load_vocab(ctx, &mut rec)?;
            let pairs: Vec<SsmRow> = ctx.read_input(&mut rec, "ssm.jsonl")?;
            let mask = MaskConfig::default();
            let rows: Vec<ElmRow> = ctx.par_map(&pairs.iter().enumerate().collect::<Vec<_>>(), |(i, p)| {
                let s = encode(&p.asm, Some(&p.symexpr), None, &vocab);
                let m = mask_tokens(&s, &mask, vocab.len(), &mut sub_rng(ctx.seed, *i as u64));
                ElmRow {
                    strand_id: p.strand_id.clone(),
                    input_ids: m.sample.token_ids,
                    language_ids: m.sample.language_ids,
                    labels: m.labels,
                    ssm_label: p.label,
                }
            });
            rec.output("elm.jsonl", to_jsonl(&rows).as_bytes())?;
        }
        "exec" => {
            let (strands, _) = source_strands(ctx, &mut rec)?;
            let samples = build_exec_dataset(&strands, ctx.settings.get("max_items", 50_000usize)?, ctx.seed);
            let rows: Vec<ExecRow> = samples
                .into_iter()
                .map(|e| ExecRow {
                    strand_id: e.strand_id,
                    asm: e.asm,
                    inputs: e.inputs.into_iter().map(|(n, _, v)| (n, v)).collect(),
                    query: e.query,
                    label: e.label,
                    text: e.text,
                })
                .collect();
            rec.output("exec.jsonl", to_jsonl(&rows).as_bytes())?;
        }
        "pairs" => {
            let data = task_data(ctx, &mut rec, ctx.task()?)?;
            if !data.task.is_similarity() {
                return Err(CliError::Usage(format!("`{}` is not a similarity task", data.task.name())));
            }
            let mut rows = Vec::new();
            for (split, items) in [("train", &data.splits.train), ("val", &data.splits.val), ("test", &data.splits.test)] {
                for it in items {
                    if let TaskItem::Pair { a, b, label } = it {
                        rows.push(PairRow { a: unit_row(a), b: unit_row(b), label: *label, split: split.into() });
                    }
                }
            }
            rec.output("pairs.jsonl", to_jsonl(&rows).as_bytes())?;
        }
        other => return Err(CliError::Usage(format!("unknown corpus task `{}`", other))),
    }
    ctx.finish(rec)
}

fn unit_row(u: &Unit) -> UnitRow {
    UnitRow { id: u.id.clone(), strands: u.strands.clone() }
}

/// Builds the benchmark splits of `task` from the configured source.
fn task_data(ctx: &Ctx, rec: &mut Recorder, task: Task) -> Result<TaskData> {
    let source = ctx.settings.string("source", "functions");
    let cfg = ctx.task_config()?;
    let synth = if task == Task::BlockSim || source == "synth" { Some(load_synth(ctx, rec)?) } else { None };
    let (functions, strands, sets) = if source == "synth" {
        let c = synth.as_ref().expect("loaded above");
        (Vec::new(), c.strands.clone(), c.sets.iter().cloned().map(Some).collect())
    } else if source == "functions" {
        let fs = load_store(ctx, rec)?;
        let strands = all_strands(ctx, &fs);
        let sets: Vec<Option<RepresentativeSet>> = execute_all(ctx, &strands).into_iter().map(|r| r.ok()).collect();
        (fs, strands, sets)
    } else {
        return Err(CliError::Usage(format!("unknown source `{}`", source)));
    };
    let corpus = BenchCorpus { functions: &functions, strands: &strands, sets: &sets, synth: synth.as_ref(), rules: &ctx.rules };
    let data = build_task_datasets(&corpus, task, &cfg)?;
    log::info!(
        "{}: {} train, {} val, {} test items, {} db units",
        task.name(),
        data.splits.train.len(),
        data.splits.val.len(),
        data.splits.test.len(),
        data.db.len()
    );
    Ok(data)
}

// ---------------------------------------------------------------- pretrain

pub fn pretrain_cmd(ctx: &Ctx) -> Result<()> {
    let mut rec = ctx.recorder("pretrain");
    let vocab = load_vocab(ctx, &mut rec)?;
    let pairs: Vec<SsmRow> = ctx.read_input(&mut rec, "ssm.jsonl")?;
    let data: Vec<(Sample, u8)> = ctx.par_map(&pairs, |p| (encode(&p.asm, Some(&p.symexpr), None, &vocab), p.label));
    let mut config = ModelConfig::preset(&ctx.preset, vocab.len()).expect("preset checked");
    config.max_seq = config.max_seq.max(vocab.max_seq);
    let mut model = Model::<f32>::new(config, &mut seeded(ctx.seed))?;
    let tc = ctx.train_config()?;
    let steps = ctx.settings.get("steps", if ctx.preset == "paper" { 100_000 } else { 200usize })?;
    let mut trainer = Trainer::new(&model, tc);
    let history = pretrain(&mut model, &mut trainer, &data, steps, &MaskConfig::default(), |i, s| {
        if i % 25 == 0 || i + 1 == steps {
            log::info!("step {:>5} elm {:.4} ssm {:.4} total {:.4} lr {:.2e}", i, s.elm, s.ssm, s.total, s.lr);
        }
    })?;
    log::info!("training-set mapping accuracy {:.3}", ssm_accuracy(&model, &data)?);
    let mut csv = String::from("step,elm,ssm,total,lr\n");
    for (i, s) in history.iter().enumerate() {
        csv.push_str(&format!("{},{:.6},{:.6},{:.6},{:.6e}\n", i, s.elm, s.ssm, s.total, s.lr));
    }
    rec.output("model.ckpt", &encode_checkpoint(&model, &vocab_hash(&vocab)))?;
    rec.output("metrics.csv", csv.as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- finetune

/// Whole-unit input for the fine-tuned encoder: the unit's strands as one
/// instruction sequence.
pub fn unit_sample(u: &Unit, vocab: &Vocab) -> Sample {
    let asm: Vec<&String> = u.strands.iter().flatten().collect();
    encode(&asm, None, None, vocab)
}

fn recovery_sample(asm: &[String], mark: usize, vocab: &Vocab) -> Sample {
    encode(asm, None, Some(mark), vocab)
}

fn class_sample(asm: &[String], vocab: &Vocab) -> Sample {
    encode(asm, None, None, vocab)
}

/// Runs `epochs` passes over `n` items and keeps the epoch with the best
/// validation score (the last one when there is nothing to validate on).
fn fit(
    model: Model<f32>,
    cfg: TrainConfig,
    n: usize,
    mut step: impl FnMut(&mut Model<f32>, &mut Trainer<f32>, &[usize]) -> std::result::Result<StepStats, NeuralError>,
    eval: impl Fn(&Model<f32>) -> Result<Option<f64>>,
) -> Result<(Model<f32>, String)> {
    let mut model = model;
    let mut trainer = Trainer::new(&model, cfg);
    let mut best: Option<(f64, Model<f32>)> = None;
    let mut csv = String::from("epoch,train_loss,val_metric\n");
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sub_rng(cfg.seed, epoch as u64));
        let mut loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            loss += step(&mut model, &mut trainer, chunk)?.total;
            batches += 1;
        }
        let loss = loss / batches.max(1) as f64;
        let metric = eval(&model)?;
        log::info!("epoch {:>3} loss {:.4} val {:?}", epoch, loss, metric);
        csv.push_str(&format!("{},{:.6},{}\n", epoch, loss, metric.map(|m| format!("{:.6}", m)).unwrap_or_default()));
        match metric {
            Some(m) if best.as_ref().is_none_or(|(b, _)| m > *b) => best = Some((m, model.clone())),
            _ => {}
        }
    }
    let out = match best {
        Some((_, m)) => m,
        None => model,
    };
    Ok((out, csv))
}

fn pair_scores(model: &Model<f32>, pairs: &[(Sample, Sample, i8)]) -> Result<Vec<(f64, bool)>> {
    pairs
        .iter()
        .map(|(a, b, y)| {
            let ea = model.embed(a, EmbedMode::Finetuned)?;
            let eb = model.embed(b, EmbedMode::Finetuned)?;
            Ok((cosine64(&ea, &eb), *y > 0))
        })
        .collect()
}

pub fn class_accuracy(model: &Model<f32>, items: &[(Sample, usize)]) -> Result<Option<f64>> {
    if items.is_empty() {
        return Ok(None);
    }
    let mut hits = 0;
    for (s, y) in items {
        if model.classify(s, CLASS_HEAD)? == *y {
            hits += 1;
        }
    }
    Ok(Some(hits as f64 / items.len() as f64))
}

/// Per-instruction accuracy of strand membership, the marked instruction
/// and truncated instructions excluded.
pub fn token_accuracy(model: &Model<f32>, items: &[(Sample, Vec<u8>)]) -> Result<Option<f64>> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (s, labels) in items {
        let probs = model.token_probs(s, TOKEN_HEAD)?;
        let mark = strandforge_core::neural::marked_instruction(s);
        for (k, (p, l)) in probs.iter().zip(labels).enumerate() {
            if Some(k) == mark {
                continue;
            }
            total += 1;
            if (*p > 0.5) == (*l == 1) {
                hits += 1;
            }
        }
    }
    Ok((total > 0).then(|| hits as f64 / total as f64))
}

enum Prepared {
    Pairs(Vec<(Sample, Sample, i8)>),
    Classes(Vec<(Sample, usize)>),
    Tokens(Vec<(Sample, Vec<u8>)>),
}

fn prepare(items: &[TaskItem], vocab: &Vocab) -> Prepared {
    match items.first() {
        Some(TaskItem::Recovery { .. }) => Prepared::Tokens(
            items
                .iter()
                .filter_map(|it| match it {
                    TaskItem::Recovery { asm, mark, labels, .. } => Some((recovery_sample(asm, *mark, vocab), labels.clone())),
                    _ => None,
                })
                .collect(),
        ),
        Some(TaskItem::Class { .. }) | Some(TaskItem::Exec(_)) => Prepared::Classes(
            items
                .iter()
                .filter_map(|it| match it {
                    TaskItem::Class { asm, label } => Some((class_sample(asm, vocab), *label)),
                    TaskItem::Exec(e) => Some((encode_exec(e, vocab), e.label as usize)),
                    _ => None,
                })
                .collect(),
        ),
        _ => Prepared::Pairs(
            items
                .iter()
                .filter_map(|it| match it {
                    TaskItem::Pair { a, b, label } => Some((unit_sample(a, vocab), unit_sample(b, vocab), *label)),
                    _ => None,
                })
                .collect(),
        ),
    }
}

fn n_classes(data: &TaskData) -> usize {
    if data.task == Task::Exec {
        EXEC_LABEL_MAX as usize + 1
    } else {
        data.classes.len()
    }
}

pub fn finetune(ctx: &Ctx) -> Result<()> {
    let task = ctx.task()?;
    if matches!(task, Task::OpcodeOutlier | Task::OperandOutlier) {
        return Err(CliError::Usage(format!("`{}` is evaluated on frozen embeddings only", task.name())));
    }
    let mut rec = ctx.recorder(&format!("finetune-{}", task.name()));
    let vocab = load_vocab(ctx, &mut rec)?;
    let mut model = load_model(ctx, &mut rec, "model.ckpt", &vocab)?;
    let data = task_data(ctx, &mut rec, task)?;
    let cfg = ctx.train_config()?;
    let mut head_rng = sub_rng(ctx.seed, 0x6865_6164);
    let (model, csv) = match (prepare(&data.splits.train, &vocab), prepare(&data.splits.val, &vocab)) {
        (Prepared::Pairs(train), Prepared::Pairs(val)) => fit(
            model,
            cfg,
            train.len(),
            |m, t, idx| {
                let batch: Vec<_> = idx.iter().map(|&i| train[i].clone()).collect();
                finetune_siamese_step(m, t, &batch)
            },
            |m| Ok(auc(&pair_scores(m, &val)?)),
        )?,
        (Prepared::Classes(train), Prepared::Classes(val)) => {
            model.add_head(CLASS_HEAD, n_classes(&data).max(2), &mut head_rng);
            fit(
                model,
                cfg,
                train.len(),
                |m, t, idx| {
                    let batch: Vec<_> = idx.iter().map(|&i| train[i].clone()).collect();
                    finetune_classifier_step(m, t, &batch, CLASS_HEAD)
                },
                |m| class_accuracy(m, &val),
            )?
        }
        (Prepared::Tokens(train), Prepared::Tokens(val)) => {
            model.add_head(TOKEN_HEAD, 1, &mut head_rng);
            fit(
                model,
                cfg,
                train.len(),
                |m, t, idx| {
                    let batch: Vec<_> = idx.iter().map(|&i| train[i].clone()).collect();
                    finetune_token_step(m, t, &batch, TOKEN_HEAD)
                },
                |m| token_accuracy(m, &val),
            )?
        }
        _ => return Err(CliError::Usage(format!("`{}` has no training items", task.name()))),
    };
    rec.output(&format!("finetune-{}.ckpt", task.name()), &encode_checkpoint(&model, &vocab_hash(&vocab)))?;
    rec.output(&format!("finetune-{}.csv", task.name()), csv.as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- embed

fn parse_mode(s: &str) -> Result<EmbedMode> {
    match s {
        "intrinsic" => Ok(EmbedMode::Intrinsic),
        "finetuned" => Ok(EmbedMode::Finetuned),
        other => Err(CliError::Usage(format!("unknown embedding mode `{}`", other))),
    }
}

/// Intrinsic: the mean of the unit's strand embeddings. Fine-tuned: the
/// whole unit through the fine-tuned encoder.
pub fn unit_embedding(model: &Model<f32>, u: &Unit, vocab: &Vocab, mode: EmbedMode) -> Result<Vec<f32>> {
    match mode {
        EmbedMode::Finetuned => Ok(model.embed(&unit_sample(u, vocab), mode)?),
        EmbedMode::Intrinsic => {
            let samples = encode_unit(u, vocab);
            let mut acc = vec![0.0f32; model.config.hidden];
            for s in &samples {
                for (a, x) in acc.iter_mut().zip(model.embed(s, mode)?) {
                    *a += x;
                }
            }
            let n = samples.len().max(1) as f32;
            Ok(acc.into_iter().map(|a| a / n).collect())
        }
    }
}

fn embeddings_name(task: Task, mode: &str) -> String {
    format!("embeddings-{}-{}.csv", task.name(), mode)
}

pub fn embed(ctx: &Ctx) -> Result<()> {
    let task = ctx.task()?;
    if !task.is_similarity() {
        return Err(CliError::Usage(format!("`{}` has no retrieval database", task.name())));
    }
    let mode_name = ctx.settings.string("mode", "intrinsic");
    let mode = parse_mode(&mode_name)?;
    let mut rec = ctx.recorder(&format!("embed-{}-{}", task.name(), mode_name));
    let vocab = load_vocab(ctx, &mut rec)?;
    let ckpt = if mode == EmbedMode::Finetuned { format!("finetune-{}.ckpt", task.name()) } else { "model.ckpt".into() };
    let model = load_model(ctx, &mut rec, &ckpt, &vocab)?;
    let data = task_data(ctx, &mut rec, task)?;
    let vecs = ctx.par_map(&data.db, |d| unit_embedding(&model, &d.unit, &vocab, mode));
    let rows = data
        .db
        .iter()
        .zip(vecs)
        .map(|(d, v)| Ok((d.unit.id.clone(), d.group.to_string(), v?)))
        .collect::<Result<Vec<_>>>()?;
    rec.output(&embeddings_name(task, &mode_name), embeddings_csv(&rows).as_bytes())?;
    ctx.finish(rec)
}

// ---------------------------------------------------------------- bench

fn db_from_rows(rows: Vec<(String, String, Vec<f32>)>) -> Result<SimilarityDb> {
    let mut groups: BTreeMap<String, u64> = BTreeMap::new();
    let entries = rows
        .into_iter()
        .map(|(id, g, embedding)| {
            let n = groups.len() as u64;
            let group = *groups.entry(g).or_insert(n);
            DbEntry { id, embedding, group }
        })
        .collect();
    Ok(SimilarityDb::new(entries)?)
}

fn row(task: Task, split: &str, metric: &str, k: Option<usize>, value: f64, seed: u64) -> ResultRow {
    ResultRow { task: task.name(), split: split.into(), metric: metric.into(), k, value, seed }
}

pub fn bench(ctx: &Ctx) -> Result<()> {
    let task = ctx.task()?;
    let mut rec = ctx.recorder(&format!("bench-{}", task.name()));
    let mut rows = Vec::new();
    let seed = ctx.seed;
    if task.is_similarity() {
        let mode = ctx.settings.string("mode", "intrinsic");
        parse_mode(&mode)?;
        let ks: Vec<usize> = ctx
            .settings
            .string("k", "10,25,40")
            .split(',')
            .map(|k| k.trim().parse().map_err(|_| CliError::Usage(format!("bad k list element `{}`", k))))
            .collect::<Result<_>>()?;
        let p = ctx.path(&embeddings_name(task, &mode));
        let emb = read_embeddings(&p)?;
        rec.input(&p)?;
        let dim = emb.first().map(|r| r.2.len()).unwrap_or(0);
        let mut rng = sub_rng(seed, 0x7261_6e64);
        let random: Vec<_> = emb.iter().map(|(id, g, _)| (id.clone(), g.clone(), random_embedding(dim, &mut rng))).collect();
        let db = db_from_rows(emb)?;
        let baseline = db_from_rows(random)?;
        log::info!("{} entries, {} queries", db.len(), db.queries().len());
        for (split, d) in [(mode.as_str(), &db), ("random", &baseline)] {
            for (k, s) in evaluate(d, &ks) {
                rows.push(row(task, split, "precision", Some(k), s.precision, seed));
                rows.push(row(task, split, "recall", Some(k), s.recall, seed));
                rows.push(row(task, split, "ndcg", Some(k), s.ndcg, seed));
            }
        }
    } else if matches!(task, Task::OpcodeOutlier | Task::OperandOutlier) {
        let vocab = load_vocab(ctx, &mut rec)?;
        let model = load_model(ctx, &mut rec, "model.ckpt", &vocab)?;
        let runs = ctx.settings.get("runs", 10usize)?;
        let fs = load_store(ctx, &mut rec)?;
        let corpus = BenchCorpus { functions: &fs, strands: &[], sets: &[], synth: None, rules: &ctx.rules };
        let base = ctx.task_config()?;
        let (mut model_acc, mut random_acc) = (Vec::new(), Vec::new());
        let mut cache: BTreeMap<String, Vec<f32>> = BTreeMap::new();
        for r in 0..runs {
            let cfg = TaskConfig { seed: seed.wrapping_add(r as u64), ..base.clone() };
            let data = build_task_datasets(&corpus, task, &cfg)?;
            let sets: Vec<_> = data
                .splits
                .test
                .into_iter()
                .filter_map(|it| match it {
                    TaskItem::Outlier(o) => Some(o),
                    _ => None,
                })
                .collect();
            let texts: BTreeSet<&String> = sets.iter().flat_map(|s| s.instructions.iter()).collect();
            let missing: Vec<&String> = texts.into_iter().filter(|t| !cache.contains_key(*t)).collect();
            let vecs = ctx.par_map(&missing, |t| model.embed(&encode(&[t.as_str()], None, None, &vocab), EmbedMode::Intrinsic));
            for (t, v) in missing.iter().zip(vecs) {
                cache.insert((*t).clone(), v?);
            }
            model_acc.push(outlier_accuracy(&sets, |t| cache[t].clone()));
            let mut rng = sub_rng(cfg.seed, 0x7261_6e64);
            random_acc.push(outlier_accuracy(&sets, |_| random_embedding(model.config.hidden, &mut rng)));
        }
        for (split, acc) in [("intrinsic", &model_acc), ("random", &random_acc)] {
            let (m, s) = mean_std(acc);
            rows.push(row(task, split, "accuracy_mean", None, m, seed));
            rows.push(row(task, split, "accuracy_std", None, s, seed));
        }
    } else {
        let vocab = load_vocab(ctx, &mut rec)?;
        let model = load_model(ctx, &mut rec, &format!("finetune-{}.ckpt", task.name()), &vocab)?;
        let data = task_data(ctx, &mut rec, task)?;
        let mut rng = sub_rng(seed, 0x7261_6e64);
        match prepare(&data.splits.test, &vocab) {
            Prepared::Classes(test) => {
                let acc = class_accuracy(&model, &test)?.unwrap_or(0.0);
                let classes = n_classes(&data).max(1);
                let guess = test.iter().filter(|(_, y)| rng.gen_range(0..classes) == *y).count();
                rows.push(row(task, "test", "accuracy", None, acc, seed));
                rows.push(row(task, "random", "accuracy", None, guess as f64 / test.len().max(1) as f64, seed));
            }
            Prepared::Tokens(test) => {
                let acc = token_accuracy(&model, &test)?.unwrap_or(0.0);
                rows.push(row(task, "test", "token_accuracy", None, acc, seed));
                let (mut hits, mut total) = (0usize, 0usize);
                for (s, labels) in &test {
                    let mark = strandforge_core::neural::marked_instruction(s);
                    for (k, l) in labels.iter().enumerate().take(s.instr_starts.len()) {
                        if Some(k) != mark {
                            total += 1;
                            hits += usize::from(rng.gen_bool(0.5) == (*l == 1));
                        }
                    }
                }
                rows.push(row(task, "random", "token_accuracy", None, hits as f64 / total.max(1) as f64, seed));
            }
            Prepared::Pairs(test) => {
                let a = auc(&pair_scores(&model, &test)?).unwrap_or(0.5);
                rows.push(row(task, "test", "auc", None, a, seed));
            }
        }
    }
    for r in &rows {
        log::info!("{} {} {} {:?} {:.4}", r.task, r.split, r.metric, r.k, r.value);
    }
    rec.output(&format!("results-{}.csv", task.name()), results_csv(&rows).as_bytes())?;
    ctx.finish(rec)
}
