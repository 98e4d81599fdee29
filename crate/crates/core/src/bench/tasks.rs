//! Train/validation/test datasets for the downstream tasks.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::outlier::{class_pool, generate_outlier_sets, OutlierBasis, OutlierSet};
use super::BenchError;
use crate::cfg::{BasicBlock, FunctionCfg};
use crate::corpus::{build_exec_dataset, split_by_text, ExecSample, Splits};
use crate::normalize::{normalize_instruction, NormRules};
use crate::rng::{seeded, sub_rng};
use crate::slicer::{disjoint_strand_cover, extract_strands, Strand};
use crate::sym::{simplify, RepresentativeSet, SymAssign, Target};
use crate::synth::equiv::{sets_intersect, SynthCorpus};
use crate::tokenizer::{encode, encode_within, Sample, Vocab, SEP};

/// Blocks need this many pairwise-disjoint strands to enter strand recovery.
pub const RECOVERY_MIN_STRANDS: usize = 5;
/// Functions are cut to this many instructions before encoding.
pub const FUNCTION_MAX_INSTRUCTIONS: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Strand,
    Block,
    Function,
}

impl Level {
    fn name(self) -> &'static str {
        match self {
            Level::Strand => "strand",
            Level::Block => "block",
            Level::Function => "function",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    OpcodeOutlier,
    OperandOutlier,
    StrandSim,
    BlockSim,
    FunctionSim,
    Compiler(Level),
    Optimization(Level),
    Recovery,
    Exec,
}

impl Task {
    pub const ALL: [Task; 13] = [
        Task::OpcodeOutlier,
        Task::OperandOutlier,
        Task::StrandSim,
        Task::BlockSim,
        Task::FunctionSim,
        Task::Compiler(Level::Strand),
        Task::Compiler(Level::Block),
        Task::Compiler(Level::Function),
        Task::Optimization(Level::Strand),
        Task::Optimization(Level::Block),
        Task::Optimization(Level::Function),
        Task::Recovery,
        Task::Exec,
    ];

    pub fn name(self) -> String {
        match self {
            Task::OpcodeOutlier => "opcode-outlier".into(),
            Task::OperandOutlier => "operand-outlier".into(),
            Task::StrandSim => "strand-sim".into(),
            Task::BlockSim => "block-sim".into(),
            Task::FunctionSim => "function-sim".into(),
            Task::Compiler(l) => format!("{}-compiler", l.name()),
            Task::Optimization(l) => format!("{}-opt", l.name()),
            Task::Recovery => "recovery".into(),
            Task::Exec => "exec".into(),
        }
    }

    pub fn parse(name: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_similarity(self) -> bool {
        matches!(self, Task::StrandSim | Task::BlockSim | Task::FunctionSim)
    }
}

/// A retrieval item: one strand, or a block/function given by its strands.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub id: String,
    pub strands: Vec<Vec<String>>,
}

impl Unit {
    pub fn text(&self) -> String {
        self.strands.iter().map(|s| s.join(" ")).collect::<Vec<_>>().join(" | ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskItem {
    /// Similarity fine-tuning pair, label ±1.
    Pair { a: Unit, b: Unit, label: i8 },
    Class { asm: Vec<String>, label: usize },
    /// `labels[i]` is 1 when instruction `i` belongs to the marked strand;
    /// the marked instruction itself is 0 and ignored by the loss.
    Recovery { block_id: String, asm: Vec<String>, mark: usize, labels: Vec<u8> },
    Exec(ExecSample),
    Outlier(OutlierSet),
}

impl TaskItem {
    /// Sample text; identical texts never straddle splits.
    pub fn key(&self) -> String {
        match self {
            TaskItem::Pair { a, b, .. } => {
                let (x, y) = (a.text(), b.text());
                if x <= y {
                    format!("{} || {}", x, y)
                } else {
                    format!("{} || {}", y, x)
                }
            }
            TaskItem::Class { asm, .. } => asm.join(" "),
            TaskItem::Recovery { asm, mark, .. } => format!("{} @{}", asm.join(" "), mark),
            TaskItem::Exec(e) => e.text.clone(),
            TaskItem::Outlier(o) => o.instructions.join(" ; "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DbUnit {
    pub unit: Unit,
    pub group: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskData {
    pub task: Task,
    /// Class names for classification tasks, by label index.
    pub classes: Vec<String>,
    pub splits: Splits<TaskItem>,
    /// Retrieval database drawn from the test groups (similarity tasks).
    pub db: Vec<DbUnit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub seed: u64,
    /// (train, val); test takes the rest.
    pub ratios: (f64, f64),
    /// Cap on emitted items per task.
    pub max_items: usize,
    /// Cap on positive pairs drawn from one similarity group.
    pub pairs_per_group: usize,
    pub outlier_sets: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig { seed: 0, ratios: (0.8, 0.1), max_items: 50_000, pairs_per_group: 4, outlier_sets: 50_000 }
    }
}

/// Inputs shared by all builders. Strand `i` pairs with `sets[i]`.
#[derive(Debug, Clone, Copy)]
pub struct BenchCorpus<'a> {
    pub functions: &'a [FunctionCfg],
    pub strands: &'a [Strand],
    pub sets: &'a [Option<RepresentativeSet>],
    pub synth: Option<&'a SynthCorpus>,
    pub rules: &'a NormRules,
}

/// `binary_id/function_id`, the function id carried by strands.
pub fn qualified_id(f: &FunctionCfg) -> String {
    format!("{}/{}", f.binary_id, f.function_id)
}

pub fn function_strands(f: &FunctionCfg, rules: &NormRules) -> Vec<Strand> {
    let id = qualified_id(f);
    f.blocks.iter().flat_map(|b| extract_strands(&id, b, rules)).collect()
}

fn block_text(b: &BasicBlock, rules: &NormRules) -> Vec<String> {
    b.instructions.iter().map(|i| normalize_instruction(i, rules)).collect()
}

fn function_text(f: &FunctionCfg, rules: &NormRules) -> Vec<String> {
    f.blocks
        .iter()
        .flat_map(|b| b.instructions.iter())
        .take(FUNCTION_MAX_INSTRUCTIONS)
        .map(|i| normalize_instruction(i, rules))
        .collect()
}

fn insufficient(task: Task, needed: usize, found: usize) -> BenchError {
    BenchError::InsufficientData { task: task.name(), needed, found }
}

pub fn build_task_datasets(corpus: &BenchCorpus<'_>, task: Task, cfg: &TaskConfig) -> Result<TaskData, BenchError> {
    match task {
        Task::OpcodeOutlier | Task::OperandOutlier => outliers(corpus, task, cfg),
        Task::StrandSim => similarity(task, strand_units(corpus), cfg),
        Task::BlockSim => {
            let synth = corpus.synth.ok_or_else(|| insufficient(task, 1, 0))?;
            similarity(task, synth_block_units(synth, cfg.max_items, cfg.seed), cfg)
        }
        Task::FunctionSim => similarity(task, function_units(corpus), cfg),
        Task::Compiler(level) | Task::Optimization(level) => provenance(corpus, task, level, cfg),
        Task::Recovery => recovery(corpus, cfg),
        Task::Exec => {
            let samples = build_exec_dataset(corpus.strands, cfg.max_items, cfg.seed);
            if samples.is_empty() {
                return Err(insufficient(task, 1, 0));
            }
            let items: Vec<TaskItem> = samples.into_iter().map(TaskItem::Exec).collect();
            Ok(TaskData { task, classes: Vec::new(), splits: split(&items, cfg), db: Vec::new() })
        }
    }
}

fn split(items: &[TaskItem], cfg: &TaskConfig) -> Splits<TaskItem> {
    split_by_text(items, TaskItem::key, cfg.ratios, cfg.seed)
}

fn outliers(corpus: &BenchCorpus<'_>, task: Task, cfg: &TaskConfig) -> Result<TaskData, BenchError> {
    let basis = if task == Task::OpcodeOutlier { OutlierBasis::Opcode } else { OutlierBasis::Operand };
    let instrs = corpus.functions.iter().flat_map(|f| f.blocks.iter()).flat_map(|b| b.instructions.iter());
    let pool = class_pool(instrs, basis, corpus.rules);
    let sets = generate_outlier_sets(&pool, basis, cfg.outlier_sets, cfg.seed).map_err(|e| match e {
        BenchError::InsufficientData { needed, found, .. } => insufficient(task, needed, found),
        e => e,
    })?;
    let test = sets.into_iter().map(TaskItem::Outlier).collect();
    Ok(TaskData { task, classes: Vec::new(), splits: Splits { train: Vec::new(), val: Vec::new(), test }, db: Vec::new() })
}

fn canonical_key(a: &SymAssign) -> String {
    let target = match &a.target {
        Target::Mem { addr, width } => Target::Mem { addr: simplify(addr), width: *width },
        t => t.clone(),
    };
    SymAssign { target, expr: simplify(&a.expr) }.print()
}

/// A similarity candidate with its ground-truth check.
struct Candidate {
    unit: Unit,
    sets: Vec<RepresentativeSet>,
    group: u64,
}

/// Two units are similar when every strand of one shares a representative
/// assignment with some strand of the other, both ways.
fn units_similar(a: &Candidate, b: &Candidate) -> bool {
    let covers = |x: &[RepresentativeSet], y: &[RepresentativeSet]| x.iter().all(|s| y.iter().any(|t| sets_intersect(s, t)));
    covers(&a.sets, &b.sets) && covers(&b.sets, &a.sets)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Executed strands, one per distinct text, grouped by the connected
/// components of "shares a canonical assignment".
fn strand_units(corpus: &BenchCorpus<'_>) -> Vec<Candidate> {
    let mut seen = BTreeSet::new();
    let mut picked: Vec<(&Strand, &RepresentativeSet)> = Vec::new();
    for (s, set) in corpus.strands.iter().zip(corpus.sets) {
        if let Some(set) = set {
            if !set.assigns.is_empty() && seen.insert(s.text()) {
                picked.push((s, set));
            }
        }
    }
    let mut uf = UnionFind((0..picked.len()).collect());
    let mut first: BTreeMap<String, usize> = BTreeMap::new();
    for (i, (_, set)) in picked.iter().enumerate() {
        for a in &set.assigns {
            match first.get(&canonical_key(a)) {
                Some(&j) => uf.union(i, j),
                None => {
                    first.insert(canonical_key(a), i);
                }
            }
        }
    }
    (0..picked.len())
        .map(|i| Candidate {
            unit: Unit { id: picked[i].0.strand_id.clone(), strands: alloc::vec![picked[i].0.asm.clone()] },
            sets: alloc::vec![picked[i].1.clone()],
            group: uf.find(i) as u64,
        })
        .collect()
}

/// Synthetic blocks of 2 or 3 strands from distinct families; blocks built
/// from the same families (in any variants) form a group.
fn synth_block_units(synth: &SynthCorpus, n: usize, seed: u64) -> Vec<Candidate> {
    let mut by_family: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, f) in synth.family.iter().enumerate() {
        by_family.entry(*f).or_default().push(i);
    }
    let families: Vec<usize> = by_family.keys().copied().collect();
    let mut out = Vec::new();
    if families.len() < 3 {
        return out;
    }
    let mut seen = BTreeSet::new();
    let mut g = 0u64;
    while out.len() < n && (g as usize) < n.saturating_mul(4) {
        let mut rng = sub_rng(seed, g);
        let m = rng.gen_range(2..=3);
        let mut fams: Vec<usize> = families.choose_multiple(&mut rng, m).copied().collect();
        fams.sort_unstable();
        let copies = rng.gen_range(2..=4);
        for c in 0..copies {
            let members: Vec<usize> = fams.iter().map(|f| *by_family[f].choose(&mut rng).unwrap()).collect();
            let strands: Vec<Vec<String>> = members.iter().map(|&i| synth.strands[i].asm.clone()).collect();
            let unit = Unit { id: format!("block{}:{}", g, c), strands };
            if seen.insert(unit.text()) {
                let sets = members.iter().map(|&i| synth.sets[i].clone()).collect();
                out.push(Candidate { unit, sets, group: g });
            }
        }
        g += 1;
    }
    out
}

/// Functions of the same name across binaries are similar. Each function
/// contributes the strands inside its first 150 instructions.
fn function_units(corpus: &BenchCorpus<'_>) -> Vec<Candidate> {
    let mut names: BTreeMap<&str, u64> = BTreeMap::new();
    let mut by_fn: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in corpus.strands.iter().enumerate() {
        by_fn.entry(s.function_id.as_str()).or_default().push(i);
    }
    let mut out = Vec::new();
    for f in corpus.functions {
        let next = names.len() as u64;
        let group = *names.entry(f.function_id.as_str()).or_insert(next);
        let qid = qualified_id(f);
        let mut offset = BTreeMap::new();
        let mut acc = 0usize;
        for b in &f.blocks {
            offset.insert(b.block_id.as_str(), acc);
            acc += b.instructions.len();
        }
        let mut strands = Vec::new();
        let mut sets = Vec::new();
        for &i in by_fn.get(qid.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            let s = &corpus.strands[i];
            let start = offset.get(s.block_id.as_str()).copied().unwrap_or(usize::MAX);
            if start.saturating_add(s.anchor() as usize) < FUNCTION_MAX_INSTRUCTIONS {
                strands.push(s.asm.clone());
                if let Some(Some(set)) = corpus.sets.get(i) {
                    sets.push(set.clone());
                }
            }
        }
        if !strands.is_empty() {
            out.push(Candidate { unit: Unit { id: qid, strands }, sets, group });
        }
    }
    out
}

fn similarity(task: Task, units: Vec<Candidate>, cfg: &TaskConfig) -> Result<TaskData, BenchError> {
    let mut sizes: BTreeMap<u64, usize> = BTreeMap::new();
    for u in &units {
        *sizes.entry(u.group).or_default() += 1;
    }
    let multi = sizes.values().filter(|n| **n > 1).count();
    if multi < 2 {
        return Err(insufficient(task, 2, multi));
    }
    let order: Vec<usize> = (0..units.len()).collect();
    let by_group = split_by_text(&order, |i| format!("{}", units[*i].group), cfg.ratios, cfg.seed);
    let mut pair_rng = seeded(cfg.seed ^ 0x7061697273);
    let budget = cfg.max_items;
    let mut make = |idx: &[usize], share: f64| pairs_within(&units, idx, cfg.pairs_per_group, (budget as f64 * share) as usize, &mut pair_rng, task != Task::FunctionSim);
    let train = make(&by_group.train, cfg.ratios.0);
    let val = make(&by_group.val, cfg.ratios.1);
    let test = make(&by_group.test, 1.0 - cfg.ratios.0 - cfg.ratios.1);
    let db = by_group.test.iter().map(|&i| DbUnit { unit: units[i].unit.clone(), group: units[i].group }).collect();
    Ok(TaskData { task, classes: Vec::new(), splits: Splits { train, val, test }, db })
}

/// Balanced ±1 pairs among `idx`. Positives come from within groups,
/// negatives from across; when `verify` is set every label is checked
/// against the representative sets and disagreeing pairs are dropped.
fn pairs_within(
    units: &[Candidate],
    idx: &[usize],
    per_group: usize,
    cap: usize,
    rng: &mut crate::rng::Rng,
    verify: bool,
) -> Vec<TaskItem> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        groups.entry(units[i].group).or_default().push(i);
    }
    let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut pos: Vec<(usize, usize)> = Vec::new();
    for members in groups.values() {
        if members.len() < 2 {
            continue;
        }
        let mut all: Vec<(usize, usize)> = Vec::new();
        for (x, &a) in members.iter().enumerate() {
            for &b in &members[x + 1..] {
                all.push((a, b));
            }
            if all.len() > per_group * 8 {
                break;
            }
        }
        all.shuffle(rng);
        let mut taken = 0;
        for (a, b) in all {
            if taken == per_group {
                break;
            }
            if (!verify || units_similar(&units[a], &units[b])) && seen.insert((a, b)) {
                pos.push((a, b));
                taken += 1;
            }
        }
    }
    pos.shuffle(rng);
    pos.truncate(cap / 2);
    let mut neg: Vec<(usize, usize)> = Vec::new();
    let mut tries = 0;
    while neg.len() < pos.len() && tries < pos.len() * 50 && idx.len() > 1 {
        tries += 1;
        let a = *idx.choose(rng).unwrap();
        let b = *idx.choose(rng).unwrap();
        let (a, b) = (a.min(b), a.max(b));
        if units[a].group == units[b].group || (verify && units_similar(&units[a], &units[b])) {
            continue;
        }
        if seen.insert((a, b)) {
            neg.push((a, b));
        }
    }
    pos.truncate(neg.len());
    let mut items: Vec<TaskItem> = Vec::with_capacity(pos.len() * 2);
    for (p, n) in pos.into_iter().zip(neg) {
        items.push(TaskItem::Pair { a: units[p.0].unit.clone(), b: units[p.1].unit.clone(), label: 1 });
        items.push(TaskItem::Pair { a: units[n.0].unit.clone(), b: units[n.1].unit.clone(), label: -1 });
    }
    items
}

fn provenance(corpus: &BenchCorpus<'_>, task: Task, level: Level, cfg: &TaskConfig) -> Result<TaskData, BenchError> {
    let label_of = |f: &FunctionCfg| -> Option<String> {
        match task {
            Task::Compiler(_) => f.compiler.clone(),
            _ => f.optimization.map(|o| o.name().to_string()),
        }
    };
    let by_id: BTreeMap<String, &FunctionCfg> = corpus.functions.iter().map(|f| (qualified_id(f), f)).collect();
    let mut raw: Vec<(Vec<String>, String)> = Vec::new();
    match level {
        Level::Strand => {
            for s in corpus.strands {
                if let Some(l) = by_id.get(&s.function_id).and_then(|f| label_of(f)) {
                    raw.push((s.asm.clone(), l));
                }
            }
        }
        Level::Block => {
            for f in corpus.functions {
                if let Some(l) = label_of(f) {
                    raw.extend(f.blocks.iter().map(|b| (block_text(b, corpus.rules), l.clone())));
                }
            }
        }
        Level::Function => {
            for f in corpus.functions {
                if let Some(l) = label_of(f) {
                    raw.push((function_text(f, corpus.rules), l));
                }
            }
        }
    }
    let classes: Vec<String> = raw.iter().map(|(_, l)| l.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(insufficient(task, 2, classes.len()));
    }
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for (asm, l) in raw {
        if items.len() >= cfg.max_items {
            break;
        }
        if seen.insert(asm.join(" ")) {
            let label = classes.binary_search(&l).expect("label listed");
            items.push(TaskItem::Class { asm, label });
        }
    }
    Ok(TaskData { task, classes, splits: split(&items, cfg), db: Vec::new() })
}

/// One sample per strand of the block's disjoint cover, marking its last
/// instruction.
pub fn recovery_samples(function_id: &str, block: &BasicBlock, rules: &NormRules) -> Result<Vec<TaskItem>, BenchError> {
    let strands = extract_strands(function_id, block, rules);
    let cover = disjoint_strand_cover(&strands);
    if cover.len() < RECOVERY_MIN_STRANDS {
        return Err(insufficient(Task::Recovery, RECOVERY_MIN_STRANDS, cover.len()));
    }
    let asm = block_text(block, rules);
    Ok(cover
        .iter()
        .map(|s| {
            let mark = s.anchor() as usize;
            let mut labels = alloc::vec![0u8; asm.len()];
            for &i in &s.indices {
                labels[i as usize] = u8::from(i as usize != mark);
            }
            TaskItem::Recovery { block_id: format!("{}:{}", function_id, block.block_id), asm: asm.clone(), mark, labels }
        })
        .collect())
}

fn recovery(corpus: &BenchCorpus<'_>, cfg: &TaskConfig) -> Result<TaskData, BenchError> {
    let mut items = Vec::new();
    let mut best = 0;
    'outer: for f in corpus.functions {
        let id = qualified_id(f);
        for b in &f.blocks {
            match recovery_samples(&id, b, corpus.rules) {
                Ok(s) => items.extend(s),
                Err(BenchError::InsufficientData { found, .. }) => best = best.max(found),
                Err(e) => return Err(e),
            }
            if items.len() >= cfg.max_items {
                break 'outer;
            }
        }
    }
    if items.is_empty() {
        return Err(insufficient(Task::Recovery, RECOVERY_MIN_STRANDS, best));
    }
    Ok(TaskData { task: Task::Recovery, classes: Vec::new(), splits: split(&items, cfg), db: Vec::new() })
}

/// `[CLS] asm [SEP] inputs [SEP] (query [SEP])`, the query kept whole.
pub fn encode_exec(e: &ExecSample, vocab: &Vocab) -> Sample {
    let assigns: Vec<String> = e.inputs.iter().map(|(d, _, v)| format!("{} = {}", d, v)).collect();
    let q = e.query.as_deref().map(|q| vocab.encode_text(q)).unwrap_or_default();
    let reserve = if e.query.is_some() { q.len() + 1 } else { 0 };
    let mut s = encode_within(&e.asm, Some(&assigns.join(" ")), None, vocab, vocab.max_seq.saturating_sub(reserve));
    if e.query.is_some() {
        for id in q {
            s.push(id, 1);
        }
        s.push(SEP, 1);
    }
    s
}

/// One sample per strand of the unit.
pub fn encode_unit(u: &Unit, vocab: &Vocab) -> Vec<Sample> {
    u.strands.iter().map(|s| encode(s, None, None, vocab)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::block_from_lines;
    use crate::synth::equiv::synth_equivalence_corpus;
    use alloc::vec;

    #[test]
    fn task_names_round_trip() {
        for t in Task::ALL {
            assert_eq!(Task::parse(&t.name()), Some(t));
        }
        assert_eq!(Task::parse("strand-sim"), Some(Task::StrandSim));
    }

    #[test]
    fn recovery_needs_five_disjoint_strands() {
        let four = ["mov eax, 1", "mov ebx, 2", "mov ecx, 3", "mov edx, 4"];
        let b = block_from_lines("b", &four).unwrap();
        let err = recovery_samples("f", &b, &NormRules::default()).unwrap_err();
        assert_eq!(err, BenchError::InsufficientData { task: "recovery".into(), needed: 5, found: 4 });
        let five = ["mov eax, 1", "mov ebx, 2", "mov ecx, 3", "mov edx, 4", "mov esi, 5"];
        let b = block_from_lines("b", &five).unwrap();
        assert_eq!(recovery_samples("f", &b, &NormRules::default()).unwrap().len(), 5);
    }

    #[test]
    fn recovery_labels_follow_the_strand() {
        let lines = [
            "mov eax, dword ptr [rbp - 8]",
            "add eax, 1",
            "mov ebx, 2",
            "mov ecx, 3",
            "mov edx, 4",
            "mov esi, 5",
            "mov dword ptr [rbp - 16], eax",
        ];
        let b = block_from_lines("b", &lines).unwrap();
        let items = recovery_samples("f", &b, &NormRules::default()).unwrap();
        let hit = items
            .iter()
            .find_map(|i| match i {
                TaskItem::Recovery { mark: 6, labels, .. } => Some(labels.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(hit, vec![1, 1, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn block_pairs_are_balanced_and_verified() {
        let synth = synth_equivalence_corpus(400, 5);
        let rules = NormRules::default();
        let corpus = BenchCorpus { functions: &[], strands: &[], sets: &[], synth: Some(&synth), rules: &rules };
        let cfg = TaskConfig { max_items: 400, ..TaskConfig::default() };
        let data = build_task_datasets(&corpus, Task::BlockSim, &cfg).unwrap();
        for part in [&data.splits.train, &data.splits.val, &data.splits.test] {
            let pos = part.iter().filter(|i| matches!(i, TaskItem::Pair { label: 1, .. })).count();
            assert_eq!(pos * 2, part.len());
        }
        assert!(!data.splits.train.is_empty());
        let train: BTreeSet<String> = data.splits.train.iter().map(TaskItem::key).collect();
        assert!(data.splits.test.iter().all(|i| !train.contains(&i.key())));
        assert!(!data.db.is_empty());
    }

    #[test]
    fn strand_pairs_from_synth_strands() {
        let synth = synth_equivalence_corpus(300, 9);
        let sets: Vec<Option<RepresentativeSet>> = synth.sets.iter().cloned().map(Some).collect();
        let rules = NormRules::default();
        let corpus = BenchCorpus { functions: &[], strands: &synth.strands, sets: &sets, synth: None, rules: &rules };
        let data = build_task_datasets(&corpus, Task::StrandSim, &TaskConfig::default()).unwrap();
        let mut n = 0;
        for item in data.splits.train.iter().chain(&data.splits.test) {
            if let TaskItem::Pair { a, b, label } = item {
                let ia = synth.strands.iter().position(|s| s.strand_id == a.id).unwrap();
                let ib = synth.strands.iter().position(|s| s.strand_id == b.id).unwrap();
                assert_eq!(synth.similar(ia, ib), *label == 1);
                n += 1;
            }
        }
        assert!(n > 50);
    }

    #[test]
    fn exec_encoding_keeps_query() {
        let vocab = crate::tokenizer::train_vocab(&["mov eax, 1 [SEP] rax = 9"], 200).unwrap();
        let b = block_from_lines("b", &["mov eax, dword ptr [rbp - 180]", "sub eax, 1"]).unwrap();
        let s = &extract_strands("f", &b, &NormRules::default())[0];
        let mut rng = seeded(1);
        let e = (0..50).find_map(|_| crate::corpus::exec_sample(s, &mut rng)).unwrap();
        let enc = encode_exec(&e, &vocab);
        assert_eq!(*enc.token_ids.last().unwrap(), SEP);
        let q = vocab.encode_text("rax");
        let n = enc.len();
        assert_eq!(&enc.token_ids[n - 1 - q.len()..n - 1], q.as_slice());
    }
}
