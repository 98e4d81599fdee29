//! Strand/expression pairs for the mapping task.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::CorpusError;
use crate::normalize::{normalize_symexpr, NormRules};
use crate::rng::{sub_rng, Rng};
use crate::slicer::Strand;
use crate::sym::{simplify, RepresentativeSet, SymAssign};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SsmPair {
    pub strand_id: String,
    pub asm: Vec<String>,
    pub symexpr: String,
    /// 1 when `symexpr` belongs to the strand's representative set.
    pub label: u8,
}

/// A strand with its representative set in canonical form.
#[derive(Debug, Clone)]
pub struct SsmSource {
    pub strand_id: String,
    pub asm: Vec<String>,
    pub set: Vec<SymAssign>,
}

impl SsmSource {
    pub fn new(strand: &Strand, set: &RepresentativeSet) -> Self {
        SsmSource {
            strand_id: strand.strand_id.clone(),
            asm: strand.asm.clone(),
            set: set.assigns.iter().map(canonical).collect(),
        }
    }

    /// Membership by target and canonical expression.
    pub fn contains(&self, a: &SymAssign) -> bool {
        let a = canonical(a);
        self.set.contains(&a)
    }
}

fn canonical(a: &SymAssign) -> SymAssign {
    use crate::sym::Target;
    let target = match &a.target {
        Target::Mem { addr, width } => Target::Mem { addr: simplify(addr), width: *width },
        t => t.clone(),
    };
    SymAssign { target, expr: simplify(&a.expr) }
}

/// Model-facing text of an assignment.
pub fn assign_text(a: &SymAssign, rules: &NormRules) -> String {
    normalize_symexpr(&a.print(), rules)
}

const NEGATIVE_TRIES: usize = 64;

/// Positive and negative pair for source `index`, drawn from its own
/// sub-seed. `None` when the set is empty or no negative could be found.
pub fn ssm_pairs_for(sources: &[SsmSource], index: usize, seed: u64, rules: &NormRules) -> Option<[SsmPair; 2]> {
    let me = &sources[index];
    if me.set.is_empty() || sources.len() < 2 {
        return None;
    }
    let mut rng: Rng = sub_rng(seed, index as u64);
    let pos = &me.set[rng.gen_range(0..me.set.len())];
    let mut neg = None;
    for _ in 0..NEGATIVE_TRIES {
        let j = rng.gen_range(0..sources.len());
        let other = &sources[j];
        if j == index || other.set.is_empty() {
            continue;
        }
        let cand = &other.set[rng.gen_range(0..other.set.len())];
        if !me.set.contains(cand) {
            neg = Some(cand);
            break;
        }
    }
    let neg = neg?;
    let pair = |a: &SymAssign, label| SsmPair {
        strand_id: me.strand_id.clone(),
        asm: me.asm.clone(),
        symexpr: assign_text(a, rules),
        label,
    };
    Some([pair(pos, 1), pair(neg, 0)])
}

/// Removes duplicate triples, then trims the larger class so the labels are
/// exactly balanced. Order of first appearance is kept.
pub fn finish_ssm(pairs: impl IntoIterator<Item = SsmPair>) -> Vec<SsmPair> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<SsmPair> = Vec::new();
    for p in pairs {
        if seen.insert((p.asm.clone(), p.symexpr.clone(), p.label)) {
            out.push(p);
        }
    }
    let pos = out.iter().filter(|p| p.label == 1).count();
    let neg = out.len() - pos;
    let (drop_label, mut excess) = if pos > neg { (1, pos - neg) } else { (0, neg - pos) };
    let mut i = out.len();
    while excess > 0 && i > 0 {
        i -= 1;
        if out[i].label == drop_label {
            out.remove(i);
            excess -= 1;
        }
    }
    out
}

pub fn build_ssm_corpus(
    strands: &[Strand],
    sets: &[RepresentativeSet],
    seed: u64,
    rules: &NormRules,
) -> Result<Vec<SsmPair>, CorpusError> {
    if strands.len() != sets.len() {
        return Err(CorpusError::Mismatch(alloc::format!("{} strands, {} sets", strands.len(), sets.len())));
    }
    let sources: Vec<SsmSource> = strands.iter().zip(sets).map(|(s, r)| SsmSource::new(s, r)).collect();
    check_size(&sources)?;
    Ok(finish_ssm((0..sources.len()).filter_map(|i| ssm_pairs_for(&sources, i, seed, rules)).flatten()))
}

pub(crate) fn check_size(sources: &[SsmSource]) -> Result<(), CorpusError> {
    let distinct: BTreeSet<&Vec<SymAssign>> = sources.iter().filter(|s| !s.set.is_empty()).map(|s| &s.set).collect();
    if distinct.len() < 2 {
        return Err(CorpusError::CorpusTooSmall(distinct.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::block_from_lines;
    use crate::slicer::extract_strands;
    use crate::sym::execute_strand;
    use alloc::format;

    fn strands_of(lines: &[&str]) -> (Vec<Strand>, Vec<RepresentativeSet>) {
        let b = block_from_lines("b0", lines).unwrap();
        let strands = extract_strands("f", &b, &NormRules::default());
        let sets = strands.iter().map(|s| execute_strand(s).unwrap()).collect();
        (strands, sets)
    }

    #[test]
    fn balanced_and_sound() {
        let mut strands = Vec::new();
        let mut sets = Vec::new();
        for k in 1..=10 {
            let (s, r) = strands_of(&[&format!("mov eax, {}", k)]);
            strands.extend(s);
            sets.extend(r);
        }
        let pairs = build_ssm_corpus(&strands, &sets, 3, &NormRules::default()).unwrap();
        assert_eq!(pairs.len(), 20);
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), 10);
        for p in &pairs {
            let k: u32 = p.asm[0].rsplit(' ').next().unwrap().parse().unwrap();
            assert_eq!(p.label == 1, p.symexpr == format!("rax = {}", k));
        }
    }

    #[test]
    fn needs_two_sets() {
        let (s, r) = strands_of(&["mov eax, 1"]);
        assert_eq!(build_ssm_corpus(&s, &r, 0, &NormRules::default()), Err(CorpusError::CorpusTooSmall(1)));
    }

    #[test]
    fn membership_is_semantic() {
        let (s, r) = strands_of(&["lea rdi, [rdi + 1]"]);
        let src = SsmSource::new(&s[0], &r[0]);
        assert!(src.contains(&SymAssign::parse("rdi = rdi add 1").unwrap()));
        assert!(!src.contains(&SymAssign::parse("rdi = rdi add 2").unwrap()));
    }
}
