//! Opcode and operand outlier sets: four instructions of one class and one
//! of another, shuffled.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng as _;

use super::metrics::cosine64;
use super::BenchError;
use crate::isa::{classify_opcode, classify_operands, Instruction, OpcodeClass, OperandClass};
use crate::normalize::{normalize_instruction, NormRules};
use crate::rng::sub_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutlierBasis {
    Opcode,
    Operand,
}

impl OutlierBasis {
    pub fn name(self) -> &'static str {
        match self {
            OutlierBasis::Opcode => "opcode",
            OutlierBasis::Operand => "operand",
        }
    }
}

/// Class name of `instr` under `basis`, or `None` if it is in no listed class.
pub fn instruction_class(instr: &Instruction, basis: OutlierBasis) -> Option<&'static str> {
    match basis {
        OutlierBasis::Opcode => match classify_opcode(&instr.mnemonic) {
            OpcodeClass::Other => None,
            c => Some(c.name()),
        },
        OutlierBasis::Operand => match classify_operands(&instr.operands) {
            OperandClass::Other => None,
            c => Some(c.name()),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlierSet {
    pub instructions: [String; 5],
    pub outlier_index: usize,
    pub basis: OutlierBasis,
    pub class: &'static str,
    pub outlier_class: &'static str,
}

/// Distinct normalized instruction texts grouped by class.
pub fn class_pool<'a>(
    instrs: impl IntoIterator<Item = &'a Instruction>,
    basis: OutlierBasis,
    rules: &NormRules,
) -> BTreeMap<&'static str, BTreeSet<String>> {
    let mut pool: BTreeMap<&'static str, BTreeSet<String>> = BTreeMap::new();
    for i in instrs {
        if let Some(c) = instruction_class(i, basis) {
            pool.entry(c).or_default().insert(normalize_instruction(i, rules));
        }
    }
    pool
}

/// `n` sets drawn from `pool`; set `i` uses sub-seed `seed ^ i`. Texts that
/// appear under two classes are dropped from both.
pub fn generate_outlier_sets(
    pool: &BTreeMap<&'static str, BTreeSet<String>>,
    basis: OutlierBasis,
    n: usize,
    seed: u64,
) -> Result<Vec<OutlierSet>, BenchError> {
    let mut owners: BTreeMap<&str, usize> = BTreeMap::new();
    for texts in pool.values() {
        for t in texts {
            *owners.entry(t.as_str()).or_default() += 1;
        }
    }
    let classes: Vec<(&'static str, Vec<&String>)> = pool
        .iter()
        .map(|(c, ts)| (*c, ts.iter().filter(|t| owners[t.as_str()] == 1).collect::<Vec<_>>()))
        .filter(|(_, ts)| !ts.is_empty())
        .collect();
    let majors: Vec<usize> = (0..classes.len()).filter(|&i| classes[i].1.len() >= 4).collect();
    if majors.is_empty() || classes.len() < 2 {
        let found = classes.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
        return Err(BenchError::InsufficientData { task: "outlier".into(), needed: 4, found });
    }
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = sub_rng(seed, i as u64);
        let major = *majors.choose(&mut rng).unwrap();
        let minor = (0..classes.len()).filter(|&c| c != major).choose(&mut rng).unwrap();
        let mut picked: Vec<String> =
            classes[major].1.choose_multiple(&mut rng, 4).map(|s| (*s).clone()).collect();
        let odd = (*classes[minor].1.choose(&mut rng).unwrap()).clone();
        let pos = rng.gen_range(0..5);
        picked.insert(pos, odd);
        let instructions: [String; 5] = picked.try_into().expect("five instructions");
        sets.push(OutlierSet {
            instructions,
            outlier_index: pos,
            basis,
            class: classes[major].0,
            outlier_class: classes[minor].0,
        });
    }
    Ok(sets)
}

/// Index of the embedding with the largest summed cosine distance to the
/// others; the first one wins ties.
pub fn predict_outlier(embs: &[Vec<f32>]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, a) in embs.iter().enumerate() {
        let d: f64 = embs
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| 1.0 - cosine64(a, b))
            .sum();
        if d > best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Fraction of sets whose outlier is predicted correctly.
pub fn outlier_accuracy(sets: &[OutlierSet], mut embed: impl FnMut(&str) -> Vec<f32>) -> f64 {
    if sets.is_empty() {
        return 0.0;
    }
    let hits = sets
        .iter()
        .filter(|s| {
            let embs: Vec<Vec<f32>> = s.instructions.iter().map(|t| embed(t)).collect();
            predict_outlier(&embs) == s.outlier_index
        })
        .count();
    hits as f64 / sets.len() as f64
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// One-hot class indicator, used as a reference embedding.
pub fn class_indicator(text: &str, basis: OutlierBasis) -> Vec<f32> {
    let mut v = alloc::vec![0.0f32; 16];
    if let Ok(i) = crate::isa::parse_instruction(text, 0, 0) {
        let name = instruction_class(&i, basis).unwrap_or("other").to_string();
        let slot = match basis {
            OutlierBasis::Opcode => OpcodeClass::CATEGORIES.iter().position(|c| c.name() == name),
            OutlierBasis::Operand => OperandClass::CATEGORIES.iter().position(|c| c.name() == name),
        };
        v[slot.unwrap_or(15)] = 1.0;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_instruction;
    use crate::neural::random_embedding;
    use crate::rng::seeded;
    use crate::synth::random::random_instruction;

    fn parse(t: &str) -> Instruction {
        parse_instruction(t, 0, 0).unwrap()
    }

    #[test]
    fn worked_opcode_set() {
        let set = ["add eax, ebx", "sub ebx, ecx", "imul ecx, edx", "add eax, 5", "call printf"];
        let embs: Vec<Vec<f32>> = set.iter().map(|t| class_indicator(t, OutlierBasis::Opcode)).collect();
        assert_eq!(predict_outlier(&embs), 4);
    }

    #[test]
    fn worked_operand_set() {
        let set = ["sub dword ptr [eax + 5], ebx", "sub ebx, ecx", "imul ecx, edx", "add eax, ebx", "add ebp, esp"];
        let classes: Vec<_> = set.iter().map(|t| instruction_class(&parse(t), OutlierBasis::Operand)).collect();
        assert_eq!(classes[0], Some("ref-reg"));
        assert!(classes[1..].iter().all(|c| *c == Some("reg-reg")));
        let embs: Vec<Vec<f32>> = set.iter().map(|t| class_indicator(t, OutlierBasis::Operand)).collect();
        assert_eq!(predict_outlier(&embs), 0);
    }

    fn pool(basis: OutlierBasis) -> BTreeMap<&'static str, BTreeSet<String>> {
        let mut rng = seeded(3);
        let instrs: Vec<Instruction> = (0..4000).filter_map(|_| parse_instruction(&random_instruction(&mut rng), 0, 0).ok()).collect();
        class_pool(&instrs, basis, &NormRules::default())
    }

    #[test]
    fn sets_have_four_of_a_kind() {
        for basis in [OutlierBasis::Opcode, OutlierBasis::Operand] {
            let sets = generate_outlier_sets(&pool(basis), basis, 300, 1).unwrap();
            for s in &sets {
                let classes: Vec<_> = s.instructions.iter().map(|t| instruction_class(&parse(t), basis).unwrap()).collect();
                let odd = classes[s.outlier_index];
                assert_ne!(odd, s.class);
                assert_eq!(classes.iter().filter(|c| **c == s.class).count(), 4);
                let distinct: BTreeSet<&String> = s.instructions.iter().collect();
                assert_eq!(distinct.len(), 5);
            }
            assert_eq!(outlier_accuracy(&sets, |t| class_indicator(t, basis)), 1.0);
        }
    }

    #[test]
    fn too_few_instructions_is_reported() {
        let instrs: Vec<Instruction> = ["add eax, 1", "sub eax, 2", "mov eax, 1"].iter().map(|t| parse(t)).collect();
        let p = class_pool(&instrs, OutlierBasis::Opcode, &NormRules::default());
        assert!(matches!(
            generate_outlier_sets(&p, OutlierBasis::Opcode, 1, 0),
            Err(BenchError::InsufficientData { .. })
        ));
    }

    #[test]
    fn random_embeddings_are_at_chance() {
        let sets = generate_outlier_sets(&pool(OutlierBasis::Opcode), OutlierBasis::Opcode, 50_000, 11).unwrap();
        let mut rng = seeded(12);
        let acc = outlier_accuracy(&sets, |_| random_embedding(16, &mut rng));
        assert!((acc - 0.2).abs() <= 0.01, "{acc}");
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, libm::sqrt(2.0)));
    }
}
