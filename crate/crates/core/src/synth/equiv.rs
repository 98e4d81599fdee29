//! Families of semantically equivalent strands written in different ways.
//!
//! Every family computes one value into a fixed output register; its
//! variants differ by lea/imul/add decomposition, commuted constants,
//! reordered moves and renamed temporaries. Whether two strands count as
//! similar is decided afterwards from their representative sets.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::cfg::block_from_lines;
use crate::normalize::NormRules;
use crate::rng::{sub_rng, Rng};
use crate::slicer::{extract_strands, Strand};
use crate::sym::{execute_strand, simplify, RepresentativeSet, SymAssign, Target};

const INPUTS: [&str; 9] = ["rbx", "rcx", "rdx", "rsi", "rdi", "r8", "r9", "r10", "r11"];
const OUTPUTS: [&str; 2] = ["rax", "r12"];
const TEMPS: [&str; 3] = ["r13", "r14", "r15"];

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub strands: Vec<Strand>,
    pub sets: Vec<RepresentativeSet>,
    /// Generating family of each strand.
    pub family: Vec<usize>,
}

impl SynthCorpus {
    pub fn len(&self) -> usize {
        self.strands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strands.is_empty()
    }

    /// Ground truth: the representative sets share a member.
    pub fn similar(&self, i: usize, j: usize) -> bool {
        sets_intersect(&self.sets[i], &self.sets[j])
    }
}

fn canonical(a: &SymAssign) -> SymAssign {
    let target = match &a.target {
        Target::Mem { addr, width } => Target::Mem { addr: simplify(addr), width: *width },
        t => t.clone(),
    };
    SymAssign { target, expr: simplify(&a.expr) }
}

/// True when some assignment of `a` equals one of `b` (same target,
/// `expr_equal` expressions).
pub fn sets_intersect(a: &RepresentativeSet, b: &RepresentativeSet) -> bool {
    let cb: Vec<SymAssign> = b.assigns.iter().map(canonical).collect();
    a.assigns.iter().map(canonical).any(|x| cb.contains(&x))
}

fn pick<'a>(rng: &mut Rng, pool: &[&'a str], n: usize) -> Vec<&'a str> {
    let mut v: Vec<&str> = pool.to_vec();
    v.shuffle(rng);
    v.truncate(n);
    v
}

fn lines(v: &[String]) -> Vec<String> {
    v.to_vec()
}

/// All spellings of one randomly drawn computation.
pub fn family_variants(rng: &mut Rng) -> Vec<Vec<String>> {
    let ins = pick(rng, &INPUTS, 3);
    let (a, b, c) = (ins[0], ins[1], ins[2]);
    let o = *OUTPUTS.choose(rng).unwrap();
    let t = pick(rng, &TEMPS, 2);
    let (t, t2) = (t[0], t[1]);
    let k1: i64 = rng.gen_range(1..60);
    let k2: i64 = rng.gen_range(1..60);
    let s = |x: &[&str]| -> Vec<String> { x.iter().map(|l| String::from(*l)).collect() };
    let f = |x: Vec<String>| lines(&x);
    match rng.gen_range(0..6) {
        0 => alloc::vec![
            s(&[&format!("mov {o}, {a}"), &format!("imul {o}, {b}"), &format!("add {o}, {c}")]),
            s(&[&format!("mov {t}, {a}"), &format!("imul {t}, {b}"), &format!("lea {o}, [{t} + {c}]")]),
            s(&[&format!("mov {t2}, {b}"), &format!("imul {t2}, {a}"), &format!("add {t2}, {c}"), &format!("mov {o}, {t2}")]),
            s(&[&format!("mov {o}, {c}"), &format!("mov {t}, {a}"), &format!("imul {t}, {b}"), &format!("add {o}, {t}")]),
        ],
        1 => alloc::vec![
            s(&[&format!("mov {o}, {a}"), &format!("add {o}, {k1}"), &format!("add {o}, {k2}")]),
            s(&[&format!("lea {o}, [{a} + {}]", k1 + k2)]),
            s(&[&format!("mov {t}, {a}"), &format!("add {t}, {k2}"), &format!("add {t}, {k1}"), &format!("mov {o}, {t}")]),
            s(&[&format!("lea {t2}, [{a} + {k1}]"), &format!("lea {o}, [{t2} + {k2}]")]),
        ],
        2 => {
            let sh = rng.gen_range(1..=3u32);
            let m = 1i64 << sh;
            alloc::vec![
                s(&[&format!("mov {o}, {a}"), &format!("shl {o}, {sh}"), &format!("add {o}, {b}")]),
                s(&[&format!("lea {o}, [{b} + {a}*{m}]")]),
                s(&[&format!("imul {t}, {a}, {m}"), &format!("add {t}, {b}"), &format!("mov {o}, {t}")]),
                s(&[&format!("mov {t2}, {b}"), &format!("mov {o}, {a}"), &format!("shl {o}, {sh}"), &format!("add {o}, {t2}")]),
            ]
        }
        3 => alloc::vec![
            s(&[&format!("mov {o}, {a}"), &format!("sub {o}, {b}"), &format!("add {o}, {k1}")]),
            s(&[&format!("mov {t}, {a}"), &format!("add {t}, {k1}"), &format!("sub {t}, {b}"), &format!("mov {o}, {t}")]),
            s(&[&format!("lea {o}, [{a} + {k1}]"), &format!("sub {o}, {b}")]),
        ],
        4 => alloc::vec![
            s(&[&format!("mov {o}, {a}"), &format!("xor {o}, {b}"), &format!("and {o}, {k1}")]),
            s(&[&format!("mov {o}, {b}"), &format!("xor {o}, {a}"), &format!("and {o}, {k1}")]),
            s(&[&format!("mov {t}, {a}"), &format!("xor {t}, {b}"), &format!("mov {o}, {k1}"), &format!("and {o}, {t}")]),
        ],
        _ => alloc::vec![
            f(s(&[&format!("mov {o}, {a}"), &format!("add {o}, {b}")])),
            s(&[&format!("mov {t}, {b}"), &format!("mov {o}, {a}"), &format!("add {o}, {t}")]),
            s(&[&format!("lea {o}, [{a} + {b}]")]),
            s(&[&format!("mov {t2}, {a}"), &format!("mov {t}, {t2}"), &format!("add {t}, {b}"), &format!("mov {o}, {t}")]),
        ],
    }
}

/// The strand ending at the block's last instruction.
pub fn strand_of(function_id: &str, block_id: &str, code: &[String]) -> Option<(Strand, RepresentativeSet)> {
    let block = block_from_lines(block_id, code).ok()?;
    let last = (code.len() - 1) as u32;
    let strand = extract_strands(function_id, &block, &NormRules::default()).into_iter().find(|s| s.anchor() == last)?;
    let set = execute_strand(&strand).ok()?;
    Some((strand, set))
}

/// `n` strands from families of 2 to 4 variants each. Family `f` draws
/// from sub-seed `seed ^ f`.
pub fn synth_equivalence_corpus(n: usize, seed: u64) -> SynthCorpus {
    let mut out = SynthCorpus { strands: Vec::new(), sets: Vec::new(), family: Vec::new() };
    let mut fam = 0usize;
    while out.strands.len() < n {
        let mut rng = sub_rng(seed, fam as u64);
        let mut variants = family_variants(&mut rng);
        variants.shuffle(&mut rng);
        let keep = rng.gen_range(2..=variants.len());
        for (v, code) in variants.into_iter().take(keep).enumerate() {
            if out.strands.len() >= n {
                break;
            }
            if let Some((s, r)) = strand_of(&format!("synth{}", fam), &format!("v{}", v), &code) {
                out.strands.push(s);
                out.sets.push(r);
                out.family.push(fam);
            }
        }
        fam += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn set(code: &[&str]) -> RepresentativeSet {
        let code: Vec<String> = code.iter().map(|l| String::from(*l)).collect();
        strand_of("f", "b", &code).unwrap().1
    }

    #[test]
    fn lea_and_imul_forms_agree() {
        let a = set(&["mov r13, rbx", "imul r13, rcx", "lea rax, [r13 + rdx]"]);
        let b = set(&["mov rax, rbx", "imul rax, rcx", "add rax, rdx"]);
        assert!(sets_intersect(&a, &b));
        assert!(sets_intersect(&a, &a));
    }

    #[test]
    fn distinct_constants_differ() {
        let a = set(&["lea rax, [rbx + 1]"]);
        let b = set(&["lea rax, [rbx + 2]"]);
        assert!(!sets_intersect(&a, &b));
    }

    #[test]
    fn every_variant_matches_its_family() {
        let mut rng = seeded(11);
        for f in 0..300 {
            let vs = family_variants(&mut rng);
            let sets: Vec<RepresentativeSet> =
                vs.iter().map(|c| strand_of("f", "b", c).unwrap_or_else(|| panic!("{:?}", c)).1).collect();
            for (i, s) in sets.iter().enumerate() {
                assert!(sets_intersect(&sets[0], s), "family {} variant {}: {:?} vs {:?}", f, i, sets[0].printed(), s.printed());
            }
        }
    }

    #[test]
    fn corpus_size_and_determinism() {
        let a = synth_equivalence_corpus(50, 3);
        let b = synth_equivalence_corpus(50, 3);
        assert_eq!(a.len(), 50);
        assert_eq!(a.strands, b.strands);
    }
}
