//! Strand execution samples: concrete inputs in, one output value out.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::isa::{Location, RegisterId};
use crate::rng::{sub_rng, Rng};
use crate::slicer::{Role, Strand};
use crate::sym::{run_concrete, RecordingInputs};

pub const EXEC_INPUT_MAX: u64 = 100;
pub const EXEC_LABEL_MAX: u64 = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecSample {
    pub strand_id: String,
    pub asm: Vec<String>,
    /// `(display name, location, value)` in first-read order.
    pub inputs: Vec<(String, Location, u64)>,
    /// Output register; absent for predicates.
    pub query: Option<String>,
    pub label: u32,
    pub text: String,
}

fn query_location(strand: &Strand) -> Option<Option<Location>> {
    match &strand.role {
        Role::Value(Location::Reg(r)) => Some(Some(Location::Reg(RegisterId::full(r.family)))),
        Role::Predicate(_) => Some(None),
        _ => None,
    }
}

/// One sample for `strand`, or `None` if the strand has no register or
/// branch output, reads a flag, faults, or produces a value above the cap.
pub fn exec_sample(strand: &Strand, rng: &mut Rng) -> Option<ExecSample> {
    if !strand.executable || strand.has_call() {
        return None;
    }
    let query = query_location(strand)?;
    let mut src = RecordingInputs::new(|| rng.gen_range(0..=EXEC_INPUT_MAX));
    let out = run_concrete(&strand.instructions, &strand.role, &mut src).ok()?;
    if src.saw_flag {
        return None;
    }
    let label = match &query {
        Some(loc) => *out.outputs.get(loc)?,
        None => u64::from(out.branch?),
    };
    if label > EXEC_LABEL_MAX {
        return None;
    }
    let query_name = query.map(|l| match l {
        Location::Reg(r) => r.family.name().to_string(),
        other => format!("{}", other),
    });
    let assigns: Vec<String> = src.record.iter().map(|(d, _, v)| format!("{} = {}", d, v)).collect();
    let mut text = format!("{} [SEP] {}", strand.asm.join(" "), assigns.join(" "));
    if let Some(q) = &query_name {
        text.push_str(" [SEP] ");
        text.push_str(q);
    }
    Some(ExecSample {
        strand_id: strand.strand_id.clone(),
        asm: strand.asm.clone(),
        inputs: src.record,
        query: query_name,
        label: label as u32,
        text,
    })
}

/// Up to `n` distinct samples, cycling over the strands. Attempt `a` uses
/// strand `a mod len` and sub-seed `seed ^ a`.
pub fn build_exec_dataset(strands: &[Strand], n: usize, seed: u64) -> Vec<ExecSample> {
    let candidates: Vec<&Strand> = strands.iter().filter(|s| query_location(s).is_some() && s.executable).collect();
    let mut out = Vec::new();
    if candidates.is_empty() {
        return out;
    }
    let mut seen = BTreeSet::new();
    let max_attempts = n.saturating_mul(20).max(candidates.len());
    for a in 0..max_attempts {
        if out.len() >= n {
            break;
        }
        let mut rng = sub_rng(seed, a as u64);
        if let Some(s) = exec_sample(candidates[a % candidates.len()], &mut rng) {
            if seen.insert(s.text.clone()) {
                out.push(s);
            }
        }
    }
    out
}
