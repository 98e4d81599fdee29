//! Decomposition of basic blocks into strands (backward def-use slices).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cfg::BasicBlock;
use crate::isa::{overlaps, Instruction, Location};
use crate::normalize::{normalize_instruction, NormRules};

/// What a strand computes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// The value left in a location at the end of the block.
    Value(Location),
    /// The condition tested by the jcc at this index.
    Predicate(u32),
    /// The arguments of the call at this index.
    Call(u32),
}

impl Role {
    pub fn kind(&self) -> &'static str {
        match self {
            Role::Value(_) => "value",
            Role::Predicate(_) => "predicate",
            Role::Call(_) => "call",
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Role::Call(_) => 0,
            Role::Predicate(_) => 1,
            Role::Value(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strand {
    /// `{function_id}:{block_id}:{k}`
    pub strand_id: String,
    pub function_id: String,
    pub block_id: String,
    /// Ascending positions in the block.
    pub indices: Vec<u32>,
    pub role: Role,
    pub instructions: Vec<Instruction>,
    /// False when an unsupported instruction sits inside the strand's span
    /// and may have clobbered one of its intermediate values.
    pub executable: bool,
    /// Normalized instruction text, one entry per instruction.
    pub asm: Vec<String>,
}

impl Strand {
    pub fn anchor(&self) -> u32 {
        *self.indices.last().expect("strands are non-empty")
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Normalized instructions joined by spaces.
    pub fn text(&self) -> String {
        self.asm.join(" ")
    }

    pub fn has_call(&self) -> bool {
        self.instructions.iter().any(Instruction::is_call)
    }
}

/// Instructions (below `end`) that `pending` depends on, walking backward.
pub fn backward_slice(instrs: &[Instruction], end: usize, mut pending: BTreeSet<Location>) -> BTreeSet<u32> {
    let mut taken = BTreeSet::new();
    for j in (0..end).rev() {
        if pending.is_empty() {
            break;
        }
        let ins = &instrs[j];
        let hit = ins.defs.iter().any(|d| pending.iter().any(|p| overlaps(d, p)));
        if !hit {
            continue;
        }
        taken.insert(j as u32);
        pending.retain(|p| !ins.defs.iter().any(|d| d.write_covers(p)));
        pending.extend(ins.uses.iter().cloned());
    }
    taken
}

fn slice_for(instrs: &[Instruction], role: &Role) -> BTreeSet<u32> {
    match role {
        Role::Value(loc) => backward_slice(instrs, instrs.len(), [loc.clone()].into_iter().collect()),
        Role::Predicate(i) | Role::Call(i) => {
            let i = *i as usize;
            // Stack-pointer bookkeeping is not part of argument preparation.
            let rsp = Location::Reg(crate::isa::RegisterId::full(crate::isa::RegFamily::Rsp));
            let pending = instrs[i].uses.iter().filter(|u| matches!(role, Role::Predicate(_)) || **u != rsp).cloned().collect();
            let mut s = backward_slice(instrs, i, pending);
            s.insert(i as u32);
            s
        }
    }
}

/// Non-flag locations written in `instrs` whose last access is that write,
/// with the index of the write.
pub fn final_writes(instrs: &[Instruction]) -> Vec<(Location, usize)> {
    let mut last_def: Vec<(Location, usize)> = Vec::new();
    for (i, ins) in instrs.iter().enumerate() {
        for d in ins.defs.iter().filter(|d| !d.is_flag()) {
            last_def.retain(|(l, _)| l != d);
            last_def.push((d.clone(), i));
        }
    }
    last_def.retain(|(loc, i)| {
        let later = &instrs[i + 1..];
        let read_later = later.iter().any(|j| j.uses.iter().any(|u| overlaps(u, loc)));
        let covered_later = later.iter().any(|j| j.defs.iter().any(|d| d != loc && d.write_covers(loc)));
        !read_later && !covered_later
    });
    last_def
}

/// Outputs of a straight-line sequence as the executors report them:
/// widened registers in family order, then memory cells in first-write
/// order at the widest width written.
pub fn value_outputs(instrs: &[Instruction]) -> Vec<Location> {
    let finals = final_writes(instrs);
    let mut regs: BTreeSet<crate::isa::RegFamily> = BTreeSet::new();
    let mut mems: Vec<(String, u8)> = Vec::new();
    for (loc, _) in &finals {
        match loc {
            Location::Reg(r) => {
                regs.insert(r.family);
            }
            Location::Mem(text, _) if !mems.iter().any(|(t, _)| t == text) => {
                mems.push((text.clone(), 0));
            }
            _ => {}
        }
    }
    let mut order: Vec<String> = Vec::new();
    for ins in instrs {
        for d in &ins.defs {
            if let Location::Mem(text, size) = d {
                if let Some(entry) = mems.iter_mut().find(|(t, _)| t == text) {
                    entry.1 = entry.1.max(*size);
                    if !order.contains(text) {
                        order.push(text.clone());
                    }
                }
            }
        }
    }
    let mut out: Vec<Location> = regs.into_iter().map(|f| Location::Reg(crate::isa::RegisterId::full(f))).collect();
    for text in order {
        let size = mems.iter().find(|(t, _)| *t == text).map(|m| m.1).unwrap_or(8);
        out.push(Location::Mem(text, size));
    }
    out
}

/// Written locations whose last access in the block is a write, the final
/// jcc, and every call, ordered by the last instruction of their slice.
pub fn block_outputs(block: &BasicBlock) -> Vec<Role> {
    let instrs = &block.instructions;
    let mut outs: Vec<(u32, Role)> = Vec::new();
    for (loc, i) in final_writes(instrs) {
        let role = Role::Value(loc);
        let anchor = *slice_for(instrs, &role).iter().next_back().unwrap_or(&(i as u32));
        outs.push((anchor, role));
    }
    for (i, ins) in instrs.iter().enumerate() {
        if ins.is_call() {
            outs.push((i as u32, Role::Call(i as u32)));
        }
    }
    if let Some(last) = instrs.last() {
        if last.cond_jump().is_some() {
            let i = instrs.len() as u32 - 1;
            outs.push((i, Role::Predicate(i)));
        }
    }
    outs.sort_by(|a, b| (a.0, a.1.rank(), &a.1).cmp(&(b.0, b.1.rank(), &b.1)));
    outs.into_iter().map(|(_, r)| r).collect()
}

/// One strand per distinct slice. Slices shared by several outputs keep the
/// call role over the predicate role over the first value role.
pub fn extract_strands(function_id: &str, block: &BasicBlock, rules: &NormRules) -> Vec<Strand> {
    let instrs = &block.instructions;
    let mut found: Vec<(Vec<u32>, Role)> = Vec::new();
    for role in block_outputs(block) {
        let idx: Vec<u32> = slice_for(instrs, &role).into_iter().collect();
        if idx.is_empty() {
            continue;
        }
        match found.iter_mut().find(|(s, _)| *s == idx) {
            Some(entry) => {
                if role.rank() < entry.1.rank() {
                    entry.1 = role;
                }
            }
            None => found.push((idx, role)),
        }
    }
    found.sort_by_key(|(idx, _)| *idx.last().unwrap());
    found
        .into_iter()
        .enumerate()
        .map(|(k, (indices, role))| {
            let first = indices[0] as usize;
            let anchor = *indices.last().unwrap() as usize;
            let executable = instrs[first..=anchor].iter().all(Instruction::supported);
            let instructions: Vec<Instruction> = indices.iter().map(|i| instrs[*i as usize].clone()).collect();
            let asm = instructions.iter().map(|i| normalize_instruction(i, rules)).collect();
            Strand {
                strand_id: format!("{}:{}:{}", function_id, block.block_id, k),
                function_id: function_id.into(),
                block_id: block.block_id.clone(),
                indices,
                role,
                instructions,
                executable,
                asm,
            }
        })
        .collect()
}

/// Greedy pairwise-disjoint selection: larger strands first, then lower
/// anchor. The result is ordered by anchor.
pub fn disjoint_strand_cover(strands: &[Strand]) -> Vec<Strand> {
    let mut order: Vec<usize> = (0..strands.len()).collect();
    order.sort_by_key(|&i| (core::cmp::Reverse(strands[i].len()), strands[i].anchor(), i));
    let mut used: BTreeSet<u32> = BTreeSet::new();
    let mut chosen: Vec<usize> = Vec::new();
    for i in order {
        if strands[i].indices.iter().all(|x| !used.contains(x)) {
            used.extend(strands[i].indices.iter().copied());
            chosen.push(i);
        }
    }
    chosen.sort_by_key(|&i| (strands[i].anchor(), i));
    chosen.into_iter().map(|i| strands[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::TerminatorKind;
    use crate::isa::{parse_instruction, RegisterId};
    use alloc::string::ToString;
    use alloc::vec;

    pub(crate) fn block(lines: &[&str]) -> BasicBlock {
        BasicBlock {
            block_id: "b0".to_string(),
            instructions: lines
                .iter()
                .enumerate()
                .map(|(i, l)| parse_instruction(l, i as u64, i as u32).unwrap())
                .collect(),
            successors: vec![],
            terminator: TerminatorKind::Fallthrough,
        }
    }

    fn reg(name: &str) -> Location {
        Location::Reg(RegisterId::parse(name).unwrap())
    }

    #[test]
    fn single_write_is_the_output() {
        let b = block(&["mov eax, 1"]);
        assert_eq!(block_outputs(&b), vec![Role::Value(reg("eax"))]);
        let s = extract_strands("f", &b, &NormRules::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].indices, vec![0]);
    }

    #[test]
    fn flags_consumed_by_jump_are_not_values() {
        let b = block(&["cmp eax, ebx", "jne MEM"]);
        assert_eq!(block_outputs(&b), vec![Role::Predicate(1)]);
    }

    #[test]
    fn figure_two_block() {
        let b = block(&[
            "mov eax, dword ptr [rbp - 8]",
            "mov ebx, dword ptr [rbp - 16]",
            "lea ecx, [eax + 4]",
            "cmp eax, ebx",
            "jne MEM",
        ]);
        let s = extract_strands("f", &b, &NormRules::default());
        let sets: Vec<(Vec<u32>, Role)> = s.iter().map(|s| (s.indices.clone(), s.role.clone())).collect();
        assert_eq!(
            sets,
            vec![(vec![0, 2], Role::Value(reg("ecx"))), (vec![0, 1, 3, 4], Role::Predicate(4))]
        );
        assert_eq!(s[1].strand_id, "f:b0:1");
    }

    #[test]
    fn rep_stos_outputs_share_one_strand() {
        let b = block(&["mov ecx, esi", "and ecx, 3", "rep stosb byte ptr [rdi], al"]);
        let outs = block_outputs(&b);
        assert!(outs.contains(&Role::Value(reg("rcx"))));
        assert!(outs.contains(&Role::Value(reg("rdi"))));
        assert!(outs.contains(&Role::Value(Location::Mem("*(rdi)".into(), 1))));
        let s = extract_strands("f", &b, &NormRules::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].indices, vec![0, 1, 2]);
    }

    #[test]
    fn call_strand_collects_argument_setup() {
        let b = block(&["mov esi, 0x4006f4", "mov rdi, qword ptr [rbp]", "call fprintf"]);
        let s = extract_strands("f", &b, &NormRules::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].indices, vec![0, 1, 2]);
        assert_eq!(s[0].role, Role::Call(2));
    }

    #[test]
    fn unsupported_inside_span_blocks_execution() {
        let b = block(&["mov eax, 1", "cvtsi2sd xmm0, eax", "add eax, 2"]);
        let s = extract_strands("f", &b, &NormRules::default());
        assert_eq!(s.len(), 1);
        assert!(!s[0].executable);
    }

    fn fake(indices: &[u32]) -> Strand {
        Strand {
            strand_id: String::new(),
            function_id: String::new(),
            block_id: String::new(),
            indices: indices.to_vec(),
            role: Role::Predicate(*indices.last().unwrap()),
            instructions: vec![],
            executable: true,
            asm: vec![],
        }
    }

    #[test]
    fn disjoint_cover_examples() {
        let picked = disjoint_strand_cover(&[fake(&[0, 1]), fake(&[1, 2]), fake(&[3])]);
        let sets: Vec<Vec<u32>> = picked.iter().map(|s| s.indices.clone()).collect();
        assert_eq!(sets, vec![vec![0, 1], vec![3]]);
        let all = disjoint_strand_cover(&[fake(&[0]), fake(&[1]), fake(&[2])]);
        assert_eq!(all.len(), 3);
        let whole = disjoint_strand_cover(&[fake(&[0, 1, 2])]);
        assert_eq!(whole.len(), 1);
    }
}
