//! Functions as ordered basic blocks, with provenance metadata.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::isa::{parse_instruction, CallKind, Instruction, IsaError, Label, Op, Operand};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Optimization {
    O0,
    O1,
    O2,
    O3,
}

impl Optimization {
    pub const ALL: [Optimization; 4] = [Optimization::O0, Optimization::O1, Optimization::O2, Optimization::O3];

    pub fn name(self) -> &'static str {
        match self {
            Optimization::O0 => "O0",
            Optimization::O1 => "O1",
            Optimization::O2 => "O2",
            Optimization::O3 => "O3",
        }
    }
}

impl FromStr for Optimization {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Optimization::ALL
            .into_iter()
            .find(|o| o.name().eq_ignore_ascii_case(s) || s.strip_prefix('-').map(|t| o.name() == t).unwrap_or(false))
            .ok_or(())
    }
}

impl fmt::Display for Optimization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminatorKind {
    Fallthrough,
    Jmp,
    Jcc,
    Ret,
    Call,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub block_id: String,
    pub instructions: Vec<Instruction>,
    pub successors: Vec<String>,
    pub terminator: TerminatorKind,
}

impl BasicBlock {
    pub fn unsupported_count(&self) -> usize {
        self.instructions.iter().filter(|i| !i.supported()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionCfg {
    pub function_id: String,
    pub binary_id: String,
    pub compiler: Option<String>,
    pub optimization: Option<Optimization>,
    pub blocks: Vec<BasicBlock>,
    pub libc_symbols: BTreeMap<u64, String>,
}

impl FunctionCfg {
    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.instructions.len()).sum()
    }

    pub fn unsupported_count(&self) -> usize {
        self.blocks.iter().map(BasicBlock::unsupported_count).sum()
    }
}

/// A block as read from disk, before parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawBlock {
    pub block_id: String,
    pub successors: Vec<String>,
    /// (address, assembly text)
    pub instructions: Vec<(u64, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFunction {
    pub function_id: String,
    pub binary_id: String,
    pub compiler: Option<String>,
    pub optimization: Option<String>,
    pub libc_symbols: BTreeMap<u64, String>,
    pub blocks: Vec<RawBlock>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CfgError {
    #[error("block `{0}` has no instructions")]
    EmptyBlock(String),
    #[error("duplicate block id `{0}`")]
    DuplicateBlock(String),
    #[error("block `{block}` lists unknown successor `{successor}`")]
    UnknownSuccessor { block: String, successor: String },
    #[error("block `{block}`: branch at index {index} is not the last instruction")]
    BranchNotLast { block: String, index: u32 },
    #[error("unknown optimization level `{0}`")]
    BadOptimization(String),
    #[error("block `{block}`, instruction {index}: {source}")]
    Parse { block: String, index: u32, source: IsaError },
}

/// Parse and validate one function.
pub fn build_function(raw: &RawFunction) -> Result<FunctionCfg, CfgError> {
    let optimization = match &raw.optimization {
        Some(o) => Some(o.parse::<Optimization>().map_err(|_| CfgError::BadOptimization(o.clone()))?),
        None => None,
    };
    let mut ids = BTreeSet::new();
    for b in &raw.blocks {
        if !ids.insert(b.block_id.as_str()) {
            return Err(CfgError::DuplicateBlock(b.block_id.clone()));
        }
    }
    let mut blocks = Vec::with_capacity(raw.blocks.len());
    for b in &raw.blocks {
        if b.instructions.is_empty() {
            return Err(CfgError::EmptyBlock(b.block_id.clone()));
        }
        if let Some(s) = b.successors.iter().find(|s| !ids.contains(s.as_str())) {
            return Err(CfgError::UnknownSuccessor { block: b.block_id.clone(), successor: s.clone() });
        }
        let mut instructions = Vec::with_capacity(b.instructions.len());
        for (i, (addr, text)) in b.instructions.iter().enumerate() {
            let index = i as u32;
            let mut instr = parse_instruction(text, *addr, index).map_err(|source| CfgError::Parse {
                block: b.block_id.clone(),
                index,
                source,
            })?;
            if instr.is_branch() && i + 1 != b.instructions.len() {
                return Err(CfgError::BranchNotLast { block: b.block_id.clone(), index });
            }
            if instr.is_call() {
                instr.call = Some(resolve_call_target(&instr, &raw.libc_symbols));
            }
            instructions.push(instr);
        }
        let terminator = match instructions.last().and_then(|i| i.op) {
            Some(Op::Jcc(_)) => TerminatorKind::Jcc,
            Some(Op::Jmp) => TerminatorKind::Jmp,
            Some(Op::Ret) => TerminatorKind::Ret,
            Some(Op::Call) => TerminatorKind::Call,
            _ => TerminatorKind::Fallthrough,
        };
        blocks.push(BasicBlock {
            block_id: b.block_id.clone(),
            instructions,
            successors: b.successors.clone(),
            terminator,
        });
    }
    Ok(FunctionCfg {
        function_id: raw.function_id.clone(),
        binary_id: raw.binary_id.clone(),
        compiler: raw.compiler.clone(),
        optimization,
        blocks,
        libc_symbols: raw.libc_symbols.clone(),
    })
}

/// A standalone block from assembly lines, addressed 0, 1, 2, ...
pub fn block_from_lines<S: AsRef<str>>(block_id: &str, lines: &[S]) -> Result<BasicBlock, CfgError> {
    let raw = RawFunction {
        function_id: String::new(),
        binary_id: String::new(),
        compiler: None,
        optimization: None,
        libc_symbols: BTreeMap::new(),
        blocks: alloc::vec![RawBlock {
            block_id: block_id.into(),
            successors: Vec::new(),
            instructions: lines.iter().enumerate().map(|(i, l)| (i as u64, l.as_ref().into())).collect(),
        }],
    };
    let mut f = build_function(&raw)?;
    Ok(f.blocks.remove(0))
}

/// Inverse of [`build_function`]: the raw form of a parsed function.
pub fn to_raw(f: &FunctionCfg) -> RawFunction {
    RawFunction {
        function_id: f.function_id.clone(),
        binary_id: f.binary_id.clone(),
        compiler: f.compiler.clone(),
        optimization: f.optimization.map(|o| o.name().to_string()),
        libc_symbols: f.libc_symbols.clone(),
        blocks: f
            .blocks
            .iter()
            .map(|b| RawBlock {
                block_id: b.block_id.clone(),
                successors: b.successors.clone(),
                instructions: b.instructions.iter().map(|i| (i.address, i.text.clone())).collect(),
            })
            .collect(),
    }
}

/// Classify the target of a `call`.
///
/// Symbolic targets (`call fprintf`, `call memset@plt`) name imported
/// functions; `func` is the placeholder for user code.
pub fn resolve_call_target(instr: &Instruction, libc_symbols: &BTreeMap<u64, String>) -> CallKind {
    match instr.operands.first() {
        Some(Operand::Label(Label::Address(a))) => match libc_symbols.get(a) {
            Some(name) => CallKind::Libc(name.clone()),
            None => CallKind::UserFunc,
        },
        Some(Operand::Label(Label::Symbol(s))) if s == "func" => CallKind::UserFunc,
        Some(Operand::Label(Label::Symbol(s))) => {
            CallKind::Libc(s.strip_suffix("@plt").unwrap_or(s).to_string())
        }
        _ => CallKind::Indirect,
    }
}
