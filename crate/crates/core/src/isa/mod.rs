//! The supported x86-64 subset: registers, operands, def/use sets and the
//! opcode/operand category tables.

mod class;
mod operand;
mod reg;
mod table;

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub use class::{classify_opcode, classify_operands, OpcodeClass, OperandClass};
pub use operand::{size_keyword, IMM_PLACEHOLDER, Label, MemOperand, Operand, Scale};
pub use reg::{FlagId, RegFamily, RegisterId};
pub use table::{lookup, masked_count, Cond, Op};


#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IsaError {
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("malformed operand `{0}`")]
    MalformedOperand(String),
}

/// Something an instruction can read or write.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Location {
    Reg(RegisterId),
    Flag(FlagId),
    /// Canonical address text and access width in bytes.
    Mem(String, u8),
}

impl Location {
    pub fn is_flag(&self) -> bool {
        matches!(self, Location::Flag(_))
    }

    /// Whether writing `self` makes the previous value of `other` irrelevant.
    pub fn write_covers(&self, other: &Location) -> bool {
        match (self, other) {
            (Location::Reg(a), Location::Reg(b)) => a.write_covers(*b),
            (Location::Flag(a), Location::Flag(b)) => a == b,
            (Location::Mem(a, wa), Location::Mem(b, wb)) => a == b && wa >= wb,
            _ => false,
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Reg(r) => write!(f, "{}", r),
            Location::Flag(flag) => write!(f, "{}", flag),
            Location::Mem(text, _) => f.write_str(text),
        }
    }
}

/// True iff a write to `a` can affect a read of `b`.
pub fn overlaps(a: &Location, b: &Location) -> bool {
    match (a, b) {
        (Location::Reg(x), Location::Reg(y)) => x.overlaps(*y),
        (Location::Flag(x), Location::Flag(y)) => x == y,
        (Location::Mem(x, _), Location::Mem(y, _)) => x == y,
        _ => false,
    }
}

/// How a `call` target resolves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CallKind {
    Libc(String),
    UserFunc,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instruction {
    pub index: u32,
    pub address: u64,
    /// The source line, trimmed.
    pub text: String,
    pub mnemonic: String,
    pub rep: bool,
    pub operands: Vec<Operand>,
    /// `None` for mnemonics outside the supported subset.
    pub op: Option<Op>,
    /// Operation width in bytes (0 when not meaningful).
    pub width: u8,
    pub defs: BTreeSet<Location>,
    pub uses: BTreeSet<Location>,
    pub category: OpcodeClass,
    pub operand_class: OperandClass,
    /// Filled in by ingest for `call` instructions.
    pub call: Option<CallKind>,
}

impl Instruction {
    pub fn supported(&self) -> bool {
        self.op.is_some()
    }

    pub fn is_call(&self) -> bool {
        self.op == Some(Op::Call)
    }

    pub fn cond_jump(&self) -> Option<Cond> {
        match self.op {
            Some(Op::Jcc(c)) => Some(c),
            _ => None,
        }
    }

    pub fn is_branch(&self) -> bool {
        self.op.map(Op::is_branch).unwrap_or(false)
    }
}

const PREFIXES: [&str; 9] = ["rep", "repe", "repz", "repne", "repnz", "lock", "bnd", "notrack", "data16"];

/// Parse one Intel-syntax line. Mnemonics outside the subset yield an
/// unsupported instruction with empty def/use; use [`parse_supported`] to
/// treat them as errors.
pub fn parse_instruction(text: &str, address: u64, index: u32) -> Result<Instruction, IsaError> {
    let trimmed = text.trim();
    let mut rest = trimmed;
    let mut rep = false;
    let mut prefixed = false;
    let mnemonic = loop {
        let (word, tail) = match rest.split_once(char::is_whitespace) {
            Some((w, t)) => (w, t.trim_start()),
            None => (rest, ""),
        };
        let lower = word.to_ascii_lowercase();
        if PREFIXES.contains(&lower.as_str()) && !tail.is_empty() {
            rep |= lower == "rep";
            prefixed |= lower != "rep" && lower != "bnd" && lower != "notrack";
            rest = tail;
            continue;
        }
        rest = tail;
        break lower;
    };
    if mnemonic.is_empty() {
        return Err(IsaError::UnknownMnemonic(String::new()));
    }
    let category = classify_opcode(&mnemonic);
    let found = lookup(&mnemonic).filter(|_| !prefixed);
    let found = found.filter(|(op, _)| !rep || matches!(op, Op::Stos | Op::Movs));
    let mut operands = Vec::new();
    let mut parse_failed = None;
    for part in operand::split_operands(rest) {
        match parse_target_operand(part, found.map(|(op, _)| op)) {
            Ok(o) => operands.push(o),
            Err(e) => {
                parse_failed = Some(e);
                break;
            }
        }
    }
    let unsupported = |operands: Vec<Operand>| Instruction {
        index,
        address,
        text: trimmed.to_string(),
        mnemonic: mnemonic.clone(),
        rep,
        operand_class: classify_operands(&operands),
        operands,
        op: None,
        width: 0,
        defs: BTreeSet::new(),
        uses: BTreeSet::new(),
        category,
        call: None,
    };
    let Some((op, suffix_width)) = found else {
        if parse_failed.is_some() {
            operands.clear();
        }
        return Ok(unsupported(operands));
    };
    if let Some(err) = parse_failed {
        // movsd also names the SSE scalar move, which is outside the subset.
        if mnemonic == "movsd" {
            return Ok(unsupported(Vec::new()));
        }
        return Err(err);
    }
    let width = match table::validate(op, &mut operands, suffix_width) {
        Ok(w) => w,
        Err(_) if mnemonic == "movsd" => return Ok(unsupported(operands)),
        Err(why) => {
            let mut msg = trimmed.to_string();
            msg.push_str(": ");
            msg.push_str(&why);
            return Err(IsaError::MalformedOperand(msg));
        }
    };
    let (defs, uses) = table::def_use(op, &operands, width, rep);
    Ok(Instruction {
        index,
        address,
        text: trimmed.to_string(),
        mnemonic,
        rep,
        operand_class: classify_operands(&operands),
        operands,
        op: Some(op),
        width,
        defs,
        uses,
        category,
        call: None,
    })
}

/// Like [`parse_instruction`] but rejects mnemonics outside the subset.
pub fn parse_supported(text: &str, address: u64, index: u32) -> Result<Instruction, IsaError> {
    let instr = parse_instruction(text, address, index)?;
    if instr.supported() {
        Ok(instr)
    } else {
        Err(IsaError::UnknownMnemonic(instr.mnemonic))
    }
}

fn parse_target_operand(part: &str, op: Option<Op>) -> Result<Operand, IsaError> {
    let is_target = matches!(op, Some(Op::Jcc(_) | Op::Jmp | Op::Call));
    if !is_target {
        return operand::parse_operand(part);
    }
    // objdump appends `<symbol>` after direct targets.
    let (head, sym) = match part.find('<') {
        Some(i) if i > 0 => (part[..i].trim(), Some(part[i..].trim())),
        _ => (part, None),
    };
    // objdump prints annotated targets in bare hex.
    if sym.is_some() && !head.is_empty() && head.chars().all(|c| c.is_ascii_hexdigit()) {
        if let Ok(v) = u64::from_str_radix(head, 16) {
            return Ok(Operand::Label(Label::Address(v)));
        }
    }
    match operand::parse_operand(head)? {
        Operand::Immediate(v) => Ok(Operand::Label(Label::Address(v as u64))),
        other => Ok(other),
    }
}
