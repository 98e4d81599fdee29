//! Opcode and operand categories used by the outlier benchmarks.

use super::operand::Operand;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpcodeClass {
    DataMovement,
    UnaryOperation,
    BinaryOperation,
    ShiftOperation,
    SpecialArithmetic,
    CompareTest,
    ConditionalSet,
    Jump,
    ConditionalMove,
    ProcedureCall,
    FloatingPoint,
    /// Not listed in any category; never used to build outlier sets.
    Other,
}

impl OpcodeClass {
    pub const CATEGORIES: [OpcodeClass; 11] = [
        OpcodeClass::DataMovement,
        OpcodeClass::UnaryOperation,
        OpcodeClass::BinaryOperation,
        OpcodeClass::ShiftOperation,
        OpcodeClass::SpecialArithmetic,
        OpcodeClass::CompareTest,
        OpcodeClass::ConditionalSet,
        OpcodeClass::Jump,
        OpcodeClass::ConditionalMove,
        OpcodeClass::ProcedureCall,
        OpcodeClass::FloatingPoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpcodeClass::DataMovement => "data-movement",
            OpcodeClass::UnaryOperation => "unary",
            OpcodeClass::BinaryOperation => "binary",
            OpcodeClass::ShiftOperation => "shift",
            OpcodeClass::SpecialArithmetic => "special-arithmetic",
            OpcodeClass::CompareTest => "compare-test",
            OpcodeClass::ConditionalSet => "conditional-set",
            OpcodeClass::Jump => "jump",
            OpcodeClass::ConditionalMove => "conditional-move",
            OpcodeClass::ProcedureCall => "procedure-call",
            OpcodeClass::FloatingPoint => "floating-point",
            OpcodeClass::Other => "other",
        }
    }

    /// Every mnemonic listed for this category.
    pub fn members(self) -> &'static [&'static str] {
        match self {
            OpcodeClass::DataMovement => DATA_MOVEMENT,
            OpcodeClass::UnaryOperation => UNARY,
            OpcodeClass::BinaryOperation => BINARY,
            OpcodeClass::ShiftOperation => SHIFT,
            OpcodeClass::SpecialArithmetic => SPECIAL,
            OpcodeClass::CompareTest => COMPARE,
            OpcodeClass::ConditionalSet => SETCC,
            OpcodeClass::Jump => JUMPS,
            OpcodeClass::ConditionalMove => CMOVCC,
            OpcodeClass::ProcedureCall => PROCEDURE,
            OpcodeClass::FloatingPoint => FLOATING,
            OpcodeClass::Other => &[],
        }
    }
}

const DATA_MOVEMENT: &[&str] = &["mov", "push", "pop", "cwtl", "cltq", "cqto", "cqtd"];
const UNARY: &[&str] = &["inc", "dec", "neg", "not"];
const BINARY: &[&str] = &["add", "sub", "imul", "xor", "or", "and", "lea", "leaq"];
const SHIFT: &[&str] = &["sal", "sar", "shr", "shl"];
const SPECIAL: &[&str] = &["imulq", "mulq", "idivq", "divq"];
const COMPARE: &[&str] = &["cmp", "test"];
const SETCC: &[&str] = &[
    "sete", "setz", "setne", "setnz", "sets", "setns", "setg", "setnle", "setge", "setnl", "setl",
    "setnge", "setle", "setng", "seta", "setnbe", "setae", "setnb", "setbe", "setna",
];
const JUMPS: &[&str] = &[
    "jmp", "je", "jz", "jne", "jnz", "js", "jns", "jg", "jnle", "jge", "jnl", "jl", "jnge", "jle",
    "jng", "ja", "jnbe", "jae", "jnb", "jb", "jnae", "jbe", "jna",
];
const CMOVCC: &[&str] = &[
    "cmove", "cmovz", "cmovne", "cmovenz", "cmovs", "cmovns", "cmovg", "cmovnle", "cmovge",
    "cmovnl", "cmovnge", "cmovle", "cmovng", "cmova", "cmovnbe", "cmovae", "cmovnb", "cmovb",
    "cmovnae", "cmovbe", "cmovna",
];
const PROCEDURE: &[&str] = &["call", "leave", "ret", "retn"];
const FLOATING: &[&str] = &[
    "fabs", "fadd", "faddp", "fchs", "fdiv", "fdivp", "fdivr", "fdivrp", "fiadd", "fidivr",
    "fimul", "fisub", "fisubr", "fmul", "fmulp", "fprem", "fpreml", "frndint", "fscale", "fsqrt",
    "fsub", "fsubp", "fsubr", "fsubrp", "fxtract",
];

/// Intel-syntax spellings of listed AT&T mnemonics, mapped to the same category.
const INTEL_ALIASES: &[(&str, OpcodeClass)] = &[
    ("cwde", OpcodeClass::DataMovement),
    ("cdqe", OpcodeClass::DataMovement),
    ("cqo", OpcodeClass::DataMovement),
    ("cltd", OpcodeClass::DataMovement),
    ("cdq", OpcodeClass::DataMovement),
    ("mul", OpcodeClass::SpecialArithmetic),
    ("div", OpcodeClass::SpecialArithmetic),
    ("idiv", OpcodeClass::SpecialArithmetic),
    ("cmovnz", OpcodeClass::ConditionalMove),
];

pub fn classify_opcode(mnemonic: &str) -> OpcodeClass {
    for class in OpcodeClass::CATEGORIES {
        if class.members().contains(&mnemonic) {
            return class;
        }
    }
    INTEL_ALIASES
        .iter()
        .find(|(m, _)| *m == mnemonic)
        .map(|(_, c)| *c)
        .unwrap_or(OpcodeClass::Other)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperandClass {
    None,
    Cnst,
    Reg,
    Ref,
    RegReg,
    RegCnst,
    RegRef,
    RefReg,
    RefCnst,
    Tri,
    Other,
}

impl OperandClass {
    pub const CATEGORIES: [OperandClass; 10] = [
        OperandClass::None,
        OperandClass::Cnst,
        OperandClass::Reg,
        OperandClass::Ref,
        OperandClass::RegReg,
        OperandClass::RegCnst,
        OperandClass::RegRef,
        OperandClass::RefReg,
        OperandClass::RefCnst,
        OperandClass::Tri,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperandClass::None => "none",
            OperandClass::Cnst => "cnst",
            OperandClass::Reg => "reg",
            OperandClass::Ref => "ref",
            OperandClass::RegReg => "reg-reg",
            OperandClass::RegCnst => "reg-cnst",
            OperandClass::RegRef => "reg-ref",
            OperandClass::RefReg => "ref-reg",
            OperandClass::RefCnst => "ref-cnst",
            OperandClass::Tri => "tri",
            OperandClass::Other => "other",
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Reg,
    Cnst,
    Ref,
}

fn kind(op: &Operand) -> Kind {
    match op {
        Operand::Register(_) => Kind::Reg,
        Operand::Memory(_) => Kind::Ref,
        Operand::Immediate(_) | Operand::Label(_) => Kind::Cnst,
    }
}

pub fn classify_operands(operands: &[Operand]) -> OperandClass {
    match operands {
        [] => OperandClass::None,
        [a] => match kind(a) {
            Kind::Reg => OperandClass::Reg,
            Kind::Cnst => OperandClass::Cnst,
            Kind::Ref => OperandClass::Ref,
        },
        [a, b] => match (kind(a), kind(b)) {
            (Kind::Reg, Kind::Reg) => OperandClass::RegReg,
            (Kind::Reg, Kind::Cnst) => OperandClass::RegCnst,
            (Kind::Reg, Kind::Ref) => OperandClass::RegRef,
            (Kind::Ref, Kind::Reg) => OperandClass::RefReg,
            (Kind::Ref, Kind::Cnst) => OperandClass::RefCnst,
            _ => OperandClass::Other,
        },
        [_, _, _] => OperandClass::Tri,
        _ => OperandClass::Other,
    }
}
