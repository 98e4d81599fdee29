//! Registers, sub-register aliasing and status flags.

use core::fmt;

/// One of the sixteen general purpose register families, plus `rip`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegFamily {
    Rax,
    Rbx,
    Rcx,
    Rdx,
    Rsi,
    Rdi,
    Rbp,
    Rsp,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
    R14,
    R15,
    Rip,
}

impl RegFamily {
    pub const GPRS: [RegFamily; 16] = [
        RegFamily::Rax,
        RegFamily::Rbx,
        RegFamily::Rcx,
        RegFamily::Rdx,
        RegFamily::Rsi,
        RegFamily::Rdi,
        RegFamily::Rbp,
        RegFamily::Rsp,
        RegFamily::R8,
        RegFamily::R9,
        RegFamily::R10,
        RegFamily::R11,
        RegFamily::R12,
        RegFamily::R13,
        RegFamily::R14,
        RegFamily::R15,
    ];

    /// System V integer argument registers, in order.
    pub const ARGS: [RegFamily; 6] = [
        RegFamily::Rdi,
        RegFamily::Rsi,
        RegFamily::Rdx,
        RegFamily::Rcx,
        RegFamily::R8,
        RegFamily::R9,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()][0]
    }

    /// Name of the sub-register covering `bytes` (start, end), if one exists.
    pub fn sub_name(self, lo: u8, hi: u8) -> Option<&'static str> {
        let row = &NAMES[self.index()];
        let name = match (lo, hi) {
            (0, 8) => row[0],
            (0, 4) => row[1],
            (0, 2) => row[2],
            (0, 1) => row[3],
            (1, 2) => row[4],
            _ => "",
        };
        (!name.is_empty()).then_some(name)
    }
}

// 64, 32, 16, low 8, high 8
const NAMES: [[&str; 5]; 17] = [
    ["rax", "eax", "ax", "al", "ah"],
    ["rbx", "ebx", "bx", "bl", "bh"],
    ["rcx", "ecx", "cx", "cl", "ch"],
    ["rdx", "edx", "dx", "dl", "dh"],
    ["rsi", "esi", "si", "sil", ""],
    ["rdi", "edi", "di", "dil", ""],
    ["rbp", "ebp", "bp", "bpl", ""],
    ["rsp", "esp", "sp", "spl", ""],
    ["r8", "r8d", "r8w", "r8b", ""],
    ["r9", "r9d", "r9w", "r9b", ""],
    ["r10", "r10d", "r10w", "r10b", ""],
    ["r11", "r11d", "r11w", "r11b", ""],
    ["r12", "r12d", "r12w", "r12b", ""],
    ["r13", "r13d", "r13w", "r13b", ""],
    ["r14", "r14d", "r14w", "r14b", ""],
    ["r15", "r15d", "r15w", "r15b", ""],
    ["rip", "eip", "ip", "", ""],
];

const FAMILIES: [RegFamily; 17] = [
    RegFamily::Rax,
    RegFamily::Rbx,
    RegFamily::Rcx,
    RegFamily::Rdx,
    RegFamily::Rsi,
    RegFamily::Rdi,
    RegFamily::Rbp,
    RegFamily::Rsp,
    RegFamily::R8,
    RegFamily::R9,
    RegFamily::R10,
    RegFamily::R11,
    RegFamily::R12,
    RegFamily::R13,
    RegFamily::R14,
    RegFamily::R15,
    RegFamily::Rip,
];

/// A register as a byte range `[lo, hi)` of its 8-byte family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegisterId {
    pub family: RegFamily,
    pub lo: u8,
    pub hi: u8,
}

impl RegisterId {
    pub const fn new(family: RegFamily, lo: u8, hi: u8) -> Self {
        RegisterId { family, lo, hi }
    }

    pub const fn full(family: RegFamily) -> Self {
        RegisterId { family, lo: 0, hi: 8 }
    }

    pub fn parse(name: &str) -> Option<RegisterId> {
        for (row, family) in NAMES.iter().zip(FAMILIES) {
            for (slot, candidate) in row.iter().enumerate() {
                if !candidate.is_empty() && *candidate == name {
                    let (lo, hi) = [(0, 8), (0, 4), (0, 2), (0, 1), (1, 2)][slot];
                    return Some(RegisterId { family, lo, hi });
                }
            }
        }
        None
    }

    pub fn width_bytes(self) -> u8 {
        self.hi - self.lo
    }

    pub fn width_bits(self) -> u16 {
        u16::from(self.width_bytes()) * 8
    }

    /// The full 8-byte register of this family.
    pub fn widen(self) -> RegisterId {
        RegisterId::full(self.family)
    }

    pub fn is_full(self) -> bool {
        self.lo == 0 && self.hi == 8
    }

    pub fn overlaps(self, other: RegisterId) -> bool {
        self.family == other.family && self.lo < other.hi && other.lo < self.hi
    }

    /// Whether a write to `self` leaves no byte of `other` depending on its
    /// previous contents. 32-bit writes zero the upper half of the family.
    pub fn write_covers(self, other: RegisterId) -> bool {
        if self.family != other.family {
            return false;
        }
        if self.lo == 0 && (self.hi == 4 || self.hi == 8) {
            return true;
        }
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn name(self) -> &'static str {
        self.family.sub_name(self.lo, self.hi).unwrap_or("?")
    }
}

impl fmt::Display for RegisterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Status flags tracked individually.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlagId {
    Zf,
    Sf,
    Cf,
    Of,
    Pf,
}

impl FlagId {
    pub const ALL: [FlagId; 5] = [FlagId::Zf, FlagId::Sf, FlagId::Cf, FlagId::Of, FlagId::Pf];

    pub fn name(self) -> &'static str {
        match self {
            FlagId::Zf => "ZF",
            FlagId::Sf => "SF",
            FlagId::Cf => "CF",
            FlagId::Of => "OF",
            FlagId::Pf => "PF",
        }
    }

    pub fn parse(name: &str) -> Option<FlagId> {
        FlagId::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for FlagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
