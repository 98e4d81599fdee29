//! Mnemonic semantics and the def/use table.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};

use super::operand::{MemOperand, Operand, Scale};
use super::reg::{FlagId, RegFamily, RegisterId};
use super::Location;

/// Condition codes of the supported jcc/setcc/cmovcc forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cond {
    E,
    Ne,
    S,
    Ns,
    L,
    Ge,
    Le,
    G,
    B,
    Ae,
    Be,
    A,
}

impl Cond {
    pub const ALL: [Cond; 12] = [
        Cond::E,
        Cond::Ne,
        Cond::S,
        Cond::Ns,
        Cond::L,
        Cond::Ge,
        Cond::Le,
        Cond::G,
        Cond::B,
        Cond::Ae,
        Cond::Be,
        Cond::A,
    ];

    pub fn parse(suffix: &str) -> Option<Cond> {
        Some(match suffix {
            "e" | "z" => Cond::E,
            "ne" | "nz" => Cond::Ne,
            "s" => Cond::S,
            "ns" => Cond::Ns,
            "l" | "nge" => Cond::L,
            "ge" | "nl" => Cond::Ge,
            "le" | "ng" => Cond::Le,
            "g" | "nle" => Cond::G,
            "b" | "nae" | "c" => Cond::B,
            "ae" | "nb" | "nc" => Cond::Ae,
            "be" | "na" => Cond::Be,
            "a" | "nbe" => Cond::A,
            _ => return None,
        })
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Cond::E => "e",
            Cond::Ne => "ne",
            Cond::S => "s",
            Cond::Ns => "ns",
            Cond::L => "l",
            Cond::Ge => "ge",
            Cond::Le => "le",
            Cond::G => "g",
            Cond::B => "b",
            Cond::Ae => "ae",
            Cond::Be => "be",
            Cond::A => "a",
        }
    }

    /// Flags tested by the condition (Intel SDM, Jcc table).
    pub fn flags(self) -> &'static [FlagId] {
        match self {
            Cond::E | Cond::Ne => &[FlagId::Zf],
            Cond::S | Cond::Ns => &[FlagId::Sf],
            Cond::L | Cond::Ge => &[FlagId::Sf, FlagId::Of],
            Cond::Le | Cond::G => &[FlagId::Zf, FlagId::Sf, FlagId::Of],
            Cond::B | Cond::Ae => &[FlagId::Cf],
            Cond::Be | Cond::A => &[FlagId::Cf, FlagId::Zf],
        }
    }

    pub fn holds(self, zf: bool, sf: bool, cf: bool, of: bool) -> bool {
        match self {
            Cond::E => zf,
            Cond::Ne => !zf,
            Cond::S => sf,
            Cond::Ns => !sf,
            Cond::L => sf != of,
            Cond::Ge => sf == of,
            Cond::Le => zf || sf != of,
            Cond::G => !zf && sf == of,
            Cond::B => cf,
            Cond::Ae => !cf,
            Cond::Be => cf || zf,
            Cond::A => !cf && !zf,
        }
    }
}

/// Semantic operation of a supported mnemonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Op {
    Mov,
    Movzx,
    Movsx,
    Lea,
    Add,
    Sub,
    And,
    Or,
    Xor,
    Inc,
    Dec,
    Neg,
    Not,
    Shl,
    Shr,
    Sar,
    Imul,
    Mul,
    Div,
    Idiv,
    Cmp,
    Test,
    Set(Cond),
    Jcc(Cond),
    Jmp,
    Cmov(Cond),
    Push,
    Pop,
    Call,
    Leave,
    Ret,
    /// Sign-extend ax into eax.
    Cwtl,
    /// Sign-extend eax into rax.
    Cltq,
    /// Sign-extend rax into rdx:rax.
    Cqto,
    /// Sign-extend eax into edx:eax.
    Cltd,
    Stos,
    Movs,
}

impl Op {
    pub fn is_branch(self) -> bool {
        matches!(self, Op::Jcc(_) | Op::Jmp | Op::Ret)
    }
}

/// Maps a lowercase mnemonic to its operation and, for string ops, the
/// element width implied by the suffix.
pub fn lookup(mnemonic: &str) -> Option<(Op, Option<u8>)> {
    let op = match mnemonic {
        "mov" | "movabs" | "movq" | "movl" => Op::Mov,
        "movzx" | "movzbl" | "movzwl" => Op::Movzx,
        "movsx" | "movsxd" | "movslq" => Op::Movsx,
        "lea" | "leaq" => Op::Lea,
        "add" => Op::Add,
        "sub" => Op::Sub,
        "and" => Op::And,
        "or" => Op::Or,
        "xor" => Op::Xor,
        "inc" => Op::Inc,
        "dec" => Op::Dec,
        "neg" => Op::Neg,
        "not" => Op::Not,
        "shl" | "sal" => Op::Shl,
        "shr" => Op::Shr,
        "sar" => Op::Sar,
        "imul" | "imulq" => Op::Imul,
        "mul" | "mulq" => Op::Mul,
        "div" | "divq" => Op::Div,
        "idiv" | "idivq" => Op::Idiv,
        "cmp" => Op::Cmp,
        "test" => Op::Test,
        "jmp" => Op::Jmp,
        "push" => Op::Push,
        "pop" => Op::Pop,
        "call" => Op::Call,
        "leave" => Op::Leave,
        "ret" | "retn" => Op::Ret,
        "cwtl" | "cwde" => Op::Cwtl,
        "cltq" | "cdqe" => Op::Cltq,
        "cqto" | "cqo" => Op::Cqto,
        "cltd" | "cdq" => Op::Cltd,
        "stos" => return Some((Op::Stos, None)),
        "stosb" => return Some((Op::Stos, Some(1))),
        "stosw" => return Some((Op::Stos, Some(2))),
        "stosd" => return Some((Op::Stos, Some(4))),
        "stosq" => return Some((Op::Stos, Some(8))),
        "movs" => return Some((Op::Movs, None)),
        "movsb" => return Some((Op::Movs, Some(1))),
        "movsw" => return Some((Op::Movs, Some(2))),
        "movsd" => return Some((Op::Movs, Some(4))),
        "movsq" => return Some((Op::Movs, Some(8))),
        m => {
            if let Some(c) = m.strip_prefix("set").and_then(Cond::parse) {
                Op::Set(c)
            } else if let Some(c) = m.strip_prefix("cmov").and_then(Cond::parse) {
                Op::Cmov(c)
            } else if let Some(c) = m.strip_prefix('j').and_then(Cond::parse) {
                Op::Jcc(c)
            } else {
                return None;
            }
        }
    };
    Some((op, None))
}

pub(crate) fn reg(family: RegFamily, lo: u8, hi: u8) -> Location {
    Location::Reg(RegisterId::new(family, lo, hi))
}

/// The accumulator (or rdx) slice of a given width.
pub(crate) fn sized(family: RegFamily, width: u8) -> RegisterId {
    RegisterId::new(family, 0, width)
}

pub(crate) fn implicit_mem(family: RegFamily, width: u8) -> Location {
    Location::Mem(implicit_mem_text(family), width)
}

pub(crate) fn implicit_mem_text(family: RegFamily) -> String {
    let mut s = String::from("*(");
    s.push_str(family.name());
    s.push(')');
    s
}

/// Locations read when `op` is used as a source.
fn read(op: &Operand, uses: &mut BTreeSet<Location>) {
    match op {
        Operand::Register(r) => {
            uses.insert(Location::Reg(*r));
        }
        Operand::Memory(m) => {
            address(m, uses);
            if let Some(size) = m.size_bytes {
                uses.insert(Location::Mem(m.canonical_text(), size));
            }
        }
        Operand::Immediate(_) | Operand::Label(_) => {}
    }
}

fn address(m: &MemOperand, uses: &mut BTreeSet<Location>) {
    for r in m.address_registers() {
        if r.family != RegFamily::Rip {
            uses.insert(Location::Reg(r));
        }
    }
}

/// Location written when `op` is a destination; address registers go to `uses`.
fn write(op: &Operand, defs: &mut BTreeSet<Location>, uses: &mut BTreeSet<Location>) {
    match op {
        Operand::Register(r) => {
            defs.insert(Location::Reg(*r));
        }
        Operand::Memory(m) => {
            address(m, uses);
            defs.insert(Location::Mem(m.canonical_text(), m.size_bytes.unwrap_or(8)));
        }
        Operand::Immediate(_) | Operand::Label(_) => {}
    }
}

fn flags(set: &mut BTreeSet<Location>, which: &[FlagId]) {
    for f in which {
        set.insert(Location::Flag(*f));
    }
}

const NO_CF: [FlagId; 4] = [FlagId::Zf, FlagId::Sf, FlagId::Of, FlagId::Pf];

/// Shift count masked as the hardware does.
pub fn masked_count(count: i64, width: u8) -> u32 {
    let mask = if width == 8 { 0x3f } else { 0x1f };
    (count as u64 & mask) as u32
}

/// Fills explicit and implicit defs/uses for a validated instruction shape.
pub(crate) fn def_use(
    op: Op,
    ops: &[Operand],
    width: u8,
    rep: bool,
) -> (BTreeSet<Location>, BTreeSet<Location>) {
    let mut defs = BTreeSet::new();
    let mut uses = BTreeSet::new();
    let rsp = || reg(RegFamily::Rsp, 0, 8);
    match op {
        Op::Mov | Op::Movzx | Op::Movsx => {
            read(&ops[1], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
        }
        Op::Lea => {
            if let Operand::Memory(m) = &ops[1] {
                address(m, &mut uses);
            }
            write(&ops[0], &mut defs, &mut uses);
        }
        Op::Add | Op::Sub | Op::And | Op::Or | Op::Xor => {
            read(&ops[0], &mut uses);
            read(&ops[1], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
            flags(&mut defs, &FlagId::ALL);
        }
        Op::Inc | Op::Dec | Op::Neg | Op::Not => {
            read(&ops[0], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
            match op {
                Op::Inc | Op::Dec => flags(&mut defs, &NO_CF),
                Op::Neg => flags(&mut defs, &FlagId::ALL),
                _ => {}
            }
        }
        Op::Shl | Op::Shr | Op::Sar => {
            read(&ops[0], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
            match ops.get(1) {
                Some(Operand::Immediate(n)) => {
                    if masked_count(*n, width) != 0 {
                        flags(&mut defs, &FlagId::ALL);
                    }
                }
                Some(count) => {
                    // A zero count at run time leaves the flags untouched.
                    read(count, &mut uses);
                    flags(&mut defs, &FlagId::ALL);
                    flags(&mut uses, &FlagId::ALL);
                }
                None => flags(&mut defs, &FlagId::ALL),
            }
        }
        Op::Imul if ops.len() >= 2 => {
            if ops.len() == 2 {
                read(&ops[0], &mut uses);
            }
            read(&ops[1], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
            flags(&mut defs, &FlagId::ALL);
        }
        Op::Imul | Op::Mul => {
            read(&ops[0], &mut uses);
            uses.insert(Location::Reg(sized(RegFamily::Rax, width)));
            if width == 1 {
                defs.insert(reg(RegFamily::Rax, 0, 2));
            } else {
                defs.insert(Location::Reg(sized(RegFamily::Rax, width)));
                defs.insert(Location::Reg(sized(RegFamily::Rdx, width)));
            }
            flags(&mut defs, &FlagId::ALL);
        }
        Op::Div | Op::Idiv => {
            read(&ops[0], &mut uses);
            if width == 1 {
                uses.insert(reg(RegFamily::Rax, 0, 2));
                defs.insert(reg(RegFamily::Rax, 0, 1));
                defs.insert(reg(RegFamily::Rax, 1, 2));
            } else {
                uses.insert(Location::Reg(sized(RegFamily::Rax, width)));
                uses.insert(Location::Reg(sized(RegFamily::Rdx, width)));
                defs.insert(Location::Reg(sized(RegFamily::Rax, width)));
                defs.insert(Location::Reg(sized(RegFamily::Rdx, width)));
            }
            flags(&mut defs, &FlagId::ALL);
        }
        Op::Cmp | Op::Test => {
            read(&ops[0], &mut uses);
            read(&ops[1], &mut uses);
            flags(&mut defs, &FlagId::ALL);
        }
        Op::Set(c) => {
            flags(&mut uses, c.flags());
            write(&ops[0], &mut defs, &mut uses);
        }
        Op::Jcc(c) => flags(&mut uses, c.flags()),
        Op::Jmp => read(&ops[0], &mut uses),
        Op::Cmov(c) => {
            flags(&mut uses, c.flags());
            read(&ops[0], &mut uses);
            read(&ops[1], &mut uses);
            write(&ops[0], &mut defs, &mut uses);
        }
        Op::Push => {
            read(&ops[0], &mut uses);
            uses.insert(rsp());
            defs.insert(rsp());
            defs.insert(implicit_mem(RegFamily::Rsp, 8));
        }
        Op::Pop => {
            uses.insert(rsp());
            uses.insert(implicit_mem(RegFamily::Rsp, 8));
            write(&ops[0], &mut defs, &mut uses);
            defs.insert(rsp());
        }
        Op::Call => {
            read(&ops[0], &mut uses);
            uses.insert(rsp());
            for family in RegFamily::ARGS {
                uses.insert(reg(family, 0, 8));
            }
            defs.insert(reg(RegFamily::Rax, 0, 8));
        }
        Op::Leave => {
            uses.insert(reg(RegFamily::Rbp, 0, 8));
            uses.insert(implicit_mem(RegFamily::Rbp, 8));
            defs.insert(rsp());
            defs.insert(reg(RegFamily::Rbp, 0, 8));
        }
        Op::Ret => {
            uses.insert(rsp());
            uses.insert(implicit_mem(RegFamily::Rsp, 8));
            defs.insert(rsp());
        }
        Op::Cwtl => {
            uses.insert(reg(RegFamily::Rax, 0, 2));
            defs.insert(reg(RegFamily::Rax, 0, 4));
        }
        Op::Cltq => {
            uses.insert(reg(RegFamily::Rax, 0, 4));
            defs.insert(reg(RegFamily::Rax, 0, 8));
        }
        Op::Cqto => {
            uses.insert(reg(RegFamily::Rax, 0, 8));
            defs.insert(reg(RegFamily::Rdx, 0, 8));
        }
        Op::Cltd => {
            uses.insert(reg(RegFamily::Rax, 0, 4));
            defs.insert(reg(RegFamily::Rdx, 0, 4));
        }
        Op::Stos => {
            uses.insert(Location::Reg(sized(RegFamily::Rax, width)));
            uses.insert(reg(RegFamily::Rdi, 0, 8));
            defs.insert(reg(RegFamily::Rdi, 0, 8));
            defs.insert(implicit_mem(RegFamily::Rdi, width));
        }
        Op::Movs => {
            uses.insert(reg(RegFamily::Rsi, 0, 8));
            uses.insert(reg(RegFamily::Rdi, 0, 8));
            uses.insert(implicit_mem(RegFamily::Rsi, width));
            defs.insert(reg(RegFamily::Rsi, 0, 8));
            defs.insert(reg(RegFamily::Rdi, 0, 8));
            defs.insert(implicit_mem(RegFamily::Rdi, width));
        }
    }
    if rep && matches!(op, Op::Stos | Op::Movs) {
        uses.insert(reg(RegFamily::Rcx, 0, 8));
        defs.insert(reg(RegFamily::Rcx, 0, 8));
    }
    (defs, uses)
}

/// Checks operand count and kinds; returns the operation width in bytes.
pub(crate) fn validate(
    op: Op,
    ops: &mut [Operand],
    suffix_width: Option<u8>,
) -> Result<u8, String> {
    use Operand::{Immediate as I, Label as L, Memory as M, Register as R};
    let n = ops.len();
    let bad = |why: &str| Err(why.to_string());
    // Fill a missing memory width from a register partner.
    if n == 2 && !matches!(op, Op::Lea | Op::Movzx | Op::Movsx) {
        let partner = match (&ops[0], &ops[1]) {
            (R(r), M(_)) | (M(_), R(r)) => Some(r.width_bytes()),
            _ => None,
        };
        if let Some(w) = partner {
            for o in ops.iter_mut() {
                if let M(m) = o {
                    m.size_bytes.get_or_insert(w);
                }
            }
        }
    }
    if matches!(op, Op::Push | Op::Pop | Op::Jmp | Op::Call) {
        if let Some(M(m)) = ops.get_mut(0) {
            m.size_bytes.get_or_insert(8);
        }
    }
    if let Some((M(m), false)) = ops.first().map(|o| (o, matches!(op, Op::Lea))) {
        if m.size_bytes.is_none() && !matches!(op, Op::Stos | Op::Movs) {
            return bad("memory operand without a size");
        }
    }
    if let Some(M(m)) = ops.get(1) {
        if m.size_bytes.is_none() && !matches!(op, Op::Lea | Op::Movs) {
            return bad("memory operand without a size");
        }
    }
    if op != Op::Lea && ops.iter().any(|o| matches!(o, M(m) if matches!(m.scale, Scale::Reg(_)))) {
        return bad("register scale outside lea");
    }
    let dst_width = ops.first().and_then(Operand::width_bytes).unwrap_or(0);
    let width = match op {
        Op::Mov => match (&ops[..], n) {
            ([R(_) | M(_), R(_) | I(_)], _) | ([R(_), M(_)], _) => dst_width,
            _ => return bad("mov expects dst, src"),
        },
        Op::Movzx | Op::Movsx => match &ops[..] {
            [R(d), R(_) | M(_)] => {
                let sw = ops[1].width_bytes().unwrap_or(0);
                if sw == 0 || sw >= d.width_bytes() {
                    return bad("extension must widen");
                }
                d.width_bytes()
            }
            _ => return bad("extension expects reg, src"),
        },
        Op::Lea => match &ops[..] {
            [R(d), M(_)] => d.width_bytes(),
            _ => return bad("lea expects reg, mem"),
        },
        Op::Add | Op::Sub | Op::And | Op::Or | Op::Xor | Op::Cmp | Op::Test => match &ops[..] {
            [R(_) | M(_), R(_) | I(_)] | [R(_), M(_)] => dst_width,
            _ => return bad("binary op expects dst, src"),
        },
        Op::Inc | Op::Dec | Op::Neg | Op::Not | Op::Mul | Op::Div | Op::Idiv => match &ops[..] {
            [R(_) | M(_)] => dst_width,
            _ => return bad("unary op expects one operand"),
        },
        Op::Shl | Op::Shr | Op::Sar => match &ops[..] {
            [R(_) | M(_)] | [R(_) | M(_), I(_)] => dst_width,
            [R(_) | M(_), R(c)] if *c == RegisterId::new(RegFamily::Rcx, 0, 1) => dst_width,
            _ => return bad("shift count must be an immediate or cl"),
        },
        Op::Imul => match &ops[..] {
            [R(_) | M(_)] => dst_width,
            [R(_), R(_) | M(_)] | [R(_), R(_) | M(_), I(_)] => dst_width,
            _ => return bad("imul operand form"),
        },
        Op::Set(_) => match &ops[..] {
            [R(_) | M(_)] if dst_width == 1 => 1,
            _ => return bad("setcc expects a byte destination"),
        },
        Op::Cmov(_) => match &ops[..] {
            [R(d), R(_) | M(_)] if d.width_bytes() >= 2 => dst_width,
            _ => return bad("cmovcc expects reg, src"),
        },
        Op::Jcc(_) => match &ops[..] {
            [L(_)] => 0,
            _ => return bad("conditional jump expects a target"),
        },
        Op::Jmp | Op::Call => match &ops[..] {
            [_] => 8,
            _ => return bad("expects one target"),
        },
        Op::Push => match &ops[..] {
            [R(r)] if r.width_bytes() == 8 => 8,
            [M(m)] if m.size_bytes == Some(8) => 8,
            [I(_)] => 8,
            _ => return bad("push expects a 64-bit source"),
        },
        Op::Pop => match &ops[..] {
            [R(r)] if r.width_bytes() == 8 => 8,
            [M(m)] if m.size_bytes == Some(8) => 8,
            _ => return bad("pop expects a 64-bit destination"),
        },
        Op::Leave | Op::Cwtl | Op::Cltq | Op::Cqto | Op::Cltd => match n {
            0 => 0,
            _ => return bad("takes no operands"),
        },
        Op::Ret => match &ops[..] {
            [] | [I(_)] => 8,
            _ => return bad("ret operand"),
        },
        Op::Stos | Op::Movs => {
            let from_ops = ops.first().and_then(Operand::width_bytes);
            let w = suffix_width.or(from_ops).ok_or_else(|| String::from("string op width"))?;
            let want_dst = |o: &Operand| matches!(o, M(m) if is_implicit(m, RegFamily::Rdi));
            let ok = match (op, &ops[..]) {
                (_, []) => true,
                (Op::Stos, [d, R(r)]) => want_dst(d) && *r == sized(RegFamily::Rax, w),
                (Op::Movs, [d, M(s)]) => want_dst(d) && is_implicit(s, RegFamily::Rsi),
                _ => false,
            };
            if !ok {
                return bad("string op operands");
            }
            w
        }
    };
    if matches!(op, Op::Mov | Op::Add | Op::Sub | Op::And | Op::Or | Op::Xor | Op::Cmp | Op::Test | Op::Cmov(_))
    {
        if let Some(w) = ops.get(1).and_then(Operand::width_bytes) {
            if w != width {
                return bad("operand widths differ");
            }
        }
    }
    if width != 0 && !matches!(width, 1 | 2 | 4 | 8) {
        return bad("unsupported width");
    }
    Ok(width)
}

fn is_implicit(m: &MemOperand, family: RegFamily) -> bool {
    m.base.map(|b| b.family == family && b.is_full()).unwrap_or(false)
        && m.index.is_none()
        && m.displacement == 0
        && m.scale == Scale::Imm(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_resolve() {
        assert_eq!(lookup("setnz"), Some((Op::Set(Cond::Ne), None)));
        assert_eq!(lookup("cmovnae"), Some((Op::Cmov(Cond::B), None)));
        assert_eq!(lookup("jnle"), Some((Op::Jcc(Cond::G), None)));
        assert_eq!(lookup("jmp"), Some((Op::Jmp, None)));
        assert_eq!(lookup("stosb"), Some((Op::Stos, Some(1))));
        assert_eq!(lookup("jo"), None);
        assert_eq!(lookup("nop"), None);
    }

    // Hand-copied from the SDM condition table: (cc, tested flags, predicate
    // as a function of ZF,SF,CF,OF).
    #[test]
    fn condition_table_matches_manual() {
        type Pred = fn(bool, bool, bool, bool) -> bool;
        let table: [(&str, &[&str], Pred); 12] = [
            ("e", &["ZF"], |z, _, _, _| z),
            ("ne", &["ZF"], |z, _, _, _| !z),
            ("s", &["SF"], |_, s, _, _| s),
            ("ns", &["SF"], |_, s, _, _| !s),
            ("l", &["SF", "OF"], |_, s, _, o| s ^ o),
            ("ge", &["SF", "OF"], |_, s, _, o| !(s ^ o)),
            ("le", &["ZF", "SF", "OF"], |z, s, _, o| z | (s ^ o)),
            ("g", &["ZF", "SF", "OF"], |z, s, _, o| !z & !(s ^ o)),
            ("b", &["CF"], |_, _, c, _| c),
            ("ae", &["CF"], |_, _, c, _| !c),
            ("be", &["CF", "ZF"], |z, _, c, _| c | z),
            ("a", &["CF", "ZF"], |z, _, c, _| !c & !z),
        ];
        for (cc, names, pred) in table {
            let cond = Cond::parse(cc).unwrap();
            let mut got: alloc::vec::Vec<&str> = cond.flags().iter().map(|f| f.name()).collect();
            let mut want = names.to_vec();
            got.sort();
            want.sort();
            assert_eq!(got, want, "{cc}");
            for bits in 0..16u8 {
                let (z, s, c, o) = (bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0);
                assert_eq!(cond.holds(z, s, c, o), pred(z, s, c, o), "{cc} {bits}");
            }
        }
    }
}
