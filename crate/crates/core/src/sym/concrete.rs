//! Bit-exact concrete interpreter, the ground-truth oracle for strands.
//!
//! Memory is keyed by canonical operand text, like the symbolic engine:
//! address registers are never read just to form an address.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::isa::{masked_count, size_keyword, Cond, FlagId, Instruction, Location, MemOperand, Op, Operand, RegFamily, RegisterId, Scale};
use crate::slicer::{value_outputs, Role, Strand};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConcreteError {
    #[error("no input value for {0}")]
    MissingInput(Location),
    #[error("division by zero in `{0}`")]
    DivideByZero(String),
    #[error("quotient overflow in `{0}`")]
    QuotientOverflow(String),
    #[error("flag {0:?} is undefined at this point")]
    UndefinedFlag(FlagId),
    #[error("not executable: {0}")]
    NotExecutable(String),
}

/// Supplies values for locations read before being written.
pub trait InputSource {
    fn reg(&mut self, family: RegFamily) -> Option<u64>;
    /// `display` is the operand as written, e.g. `dword ptr [rbp - 180]`.
    fn mem(&mut self, text: &str, display: &str) -> Option<u64>;
    fn flag(&mut self, flag: FlagId) -> Option<bool>;
}

/// Inputs given as a location map. Register values are taken as the
/// full 64-bit family; memory values are looked up by canonical text.
#[derive(Debug, Clone, Default)]
pub struct MapInputs {
    regs: BTreeMap<RegFamily, u64>,
    mems: BTreeMap<String, u64>,
    flags: BTreeMap<FlagId, bool>,
}

impl MapInputs {
    pub fn new(inputs: &BTreeMap<Location, u64>) -> Self {
        let mut out = MapInputs::default();
        for (loc, v) in inputs {
            match loc {
                Location::Reg(r) => {
                    let shifted = v.checked_shl(u32::from(r.lo) * 8).unwrap_or(0);
                    *out.regs.entry(r.family).or_insert(0) |= shifted;
                }
                Location::Mem(text, _) => {
                    out.mems.insert(text.clone(), *v);
                }
                Location::Flag(f) => {
                    out.flags.insert(*f, *v != 0);
                }
            }
        }
        out
    }
}

impl InputSource for MapInputs {
    fn reg(&mut self, family: RegFamily) -> Option<u64> {
        self.regs.get(&family).copied()
    }

    fn mem(&mut self, text: &str, _display: &str) -> Option<u64> {
        self.mems.get(text).copied()
    }

    fn flag(&mut self, flag: FlagId) -> Option<bool> {
        self.flags.get(&flag).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcreteResult {
    /// Final values of the strand outputs (see [`value_outputs`]).
    pub outputs: BTreeMap<Location, u64>,
    /// Taken/not-taken for strands ending in a conditional jump.
    pub branch: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlagState {
    Input,
    Undefined,
    Val(bool),
}

/// 64-bit cell with a per-byte "known" mask.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    value: u64,
    known: u8,
}

fn byte_mask(lo: u8, hi: u8) -> u8 {
    let n = hi - lo;
    let m: u16 = ((1u16 << n) - 1) << lo;
    m as u8
}

fn bits(width_bytes: u8) -> u64 {
    if width_bytes >= 8 {
        u64::MAX
    } else {
        (1u64 << (u32::from(width_bytes) * 8)) - 1
    }
}

fn sign_bit(v: u64, width_bytes: u8) -> bool {
    (v >> (u32::from(width_bytes) * 8 - 1)) & 1 == 1
}

fn sext(v: u64, width_bytes: u8) -> i64 {
    let shift = 64 - u32::from(width_bytes) * 8;
    ((v << shift) as i64) >> shift
}

fn parity_even(v: u64) -> bool {
    (v as u8).count_ones() % 2 == 0
}

struct Machine<'a> {
    regs: BTreeMap<RegFamily, Cell>,
    mem: BTreeMap<String, Cell>,
    flags: [FlagState; 5],
    src: &'a mut dyn InputSource,
}

type R<T> = Result<T, ConcreteError>;

fn flag_slot(f: FlagId) -> usize {
    FlagId::ALL.iter().position(|x| *x == f).unwrap_or(0)
}

impl<'a> Machine<'a> {
    fn fill(cell: &mut Cell, need: u8, fetch: impl FnOnce() -> Option<u64>) -> Option<()> {
        if cell.known & need == need {
            return Some(());
        }
        let input = fetch()?;
        for b in 0..8 {
            if cell.known & (1 << b) == 0 {
                let m = 0xffu64 << (b * 8);
                cell.value = (cell.value & !m) | (input & m);
            }
        }
        cell.known = 0xff;
        Some(())
    }

    fn read_reg(&mut self, r: RegisterId) -> R<u64> {
        let mut cell = self.regs.get(&r.family).copied().unwrap_or_default();
        let src = &mut *self.src;
        Self::fill(&mut cell, byte_mask(r.lo, r.hi), || src.reg(r.family))
            .ok_or(ConcreteError::MissingInput(Location::Reg(RegisterId::full(r.family))))?;
        self.regs.insert(r.family, cell);
        Ok((cell.value >> (u32::from(r.lo) * 8)) & bits(r.hi - r.lo))
    }

    fn write_reg(&mut self, r: RegisterId, v: u64) {
        let cell = self.regs.entry(r.family).or_default();
        if r.lo == 0 && r.hi >= 4 {
            *cell = Cell { value: v & bits(r.hi), known: 0xff };
        } else {
            let shift = u32::from(r.lo) * 8;
            let m = bits(r.hi - r.lo) << shift;
            cell.value = (cell.value & !m) | ((v << shift) & m);
            cell.known |= byte_mask(r.lo, r.hi);
        }
    }

    fn read_mem(&mut self, text: &str, display: &str, width: u8) -> R<u64> {
        let mut cell = self.mem.get(text).copied().unwrap_or_default();
        let src = &mut *self.src;
        Self::fill(&mut cell, byte_mask(0, width), || src.mem(text, display))
            .ok_or_else(|| ConcreteError::MissingInput(Location::Mem(text.to_string(), width)))?;
        self.mem.insert(text.to_string(), cell);
        Ok(cell.value & bits(width))
    }

    fn write_mem(&mut self, text: &str, width: u8, v: u64) {
        let cell = self.mem.entry(text.to_string()).or_default();
        let m = bits(width);
        cell.value = (cell.value & !m) | (v & m);
        cell.known |= byte_mask(0, width);
    }

    fn address(&mut self, m: &MemOperand, ins: &Instruction) -> R<u64> {
        if m.segment.is_some() {
            return Err(ConcreteError::NotExecutable(ins.text.clone()));
        }
        let aw = m.base.or(m.index).map(|r| r.width_bytes()).unwrap_or(8);
        let mut a = 0u64;
        if let Some(b) = m.base {
            a = a.wrapping_add(self.read_reg(b)?);
        }
        if let Some(i) = m.index {
            let iv = self.read_reg(i)?;
            let s = match m.scale {
                Scale::Imm(s) => u64::from(s),
                Scale::Reg(r) => self.read_reg(r)?,
            };
            a = a.wrapping_add(iv.wrapping_mul(s));
        }
        a = a.wrapping_add(m.displacement as u64);
        Ok(a & bits(aw))
    }

    fn read(&mut self, op: &Operand, width: u8, ins: &Instruction) -> R<u64> {
        match op {
            Operand::Register(r) => self.read_reg(*r),
            Operand::Immediate(v) => Ok((*v as u64) & bits(width)),
            Operand::Memory(m) => {
                let size = m.size_bytes.unwrap_or(width);
                let display = m.render(|d| d.to_string());
                self.read_mem(&m.canonical_text(), &display, size)
            }
            Operand::Label(_) => Err(ConcreteError::NotExecutable(ins.text.clone())),
        }
    }

    fn write(&mut self, op: &Operand, width: u8, v: u64, ins: &Instruction) -> R<()> {
        match op {
            Operand::Register(r) => {
                self.write_reg(*r, v);
                Ok(())
            }
            Operand::Memory(m) => {
                if m.segment.is_some() {
                    return Err(ConcreteError::NotExecutable(ins.text.clone()));
                }
                self.write_mem(&m.canonical_text(), m.size_bytes.unwrap_or(width), v);
                Ok(())
            }
            _ => Err(ConcreteError::NotExecutable(ins.text.clone())),
        }
    }

    fn set_flags(&mut self, zf: FlagState, sf: FlagState, cf: FlagState, of: FlagState, pf: FlagState) {
        self.flags = [zf, sf, cf, of, pf];
    }

    fn result_flags(&mut self, res: u64, w: u8, cf: FlagState, of: FlagState) {
        use FlagState::Val;
        self.set_flags(Val(res == 0), Val(sign_bit(res, w)), cf, of, Val(parity_even(res)));
    }

    fn flag(&mut self, f: FlagId) -> R<bool> {
        let slot = flag_slot(f);
        match self.flags[slot] {
            FlagState::Val(b) => Ok(b),
            FlagState::Undefined => Err(ConcreteError::UndefinedFlag(f)),
            FlagState::Input => {
                let b = self.src.flag(f).ok_or(ConcreteError::MissingInput(Location::Flag(f)))?;
                self.flags[slot] = FlagState::Val(b);
                Ok(b)
            }
        }
    }

    fn cond(&mut self, c: Cond) -> R<bool> {
        let mut vals = [false; 4];
        for f in c.flags() {
            let v = self.flag(*f)?;
            match f {
                FlagId::Zf => vals[0] = v,
                FlagId::Sf => vals[1] = v,
                FlagId::Cf => vals[2] = v,
                FlagId::Of => vals[3] = v,
                FlagId::Pf => {}
            }
        }
        Ok(c.holds(vals[0], vals[1], vals[2], vals[3]))
    }

    fn step(&mut self, ins: &Instruction) -> R<()> {
        use FlagState::{Undefined, Val};
        let op = ins.op.ok_or_else(|| ConcreteError::NotExecutable(ins.text.clone()))?;
        let ops = &ins.operands;
        let w = ins.width;
        let m = bits(w);
        match op {
            Op::Mov => {
                let v = self.read(&ops[1], w, ins)?;
                self.write(&ops[0], w, v, ins)?;
            }
            Op::Movzx | Op::Movsx => {
                let sw = ops[1].width_bytes().unwrap_or(w);
                let v = self.read(&ops[1], sw, ins)?;
                let v = if op == Op::Movsx { (sext(v, sw) as u64) & m } else { v };
                self.write(&ops[0], w, v, ins)?;
            }
            Op::Lea => {
                let Operand::Memory(mo) = &ops[1] else {
                    return Err(ConcreteError::NotExecutable(ins.text.clone()));
                };
                let a = self.address(mo, ins)?;
                self.write(&ops[0], w, a & m, ins)?;
            }
            Op::Add | Op::Sub | Op::Cmp => {
                let a = self.read(&ops[0], w, ins)?;
                let b = self.read(&ops[1], w, ins)?;
                let (res, cf, of) = if op == Op::Add {
                    let res = a.wrapping_add(b) & m;
                    let cf = (u128::from(a) + u128::from(b)) > u128::from(m);
                    let of = sign_bit(a, w) == sign_bit(b, w) && sign_bit(res, w) != sign_bit(a, w);
                    (res, cf, of)
                } else {
                    let res = a.wrapping_sub(b) & m;
                    let of = sign_bit(a, w) != sign_bit(b, w) && sign_bit(res, w) != sign_bit(a, w);
                    (res, a < b, of)
                };
                self.result_flags(res, w, Val(cf), Val(of));
                if op != Op::Cmp {
                    self.write(&ops[0], w, res, ins)?;
                }
            }
            Op::And | Op::Or | Op::Xor | Op::Test => {
                let a = self.read(&ops[0], w, ins)?;
                let b = self.read(&ops[1], w, ins)?;
                let res = match op {
                    Op::And | Op::Test => a & b,
                    Op::Or => a | b,
                    _ => a ^ b,
                };
                self.result_flags(res, w, Val(false), Val(false));
                if op != Op::Test {
                    self.write(&ops[0], w, res, ins)?;
                }
            }
            Op::Inc | Op::Dec => {
                let a = self.read(&ops[0], w, ins)?;
                let min = 1u64 << (u32::from(w) * 8 - 1);
                let (res, of) = if op == Op::Inc {
                    (a.wrapping_add(1) & m, a == min - 1)
                } else {
                    (a.wrapping_sub(1) & m, a == min)
                };
                let cf = self.flags[flag_slot(FlagId::Cf)];
                self.result_flags(res, w, cf, Val(of));
                self.write(&ops[0], w, res, ins)?;
            }
            Op::Neg => {
                let a = self.read(&ops[0], w, ins)?;
                let res = a.wrapping_neg() & m;
                let min = 1u64 << (u32::from(w) * 8 - 1);
                self.result_flags(res, w, Val(a != 0), Val(a == min));
                self.write(&ops[0], w, res, ins)?;
            }
            Op::Not => {
                let a = self.read(&ops[0], w, ins)?;
                self.write(&ops[0], w, !a & m, ins)?;
            }
            Op::Shl | Op::Shr | Op::Sar => {
                let a = self.read(&ops[0], w, ins)?;
                let count = match ops.get(1) {
                    None => 1,
                    Some(Operand::Immediate(n)) => masked_count(*n, w),
                    Some(r) => {
                        let c = self.read(r, 1, ins)?;
                        masked_count(c as i64, w)
                    }
                };
                let wb = u32::from(w) * 8;
                if count == 0 {
                    // Still a write: 32-bit destinations clear the upper half.
                    self.write(&ops[0], w, a, ins)?;
                    return Ok(());
                }
                let (res, cf) = match op {
                    Op::Shl => {
                        let res = if count >= wb { 0 } else { (a << count) & m };
                        let cf = if count > wb { None } else { Some((a >> (wb - count)) & 1 == 1) };
                        (res, cf)
                    }
                    Op::Shr => {
                        let res = if count >= wb { 0 } else { a >> count };
                        let cf = if count > wb { None } else { Some((a >> (count - 1).min(63)) & 1 == 1) };
                        (res, cf)
                    }
                    _ => {
                        let s = sext(a, w);
                        let res = (s >> count.min(wb - 1)) as u64 & m;
                        let cf = (s >> (count - 1).min(wb - 1)) & 1 == 1;
                        (res, Some(cf))
                    }
                };
                if count != 0 {
                    let of = if count == 1 {
                        Val(match op {
                            Op::Shl => sign_bit(res, w) != cf.unwrap_or(false),
                            Op::Shr => sign_bit(a, w),
                            _ => false,
                        })
                    } else {
                        Undefined
                    };
                    self.result_flags(res, w, cf.map(Val).unwrap_or(Undefined), of);
                }
                self.write(&ops[0], w, res, ins)?;
            }
            Op::Imul if ops.len() >= 2 => {
                let (a, b) = if ops.len() == 3 {
                    (self.read(&ops[1], w, ins)?, self.read(&ops[2], w, ins)?)
                } else {
                    (self.read(&ops[0], w, ins)?, self.read(&ops[1], w, ins)?)
                };
                let full = i128::from(sext(a, w)) * i128::from(sext(b, w));
                let res = (full as u64) & m;
                let over = i128::from(sext(res, w)) != full;
                self.set_flags(Undefined, Undefined, Val(over), Val(over), Undefined);
                self.write(&ops[0], w, res, ins)?;
            }
            Op::Imul | Op::Mul => {
                let src = self.read(&ops[0], w, ins)?;
                let acc = self.read_reg(RegisterId::new(RegFamily::Rax, 0, w))?;
                let wb = u32::from(w) * 8;
                let (prod, over) = if op == Op::Mul {
                    let p = u128::from(acc) * u128::from(src);
                    (p, (p >> wb) != 0)
                } else {
                    let p = i128::from(sext(acc, w)) * i128::from(sext(src, w));
                    let low = (p as u64) & m;
                    (p as u128, i128::from(sext(low, w)) != p)
                };
                self.set_flags(Undefined, Undefined, Val(over), Val(over), Undefined);
                if w == 1 {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, 2), (prod as u64) & 0xffff);
                } else {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, w), (prod as u64) & m);
                    self.write_reg(RegisterId::new(RegFamily::Rdx, 0, w), ((prod >> wb) as u64) & m);
                }
            }
            Op::Div | Op::Idiv => {
                let src = self.read(&ops[0], w, ins)?;
                let wb = u32::from(w) * 8;
                let dividend: u128 = if w == 1 {
                    u128::from(self.read_reg(RegisterId::new(RegFamily::Rax, 0, 2))?)
                } else {
                    let hi = self.read_reg(RegisterId::new(RegFamily::Rdx, 0, w))?;
                    let lo = self.read_reg(RegisterId::new(RegFamily::Rax, 0, w))?;
                    (u128::from(hi) << wb) | u128::from(lo)
                };
                if src == 0 {
                    return Err(ConcreteError::DivideByZero(ins.text.clone()));
                }
                let (q, r) = if op == Op::Div {
                    let q = dividend / u128::from(src);
                    if q > u128::from(m) {
                        return Err(ConcreteError::QuotientOverflow(ins.text.clone()));
                    }
                    (q as u64, (dividend % u128::from(src)) as u64)
                } else {
                    let dw = 2 * wb;
                    let sd = if dw >= 128 { dividend as i128 } else { ((dividend << (128 - dw)) as i128) >> (128 - dw) };
                    let sv = i128::from(sext(src, w));
                    let q = sd.wrapping_div(sv);
                    let lim = 1i128 << (wb - 1);
                    if q >= lim || q < -lim {
                        return Err(ConcreteError::QuotientOverflow(ins.text.clone()));
                    }
                    ((q as u64) & m, (sd.wrapping_rem(sv) as u64) & m)
                };
                self.set_flags(Undefined, Undefined, Undefined, Undefined, Undefined);
                if w == 1 {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, 1), q);
                    self.write_reg(RegisterId::new(RegFamily::Rax, 1, 2), r);
                } else {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, w), q);
                    self.write_reg(RegisterId::new(RegFamily::Rdx, 0, w), r);
                }
            }
            Op::Set(c) => {
                let b = self.cond(c)?;
                self.write(&ops[0], 1, u64::from(b), ins)?;
            }
            Op::Cmov(c) => {
                let b = self.cond(c)?;
                let dst = self.read(&ops[0], w, ins)?;
                let src = self.read(&ops[1], w, ins)?;
                self.write(&ops[0], w, if b { src } else { dst }, ins)?;
            }
            Op::Push => {
                let v = self.read(&ops[0], 8, ins)?;
                let v = match &ops[0] {
                    Operand::Immediate(i) => *i as u64,
                    _ => v,
                };
                let rsp = self.read_reg(RegisterId::full(RegFamily::Rsp))?;
                self.write_reg(RegisterId::full(RegFamily::Rsp), rsp.wrapping_sub(8));
                self.write_mem("*(rsp)", 8, v);
            }
            Op::Pop => {
                let v = self.read_mem("*(rsp)", "qword ptr [rsp]", 8)?;
                let rsp = self.read_reg(RegisterId::full(RegFamily::Rsp))?;
                self.write_reg(RegisterId::full(RegFamily::Rsp), rsp.wrapping_add(8));
                self.write(&ops[0], 8, v, ins)?;
            }
            Op::Leave => {
                let rbp = self.read_reg(RegisterId::full(RegFamily::Rbp))?;
                let saved = self.read_mem("*(rbp)", "qword ptr [rbp]", 8)?;
                self.write_reg(RegisterId::full(RegFamily::Rsp), rbp.wrapping_add(8));
                self.write_reg(RegisterId::full(RegFamily::Rbp), saved);
            }
            Op::Ret => {
                let rsp = self.read_reg(RegisterId::full(RegFamily::Rsp))?;
                self.write_reg(RegisterId::full(RegFamily::Rsp), rsp.wrapping_add(8));
            }
            Op::Jmp | Op::Jcc(_) => {}
            Op::Call => return Err(ConcreteError::NotExecutable(format!("{} (call)", ins.text))),
            Op::Cwtl => {
                let ax = self.read_reg(RegisterId::new(RegFamily::Rax, 0, 2))?;
                self.write_reg(RegisterId::new(RegFamily::Rax, 0, 4), (sext(ax, 2) as u64) & bits(4));
            }
            Op::Cltq => {
                let eax = self.read_reg(RegisterId::new(RegFamily::Rax, 0, 4))?;
                self.write_reg(RegisterId::full(RegFamily::Rax), sext(eax, 4) as u64);
            }
            Op::Cqto | Op::Cltd => {
                let n = if op == Op::Cqto { 8 } else { 4 };
                let a = self.read_reg(RegisterId::new(RegFamily::Rax, 0, n))?;
                let fill = if sign_bit(a, n) { bits(n) } else { 0 };
                self.write_reg(RegisterId::new(RegFamily::Rdx, 0, n), fill);
            }
            Op::Stos | Op::Movs => {
                let v = if op == Op::Stos {
                    self.read_reg(RegisterId::new(RegFamily::Rax, 0, w))?
                } else {
                    let display = format!("{} ptr [rsi]", size_keyword(w));
                    let v = self.read_mem("*(rsi)", &display, w)?;
                    let rsi = self.read_reg(RegisterId::full(RegFamily::Rsi))?;
                    self.write_reg(RegisterId::full(RegFamily::Rsi), rsi.wrapping_add(u64::from(w)));
                    v
                };
                self.write_mem("*(rdi)", w, v);
                let rdi = self.read_reg(RegisterId::full(RegFamily::Rdi))?;
                self.write_reg(RegisterId::full(RegFamily::Rdi), rdi.wrapping_add(u64::from(w)));
                if ins.rep {
                    let rcx = self.read_reg(RegisterId::full(RegFamily::Rcx))?;
                    self.write_reg(RegisterId::full(RegFamily::Rcx), rcx.wrapping_sub(1));
                }
            }
        }
        Ok(())
    }
}

/// Runs `instrs` from an empty state, drawing unset values from `src`.
pub fn run_concrete(instrs: &[Instruction], role: &Role, src: &mut dyn InputSource) -> R<ConcreteResult> {
    let mut m = Machine { regs: BTreeMap::new(), mem: BTreeMap::new(), flags: [FlagState::Input; 5], src };
    for ins in instrs {
        m.step(ins)?;
    }
    let mut outputs = BTreeMap::new();
    let mut branch = None;
    match role {
        Role::Predicate(_) => {
            let c = instrs
                .last()
                .and_then(Instruction::cond_jump)
                .ok_or_else(|| ConcreteError::NotExecutable("predicate strand without jcc".into()))?;
            branch = Some(m.cond(c)?);
        }
        Role::Call(_) => return Err(ConcreteError::NotExecutable("call strand".into())),
        Role::Value(_) => {
            for loc in value_outputs(instrs) {
                let v = match &loc {
                    Location::Reg(r) => m.read_reg(*r)?,
                    Location::Mem(text, size) => m.read_mem(text, text, *size)?,
                    Location::Flag(_) => continue,
                };
                outputs.insert(loc, v);
            }
        }
    }
    Ok(ConcreteResult { outputs, branch })
}

/// Evaluates an executable strand under `inputs`.
pub fn concrete_eval(strand: &Strand, inputs: &BTreeMap<Location, u64>) -> R<ConcreteResult> {
    if !strand.executable {
        return Err(ConcreteError::NotExecutable(strand.strand_id.clone()));
    }
    let mut src = MapInputs::new(inputs);
    run_concrete(&strand.instructions, &strand.role, &mut src)
}

/// Input source that invents values on demand and remembers what it handed
/// out, in first-read order.
pub struct RecordingInputs<F: FnMut() -> u64> {
    gen: F,
    /// `(display name, location, value)`.
    pub record: Vec<(String, Location, u64)>,
    pub saw_flag: bool,
}

impl<F: FnMut() -> u64> RecordingInputs<F> {
    pub fn new(gen: F) -> Self {
        RecordingInputs { gen, record: Vec::new(), saw_flag: false }
    }
}

impl<F: FnMut() -> u64> InputSource for RecordingInputs<F> {
    fn reg(&mut self, family: RegFamily) -> Option<u64> {
        let loc = Location::Reg(RegisterId::full(family));
        if let Some((_, _, v)) = self.record.iter().find(|(_, l, _)| *l == loc) {
            return Some(*v);
        }
        let v = (self.gen)();
        self.record.push((family.name().to_string(), loc, v));
        Some(v)
    }

    fn mem(&mut self, text: &str, display: &str) -> Option<u64> {
        if let Some((_, _, v)) = self.record.iter().find(|(_, l, _)| matches!(l, Location::Mem(t, _) if t == text)) {
            return Some(*v);
        }
        let v = (self.gen)();
        self.record.push((display.to_string(), Location::Mem(text.to_string(), 8), v));
        Some(v)
    }

    fn flag(&mut self, _flag: FlagId) -> Option<bool> {
        self.saw_flag = true;
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_instruction;
    use alloc::vec;

    fn instrs(lines: &[&str]) -> Vec<Instruction> {
        lines.iter().enumerate().map(|(i, l)| parse_instruction(l, i as u64, i as u32).unwrap()).collect()
    }

    fn value() -> Role {
        Role::Value(Location::Flag(FlagId::Zf))
    }

    fn rax() -> Location {
        Location::Reg(RegisterId::full(RegFamily::Rax))
    }

    #[test]
    fn strand_execution_example() {
        let code = instrs(&["mov eax, dword ptr [rbp - 180]", "sub eax, 1"]);
        let mut inputs = BTreeMap::new();
        inputs.insert(Location::Mem("*(rbp add -180)".into(), 4), 9);
        let out = run_concrete(&code, &value(), &mut MapInputs::new(&inputs)).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&8));
    }

    #[test]
    fn constant_needs_no_inputs() {
        let out = run_concrete(&instrs(&["mov eax, 0"]), &value(), &mut MapInputs::default()).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&0));
    }

    #[test]
    fn missing_input_is_reported() {
        let err = run_concrete(&instrs(&["mov eax, ebx"]), &value(), &mut MapInputs::default()).unwrap_err();
        assert_eq!(err, ConcreteError::MissingInput(Location::Reg(RegisterId::full(RegFamily::Rbx))));
    }

    #[test]
    fn partial_writes_keep_upper_bytes() {
        let mut inputs = BTreeMap::new();
        inputs.insert(rax(), 0x1122_3344_5566_7788);
        let out = run_concrete(&instrs(&["mov al, 1", "mov ah, 2"]), &value(), &mut MapInputs::new(&inputs)).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&0x1122_3344_5566_0201));
        let out = run_concrete(&instrs(&["mov ax, 1", "mov eax, eax"]), &value(), &mut MapInputs::new(&inputs)).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&0x5566_0001));
    }

    #[test]
    fn flags_follow_the_manual() {
        // 0x7f + 1 overflows in 8 bits: SF and OF set, CF clear.
        let mut m = BTreeMap::new();
        m.insert(rax(), 0x7f);
        let code = instrs(&["add al, 1", "jl MEM"]);
        let out = run_concrete(&code, &Role::Predicate(1), &mut MapInputs::new(&m)).unwrap();
        assert_eq!(out.branch, Some(false));
        let code = instrs(&["add al, 1", "js MEM"]);
        let out = run_concrete(&code, &Role::Predicate(1), &mut MapInputs::new(&m)).unwrap();
        assert_eq!(out.branch, Some(true));
        let code = instrs(&["add al, 1", "jb MEM"]);
        let out = run_concrete(&code, &Role::Predicate(1), &mut MapInputs::new(&m)).unwrap();
        assert_eq!(out.branch, Some(false));
        // 3 - 5 borrows, and is less in the signed order.
        let code = instrs(&["mov eax, 3", "cmp eax, 5", "jl MEM"]);
        assert_eq!(run_concrete(&code, &Role::Predicate(2), &mut MapInputs::default()).unwrap().branch, Some(true));
        let code = instrs(&["mov eax, 3", "cmp eax, 5", "jb MEM"]);
        assert_eq!(run_concrete(&code, &Role::Predicate(2), &mut MapInputs::default()).unwrap().branch, Some(true));
        let code = instrs(&["mov eax, -1", "cmp eax, 5", "jb MEM"]);
        assert_eq!(run_concrete(&code, &Role::Predicate(2), &mut MapInputs::default()).unwrap().branch, Some(false));
    }

    #[test]
    fn division_errors() {
        let mut m = BTreeMap::new();
        m.insert(rax(), 10);
        m.insert(Location::Reg(RegisterId::full(RegFamily::Rdx)), 0);
        m.insert(Location::Reg(RegisterId::full(RegFamily::Rcx)), 0);
        let err = run_concrete(&instrs(&["div ecx"]), &value(), &mut MapInputs::new(&m)).unwrap_err();
        assert!(matches!(err, ConcreteError::DivideByZero(_)));
        m.insert(Location::Reg(RegisterId::full(RegFamily::Rcx)), 3);
        let out = run_concrete(&instrs(&["div ecx"]), &value(), &mut MapInputs::new(&m)).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&3));
        assert_eq!(out.outputs.get(&Location::Reg(RegisterId::full(RegFamily::Rdx))), Some(&1));
    }

    #[test]
    fn recording_names_inputs_as_written() {
        let code = instrs(&["mov eax, dword ptr [rbp - 180]", "add eax, ebx"]);
        let mut vals = vec![9u64, 4].into_iter();
        let mut src = RecordingInputs::new(move || vals.next().unwrap());
        let out = run_concrete(&code, &value(), &mut src).unwrap();
        assert_eq!(out.outputs.get(&rax()), Some(&13));
        let names: Vec<&str> = src.record.iter().map(|r| r.0.as_str()).collect();
        assert_eq!(names, vec!["dword ptr [rbp - 180]", "rbx"]);
    }
}
