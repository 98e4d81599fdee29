//! Symbolic interpretation of a strand into its representative set.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::expr::{BinOp, Expr, Pred, UnOp};
use super::print::{SymAssign, Target};
use super::simplify::simplify;
use crate::isa::{CallKind, Cond, Instruction, Location, MemOperand, Op, Operand, RegFamily, RegisterId, Scale};
use crate::slicer::{value_outputs, Role, Strand};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymError {
    #[error("strand is not executable: {0}")]
    NotExecutable(String),
    #[error("width mismatch in `{0}`")]
    WidthMismatch(String),
}

/// What a member of a representative set describes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    /// Final value of a location (widened register or memory cell).
    Loc(Location),
    /// Outcome of the final conditional jump.
    Branch,
    /// Arguments of the final call.
    Call,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepresentativeSet {
    pub strand_id: String,
    pub assigns: Vec<SymAssign>,
    /// Parallel to `assigns`.
    pub slots: Vec<Slot>,
    /// Address leaf bound to each memory input, keyed by canonical text.
    pub mem_inputs: BTreeMap<String, Expr>,
}

impl RepresentativeSet {
    pub fn printed(&self) -> Vec<String> {
        self.assigns.iter().map(SymAssign::print).collect()
    }
}

/// Where the last flag-writing instruction left its operands.
#[derive(Debug, Clone)]
enum Flags {
    /// Nothing known: flags are strand inputs or architecturally undefined.
    Unknown,
    /// `a - b` (cmp, sub, neg).
    Sub { a: Expr, b: Expr },
    /// Result with CF = OF = 0 (and, or, xor, test).
    Logic { res: Expr },
    /// `res = a + b`.
    Add { a: Expr, res: Expr },
    /// Only ZF and SF are tracked (inc, dec, shifts).
    Arith { res: Expr },
}

#[derive(Debug, Clone)]
struct Cell {
    value: Expr,
    addr: Expr,
}

struct Machine {
    regs: BTreeMap<RegFamily, Expr>,
    flags: Flags,
    mem: BTreeMap<String, Cell>,
    leaves: BTreeMap<String, Expr>,
    written: Vec<RegFamily>,
    call: Option<Expr>,
}

type R<T> = Result<T, SymError>;

fn not_exec(ins: &Instruction, why: &str) -> SymError {
    SymError::NotExecutable(format!("{}: {}", ins.text, why))
}

fn checked(e: Expr, width: u16, ctx: &str) -> R<Expr> {
    let e = simplify(&e);
    if e.width() != width || !e.well_formed() {
        return Err(SymError::WidthMismatch(ctx.to_string()));
    }
    Ok(e)
}

impl Machine {
    fn new() -> Self {
        Machine {
            regs: BTreeMap::new(),
            flags: Flags::Unknown,
            mem: BTreeMap::new(),
            leaves: BTreeMap::new(),
            written: Vec::new(),
            call: None,
        }
    }

    fn full(&self, f: RegFamily) -> Expr {
        self.regs.get(&f).cloned().unwrap_or(Expr::Reg(f))
    }

    fn read_reg(&self, r: RegisterId) -> Expr {
        let full = self.full(r.family);
        if r.is_full() {
            full
        } else {
            simplify(&Expr::extract(u16::from(r.hi) * 8 - 1, u16::from(r.lo) * 8, full))
        }
    }

    fn write_reg(&mut self, r: RegisterId, v: Expr) -> R<()> {
        if v.width() != r.width_bits() {
            return Err(SymError::WidthMismatch(format!("write to {}", r.name())));
        }
        let new = if r.is_full() {
            v
        } else if r.lo == 0 && r.hi == 4 {
            v.zext(64)
        } else {
            let old = self.full(r.family);
            let mut e = v;
            if r.lo > 0 {
                e = Expr::concat(e, Expr::extract(u16::from(r.lo) * 8 - 1, 0, old.clone()));
            }
            if r.hi < 8 {
                e = Expr::concat(Expr::extract(63, u16::from(r.hi) * 8, old), e);
            }
            e
        };
        let new = checked(new, 64, r.name())?;
        self.regs.insert(r.family, new);
        if !self.written.contains(&r.family) {
            self.written.push(r.family);
        }
        Ok(())
    }

    /// Address of a memory operand, computed at the width of its registers.
    fn address(&self, m: &MemOperand, ins: &Instruction) -> R<Expr> {
        if m.segment.is_some() {
            return Err(not_exec(ins, "segment-relative address"));
        }
        let aw = m.base.or(m.index).map(|r| r.width_bits()).unwrap_or(64);
        let reg = |r: RegisterId| -> R<Expr> {
            if r.width_bits() != aw {
                return Err(SymError::WidthMismatch(format!("address {}", ins.text)));
            }
            Ok(self.read_reg(r))
        };
        let mut terms: Vec<Expr> = Vec::new();
        if let Some(b) = m.base {
            terms.push(reg(b)?);
        }
        if let Some(i) = m.index {
            let idx = reg(i)?;
            terms.push(match m.scale {
                Scale::Imm(1) => idx,
                Scale::Imm(s) => Expr::bin(BinOp::Mul, Expr::constant(u128::from(s), aw), idx),
                Scale::Reg(s) => Expr::bin(BinOp::Mul, idx, reg(s)?),
            });
        }
        if m.displacement != 0 || terms.is_empty() {
            terms.push(Expr::signed(m.displacement, aw));
        }
        let mut it = terms.into_iter();
        let first = it.next().expect("at least one term");
        let sum = it.fold(first, |acc, t| Expr::bin(BinOp::Add, acc, t));
        // Canonicalize in address context, as it will appear under a load.
        match simplify(&Expr::mem(sum, 8)) {
            Expr::Mem { addr, .. } => Ok(*addr),
            other => Err(SymError::WidthMismatch(format!("address {} became {:?}", ins.text, other))),
        }
    }

    fn leaf(&mut self, text: &str, addr: &Expr, width: u16) -> Expr {
        let a = self.leaves.entry(text.to_string()).or_insert_with(|| addr.clone()).clone();
        Expr::mem(a, width)
    }

    fn read_mem(&mut self, text: &str, addr: Expr, width: u16) -> Expr {
        match self.mem.get(text).cloned() {
            Some(cell) => {
                let cw = cell.value.width();
                if width <= cw {
                    simplify(&cell.value.low(width))
                } else {
                    let upper = Expr::extract(width - 1, cw, self.leaf(text, &addr, width));
                    simplify(&Expr::concat(upper, cell.value))
                }
            }
            None => self.leaf(text, &addr, width),
        }
    }

    fn write_mem(&mut self, text: &str, addr: Expr, v: Expr) {
        let w = v.width();
        let value = match self.mem.get(text) {
            Some(old) if old.value.width() > w => {
                let ow = old.value.width();
                simplify(&Expr::concat(Expr::extract(ow - 1, w, old.value.clone()), v))
            }
            _ => v,
        };
        self.mem.insert(text.to_string(), Cell { value, addr });
    }

    fn read(&mut self, op: &Operand, width: u8, ins: &Instruction) -> R<Expr> {
        let w = u16::from(width) * 8;
        match op {
            Operand::Register(r) => Ok(self.read_reg(*r)),
            Operand::Immediate(v) => Ok(Expr::signed(*v, w)),
            Operand::Memory(m) => {
                let addr = self.address(m, ins)?;
                let size = m.size_bytes.map(|s| u16::from(s) * 8).unwrap_or(w);
                Ok(self.read_mem(&m.canonical_text(), addr, size))
            }
            Operand::Label(_) => Err(not_exec(ins, "label operand")),
        }
    }

    fn write(&mut self, op: &Operand, v: Expr, ins: &Instruction) -> R<()> {
        match op {
            Operand::Register(r) => self.write_reg(*r, v),
            Operand::Memory(m) => {
                let addr = self.address(m, ins)?;
                let w = m.size_bytes.map(|s| u16::from(s) * 8).unwrap_or(v.width());
                let v = checked(v, w, &ins.text)?;
                self.write_mem(&m.canonical_text(), addr, v);
                Ok(())
            }
            _ => Err(not_exec(ins, "bad destination")),
        }
    }

    fn cond(&self, c: Cond, ins: &Instruction) -> R<Expr> {
        let zero = |e: &Expr| Expr::zero(e.width());
        let cmp0 = |p: Pred, e: &Expr| Expr::cmp(p, e.clone(), zero(e));
        let one_bit = |b: bool| Expr::constant(u128::from(b), 1);
        let e = match (&self.flags, c) {
            (Flags::Sub { a, b }, _) => {
                let pred = match c {
                    Cond::E => Pred::Eq,
                    Cond::Ne => Pred::Ne,
                    Cond::L => Pred::Slt,
                    Cond::Ge => Pred::Sge,
                    Cond::Le => Pred::Sle,
                    Cond::G => Pred::Sgt,
                    Cond::B => Pred::Ult,
                    Cond::Ae => Pred::Uge,
                    Cond::Be => Pred::Ule,
                    Cond::A => Pred::Ugt,
                    Cond::S | Cond::Ns => {
                        let res = Expr::bin(BinOp::Add, a.clone(), Expr::un(UnOp::Neg, b.clone()));
                        let p = if c == Cond::S { Pred::Slt } else { Pred::Sge };
                        return Ok(simplify(&cmp0(p, &res)));
                    }
                };
                Expr::cmp(pred, a.clone(), b.clone())
            }
            (Flags::Logic { res }, _) => match c {
                Cond::E | Cond::Be => cmp0(Pred::Eq, res),
                Cond::Ne | Cond::A => cmp0(Pred::Ne, res),
                Cond::S | Cond::L => cmp0(Pred::Slt, res),
                Cond::Ns | Cond::Ge => cmp0(Pred::Sge, res),
                Cond::Le => cmp0(Pred::Sle, res),
                Cond::G => cmp0(Pred::Sgt, res),
                Cond::B => one_bit(false),
                Cond::Ae => one_bit(true),
            },
            (Flags::Add { a, res }, Cond::B) => Expr::cmp(Pred::Ult, res.clone(), a.clone()),
            (Flags::Add { a, res }, Cond::Ae) => Expr::cmp(Pred::Uge, res.clone(), a.clone()),
            (Flags::Add { res, .. } | Flags::Arith { res }, Cond::E) => cmp0(Pred::Eq, res),
            (Flags::Add { res, .. } | Flags::Arith { res }, Cond::Ne) => cmp0(Pred::Ne, res),
            (Flags::Add { res, .. } | Flags::Arith { res }, Cond::S) => cmp0(Pred::Slt, res),
            (Flags::Add { res, .. } | Flags::Arith { res }, Cond::Ns) => cmp0(Pred::Sge, res),
            _ => return Err(not_exec(ins, "condition depends on untracked flags")),
        };
        Ok(simplify(&e))
    }

    fn step(&mut self, ins: &Instruction) -> R<()> {
        let op = ins.op.ok_or_else(|| not_exec(ins, "unsupported instruction"))?;
        let ops = &ins.operands;
        let w = ins.width;
        let wb = u16::from(w) * 8;
        match op {
            Op::Mov => {
                let v = self.read(&ops[1], w, ins)?;
                self.write(&ops[0], v, ins)?;
            }
            Op::Movzx | Op::Movsx => {
                let sw = ops[1].width_bytes().unwrap_or(w);
                let v = self.read(&ops[1], sw, ins)?;
                let v = if op == Op::Movzx || v.width() >= wb { v.zext(wb) } else { Expr::sign_ext(wb, v) };
                self.write(&ops[0], v, ins)?;
            }
            Op::Lea => {
                let Operand::Memory(m) = &ops[1] else { return Err(not_exec(ins, "lea source")) };
                let a = self.address(m, ins)?;
                let v = if a.width() > wb { a.low(wb) } else { a.zext(wb) };
                self.write(&ops[0], v, ins)?;
            }
            Op::Add | Op::Sub | Op::And | Op::Or | Op::Xor => {
                let a = self.read(&ops[0], w, ins)?;
                let b = self.read(&ops[1], w, ins)?;
                let res = match op {
                    Op::Add => Expr::bin(BinOp::Add, a.clone(), b.clone()),
                    Op::Sub => Expr::bin(BinOp::Add, a.clone(), Expr::un(UnOp::Neg, b.clone())),
                    Op::And => Expr::bin(BinOp::And, a.clone(), b.clone()),
                    Op::Or => Expr::bin(BinOp::Or, a.clone(), b.clone()),
                    _ => Expr::bin(BinOp::Xor, a.clone(), b.clone()),
                };
                let res = checked(res, wb, &ins.text)?;
                self.flags = match op {
                    Op::Add => Flags::Add { a, res: res.clone() },
                    Op::Sub => Flags::Sub { a, b },
                    _ => Flags::Logic { res: res.clone() },
                };
                self.write(&ops[0], res, ins)?;
            }
            Op::Cmp | Op::Test => {
                let a = self.read(&ops[0], w, ins)?;
                let b = self.read(&ops[1], w, ins)?;
                self.flags = if op == Op::Cmp {
                    Flags::Sub { a, b }
                } else {
                    Flags::Logic { res: checked(Expr::bin(BinOp::And, a, b), wb, &ins.text)? }
                };
            }
            Op::Inc | Op::Dec | Op::Neg | Op::Not => {
                let a = self.read(&ops[0], w, ins)?;
                let res = match op {
                    Op::Inc => Expr::bin(BinOp::Add, a.clone(), Expr::constant(1, wb)),
                    Op::Dec => Expr::bin(BinOp::Add, a.clone(), Expr::signed(-1, wb)),
                    Op::Neg => Expr::un(UnOp::Neg, a.clone()),
                    _ => Expr::un(UnOp::Not, a.clone()),
                };
                let res = checked(res, wb, &ins.text)?;
                match op {
                    Op::Inc | Op::Dec => self.flags = Flags::Arith { res: res.clone() },
                    Op::Neg => self.flags = Flags::Sub { a: Expr::zero(wb), b: a },
                    _ => {}
                }
                self.write(&ops[0], res, ins)?;
            }
            Op::Shl | Op::Shr | Op::Sar => {
                let a = self.read(&ops[0], w, ins)?;
                let bop = match op {
                    Op::Shl => BinOp::Shl,
                    Op::Shr => BinOp::Shr,
                    _ => BinOp::Sar,
                };
                let (count, known) = match ops.get(1) {
                    None => (Expr::constant(1, wb), Some(1)),
                    Some(Operand::Immediate(n)) => {
                        let c = crate::isa::masked_count(*n, w);
                        (Expr::constant(u128::from(c), wb), Some(c))
                    }
                    Some(reg) => {
                        let c = self.read(reg, 1, ins)?;
                        let m = if w == 8 { 0x3f } else { 0x1f };
                        (Expr::bin(BinOp::And, c, Expr::constant(m, 8)).zext(wb).low(wb), None)
                    }
                };
                let res = checked(Expr::bin(bop, a, count), wb, &ins.text)?;
                match known {
                    Some(0) => {}
                    Some(_) => self.flags = Flags::Arith { res: res.clone() },
                    None => self.flags = Flags::Unknown,
                }
                self.write(&ops[0], res, ins)?;
            }
            Op::Imul if ops.len() >= 2 => {
                let (a, b) = if ops.len() == 3 {
                    (self.read(&ops[1], w, ins)?, self.read(&ops[2], w, ins)?)
                } else {
                    (self.read(&ops[0], w, ins)?, self.read(&ops[1], w, ins)?)
                };
                let res = checked(Expr::bin(BinOp::Mul, a, b), wb, &ins.text)?;
                self.flags = Flags::Unknown;
                self.write(&ops[0], res, ins)?;
            }
            Op::Imul | Op::Mul => {
                let src = self.read(&ops[0], w, ins)?;
                let acc = self.read_reg(RegisterId::new(RegFamily::Rax, 0, w));
                let ext = |e: Expr| if op == Op::Mul { e.zext(2 * wb) } else { Expr::sign_ext(2 * wb, e) };
                let prod = checked(Expr::bin(BinOp::Mul, ext(acc), ext(src)), 2 * wb, &ins.text)?;
                self.flags = Flags::Unknown;
                if w == 1 {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, 2), prod)?;
                } else {
                    let lo = simplify(&Expr::extract(wb - 1, 0, prod.clone()));
                    let hi = simplify(&Expr::extract(2 * wb - 1, wb, prod));
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, w), lo)?;
                    self.write_reg(RegisterId::new(RegFamily::Rdx, 0, w), hi)?;
                }
            }
            Op::Div | Op::Idiv => {
                let src = self.read(&ops[0], w, ins)?;
                let dividend = if w == 1 {
                    self.read_reg(RegisterId::new(RegFamily::Rax, 0, 2))
                } else {
                    Expr::concat(
                        self.read_reg(RegisterId::new(RegFamily::Rdx, 0, w)),
                        self.read_reg(RegisterId::new(RegFamily::Rax, 0, w)),
                    )
                };
                let (dop, rop, divisor) = if op == Op::Div {
                    (BinOp::Div, BinOp::Rem, src.zext(2 * wb))
                } else {
                    (BinOp::Sdiv, BinOp::Srem, Expr::sign_ext(2 * wb, src))
                };
                let q = checked(Expr::bin(dop, dividend.clone(), divisor.clone()).low(wb), wb, &ins.text)?;
                let r = checked(Expr::bin(rop, dividend, divisor).low(wb), wb, &ins.text)?;
                self.flags = Flags::Unknown;
                if w == 1 {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, 1), q)?;
                    self.write_reg(RegisterId::new(RegFamily::Rax, 1, 2), r)?;
                } else {
                    self.write_reg(RegisterId::new(RegFamily::Rax, 0, w), q)?;
                    self.write_reg(RegisterId::new(RegFamily::Rdx, 0, w), r)?;
                }
            }
            Op::Set(c) => {
                let v = Expr::concat(Expr::zero(7), self.cond(c, ins)?);
                self.write(&ops[0], v, ins)?;
            }
            Op::Cmov(c) => {
                let cond = self.cond(c, ins)?;
                let dst = self.read(&ops[0], w, ins)?;
                let src = self.read(&ops[1], w, ins)?;
                let m = Expr::sign_ext(wb, cond);
                let v = Expr::bin(
                    BinOp::Or,
                    Expr::bin(BinOp::And, src, m.clone()),
                    Expr::bin(BinOp::And, dst, Expr::un(UnOp::Not, m)),
                );
                let v = checked(v, wb, &ins.text)?;
                self.write(&ops[0], v, ins)?;
            }
            Op::Push => {
                let v = self.read(&ops[0], 8, ins)?;
                let v = if v.width() < 64 { Expr::sign_ext(64, v) } else { v };
                let rsp = simplify(&Expr::bin(BinOp::Add, self.full(RegFamily::Rsp), Expr::signed(-8, 64)));
                self.write_reg(RegisterId::full(RegFamily::Rsp), rsp.clone())?;
                self.write_mem("*(rsp)", rsp, simplify(&v));
            }
            Op::Pop => {
                let rsp = self.full(RegFamily::Rsp);
                let v = self.read_mem("*(rsp)", rsp.clone(), 64);
                self.write_reg(
                    RegisterId::full(RegFamily::Rsp),
                    simplify(&Expr::bin(BinOp::Add, rsp, Expr::constant(8, 64))),
                )?;
                self.write(&ops[0], v, ins)?;
            }
            Op::Leave => {
                let rbp = self.full(RegFamily::Rbp);
                let saved = self.read_mem("*(rbp)", rbp.clone(), 64);
                self.write_reg(
                    RegisterId::full(RegFamily::Rsp),
                    simplify(&Expr::bin(BinOp::Add, rbp, Expr::constant(8, 64))),
                )?;
                self.write_reg(RegisterId::full(RegFamily::Rbp), saved)?;
            }
            Op::Ret => {
                let rsp = self.full(RegFamily::Rsp);
                self.write_reg(
                    RegisterId::full(RegFamily::Rsp),
                    simplify(&Expr::bin(BinOp::Add, rsp, Expr::constant(8, 64))),
                )?;
            }
            Op::Jmp | Op::Jcc(_) => {}
            Op::Call => {
                let name = match &ins.call {
                    Some(CallKind::Libc(n)) => n.clone(),
                    Some(CallKind::UserFunc) => "func".to_string(),
                    Some(CallKind::Indirect) | None => "indirect".to_string(),
                };
                let highest = RegFamily::ARGS.iter().rposition(|f| self.written.contains(f));
                let args = match highest {
                    Some(h) => RegFamily::ARGS[..=h].iter().map(|f| self.full(*f)).collect(),
                    None => Vec::new(),
                };
                let call = Expr::Call { name, args };
                self.call = Some(call.clone());
                self.flags = Flags::Unknown;
                self.write_reg(RegisterId::full(RegFamily::Rax), call)?;
            }
            Op::Cwtl => {
                let ax = self.read_reg(RegisterId::new(RegFamily::Rax, 0, 2));
                self.write_reg(RegisterId::new(RegFamily::Rax, 0, 4), simplify(&Expr::sign_ext(32, ax)))?;
            }
            Op::Cltq => {
                let eax = self.read_reg(RegisterId::new(RegFamily::Rax, 0, 4));
                self.write_reg(RegisterId::full(RegFamily::Rax), simplify(&Expr::sign_ext(64, eax)))?;
            }
            Op::Cqto | Op::Cltd => {
                let bytes = if op == Op::Cqto { 8 } else { 4 };
                let a = self.read_reg(RegisterId::new(RegFamily::Rax, 0, bytes));
                let bits = u16::from(bytes) * 8;
                let v = simplify(&Expr::bin(BinOp::Sar, a, Expr::constant(u128::from(bits - 1), bits)));
                self.write_reg(RegisterId::new(RegFamily::Rdx, 0, bytes), v)?;
            }
            Op::Stos | Op::Movs => {
                let step = Expr::constant(u128::from(w), 64);
                let rdi = self.full(RegFamily::Rdi);
                let v = if op == Op::Stos {
                    self.read_reg(RegisterId::new(RegFamily::Rax, 0, w))
                } else {
                    let rsi = self.full(RegFamily::Rsi);
                    let v = self.read_mem("*(rsi)", rsi.clone(), wb);
                    self.write_reg(RegisterId::full(RegFamily::Rsi), simplify(&Expr::bin(BinOp::Add, rsi, step.clone())))?;
                    v
                };
                self.write_mem("*(rdi)", rdi.clone(), v);
                self.write_reg(RegisterId::full(RegFamily::Rdi), simplify(&Expr::bin(BinOp::Add, rdi, step)))?;
                if ins.rep {
                    let rcx = self.full(RegFamily::Rcx);
                    self.write_reg(
                        RegisterId::full(RegFamily::Rcx),
                        simplify(&Expr::bin(BinOp::Add, rcx, Expr::signed(-1, 64))),
                    )?;
                }
            }
        }
        Ok(())
    }
}

/// Representative set of an executable strand.
pub fn execute_strand(strand: &Strand) -> Result<RepresentativeSet, SymError> {
    if !strand.executable {
        return Err(SymError::NotExecutable(format!("{} spans an unsupported instruction", strand.strand_id)));
    }
    let mut set = execute_instructions(&strand.instructions, &strand.role)?;
    set.strand_id = strand.strand_id.clone();
    Ok(set)
}

/// Runs `instrs` in order; `role` picks which outputs are reported.
pub fn execute_instructions(instrs: &[Instruction], role: &Role) -> Result<RepresentativeSet, SymError> {
    let mut m = Machine::new();
    for ins in instrs {
        m.step(ins)?;
    }
    let mut assigns = Vec::new();
    let mut slots = Vec::new();
    match role {
        Role::Predicate(_) => {
            let last = instrs.last().ok_or_else(|| SymError::NotExecutable("empty strand".into()))?;
            let c = last.cond_jump().ok_or_else(|| not_exec(last, "predicate strand must end in a jcc"))?;
            assigns.push(SymAssign { target: Target::Predicate, expr: m.cond(c, last)? });
            slots.push(Slot::Branch);
        }
        Role::Call(_) => {
            let call = m.call.clone().ok_or_else(|| SymError::NotExecutable("call strand without call".into()))?;
            assigns.push(SymAssign { target: Target::Call, expr: call });
            slots.push(Slot::Call);
        }
        Role::Value(_) => {
            for loc in value_outputs(instrs) {
                match &loc {
                    Location::Reg(r) => {
                        assigns.push(SymAssign { target: Target::Reg(r.family), expr: m.full(r.family) });
                    }
                    Location::Mem(text, _) => {
                        let cell = m.mem.get(text).cloned().ok_or_else(|| {
                            SymError::WidthMismatch(format!("memory output {} never written", text))
                        })?;
                        assigns.push(SymAssign {
                            target: Target::Mem { addr: cell.addr, width: cell.value.width() },
                            expr: cell.value,
                        });
                    }
                    Location::Flag(_) => continue,
                }
                slots.push(Slot::Loc(loc));
            }
        }
    }
    for a in &assigns {
        if !a.expr.well_formed() {
            return Err(SymError::WidthMismatch(a.print()));
        }
    }
    Ok(RepresentativeSet { strand_id: String::new(), assigns, slots, mem_inputs: m.leaves })
}
