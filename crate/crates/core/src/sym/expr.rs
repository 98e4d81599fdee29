//! Bit-vector expression tree and its numeric evaluation.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::isa::RegFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Add,
    Mul,
    /// Unsigned division.
    Div,
    Sdiv,
    /// Unsigned remainder.
    Rem,
    Srem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Sar,
    Concat,
}

impl BinOp {
    pub const ALL: [BinOp; 13] = [
        BinOp::Add,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Sdiv,
        BinOp::Rem,
        BinOp::Srem,
        BinOp::And,
        BinOp::Or,
        BinOp::Xor,
        BinOp::Shl,
        BinOp::Shr,
        BinOp::Sar,
        BinOp::Concat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Sdiv => "sdiv",
            BinOp::Rem => "rem",
            BinOp::Srem => "srem",
            BinOp::And => "and",
            BinOp::Or => "or",
            BinOp::Xor => "xor",
            BinOp::Shl => "shl",
            BinOp::Shr => "shr",
            BinOp::Sar => "sar",
            BinOp::Concat => "Concat",
        }
    }

    pub fn parse(word: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.name() == word)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Mul | BinOp::And | BinOp::Or | BinOp::Xor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

impl UnOp {
    pub fn name(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Not => "not",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pred {
    Eq,
    Ne,
    Slt,
    Sle,
    Sgt,
    Sge,
    Ult,
    Ule,
    Ugt,
    Uge,
}

impl Pred {
    pub const ALL: [Pred; 10] = [
        Pred::Eq,
        Pred::Ne,
        Pred::Slt,
        Pred::Sle,
        Pred::Sgt,
        Pred::Sge,
        Pred::Ult,
        Pred::Ule,
        Pred::Ugt,
        Pred::Uge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Ne => "ne",
            Pred::Slt => "slt",
            Pred::Sle => "sle",
            Pred::Sgt => "sgt",
            Pred::Sge => "sge",
            Pred::Ult => "ult",
            Pred::Ule => "ule",
            Pred::Ugt => "ugt",
            Pred::Uge => "uge",
        }
    }

    pub fn parse(word: &str) -> Option<Pred> {
        Pred::ALL.into_iter().find(|p| p.name() == word)
    }

    pub fn holds(self, a: u128, b: u128, width: u16) -> bool {
        let (sa, sb) = (to_signed(a, width), to_signed(b, width));
        match self {
            Pred::Eq => a == b,
            Pred::Ne => a != b,
            Pred::Slt => sa < sb,
            Pred::Sle => sa <= sb,
            Pred::Sgt => sa > sb,
            Pred::Sge => sa >= sb,
            Pred::Ult => a < b,
            Pred::Ule => a <= b,
            Pred::Ugt => a > b,
            Pred::Uge => a >= b,
        }
    }
}

/// Widths are in bits, at most 128.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Const { value: u128, width: u16 },
    /// Initial value of a 64-bit register.
    Reg(RegFamily),
    /// Initial contents of memory at `addr`.
    Mem { addr: Box<Expr>, width: u16 },
    Bin { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Un { op: UnOp, arg: Box<Expr> },
    Extract { hi: u16, lo: u16, arg: Box<Expr> },
    SignExt { width: u16, arg: Box<Expr> },
    Cmp { pred: Pred, lhs: Box<Expr>, rhs: Box<Expr> },
    Call { name: String, args: Vec<Expr> },
    /// The normalized large-constant token.
    Imm,
}

pub const MAX_WIDTH: u16 = 128;

pub fn mask(width: u16) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

pub fn to_signed(v: u128, width: u16) -> i128 {
    if width == 0 || width >= 128 {
        return v as i128;
    }
    let shift = 128 - width as u32;
    ((v << shift) as i128) >> shift
}

impl Expr {
    pub fn constant(value: u128, width: u16) -> Expr {
        Expr::Const { value: value & mask(width), width }
    }

    pub fn signed(value: i64, width: u16) -> Expr {
        Expr::constant(value as i128 as u128, width)
    }

    pub fn zero(width: u16) -> Expr {
        Expr::Const { value: 0, width }
    }

    pub fn mem(addr: Expr, width: u16) -> Expr {
        Expr::Mem { addr: Box::new(addr), width }
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Bin { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn un(op: UnOp, arg: Expr) -> Expr {
        Expr::Un { op, arg: Box::new(arg) }
    }

    pub fn extract(hi: u16, lo: u16, arg: Expr) -> Expr {
        Expr::Extract { hi, lo, arg: Box::new(arg) }
    }

    pub fn sign_ext(width: u16, arg: Expr) -> Expr {
        Expr::SignExt { width, arg: Box::new(arg) }
    }

    pub fn cmp(pred: Pred, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Cmp { pred, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn concat(hi: Expr, lo: Expr) -> Expr {
        Expr::bin(BinOp::Concat, hi, lo)
    }

    /// Zero-extend to `width` bits (no-op when already that wide).
    pub fn zext(self, width: u16) -> Expr {
        let w = self.width();
        if w >= width {
            self
        } else {
            Expr::concat(Expr::zero(width - w), self)
        }
    }

    /// Low `width` bits (no-op when already that narrow).
    pub fn low(self, width: u16) -> Expr {
        if self.width() <= width {
            self
        } else {
            Expr::extract(width - 1, 0, self)
        }
    }

    pub fn width(&self) -> u16 {
        match self {
            Expr::Const { width, .. } | Expr::Mem { width, .. } | Expr::SignExt { width, .. } => *width,
            Expr::Reg(_) | Expr::Call { .. } | Expr::Imm => 64,
            Expr::Bin { op: BinOp::Concat, lhs, rhs } => lhs.width() + rhs.width(),
            Expr::Bin { lhs, .. } => lhs.width(),
            Expr::Un { arg, .. } => arg.width(),
            Expr::Extract { hi, lo, .. } => hi - lo + 1,
            Expr::Cmp { .. } => 1,
        }
    }

    pub fn as_const(&self) -> Option<u128> {
        match self {
            Expr::Const { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const { .. })
    }

    /// Checks the width invariants of every node.
    pub fn well_formed(&self) -> bool {
        let ok = match self {
            Expr::Const { width, value } => *width >= 1 && *width <= MAX_WIDTH && value & !mask(*width) == 0,
            Expr::Reg(_) | Expr::Imm => true,
            Expr::Mem { addr, width } => *width >= 1 && addr.well_formed(),
            Expr::Bin { op, lhs, rhs } => {
                lhs.well_formed()
                    && rhs.well_formed()
                    && (*op == BinOp::Concat && lhs.width() + rhs.width() <= MAX_WIDTH
                        || lhs.width() == rhs.width())
            }
            Expr::Un { arg, .. } => arg.well_formed(),
            Expr::Extract { hi, lo, arg } => hi >= lo && *hi < arg.width() && arg.well_formed(),
            Expr::SignExt { width, arg } => *width > arg.width() && *width <= MAX_WIDTH && arg.well_formed(),
            Expr::Cmp { lhs, rhs, .. } => lhs.width() == rhs.width() && lhs.well_formed() && rhs.well_formed(),
            Expr::Call { args, .. } => args.iter().all(Expr::well_formed),
        };
        ok
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const { .. } | Expr::Reg(_) | Expr::Imm => Vec::new(),
            Expr::Mem { addr, .. } => alloc::vec![addr.as_ref()],
            Expr::Bin { lhs, rhs, .. } | Expr::Cmp { lhs, rhs, .. } => alloc::vec![lhs.as_ref(), rhs.as_ref()],
            Expr::Un { arg, .. } | Expr::Extract { arg, .. } | Expr::SignExt { arg, .. } => alloc::vec![arg.as_ref()],
            Expr::Call { args, .. } => args.iter().collect(),
        }
    }

    /// Memory leaves, outermost first.
    pub fn mem_leaves<'a>(&'a self, out: &mut Vec<&'a Expr>) {
        if let Expr::Mem { addr, .. } = self {
            out.push(addr);
        }
        for c in self.children() {
            c.mem_leaves(out);
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    pub fn eval(&self, env: &dyn Env) -> Result<u128, EvalError> {
        let w = self.width();
        let v = match self {
            Expr::Const { value, .. } => *value,
            Expr::Reg(f) => u128::from(env.reg(*f).ok_or(EvalError::MissingReg(*f))?),
            Expr::Mem { addr, width } => {
                let raw = env.mem(addr).ok_or(EvalError::MissingMem)?;
                u128::from(raw) & mask(*width)
            }
            Expr::Bin { op, lhs, rhs } => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                let lw = lhs.width();
                match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div => a.checked_div(b).ok_or(EvalError::DivByZero)?,
                    BinOp::Rem => a.checked_rem(b).ok_or(EvalError::DivByZero)?,
                    BinOp::Sdiv => {
                        let (sa, sb) = (to_signed(a, lw), to_signed(b, lw));
                        if sb == 0 {
                            return Err(EvalError::DivByZero);
                        }
                        sa.wrapping_div(sb) as u128
                    }
                    BinOp::Srem => {
                        let (sa, sb) = (to_signed(a, lw), to_signed(b, lw));
                        if sb == 0 {
                            return Err(EvalError::DivByZero);
                        }
                        sa.wrapping_rem(sb) as u128
                    }
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Shl => {
                        if b >= u128::from(lw) {
                            0
                        } else {
                            a << b
                        }
                    }
                    BinOp::Shr => {
                        if b >= u128::from(lw) {
                            0
                        } else {
                            a >> b
                        }
                    }
                    BinOp::Sar => {
                        let s = to_signed(a, lw);
                        let amt = if b >= u128::from(lw) { lw as u32 - 1 } else { b as u32 };
                        (s >> amt) as u128
                    }
                    BinOp::Concat => (a << rhs.width()) | b,
                }
            }
            Expr::Un { op, arg } => {
                let a = arg.eval(env)?;
                match op {
                    UnOp::Neg => a.wrapping_neg(),
                    UnOp::Not => !a,
                }
            }
            Expr::Extract { hi: _, lo, arg } => arg.eval(env)? >> lo,
            Expr::SignExt { arg, .. } => to_signed(arg.eval(env)?, arg.width()) as u128,
            Expr::Cmp { pred, lhs, rhs } => {
                let a = lhs.eval(env)?;
                let b = rhs.eval(env)?;
                u128::from(pred.holds(a, b, lhs.width()))
            }
            Expr::Call { .. } | Expr::Imm => return Err(EvalError::NotEvaluable),
        };
        Ok(v & mask(w))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no value for register {0:?}")]
    MissingReg(RegFamily),
    #[error("no value for memory input")]
    MissingMem,
    #[error("division by zero")]
    DivByZero,
    #[error("expression has no numeric value")]
    NotEvaluable,
}

/// Values for expression leaves.
pub trait Env {
    fn reg(&self, family: RegFamily) -> Option<u64>;
    /// Underlying 64-bit cell at `addr`; reads are masked to their width.
    fn mem(&self, addr: &Expr) -> Option<u64>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MapEnv {
    pub regs: BTreeMap<RegFamily, u64>,
    pub mems: BTreeMap<Expr, u64>,
}

impl Env for MapEnv {
    fn reg(&self, family: RegFamily) -> Option<u64> {
        self.regs.get(&family).copied()
    }

    fn mem(&self, addr: &Expr) -> Option<u64> {
        self.mems.get(addr).copied()
    }
}
