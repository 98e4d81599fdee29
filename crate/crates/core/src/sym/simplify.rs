//! Rewriting to the canonical printed style.

use alloc::boxed::Box;
use alloc::vec::Vec;

use super::expr::{mask, BinOp, Expr, MapEnv, Pred, UnOp};
use super::print::print_short;

/// Rewrite to a fixed point. Inside memory addresses constants go last
/// (`rbp add -168`); elsewhere they go first (`1 add rdi`).
pub fn simplify(e: &Expr) -> Expr {
    let mut cur = e.clone();
    for _ in 0..64 {
        let next = step(&cur, false);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Structural equality of canonical forms.
pub fn expr_equal(a: &Expr, b: &Expr) -> bool {
    simplify(a) == simplify(b)
}

fn step(e: &Expr, in_addr: bool) -> Expr {
    let node = match e {
        Expr::Const { .. } | Expr::Reg(_) | Expr::Imm => return e.clone(),
        Expr::Mem { addr, width } => return canonical_mem(step(addr, true), *width),
        Expr::Bin { op, lhs, rhs } => Expr::bin(*op, step(lhs, in_addr), step(rhs, in_addr)),
        Expr::Un { op, arg } => Expr::un(*op, step(arg, in_addr)),
        Expr::Extract { hi, lo, arg } => Expr::extract(*hi, *lo, step(arg, in_addr)),
        Expr::SignExt { width, arg } => Expr::sign_ext(*width, step(arg, in_addr)),
        Expr::Cmp { pred, lhs, rhs } => Expr::cmp(*pred, step(lhs, in_addr), step(rhs, in_addr)),
        Expr::Call { name, args } => {
            return Expr::Call { name: name.clone(), args: args.iter().map(|a| step(a, false)).collect() }
        }
    };
    if let Some(folded) = fold(&node) {
        return folded;
    }
    rewrite(node, in_addr)
}

fn canonical_mem(addr: Expr, width: u16) -> Expr {
    Expr::mem(addr, width)
}

fn fold(e: &Expr) -> Option<Expr> {
    if e.children().iter().all(|c| c.is_const()) {
        let v = e.eval(&MapEnv::default()).ok()?;
        return Some(Expr::constant(v, e.width()));
    }
    None
}

fn ones(width: u16) -> u128 {
    mask(width)
}

fn rewrite(e: Expr, in_addr: bool) -> Expr {
    match e {
        Expr::Bin { op: BinOp::Concat, .. } => concat_chain(flatten_concat(e)),
        Expr::Bin { op, lhs, rhs } if op.is_commutative() => assoc(op, *lhs, *rhs, in_addr),
        Expr::Bin { op, lhs, rhs } => {
            let w = lhs.width();
            match (op, rhs.as_const(), lhs.as_const()) {
                (BinOp::Shl | BinOp::Shr | BinOp::Sar, Some(0), _) => *lhs,
                (BinOp::Shl | BinOp::Shr | BinOp::Sar, _, Some(0)) => Expr::zero(w),
                (BinOp::Shl | BinOp::Shr, Some(c), _) if c >= u128::from(w) => Expr::zero(w),
                // Left shifts by a constant are multiplications; one spelling
                // lets `shl` and `imul`/`lea` scaling compare equal.
                (BinOp::Shl, Some(c), _) => Expr::bin(BinOp::Mul, Expr::constant(1u128 << c, w), *lhs),
                (BinOp::Div | BinOp::Sdiv, Some(1), _) => *lhs,
                _ => Expr::Bin { op, lhs, rhs },
            }
        }
        Expr::Un { op, arg } => match *arg {
            Expr::Un { op: inner, arg: x } if inner == op => *x,
            other => Expr::un(op, other),
        },
        Expr::Extract { hi, lo, arg } => extract(hi, lo, *arg),
        Expr::SignExt { width, arg } => match *arg {
            Expr::SignExt { arg: x, .. } => Expr::sign_ext(width, *x),
            other => Expr::sign_ext(width, other),
        },
        Expr::Cmp { pred, lhs, rhs } => compare(pred, *lhs, *rhs),
        other => other,
    }
}

fn flatten_concat(e: Expr) -> Vec<Expr> {
    match e {
        Expr::Bin { op: BinOp::Concat, lhs, rhs } => {
            let mut parts = flatten_concat(*lhs);
            parts.extend(flatten_concat(*rhs));
            parts
        }
        other => alloc::vec![other],
    }
}

/// Rebuild a most-significant-first list of parts, merging neighbours.
fn concat_chain(parts: Vec<Expr>) -> Expr {
    let mut merged: Vec<Expr> = Vec::new();
    for part in parts {
        if let Some(prev) = merged.pop() {
            match merge_pair(prev, part) {
                Ok(m) => merged.push(m),
                Err((a, b)) => {
                    merged.push(a);
                    merged.push(b);
                }
            }
        } else {
            merged.push(part);
        }
    }
    let mut it = merged.into_iter().rev();
    let mut acc = it.next().expect("concat has parts");
    for part in it {
        acc = Expr::concat(part, acc);
    }
    acc
}

fn merge_pair(hi: Expr, lo: Expr) -> Result<Expr, (Expr, Expr)> {
    match (&hi, &lo) {
        (Expr::Const { value: a, width: wa }, Expr::Const { value: b, width: wb }) if wa + wb <= 128 => {
            Ok(Expr::constant((a << wb) | b, wa + wb))
        }
        (Expr::Extract { hi: h1, lo: l1, arg: x }, Expr::Extract { hi: h2, lo: l2, arg: y })
            if x == y && *l1 == h2 + 1 =>
        {
            let _ = l1;
            Ok(extract(*h1, *l2, (**x).clone()))
        }
        _ => Err((hi, lo)),
    }
}

fn term_key(e: &Expr) -> (alloc::string::String, Expr) {
    (print_short(e), e.clone())
}

fn flatten_assoc(op: BinOp, e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Bin { op: o, lhs, rhs } if o == op => {
            flatten_assoc(op, *lhs, out);
            flatten_assoc(op, *rhs, out);
        }
        other => out.push(other),
    }
}

fn is_neg_of(a: &Expr, b: &Expr) -> bool {
    matches!(b, Expr::Un { op: UnOp::Neg, arg } if arg.as_ref() == a)
}

fn is_not_of(a: &Expr, b: &Expr) -> bool {
    matches!(b, Expr::Un { op: UnOp::Not, arg } if arg.as_ref() == a)
}

fn assoc(op: BinOp, lhs: Expr, rhs: Expr, in_addr: bool) -> Expr {
    let w = lhs.width();
    let mut terms = Vec::new();
    flatten_assoc(op, lhs, &mut terms);
    flatten_assoc(op, rhs, &mut terms);
    let (identity, absorbing) = match op {
        BinOp::Add | BinOp::Xor | BinOp::Or => (0, if op == BinOp::Or { Some(ones(w)) } else { None }),
        BinOp::Mul => (1, Some(0)),
        BinOp::And => (ones(w), Some(0)),
        _ => unreachable!("not associative"),
    };
    let mut c = identity;
    let mut rest: Vec<Expr> = Vec::new();
    for t in terms {
        match t.as_const() {
            Some(v) => {
                c = match op {
                    BinOp::Add => c.wrapping_add(v),
                    BinOp::Mul => c.wrapping_mul(v),
                    BinOp::And => c & v,
                    BinOp::Or => c | v,
                    _ => c ^ v,
                } & mask(w)
            }
            None => rest.push(t),
        }
    }
    if Some(c) == absorbing {
        return Expr::constant(c, w);
    }
    rest.sort_by_cached_key(term_key);
    match op {
        BinOp::And | BinOp::Or => {
            rest.dedup();
            let contradiction = rest.iter().any(|a| rest.iter().any(|b| is_not_of(a, b)));
            if contradiction {
                return Expr::constant(if op == BinOp::And { 0 } else { ones(w) }, w);
            }
        }
        BinOp::Xor => {
            let mut kept: Vec<Expr> = Vec::new();
            for t in rest {
                if kept.last() == Some(&t) {
                    kept.pop();
                } else {
                    kept.push(t);
                }
            }
            rest = kept;
        }
        BinOp::Add => {
            let mut i = 0;
            while i < rest.len() {
                if let Some(j) = rest.iter().position(|b| is_neg_of(&rest[i], b)) {
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    rest.remove(b);
                    rest.remove(a);
                    i = 0;
                } else {
                    i += 1;
                }
            }
        }
        _ => {}
    }
    if op == BinOp::And && rest.len() == 1 && c != identity {
        if let Some((hi, lo)) = contiguous(c) {
            let x = rest.pop().unwrap();
            let mut parts = Vec::new();
            if hi + 1 < w {
                parts.push(Expr::zero(w - hi - 1));
            }
            parts.push(extract(hi, lo, x));
            if lo > 0 {
                parts.push(Expr::zero(lo));
            }
            return concat_chain(parts);
        }
    }
    let constant = (c != identity).then(|| Expr::constant(c, w));
    if rest.is_empty() {
        return Expr::constant(c, w);
    }
    let mut items: Vec<Expr> = Vec::new();
    if in_addr {
        items.extend(rest);
        items.extend(constant);
    } else {
        items.extend(constant);
        items.extend(rest);
    }
    let mut it = items.into_iter().rev();
    let mut acc = it.next().unwrap();
    for t in it {
        acc = Expr::bin(op, t, acc);
    }
    acc
}

/// Bit range `[hi, lo]` of a mask made of one run of ones.
fn contiguous(m: u128) -> Option<(u16, u16)> {
    if m == 0 {
        return None;
    }
    let lo = m.trailing_zeros();
    let shifted = m >> lo;
    if shifted & (shifted.wrapping_add(1)) != 0 {
        return None;
    }
    let len = 128 - shifted.leading_zeros();
    Some(((lo + len - 1) as u16, lo as u16))
}

const STANDARD: [u16; 5] = [8, 16, 32, 64, 128];

fn extract(hi: u16, lo: u16, arg: Expr) -> Expr {
    let w = arg.width();
    if lo == 0 && hi + 1 == w {
        return arg;
    }
    match arg {
        Expr::Const { value, .. } => Expr::constant(value >> lo, hi - lo + 1),
        Expr::Extract { lo: l2, arg: y, .. } => extract(hi + l2, lo + l2, *y),
        Expr::Bin { op: BinOp::Concat, lhs, rhs } => {
            let bw = rhs.width();
            if hi < bw {
                extract(hi, lo, *rhs)
            } else if lo >= bw {
                extract(hi - bw, lo - bw, *lhs)
            } else {
                Expr::concat(extract(hi - bw, 0, *lhs), extract(bw - 1, lo, *rhs))
            }
        }
        Expr::SignExt { arg: x, width } => {
            if hi < x.width() {
                extract(hi, lo, *x)
            } else {
                Expr::extract(hi, lo, Expr::SignExt { arg: x, width })
            }
        }
        Expr::Bin { op: op @ (BinOp::And | BinOp::Or | BinOp::Xor), lhs, rhs } => {
            Expr::bin(op, extract(hi, lo, *lhs), extract(hi, lo, *rhs))
        }
        Expr::Bin { op: op @ (BinOp::Add | BinOp::Mul), lhs, rhs } if lo == 0 => {
            Expr::bin(op, extract(hi, 0, *lhs), extract(hi, 0, *rhs))
        }
        Expr::Un { op: UnOp::Not, arg: x } => Expr::un(UnOp::Not, extract(hi, lo, *x)),
        Expr::Un { op: UnOp::Neg, arg: x } if lo == 0 => Expr::un(UnOp::Neg, extract(hi, 0, *x)),
        Expr::Mem { addr, width } => {
            let narrow = STANDARD.into_iter().find(|s| *s > hi).unwrap_or(width);
            if narrow < width {
                extract(hi, lo, Expr::Mem { addr, width: narrow })
            } else {
                Expr::extract(hi, lo, Expr::Mem { addr, width })
            }
        }
        other => Expr::extract(hi, lo, other),
    }
}

fn compare(pred: Pred, lhs: Expr, rhs: Expr) -> Expr {
    if lhs == rhs {
        let v = matches!(pred, Pred::Eq | Pred::Sle | Pred::Sge | Pred::Ule | Pred::Uge);
        return Expr::constant(u128::from(v), 1);
    }
    let (lhs, rhs) = if matches!(pred, Pred::Eq | Pred::Ne) && lhs.is_const() && !rhs.is_const() {
        (rhs, lhs)
    } else {
        (lhs, rhs)
    };
    if rhs.as_const() == Some(0) {
        match pred {
            Pred::Ult => return Expr::constant(0, 1),
            Pred::Uge => return Expr::constant(1, 1),
            Pred::Ugt => return compare(Pred::Ne, lhs, rhs),
            Pred::Ule => return compare(Pred::Eq, lhs, rhs),
            Pred::Eq | Pred::Ne => {
                // Trailing zero bits cannot change a comparison with zero.
                let mut parts = flatten_concat(lhs.clone());
                if parts.len() > 1 && parts.last().and_then(Expr::as_const) == Some(0) {
                    let z = parts.pop().unwrap();
                    parts.insert(0, z);
                    return Expr::cmp(pred, concat_chain(parts), rhs);
                }
            }
            _ => {}
        }
    }
    Expr::Cmp { pred, lhs: Box::new(lhs), rhs: Box::new(rhs) }
}
