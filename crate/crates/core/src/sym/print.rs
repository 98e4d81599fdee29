//! Text form of expressions and assignments, plus a parser for it.
//!
//! The short form leaves widths implicit, as in the paper's tables. When the
//! short form would not parse back to the same tree, leaves carry explicit
//! `:width` annotations instead.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::expr::{to_signed, BinOp, Expr, Pred, UnOp};
use crate::isa::{RegFamily, RegisterId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unexpected end of expression")]
    Eof,
    #[error("unexpected token `{0}`")]
    Unexpected(String),
    #[error("cannot infer widths in `{0}`")]
    Width(String),
}

fn needs_parens(e: &Expr) -> bool {
    matches!(e, Expr::Bin { .. } | Expr::Cmp { .. })
}

fn write_const(out: &mut String, value: u128, width: u16) {
    if width >= 8 {
        let _ = write!(out, "{}", to_signed(value, width));
    } else {
        let _ = write!(out, "{}", value);
    }
}

fn write_expr(out: &mut String, e: &Expr, annotate: bool) {
    match e {
        Expr::Const { value, width } => {
            write_const(out, *value, *width);
            if annotate {
                let _ = write!(out, ":{}", width);
            }
        }
        Expr::Reg(f) => out.push_str(f.name()),
        Expr::Mem { addr, width } => {
            out.push_str("*(");
            write_expr(out, addr, annotate);
            out.push(')');
            if annotate {
                let _ = write!(out, ":{}", width);
            }
        }
        Expr::Bin { op, lhs, rhs } => {
            write_operand(out, lhs, annotate, needs_parens(lhs));
            out.push(' ');
            out.push_str(op.name());
            out.push(' ');
            write_operand(out, rhs, annotate, needs_parens(rhs));
        }
        Expr::Un { op, arg } => {
            out.push_str(op.name());
            out.push(' ');
            write_operand(out, arg, annotate, needs_parens(arg));
        }
        Expr::Extract { hi, lo, arg } => {
            if let Expr::Reg(f) = arg.as_ref() {
                let bytes = match (*hi, *lo) {
                    (7, 0) => f.sub_name(0, 1),
                    (15, 8) => f.sub_name(1, 2),
                    _ => None,
                };
                if let Some(name) = bytes {
                    out.push_str(name);
                    return;
                }
            }
            let wrap = !matches!(arg.as_ref(), Expr::Const { .. } | Expr::Reg(_) | Expr::Mem { .. } | Expr::Call { .. } | Expr::Imm | Expr::SignExt { .. });
            write_operand(out, arg, annotate, wrap);
            let _ = write!(out, "[{}:{}]", hi, lo);
        }
        Expr::SignExt { width, arg } => {
            let _ = write!(out, "SignExt({}, ", width);
            write_expr(out, arg, annotate);
            out.push(')');
        }
        Expr::Cmp { pred, lhs, rhs } => {
            let l = matches!(lhs.as_ref(), Expr::Cmp { .. });
            let r = matches!(rhs.as_ref(), Expr::Cmp { .. });
            write_operand(out, lhs, annotate, l);
            out.push(' ');
            out.push_str(pred.name());
            out.push(' ');
            write_operand(out, rhs, annotate, r);
        }
        Expr::Call { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, annotate);
            }
            out.push(')');
        }
        Expr::Imm => out.push_str("IMM"),
    }
}

fn write_operand(out: &mut String, e: &Expr, annotate: bool, wrap: bool) {
    if wrap {
        out.push_str("( ");
        write_expr(out, e, annotate);
        out.push_str(" )");
    } else {
        write_expr(out, e, annotate);
    }
}

/// Short form if it round-trips, otherwise the annotated form.
pub fn print(e: &Expr) -> String {
    let short = print_short(e);
    if parse_expr(&short, Some(e.width())).as_ref() == Ok(e) {
        short
    } else {
        print_annotated(e)
    }
}

pub fn print_short(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, false);
    s
}

pub fn print_annotated(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, true);
    s
}

// ---- parsing ----

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i128),
    Word(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Star,
    Eq,
}

fn lex(text: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let tok = match c {
            ' ' | '\t' => {
                i += 1;
                continue;
            }
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '*' => Tok::Star,
            '=' => Tok::Eq,
            '-' | '0'..='9' => {
                let start = i;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                let v = s.parse::<i128>().map_err(|_| ParseError::Unexpected(s.clone()))?;
                toks.push(Tok::Num(v));
                continue;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '@' | '.'))
                {
                    i += 1;
                }
                toks.push(Tok::Word(chars[start..i].iter().collect()));
                continue;
            }
            other => return Err(ParseError::Unexpected(other.to_string())),
        };
        toks.push(tok);
        i += 1;
    }
    Ok(toks)
}

/// Width-free syntax tree.
#[derive(Debug, Clone)]
enum Raw {
    Num(i128, Option<u16>),
    Reg(RegisterId),
    Mem(Box<Raw>, Option<u16>),
    Bin(BinOp, Box<Raw>, Box<Raw>),
    Un(UnOp, Box<Raw>),
    Extract(u16, u16, Box<Raw>),
    SignExt(u16, Box<Raw>),
    Cmp(Pred, Box<Raw>, Box<Raw>),
    Call(String, Vec<Raw>),
    Imm,
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let t = self.toks.get(self.pos).cloned().ok_or(ParseError::Eof)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Tok) -> Result<(), ParseError> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            Err(ParseError::Unexpected(format!("{:?}", got)))
        }
    }

    fn number(&mut self) -> Result<i128, ParseError> {
        match self.next()? {
            Tok::Num(v) => Ok(v),
            t => Err(ParseError::Unexpected(format!("{:?}", t))),
        }
    }

    fn width_annotation(&mut self) -> Result<Option<u16>, ParseError> {
        if self.peek() == Some(&Tok::Colon) && matches!(self.peek_at(1), Some(Tok::Num(_))) {
            // `x[hi:lo]` never reaches here: brackets are consumed by `postfix`.
            self.pos += 1;
            let w = self.number()?;
            return u16::try_from(w).map(Some).map_err(|_| ParseError::Unexpected(w.to_string()));
        }
        Ok(None)
    }

    fn expr(&mut self) -> Result<Raw, ParseError> {
        let lhs = self.binary()?;
        if let Some(Tok::Word(w)) = self.peek() {
            if let Some(pred) = Pred::parse(w) {
                self.pos += 1;
                let rhs = self.binary()?;
                return Ok(Raw::Cmp(pred, Box::new(lhs), Box::new(rhs)));
            }
        }
        Ok(lhs)
    }

    fn binary(&mut self) -> Result<Raw, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Word(w)) = self.peek() {
            let Some(op) = BinOp::parse(w) else { break };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Raw::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw, ParseError> {
        if let Some(Tok::Word(w)) = self.peek() {
            let op = match w.as_str() {
                "neg" => Some(UnOp::Neg),
                "not" => Some(UnOp::Not),
                _ => None,
            };
            if let Some(op) = op {
                self.pos += 1;
                let arg = self.unary()?;
                return Ok(Raw::Un(op, Box::new(arg)));
            }
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Raw, ParseError> {
        let mut e = self.primary()?;
        while self.peek() == Some(&Tok::LBracket) {
            self.pos += 1;
            let hi = self.number()?;
            self.expect(Tok::Colon)?;
            let lo = self.number()?;
            self.expect(Tok::RBracket)?;
            let (hi, lo) = (
                u16::try_from(hi).map_err(|_| ParseError::Unexpected(hi.to_string()))?,
                u16::try_from(lo).map_err(|_| ParseError::Unexpected(lo.to_string()))?,
            );
            e = Raw::Extract(hi, lo, Box::new(e));
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Raw, ParseError> {
        match self.next()? {
            Tok::Num(v) => {
                let w = self.width_annotation()?;
                Ok(Raw::Num(v, w))
            }
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::Star => {
                self.expect(Tok::LParen)?;
                let addr = self.expr()?;
                self.expect(Tok::RParen)?;
                let w = self.width_annotation()?;
                Ok(Raw::Mem(Box::new(addr), w))
            }
            Tok::Word(w) if w == "IMM" => Ok(Raw::Imm),
            Tok::Word(w) if w == "SignExt" && self.peek() == Some(&Tok::LParen) => {
                self.pos += 1;
                let n = self.number()?;
                self.expect(Tok::Comma)?;
                let arg = self.expr()?;
                self.expect(Tok::RParen)?;
                let n = u16::try_from(n).map_err(|_| ParseError::Unexpected(n.to_string()))?;
                Ok(Raw::SignExt(n, Box::new(arg)))
            }
            Tok::Word(w) if self.peek() == Some(&Tok::LParen) => {
                self.pos += 1;
                let mut args = Vec::new();
                if self.peek() == Some(&Tok::RParen) {
                    self.pos += 1;
                } else {
                    loop {
                        args.push(self.expr()?);
                        match self.next()? {
                            Tok::Comma => continue,
                            Tok::RParen => break,
                            t => return Err(ParseError::Unexpected(format!("{:?}", t))),
                        }
                    }
                }
                Ok(Raw::Call(w, args))
            }
            Tok::Word(w) => RegisterId::parse(&w)
                .map(Raw::Reg)
                .ok_or(ParseError::Unexpected(w)),
            t => Err(ParseError::Unexpected(format!("{:?}", t))),
        }
    }
}

const STANDARD: [u16; 5] = [8, 16, 32, 64, 128];

fn next_standard_above(w: u16) -> Option<u16> {
    STANDARD.into_iter().find(|s| *s > w)
}

fn reg_width(r: RegisterId) -> u16 {
    r.width_bits()
}

/// Width a node has regardless of context, if any.
fn natural(r: &Raw) -> Option<u16> {
    match r {
        Raw::Num(_, w) => *w,
        Raw::Reg(reg) => Some(reg_width(*reg)),
        Raw::Mem(_, w) => *w,
        Raw::Bin(BinOp::Concat, l, rhs) => match (natural(l), natural(rhs)) {
            (Some(a), Some(b)) => Some(a + b),
            (None, Some(b)) => next_standard_above(b),
            _ => None,
        },
        Raw::Bin(_, l, rhs) => natural(l).or_else(|| natural(rhs)),
        Raw::Un(_, a) => natural(a),
        Raw::Extract(hi, lo, _) => hi.checked_sub(*lo).map(|d| d + 1),
        Raw::SignExt(n, _) => Some(*n),
        Raw::Cmp(..) => Some(1),
        Raw::Call(..) | Raw::Imm => Some(64),
    }
}

fn width_err(r: &Raw) -> ParseError {
    ParseError::Width(format!("{:?}", r))
}

fn typed(r: &Raw, want: Option<u16>) -> Result<Expr, ParseError> {
    let w = want.or_else(|| natural(r));
    let e = match r {
        Raw::Num(v, ann) => {
            let width = ann.or(want).unwrap_or(64);
            Expr::constant(*v as u128, width)
        }
        Raw::Reg(reg) => {
            let full = Expr::Reg(reg.family);
            if reg.is_full() {
                full
            } else {
                Expr::extract(reg.hi as u16 * 8 - 1, reg.lo as u16 * 8, full)
            }
        }
        Raw::Mem(addr, ann) => {
            let width = ann.or(want).unwrap_or(64);
            Expr::mem(typed(addr, Some(64))?, width)
        }
        Raw::Bin(BinOp::Concat, l, rhs) => {
            let total = w.ok_or_else(|| width_err(r))?;
            let (lw, rw) = match (natural(l), natural(rhs)) {
                (_, Some(b)) if b < total => (total - b, b),
                (Some(a), _) if a < total => (a, total - a),
                _ => return Err(width_err(r)),
            };
            Expr::concat(typed(l, Some(lw))?, typed(rhs, Some(rw))?)
        }
        Raw::Bin(op, l, rhs) => {
            let width = w.unwrap_or(64);
            Expr::bin(*op, typed(l, Some(width))?, typed(rhs, Some(width))?)
        }
        Raw::Un(op, a) => Expr::un(*op, typed(a, Some(w.unwrap_or(64)))?),
        Raw::Extract(hi, lo, a) => {
            let inner = match natural(a) {
                Some(n) => n,
                None if matches!(a.as_ref(), Raw::Mem(..)) => {
                    STANDARD.into_iter().find(|s| *s > *hi).ok_or_else(|| width_err(r))?
                }
                None => 64,
            };
            Expr::extract(*hi, *lo, typed(a, Some(inner))?)
        }
        Raw::SignExt(n, a) => {
            let inner = natural(a).ok_or_else(|| width_err(r))?;
            Expr::sign_ext(*n, typed(a, Some(inner))?)
        }
        Raw::Cmp(pred, l, rhs) => {
            let width = natural(l).or_else(|| natural(rhs)).unwrap_or(64);
            Expr::cmp(*pred, typed(l, Some(width))?, typed(rhs, Some(width))?)
        }
        Raw::Call(name, args) => Expr::Call {
            name: name.clone(),
            args: args.iter().map(|a| typed(a, Some(64))).collect::<Result<_, _>>()?,
        },
        Raw::Imm => Expr::Imm,
    };
    if let Some(want) = want {
        if e.width() != want || !e.well_formed() {
            return Err(width_err(r));
        }
    } else if !e.well_formed() {
        return Err(width_err(r));
    }
    Ok(e)
}

fn parse_raw(text: &str) -> Result<Raw, ParseError> {
    let mut p = Parser { toks: lex(text)?, pos: 0 };
    let r = p.expr()?;
    match p.peek() {
        None => Ok(r),
        Some(t) => Err(ParseError::Unexpected(format!("{:?}", t))),
    }
}

/// Parse an expression, inferring implicit widths; `want` is the expected
/// width of the whole expression when known.
pub fn parse_expr(text: &str, want: Option<u16>) -> Result<Expr, ParseError> {
    typed(&parse_raw(text)?, want)
}

/// Left-hand side of an assignment.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Reg(RegFamily),
    /// Memory cell written through `addr`, `width` bits wide.
    Mem { addr: Expr, width: u16 },
    Predicate,
    Call,
}

/// One member of a representative set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymAssign {
    pub target: Target,
    pub expr: Expr,
}

impl SymAssign {
    pub fn print(&self) -> String {
        match &self.target {
            Target::Reg(f) => format!("{} = {}", f.name(), print(&self.expr)),
            Target::Mem { addr, .. } => format!("*({}) = {}", print(addr), print(&self.expr)),
            Target::Predicate | Target::Call => print(&self.expr),
        }
    }

    pub fn parse(text: &str) -> Result<SymAssign, ParseError> {
        let raw_text = text.trim();
        let toks = lex(raw_text)?;
        let eq = toks.iter().position(|t| *t == Tok::Eq);
        match eq {
            Some(i) => {
                let (lhs, rhs) = raw_text.split_once('=').ok_or(ParseError::Eof)?;
                let _ = i;
                let target_raw = parse_raw(lhs.trim())?;
                let rhs_raw = parse_raw(rhs.trim())?;
                match target_raw {
                    Raw::Reg(r) if r.is_full() => Ok(SymAssign {
                        target: Target::Reg(r.family),
                        expr: typed(&rhs_raw, Some(64))?,
                    }),
                    Raw::Mem(addr, ann) => {
                        let expr = typed(&rhs_raw, ann.or_else(|| natural(&rhs_raw)).or(Some(64)))?;
                        Ok(SymAssign {
                            target: Target::Mem { addr: typed(&addr, Some(64))?, width: expr.width() },
                            expr,
                        })
                    }
                    other => Err(ParseError::Unexpected(format!("{:?}", other))),
                }
            }
            None => {
                let raw = parse_raw(raw_text)?;
                let target = if matches!(raw, Raw::Call(..)) { Target::Call } else { Target::Predicate };
                Ok(SymAssign { target, expr: typed(&raw, None)? })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rt(text: &str, want: Option<u16>) -> Expr {
        let e = parse_expr(text, want).unwrap();
        assert_eq!(print(&e), text);
        e
    }

    #[test]
    fn paper_forms_round_trip() {
        let e = rt("-1 add ( 0 Concat rsi[1:0] )", Some(64));
        assert_eq!(e.width(), 64);
        let p = rt("0 Concat *(*(rbp add -168) add 24)[1:1] ne 0", None);
        if let Expr::Cmp { lhs, .. } = &p {
            assert_eq!(lhs.width(), 8);
        } else {
            panic!()
        }
        rt("fprintf(*(rbp), IMM)", None);
        rt("1 add rdi", Some(64));
    }

    #[test]
    fn byte_registers_print_by_name() {
        let al = Expr::extract(7, 0, Expr::Reg(RegFamily::Rax));
        assert_eq!(print(&al), "al");
        let ah = Expr::extract(15, 8, Expr::Reg(RegFamily::Rax));
        assert_eq!(print(&ah), "ah");
        let sil = Expr::extract(7, 0, Expr::Reg(RegFamily::Rsi));
        assert_eq!(print(&sil), "sil");
    }

    #[test]
    fn ambiguous_widths_fall_back_to_annotations() {
        let e = Expr::concat(Expr::zero(3), Expr::constant(5, 5));
        let text = print(&e);
        assert_eq!(text, "0:3 Concat 5:5");
        assert_eq!(parse_expr(&text, None).unwrap(), e);
    }

    #[test]
    fn assignments() {
        for line in ["rcx = -1 add ( 0 Concat rsi[1:0] )", "rdi = 1 add rdi", "*(rdi) = al", "fprintf(*(rbp), IMM)"] {
            let a = SymAssign::parse(line).unwrap();
            assert_eq!(a.print(), line);
        }
        let m = SymAssign::parse("*(rdi) = al").unwrap();
        assert_eq!(m.target, Target::Mem { addr: Expr::Reg(RegFamily::Rdi), width: 8 });
    }
}
