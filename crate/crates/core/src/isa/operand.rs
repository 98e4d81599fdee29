//! Operand syntax (Intel flavour) and canonical memory-location text.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use super::reg::RegisterId;
use super::IsaError;

/// Multiplier applied to the index register of a memory operand.
///
/// `Reg` only appears in `lea` pseudo-forms such as `[ebx * ecx + edx]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scale {
    Imm(u8),
    Reg(RegisterId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MemOperand {
    pub segment: Option<String>,
    pub base: Option<RegisterId>,
    pub index: Option<RegisterId>,
    pub scale: Scale,
    pub displacement: i64,
    /// Access width in bytes; `None` for `lea` operands, which never touch memory.
    pub size_bytes: Option<u8>,
}

impl MemOperand {
    /// Registers read to form the address.
    pub fn address_registers(&self) -> impl Iterator<Item = RegisterId> + '_ {
        let scale_reg = match self.scale {
            Scale::Reg(r) => Some(r),
            Scale::Imm(_) => None,
        };
        self.base.into_iter().chain(self.index).chain(scale_reg)
    }

    /// Syntactic identity of the addressed cell, e.g. `*(rbp add -8)`.
    pub fn canonical_text(&self) -> String {
        let mut terms: Vec<String> = Vec::new();
        if let Some(base) = self.base {
            terms.push(base.name().to_string());
        }
        if let Some(index) = self.index {
            match self.scale {
                Scale::Imm(1) => terms.push(index.name().to_string()),
                Scale::Imm(s) => terms.push(format!("{} mul {}", index.name(), s)),
                Scale::Reg(r) => terms.push(format!("{} mul {}", index.name(), r.name())),
            }
        }
        if self.displacement != 0 || terms.is_empty() {
            terms.push(format!("{}", self.displacement));
        }
        let mut out = String::new();
        if let Some(seg) = &self.segment {
            out.push_str(seg);
            out.push(':');
        }
        out.push_str("*(");
        out.push_str(&terms.join(" add "));
        out.push(')');
        out
    }

    /// Render in assembly syntax, passing the displacement through `disp`.
    pub fn render(&self, disp: impl Fn(i64) -> String) -> String {
        let mut out = String::new();
        if let Some(size) = self.size_bytes {
            out.push_str(size_keyword(size));
            out.push_str(" ptr ");
        }
        if let Some(seg) = &self.segment {
            out.push_str(seg);
            out.push(':');
        }
        out.push('[');
        let mut first = true;
        if let Some(base) = self.base {
            out.push_str(base.name());
            first = false;
        }
        if let Some(index) = self.index {
            if !first {
                out.push_str(" + ");
            }
            out.push_str(index.name());
            match self.scale {
                Scale::Imm(1) => {}
                Scale::Imm(s) => {
                    let _ = write!(out, "*{}", s);
                }
                Scale::Reg(r) => {
                    let _ = write!(out, "*{}", r.name());
                }
            }
            first = false;
        }
        if self.displacement != 0 || first {
            if first {
                out.push_str(&disp(self.displacement));
            } else if self.displacement < 0 {
                out.push_str(" - ");
                out.push_str(&disp(self.displacement.unsigned_abs() as i64));
            } else {
                out.push_str(" + ");
                out.push_str(&disp(self.displacement));
            }
        }
        out.push(']');
        out
    }
}

pub fn size_keyword(size: u8) -> &'static str {
    match size {
        1 => "byte",
        2 => "word",
        4 => "dword",
        8 => "qword",
        _ => "?",
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Address(u64),
    Symbol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Operand {
    Register(RegisterId),
    Immediate(i64),
    Memory(MemOperand),
    Label(Label),
}

impl Operand {
    pub fn width_bytes(&self) -> Option<u8> {
        match self {
            Operand::Register(r) => Some(r.width_bytes()),
            Operand::Memory(m) => m.size_bytes,
            _ => None,
        }
    }
}

/// Value read back for the `IMM` token of normalized text; any magnitude
/// above the normalization threshold would do.
pub const IMM_PLACEHOLDER: i64 = 1 << 40;

pub(crate) fn parse_number(text: &str) -> Option<i64> {
    if text.eq_ignore_ascii_case("imm") {
        return Some(IMM_PLACEHOLDER);
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest.trim()),
        None => (false, text.strip_prefix('+').unwrap_or(text).trim()),
    };
    let magnitude = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).ok()?
    } else if let Some(hex) = body.strip_suffix('h').filter(|h| h.chars().all(|c| c.is_ascii_hexdigit()) && body.starts_with(|c: char| c.is_ascii_digit())) {
        u64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.chars().all(|c| c.is_ascii_digit()) {
        body.parse::<u64>().ok()?
    } else {
        return None;
    };
    let value = magnitude as i64;
    Some(if neg { value.wrapping_neg() } else { value })
}

fn parse_size_keyword(word: &str) -> Option<u8> {
    match word {
        "byte" => Some(1),
        "word" => Some(2),
        "dword" => Some(4),
        "qword" => Some(8),
        _ => None,
    }
}

/// Split an operand list on top-level commas (commas inside brackets are kept).
pub(crate) fn split_operands(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    let last = text[start..].trim();
    if !last.is_empty() || !parts.is_empty() {
        parts.push(last);
    }
    parts
}

pub(crate) fn parse_operand(text: &str) -> Result<Operand, IsaError> {
    let malformed = || IsaError::MalformedOperand(text.to_string());
    let lowered = text.trim().to_ascii_lowercase();
    let t = lowered.as_str();
    if t.is_empty() {
        return Err(malformed());
    }
    let mut rest = t;
    let mut size = None;
    if let Some((word, tail)) = rest.split_once(char::is_whitespace) {
        if let Some(s) = parse_size_keyword(word) {
            size = Some(s);
            rest = tail.trim_start();
            rest = rest.strip_prefix("ptr").map(str::trim_start).unwrap_or(rest);
        }
    }
    let mut segment = None;
    if let Some(colon) = rest.find(':') {
        let seg = &rest[..colon];
        if matches!(seg, "fs" | "gs" | "cs" | "ds" | "ss" | "es") {
            segment = Some(seg.to_string());
            rest = rest[colon + 1..].trim_start();
        }
    }
    if let Some(inner) = rest.strip_prefix('[') {
        let inner = inner.strip_suffix(']').ok_or_else(malformed)?;
        let mut mem = parse_address(inner).ok_or_else(malformed)?;
        mem.size_bytes = size;
        mem.segment = segment;
        return Ok(Operand::Memory(mem));
    }
    if let Some(seg) = segment {
        // `fs:0x28` style absolute segment access
        let disp = parse_number(rest).ok_or_else(malformed)?;
        return Ok(Operand::Memory(MemOperand {
            segment: Some(seg),
            base: None,
            index: None,
            scale: Scale::Imm(1),
            displacement: disp,
            size_bytes: size,
        }));
    }
    if size.is_some() {
        return Err(malformed());
    }
    if let Some(reg) = RegisterId::parse(rest) {
        return Ok(Operand::Register(reg));
    }
    if let Some(value) = parse_number(rest) {
        return Ok(Operand::Immediate(value));
    }
    let symbol = text.trim();
    let symbol = symbol
        .strip_prefix('<')
        .and_then(|s| s.strip_suffix('>'))
        .unwrap_or(symbol);
    if symbol
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '@' | '.' | '$' | '+'))
    {
        return Ok(Operand::Label(Label::Symbol(symbol.to_string())));
    }
    Err(malformed())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum AddrTok<'a> {
    Word(&'a str),
    Plus,
    Minus,
    Star,
}

fn lex_address(text: &str) -> Option<Vec<AddrTok<'_>>> {
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                toks.push(AddrTok::Plus);
                i += 1;
            }
            '-' => {
                toks.push(AddrTok::Minus);
                i += 1;
            }
            '*' => {
                toks.push(AddrTok::Star);
                i += 1;
            }
            c if c.is_ascii_alphanumeric() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                toks.push(AddrTok::Word(&text[start..i]));
            }
            _ => return None,
        }
    }
    Some(toks)
}

fn parse_address(inner: &str) -> Option<MemOperand> {
    let toks = lex_address(inner)?;
    let mut mem = MemOperand {
        segment: None,
        base: None,
        index: None,
        scale: Scale::Imm(1),
        displacement: 0,
        size_bytes: None,
    };
    // Split into signed terms; each term is a product of words.
    let mut i = 0;
    let mut sign = 1i64;
    let mut expect_term = true;
    while i < toks.len() {
        match toks[i] {
            AddrTok::Plus if !expect_term => {
                sign = 1;
                expect_term = true;
                i += 1;
            }
            AddrTok::Minus if !expect_term => {
                sign = -1;
                expect_term = true;
                i += 1;
            }
            AddrTok::Minus if expect_term => {
                sign = -sign;
                i += 1;
            }
            AddrTok::Word(w) if expect_term => {
                let mut factors = alloc::vec![w];
                i += 1;
                while i + 1 < toks.len() && toks[i] == AddrTok::Star {
                    if let AddrTok::Word(next) = toks[i + 1] {
                        factors.push(next);
                        i += 2;
                    } else {
                        return None;
                    }
                }
                apply_term(&mut mem, &factors, sign)?;
                expect_term = false;
            }
            _ => return None,
        }
    }
    if expect_term && !toks.is_empty() {
        return None;
    }
    Some(mem)
}

fn apply_term(mem: &mut MemOperand, factors: &[&str], sign: i64) -> Option<()> {
    match factors {
        [single] => {
            if let Some(reg) = RegisterId::parse(single) {
                if sign < 0 {
                    return None;
                }
                if mem.base.is_none() {
                    mem.base = Some(reg);
                } else if mem.index.is_none() {
                    mem.index = Some(reg);
                } else {
                    return None;
                }
            } else {
                let value = parse_number(single)?;
                mem.displacement = mem.displacement.wrapping_add(sign.wrapping_mul(value));
            }
        }
        [a, b] => {
            if sign < 0 || mem.index.is_some() {
                return None;
            }
            let (ra, rb) = (RegisterId::parse(a), RegisterId::parse(b));
            let (index, scale) = match (ra, rb) {
                (Some(r), None) => (r, parse_number(b)?),
                (None, Some(r)) => (r, parse_number(a)?),
                (Some(x), Some(y)) => {
                    mem.index = Some(x);
                    mem.scale = Scale::Reg(y);
                    return Some(());
                }
                (None, None) => {
                    let v = parse_number(a)?.wrapping_mul(parse_number(b)?);
                    mem.displacement = mem.displacement.wrapping_add(v);
                    return Some(());
                }
            };
            if !matches!(scale, 1 | 2 | 4 | 8) {
                return None;
            }
            mem.index = Some(index);
            mem.scale = Scale::Imm(scale as u8);
        }
        _ => return None,
    }
    Some(())
}
