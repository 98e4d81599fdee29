//! Preprocessing of assembly and symbolic-expression text before tokenization.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::isa::{CallKind, Instruction, Label, Op, Operand, RegisterId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormRules {
    pub imm_threshold: u64,
    pub jump_token: String,
    pub imm_token: String,
    pub user_call_token: String,
    pub float_decimals: usize,
}

impl Default for NormRules {
    fn default() -> Self {
        NormRules {
            imm_threshold: 5000,
            jump_token: "MEM".into(),
            imm_token: "IMM".into(),
            user_call_token: "func".into(),
            float_decimals: 2,
        }
    }
}

impl NormRules {
    fn number(&self, v: i64) -> String {
        if v.unsigned_abs() > self.imm_threshold {
            self.imm_token.clone()
        } else {
            format!("{}", v)
        }
    }
}

fn render_operand(op: &Operand, rules: &NormRules) -> String {
    match op {
        Operand::Register(r) => r.name().to_string(),
        Operand::Immediate(v) => rules.number(*v),
        Operand::Memory(m) => m.render(|d| rules.number(d)),
        Operand::Label(_) => rules.jump_token.clone(),
    }
}

/// One instruction in the normalized textual form.
pub fn normalize_instruction(instr: &Instruction, rules: &NormRules) -> String {
    let mut out = String::new();
    if instr.rep {
        out.push_str("rep ");
    }
    out.push_str(&instr.mnemonic);
    if instr.op == Some(Op::Call) {
        let target = match (&instr.call, instr.operands.first()) {
            (Some(CallKind::Libc(name)), _) => name.clone(),
            (Some(CallKind::UserFunc), _) => rules.user_call_token.clone(),
            (_, Some(Operand::Label(Label::Symbol(s)))) => s.clone(),
            (_, Some(Operand::Label(Label::Address(_)))) => rules.user_call_token.clone(),
            (_, Some(other)) => render_operand(other, rules),
            (_, None) => String::new(),
        };
        out.push(' ');
        out.push_str(&target);
        return out;
    }
    let has_text_operands = instr
        .text
        .split_once(char::is_whitespace)
        .map(|(_, rest)| !rest.trim().is_empty())
        .unwrap_or(false);
    if !instr.supported() && instr.operands.is_empty() && has_text_operands {
        // Operands we could not parse: keep the text, fix up the numbers.
        return normalize_numbers(&instr.text.to_ascii_lowercase(), rules);
    }
    let parts: Vec<String> = instr.operands.iter().map(|o| render_operand(o, rules)).collect();
    if !parts.is_empty() {
        out.push(' ');
        out.push_str(&parts.join(", "));
    }
    out
}

/// Decimal conversion and thresholding of every numeric token in `text`.
fn normalize_numbers(text: &str, rules: &NormRules) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.extend(&chars[start..i]);
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            let tok: String = chars[start..i].iter().collect();
            out.push_str(&number_token(&tok, rules).unwrap_or(tok));
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

fn number_token(tok: &str, rules: &NormRules) -> Option<String> {
    if let Some(hex) = tok.strip_prefix("0x") {
        let v = u64::from_str_radix(hex, 16).ok()?;
        return Some(if v > rules.imm_threshold { rules.imm_token.clone() } else { format!("{}", v) });
    }
    if let Some((int, frac)) = tok.split_once('.') {
        if int.chars().all(|c| c.is_ascii_digit()) && frac.chars().all(|c| c.is_ascii_digit()) {
            let keep = frac.len().min(rules.float_decimals);
            return Some(format!("{}.{}", int, &frac[..keep]));
        }
        return None;
    }
    if tok.chars().all(|c| c.is_ascii_digit()) {
        let big = tok.parse::<u64>().map(|v| v > rules.imm_threshold).unwrap_or(true);
        return Some(if big { rules.imm_token.clone() } else { tok.trim_start_matches('0').to_string() })
            .map(|s| if s.is_empty() { "0".to_string() } else { s });
    }
    None
}

/// Guard pass over printed symbolic expressions: 32/16-bit register names are
/// widened, large constants become IMM, floats are truncated.
pub fn normalize_symexpr(text: &str, rules: &NormRules) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '_' | '@' | '.')) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            match RegisterId::parse(&word) {
                Some(r) if r.lo == 0 && (r.hi == 4 || r.hi == 2) => out.push_str(r.widen().name()),
                _ => out.push_str(&word),
            }
            continue;
        }
        let negative = c == '-' && chars.get(i + 1).map(|d| d.is_ascii_digit()).unwrap_or(false);
        if c.is_ascii_digit() || negative {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
            let tok: String = chars[start..i].iter().collect();
            let (sign, body) = match tok.strip_prefix('-') {
                Some(b) => ("-", b),
                None => ("", tok.as_str()),
            };
            match number_token(body, rules) {
                Some(n) if n == rules.imm_token => out.push_str(&n),
                Some(n) => {
                    out.push_str(sign);
                    out.push_str(&n);
                }
                None => out.push_str(&tok),
            }
            continue;
        }
        out.push(c);
        i += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_instruction;

    fn norm(text: &str, call: Option<CallKind>) -> String {
        let mut i = parse_instruction(text, 0, 0).unwrap();
        i.call = call;
        normalize_instruction(&i, &NormRules::default())
    }

    #[test]
    fn instruction_examples() {
        assert_eq!(norm("mov eax, 74565", None), "mov eax, IMM");
        assert_eq!(norm("cmp eax, 4", None), "cmp eax, 4");
        assert_eq!(norm("call 0x400520", Some(CallKind::Libc("fprintf".into()))), "call fprintf");
        assert_eq!(norm("call 0x401234", Some(CallKind::UserFunc)), "call func");
        assert_eq!(norm("call rax", Some(CallKind::Indirect)), "call rax");
        assert_eq!(norm("jne 0x4005d0", None), "jne MEM");
        assert_eq!(norm("mov rax, qword ptr [rbp - 0xa8]", None), "mov rax, qword ptr [rbp - 168]");
        assert_eq!(norm("mov eax, dword ptr [rip + 0x200b0e]", None), "mov eax, dword ptr [rip + IMM]");
        assert_eq!(norm("rep stosb byte ptr [rdi], al", None), "rep stosb byte ptr [rdi], al");
        assert_eq!(norm("fld tword ptr [rbp + 0x10]", None), "fld tword ptr [rbp + 16]");
    }

    #[test]
    fn symexpr_examples() {
        let r = NormRules::default();
        assert_eq!(normalize_symexpr("eax add 1", &r), "rax add 1");
        assert_eq!(normalize_symexpr("3.14159", &r), "3.14");
        assert_eq!(normalize_symexpr("*(rbp add -168)", &r), "*(rbp add -168)");
        assert_eq!(normalize_symexpr("*(rdi) = al", &r), "*(rdi) = al");
        assert_eq!(normalize_symexpr("fprintf(*(rbp), 4196084)", &r), "fprintf(*(rbp), IMM)");
        assert_eq!(normalize_symexpr("rax add -74565", &r), "rax add IMM");
    }
}
