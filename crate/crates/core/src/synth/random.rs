//! Random straight-line blocks over the supported subset.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::rng::Rng;

const FAMILIES: [[&str; 4]; 8] = [
    ["rax", "eax", "ax", "al"],
    ["rbx", "ebx", "bx", "bl"],
    ["rcx", "ecx", "cx", "cl"],
    ["rdx", "edx", "dx", "dl"],
    ["rsi", "esi", "si", "sil"],
    ["rdi", "edi", "di", "dil"],
    ["r8", "r8d", "r8w", "r8b"],
    ["r9", "r9d", "r9w", "r9b"],
];

const WIDTHS: [u8; 4] = [8, 4, 2, 1];
const CONDS: [&str; 12] = ["e", "ne", "s", "ns", "l", "ge", "le", "g", "b", "ae", "be", "a"];

fn reg(rng: &mut Rng, w: u8) -> String {
    let slot = WIDTHS.iter().position(|x| *x == w).unwrap_or(0);
    if w == 1 && rng.gen_bool(0.1) {
        return String::from(*["ah", "bh", "ch", "dh"].choose(rng).unwrap());
    }
    String::from(FAMILIES.choose(rng).unwrap()[slot])
}

fn mem(rng: &mut Rng, w: u8) -> String {
    let kw = crate::isa::size_keyword(w);
    let addr = *["[rbp - 8]", "[rbp - 16]", "[rbp - 180]", "[rax + 8]", "[rbx + rcx*4]", "[rsp + 24]"]
        .choose(rng)
        .unwrap();
    format!("{} ptr {}", kw, addr)
}

fn imm(rng: &mut Rng, w: u8) -> i64 {
    let hi: i64 = match w {
        1 => 127,
        2 => 30000,
        _ => 70000,
    };
    if rng.gen_bool(0.7) {
        rng.gen_range(-8..64)
    } else {
        rng.gen_range(-hi..=hi)
    }
}

fn width(rng: &mut Rng) -> u8 {
    *[8u8, 4, 4, 4, 2, 1].choose(rng).unwrap()
}

/// One random instruction line.
pub fn random_instruction(rng: &mut Rng) -> String {
    let w = width(rng);
    let r = reg(rng, w);
    let r2 = reg(rng, w);
    let m = mem(rng, w);
    let k = imm(rng, w);
    match rng.gen_range(0..24) {
        0 => format!("mov {}, {}", r, r2),
        1 => format!("mov {}, {}", r, k),
        2 => format!("mov {}, {}", r, m),
        3 => format!("mov {}, {}", m, r),
        4 | 5 | 6 => {
            let op = ["add", "sub", "and", "or", "xor", "cmp", "test"].choose(rng).unwrap();
            match rng.gen_range(0..4) {
                0 => format!("{} {}, {}", op, r, r2),
                1 if *op != "test" => format!("{} {}, {}", op, r, m),
                2 => format!("{} {}, {}", op, m, r),
                _ => format!("{} {}, {}", op, r, k),
            }
        }
        7 => {
            let op = ["inc", "dec", "neg", "not"].choose(rng).unwrap();
            if rng.gen_bool(0.7) {
                format!("{} {}", op, r)
            } else {
                format!("{} {}", op, m)
            }
        }
        8 => {
            let op = ["shl", "shr", "sar"].choose(rng).unwrap();
            if rng.gen_bool(0.8) {
                format!("{} {}, {}", op, r, rng.gen_range(0..70))
            } else {
                format!("{} {}, cl", op, r)
            }
        }
        9 if w > 1 => match rng.gen_range(0..3) {
            0 => format!("imul {}, {}", r, r2),
            1 => format!("imul {}, {}, {}", r, r2, k),
            _ => format!("imul {}, {}", r, m),
        },
        10 => {
            let op = ["mul", "imul", "div", "idiv"].choose(rng).unwrap();
            format!("{} {}", op, r)
        }
        11 => {
            let b = FAMILIES.choose(rng).unwrap()[0];
            let i = FAMILIES.choose(rng).unwrap()[0];
            let s = [1, 2, 4, 8].choose(rng).unwrap();
            let d = rng.gen_range(-64..64);
            if rng.gen_bool(0.5) {
                format!("lea {}, [{} + {}*{} + {}]", FAMILIES.choose(rng).unwrap()[0], b, i, s, d)
            } else {
                let b32 = FAMILIES.choose(rng).unwrap()[1];
                format!("lea {}, [{} + {}]", FAMILIES.choose(rng).unwrap()[1], b32, d)
            }
        }
        12 => {
            let dst = FAMILIES.choose(rng).unwrap();
            match rng.gen_range(0..4) {
                0 => format!("movzx {}, {}", dst[1], reg(rng, 1)),
                1 => format!("movzx {}, {}", dst[1], mem(rng, 2)),
                2 => format!("movsx {}, {}", dst[0], reg(rng, 1)),
                _ => format!("movsxd {}, {}", dst[0], reg(rng, 4)),
            }
        }
        13 => format!("set{} {}", CONDS.choose(rng).unwrap(), reg(rng, 1)),
        14 if w > 1 => format!("cmov{} {}, {}", CONDS.choose(rng).unwrap(), r, r2),
        15 => String::from(*["cdqe", "cqo", "cdq", "cwde"].choose(rng).unwrap()),
        16 => format!("push {}", FAMILIES.choose(rng).unwrap()[0]),
        17 => format!("pop {}", FAMILIES.choose(rng).unwrap()[0]),
        18 => String::from(
            *["rep stosb byte ptr [rdi], al", "rep stosd dword ptr [rdi], eax", "movsb byte ptr [rdi], byte ptr [rsi]"]
                .choose(rng)
                .unwrap(),
        ),
        _ => format!("mov {}, {}", r, r2),
    }
}

/// A block of `len` instructions, optionally closed by a conditional jump.
pub fn random_block(rng: &mut Rng, len: usize, jcc: bool) -> Vec<String> {
    let mut out: Vec<String> = (0..len).map(|_| random_instruction(rng)).collect();
    if jcc {
        out.push(format!("j{} MEM", CONDS.choose(rng).unwrap()));
    }
    out
}
