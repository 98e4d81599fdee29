#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use strandforge::formats::function_to_json;
use strandforge_core::cfg::{RawBlock, RawFunction};
use strandforge_core::rng::sub_rng;
use strandforge_core::synth::random::random_block;

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_strandforge"))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the binary with `--out-dir dir` prepended to `args`.
pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .env("STRANDFORGE_LOG", "error")
        .output()
        .expect("spawn strandforge")
}

pub fn run_ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
}

const COMPILERS: [&str; 2] = ["gcc-9", "clang-10"];
const OPTS: [&str; 4] = ["O0", "O1", "O2", "O3"];

/// `n` functions per binary across two binaries; function `f` shares its
/// name (not its code) across binaries. Blocks come from the random
/// instruction generator.
pub fn random_functions(n: usize, seed: u64) -> String {
    let mut out = String::new();
    for (bi, compiler) in COMPILERS.iter().enumerate() {
        for f in 0..n {
            let mut rng = sub_rng(seed, (bi * n + f) as u64);
            let n_blocks = 3;
            let mut addr = 0x1000u64 * (f as u64 + 1);
            let mut blocks = Vec::new();
            for b in 0..n_blocks {
                let last = b + 1 == n_blocks;
                let mut lines = random_block(&mut rng, 6 + b, !last);
                if let Some(l) = lines.last_mut() {
                    if l.ends_with(" MEM") {
                        *l = l.replace(" MEM", &format!(" {:#x}", addr + 0x800));
                    }
                }
                let instructions = lines
                    .into_iter()
                    .map(|t| {
                        addr += 4;
                        (addr, t)
                    })
                    .collect();
                let successors = if last { vec![] } else { vec![format!("b{}", b + 1)] };
                blocks.push(RawBlock { block_id: format!("b{}", b), successors, instructions });
            }
            let raw = RawFunction {
                function_id: format!("f{}", f),
                binary_id: format!("bin-{}", compiler),
                compiler: Some(compiler.to_string()),
                optimization: Some(OPTS[f % OPTS.len()].to_string()),
                libc_symbols: Default::default(),
                blocks,
            };
            out.push_str(&function_to_json(&raw).to_string());
            out.push('\n');
        }
    }
    out
}
