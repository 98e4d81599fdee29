//! Cross-check of the symbolic engine against the concrete interpreter.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::concrete::{concrete_eval, ConcreteError};
use super::exec::{RepresentativeSet, Slot};
use super::expr::{mask, Expr, MapEnv};
use super::print::print;
use crate::isa::{Location, RegFamily, RegisterId};
use crate::rng::Rng;
use crate::slicer::Strand;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffReport {
    /// Trials where both engines produced values.
    pub compared: usize,
    /// Trials the concrete run rejected (division faults, calls).
    pub skipped: usize,
    pub mismatches: Vec<String>,
}

impl DiffReport {
    pub fn merge(&mut self, other: DiffReport) {
        self.compared += other.compared;
        self.skipped += other.skipped;
        self.mismatches.extend(other.mismatches);
    }
}

fn draw(rng: &mut Rng) -> u64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..256),
        1 => rng.gen_range(0..8u64).wrapping_neg(),
        _ => rng.gen(),
    }
}

/// Evaluates every member of `set` and the concrete interpreter under
/// `trials` shared random input assignments.
pub fn differential_check(strand: &Strand, set: &RepresentativeSet, rng: &mut Rng, trials: usize) -> DiffReport {
    let mut report = DiffReport::default();
    for _ in 0..trials {
        let mut env = MapEnv::default();
        let mut inputs: BTreeMap<Location, u64> = BTreeMap::new();
        for f in RegFamily::GPRS.iter().copied().chain([RegFamily::Rip]) {
            let v = draw(rng);
            env.regs.insert(f, v);
            inputs.insert(Location::Reg(RegisterId::full(f)), v);
        }
        let mut by_addr: BTreeMap<Expr, u64> = BTreeMap::new();
        for (text, addr) in &set.mem_inputs {
            let v = *by_addr.entry(addr.clone()).or_insert_with(|| draw(rng));
            inputs.insert(Location::Mem(text.clone(), 8), v);
        }
        env.mems = by_addr;
        let concrete = match concrete_eval(strand, &inputs) {
            Ok(c) => c,
            Err(ConcreteError::DivideByZero(_) | ConcreteError::QuotientOverflow(_) | ConcreteError::NotExecutable(_)) => {
                report.skipped += 1;
                continue;
            }
            Err(e) => {
                report.mismatches.push(format!("{}: concrete failed: {}", strand.strand_id, e));
                continue;
            }
        };
        let mut trial_ok = true;
        for (assign, slot) in set.assigns.iter().zip(&set.slots) {
            let sym = match assign.expr.eval(&env) {
                Ok(v) => v,
                Err(e) => {
                    report.mismatches.push(format!("{}: `{}` did not evaluate: {}", strand.strand_id, assign.print(), e));
                    trial_ok = false;
                    continue;
                }
            };
            let (want, got) = match slot {
                Slot::Loc(loc) => {
                    let Some(c) = concrete.outputs.get(loc) else {
                        report.mismatches.push(format!("{}: no concrete value for {}", strand.strand_id, loc));
                        trial_ok = false;
                        continue;
                    };
                    (u128::from(*c) & mask(assign.expr.width()), sym)
                }
                Slot::Branch => (u128::from(concrete.branch.unwrap_or(false)), sym),
                Slot::Call => continue,
            };
            if want != got {
                trial_ok = false;
                report.mismatches.push(format!(
                    "{}: `{}` gave {:#x}, concrete {:#x} [{}]",
                    strand.strand_id,
                    print(&assign.expr),
                    got,
                    want,
                    strand.instructions.iter().map(|i| i.text.as_str()).collect::<Vec<_>>().join("; ")
                ));
            }
        }
        if trial_ok {
            report.compared += 1;
        }
    }
    report
}
