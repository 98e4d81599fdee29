use proptest::prelude::*;
use rand::Rng as _;
use strandforge_core::isa::parse_instruction;
use strandforge_core::normalize::{normalize_instruction, normalize_symexpr, NormRules};
use strandforge_core::rng::seeded;
use strandforge_core::synth::random::random_instruction;

fn numbers_ok(text: &str, threshold: u64) -> bool {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '.'))
        .filter(|t| !t.is_empty())
        .all(|t| {
            if t.starts_with("0x") {
                return false;
            }
            match t.parse::<i64>() {
                Ok(v) => v.unsigned_abs() <= threshold,
                Err(_) => true,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn instruction_normalization_is_idempotent(seed in any::<u64>()) {
        let rules = NormRules::default();
        let mut rng = seeded(seed);
        let mut line = random_instruction(&mut rng);
        if rng.gen_bool(0.3) {
            line = format!("mov rax, {:#x}", rng.gen::<u32>());
        } else if rng.gen_bool(0.2) {
            line = format!("mov eax, dword ptr [rip + {:#x}]", rng.gen::<u32>());
        }
        let ins = parse_instruction(&line, 0, 0).unwrap();
        let once = normalize_instruction(&ins, &rules);
        let again = normalize_instruction(&parse_instruction(&once, 0, 0).unwrap(), &rules);
        prop_assert_eq!(&once, &again, "{}", line);
        prop_assert!(numbers_ok(&once, rules.imm_threshold), "{}", once);
    }

    #[test]
    fn symexpr_normalization_is_idempotent(a in any::<i64>(), b in 0u32..100, f in 0.0f64..1000.0) {
        let rules = NormRules::default();
        let text = format!("eax add {} mul *(rbp add -{}) add {:.5} xor 0x{:x}", a, b, f, b);
        let once = normalize_symexpr(&text, &rules);
        prop_assert_eq!(normalize_symexpr(&once, &rules), once.clone());
        prop_assert!(numbers_ok(&once.replace(".", " "), rules.imm_threshold), "{}", once);
    }
}
