use strandforge_core::cfg::block_from_lines;
use strandforge_core::normalize::NormRules;
use strandforge_core::rng::sub_rng;
use strandforge_core::slicer::{extract_strands, Role};
use strandforge_core::sym::{differential_check, execute_strand, DiffReport};
use strandforge_core::synth::random::random_block;

#[test]
fn symbolic_matches_concrete_on_random_strands() {
    let rules = NormRules::default();
    let mut report = DiffReport::default();
    let mut strands_checked = 0;
    let mut unsupported = 0;
    let mut block_no = 0u64;
    while strands_checked < 1000 {
        let mut rng = sub_rng(2024, block_no);
        block_no += 1;
        let lines = random_block(&mut rng, 6, block_no % 3 == 0);
        let block = block_from_lines("b", &lines).unwrap();
        for strand in extract_strands("f", &block, &rules) {
            if matches!(strand.role, Role::Call(_)) || !strand.executable {
                continue;
            }
            match execute_strand(&strand) {
                Ok(set) => {
                    report.merge(differential_check(&strand, &set, &mut rng, 100));
                    strands_checked += 1;
                }
                Err(_) => unsupported += 1,
            }
        }
    }
    std::println!("compared {} skipped {} unsupported {} blocks {}", report.compared, report.skipped, unsupported, block_no);
    assert!(report.mismatches.is_empty(), "{} mismatches, first: {:?}", report.mismatches.len(), &report.mismatches[..report.mismatches.len().min(5)]);
    assert!(report.compared > 50_000, "only {} trials compared ({} skipped)", report.compared, report.skipped);
    assert!(unsupported < strands_checked, "{} strands rejected by the symbolic engine", unsupported);
}
