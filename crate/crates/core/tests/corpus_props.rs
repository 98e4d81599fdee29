use std::collections::BTreeSet;

use proptest::prelude::*;
use strandforge_core::cfg::block_from_lines;
use strandforge_core::corpus::{build_ssm_corpus, mask_tokens, MaskBranch, MaskConfig, SsmSource};
use strandforge_core::normalize::NormRules;
use strandforge_core::rng::seeded;
use strandforge_core::slicer::extract_strands;
use strandforge_core::sym::SymAssign;
use strandforge_core::synth::equiv::synth_equivalence_corpus;
use strandforge_core::synth::random::random_block;
use strandforge_core::tokenizer::{canonical_spacing, decode, encode, train_vocab, Sample, Vocab, UNK};

fn corpus_lines(n: usize) -> Vec<String> {
    let mut rng = seeded(5);
    let rules = NormRules::default();
    let mut out = Vec::new();
    while out.len() < n {
        let lines = random_block(&mut rng, 8, false);
        let Ok(block) = block_from_lines("b", &lines) else { continue };
        for s in extract_strands("f", &block, &rules) {
            out.extend(s.asm);
        }
    }
    out.truncate(n);
    out
}

#[test]
fn tokenizer_round_trip() {
    let lines = corpus_lines(10_000);
    let vocab = train_vocab(&lines, 512).unwrap();
    for l in &lines {
        let s = encode(&[l.as_str()], None, None, &vocab);
        let (asm, sym) = decode(&s, &vocab);
        assert_eq!(asm, canonical_spacing(l));
        assert!(sym.is_none());
    }
    assert_eq!(train_vocab(&lines, 512).unwrap().to_text(), vocab.to_text());
}

#[test]
fn masking_statistics() {
    let vocab_size = 300;
    let n = 1000;
    let sample = Sample {
        token_ids: (0..n).map(|i| 6 + (i % 200) as u32).collect(),
        language_ids: vec![0; n],
        position_ids: (0..n as u32).collect(),
        attention_mask: vec![1; n],
        instr_starts: vec![],
    };
    let mut rng = seeded(21);
    let cfg = MaskConfig::default();
    let (mut sel, mut total) = (0usize, 0usize);
    let mut counts = [0usize; 3];
    for _ in 0..1000 {
        let m = mask_tokens(&sample, &cfg, vocab_size, &mut rng);
        total += n;
        for b in m.branches.iter().flatten() {
            sel += 1;
            counts[match b {
                MaskBranch::Mask => 0,
                MaskBranch::Random => 1,
                MaskBranch::Keep => 2,
            }] += 1;
        }
    }
    let frac = sel as f64 / total as f64;
    assert!((frac - 0.3).abs() < 0.005, "selected {}", frac);
    for (c, want) in counts.iter().zip([0.8, 0.1, 0.1]) {
        let got = *c as f64 / sel as f64;
        assert!((got - want).abs() < 0.005, "branch {} vs {}", got, want);
    }
}

#[test]
fn ssm_negatives_are_never_members() {
    let synth = synth_equivalence_corpus(300, 2);
    let rules = NormRules::default();
    let pairs = build_ssm_corpus(&synth.strands, &synth.sets, 8, &rules).unwrap();
    let pos = pairs.iter().filter(|p| p.label == 1).count();
    assert_eq!(pos * 2, pairs.len());
    let unique: BTreeSet<_> = pairs.iter().map(|p| (&p.asm, &p.symexpr, p.label)).collect();
    assert_eq!(unique.len(), pairs.len());
    let sources: Vec<SsmSource> = synth.strands.iter().zip(&synth.sets).map(|(s, r)| SsmSource::new(s, r)).collect();
    for p in &pairs {
        let src = sources.iter().find(|s| s.strand_id == p.strand_id).unwrap();
        let a = SymAssign::parse(&p.symexpr).unwrap();
        assert_eq!(src.contains(&a), p.label == 1, "{} / {}", p.strand_id, p.symexpr);
    }
}

proptest! {
    #[test]
    fn encoding_never_leaks_specials(text in "[a-z\\[\\]#, +*0-9A-Z-]{0,40}") {
        let vocab = train_vocab(&["mov eax , [ rbp - 8 ]", "[MASK] cmovz ## 12"], 80).unwrap();
        for id in vocab.encode_text(&text) {
            prop_assert!((id as usize) < vocab.len());
            prop_assert!(!Vocab::is_special(id) || id == UNK);
        }
    }
}
