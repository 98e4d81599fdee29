//! Token masking for the execution language modeling task.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::rng::Rng;
use crate::tokenizer::{Sample, Vocab, MASK, SPECIALS};

/// Label value at positions that carry no target.
pub const IGNORE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskConfig {
    /// Selection probability per eligible token.
    pub mp: f64,
    pub p_mask: f64,
    pub p_random: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig { mp: 0.3, p_mask: 0.8, p_random: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskBranch {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSample {
    pub sample: Sample,
    /// Original id at selected positions, [`IGNORE`] elsewhere.
    pub labels: Vec<i32>,
    /// Treatment of each position; `None` when not selected.
    pub branches: Vec<Option<MaskBranch>>,
}

impl MaskedSample {
    pub fn masked_count(&self) -> usize {
        self.labels.iter().filter(|l| **l != IGNORE).count()
    }
}

/// Selects each non-special token with probability `mp`; selected tokens
/// become [MASK], a random non-special token, or stay, per the config.
pub fn mask_tokens(sample: &Sample, cfg: &MaskConfig, vocab_size: usize, rng: &mut Rng) -> MaskedSample {
    let mut out = sample.clone();
    let n = sample.token_ids.len();
    let mut labels = alloc::vec![IGNORE; n];
    let mut branches = alloc::vec![None; n];
    let first_word = SPECIALS.len() as u32;
    for i in 0..n {
        let id = sample.token_ids[i];
        if Vocab::is_special(id) || sample.attention_mask[i] == 0 {
            continue;
        }
        if !rng.gen_bool(cfg.mp.clamp(0.0, 1.0)) {
            continue;
        }
        labels[i] = id as i32;
        let u: f64 = rng.gen();
        let branch = if u < cfg.p_mask {
            MaskBranch::Mask
        } else if u < cfg.p_mask + cfg.p_random {
            MaskBranch::Random
        } else {
            MaskBranch::Keep
        };
        out.token_ids[i] = match branch {
            MaskBranch::Mask => MASK,
            MaskBranch::Random if (vocab_size as u32) > first_word => rng.gen_range(first_word..vocab_size as u32),
            _ => id,
        };
        branches[i] = Some(branch);
    }
    MaskedSample { sample: out, labels, branches }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::tokenizer::{encode, train_vocab};

    fn sample() -> (Sample, Vocab) {
        let v = train_vocab(&["mov eax , 5", "add rax , rbx"], 100).unwrap();
        (encode(&["mov eax , 5", "add rax , rbx"], Some("rax = 5"), None, &v), v)
    }

    #[test]
    fn zero_rate_is_identity() {
        let (s, v) = sample();
        let m = mask_tokens(&s, &MaskConfig { mp: 0.0, ..Default::default() }, v.len(), &mut seeded(1));
        assert_eq!(m.sample, s);
        assert_eq!(m.masked_count(), 0);
    }

    #[test]
    fn full_rate_masks_every_word() {
        let (s, v) = sample();
        let cfg = MaskConfig { mp: 1.0, p_mask: 1.0, p_random: 0.0 };
        let m = mask_tokens(&s, &cfg, v.len(), &mut seeded(1));
        for (i, id) in s.token_ids.iter().enumerate() {
            if Vocab::is_special(*id) {
                assert_eq!(m.sample.token_ids[i], *id);
                assert_eq!(m.labels[i], IGNORE);
            } else {
                assert_eq!(m.sample.token_ids[i], MASK);
                assert_eq!(m.labels[i], *id as i32);
            }
        }
    }
}
