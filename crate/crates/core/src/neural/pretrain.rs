//! The pre-training loop over encoded strand/expression pairs.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::train::{pretrain_step, PretrainExample, StepStats, Trainer};
use super::{Model, NeuralError, Scalar};
use crate::corpus::{mask_tokens, MaskConfig};
use crate::rng::{seeded, sub_rng};
use crate::tokenizer::Sample;

/// Sample order for `steps` optimizer steps: the dataset is reshuffled at
/// the start of every pass, each pass from its own sub-seed.
pub fn batch_order(n: usize, batch: usize, micro_batches: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(micro_batches);
    let mut order: Vec<usize> = Vec::new();
    let mut pos = 0;
    let mut epoch = 0u64;
    while out.len() < micro_batches && n > 0 {
        let mut b = Vec::with_capacity(batch);
        while b.len() < batch {
            if pos == order.len() {
                order = (0..n).collect();
                order.shuffle(&mut sub_rng(seed, epoch));
                epoch += 1;
                pos = 0;
            }
            b.push(order[pos]);
            pos += 1;
        }
        out.push(b);
    }
    out
}

/// Runs `steps` optimizer steps of masked-token plus mapping loss over
/// `(sample, label)` pairs. Each drawn sample is masked afresh with the
/// sub-seed of its draw index. `on_step` sees every completed step.
pub fn pretrain<T: Scalar>(
    model: &mut Model<T>,
    trainer: &mut Trainer<T>,
    data: &[(Sample, u8)],
    steps: usize,
    mask: &MaskConfig,
    mut on_step: impl FnMut(usize, &StepStats),
) -> Result<Vec<StepStats>, NeuralError> {
    let accum = trainer.cfg.grad_accum.max(1);
    let seed = trainer.cfg.seed;
    let order = batch_order(data.len(), trainer.cfg.batch.max(1), steps * accum, seed);
    let vocab = model.config.vocab_size;
    let mut mask_rng = seeded(seed ^ 0x6d61_736b);
    let mut history = Vec::with_capacity(steps);
    let mut acc = StepStats::default();
    for idx in order {
        let batch: Vec<PretrainExample> = idx
            .iter()
            .map(|&i| PretrainExample { masked: mask_tokens(&data[i].0, mask, vocab, &mut mask_rng), ssm_label: data[i].1 })
            .collect();
        let st = pretrain_step(model, trainer, &batch)?;
        acc.elm += st.elm / accum as f64;
        acc.ssm += st.ssm / accum as f64;
        acc.total += st.total / accum as f64;
        if st.updated {
            acc.lr = st.lr;
            acc.updated = true;
            on_step(history.len(), &acc);
            history.push(acc);
            acc = StepStats::default();
        }
    }
    Ok(history)
}

/// Share of pairs whose mapping prediction matches the label.
pub fn ssm_accuracy<T: Scalar>(model: &Model<T>, data: &[(Sample, u8)]) -> Result<f64, NeuralError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (s, y) in data {
        if model.ssm_predict(s)? == *y {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
