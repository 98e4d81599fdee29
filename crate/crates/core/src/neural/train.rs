//! Optimizer, learning-rate schedule and the training steps.

use alloc::format;
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::model::{EmbedMode, Model};
use super::tensor::Tensor;
use super::{NeuralError, Scalar};
use crate::corpus::MaskedSample;
use crate::tokenizer::Sample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    pub batch: usize,
    pub grad_accum: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps: 1425,
            batch: 32,
            grad_accum: 2,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Small-model settings: higher rate, short warmup, no accumulation.
    pub fn desk() -> Self {
        TrainConfig { lr: 4e-3, warmup_steps: 50, batch: 128, grad_accum: 1, ..Self::default() }
    }

    /// Linear warmup to `lr`, then constant. `step` counts from 0.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.warmup_steps == 0 {
            self.lr
        } else {
            self.lr * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &Model<T>) -> Self {
        Adam { m: model.params.zero_grads(), v: model.params.zero_grads(), t: 0 }
    }

    pub fn update(&mut self, model: &mut Model<T>, grads: &[Tensor<T>], cfg: &TrainConfig, lr: f64) {
        // Heads added after the optimizer was built get fresh moments.
        while self.m.len() < grads.len() {
            let g = &grads[self.m.len()];
            self.m.push(Tensor::zeros(g.rows, g.cols));
            self.v.push(Tensor::zeros(g.rows, g.cols));
        }
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - libm::pow(b1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(b2, f64::from(self.t));
        let (tb1, tb2) = (T::from_f64(b1), T::from_f64(b2));
        let (ob1, ob2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
        let step = T::from_f64(lr / c1);
        let inv_c2 = T::from_f64(1.0 / c2);
        let eps = T::from_f64(cfg.eps);
        for (i, g) in grads.iter().enumerate() {
            let p = &mut model.params.tensors[i];
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.data.len() {
                let gj = g.data[j];
                m.data[j] = tb1 * m.data[j] + ob1 * gj;
                v.data[j] = tb2 * v.data[j] + ob2 * gj * gj;
                let vhat = (v.data[j] * inv_c2).sqrt();
                p.data[j] -= step * m.data[j] / (vhat + eps);
            }
        }
    }
}

/// Loss components of one optimizer call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub elm: f64,
    pub ssm: f64,
    pub total: f64,
    pub lr: f64,
    /// An optimizer update happened (the last micro-batch of an accumulation).
    pub updated: bool,
}

/// Gradient accumulation state around [`Adam`].
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub cfg: TrainConfig,
    pub adam: Adam<T>,
    pub grads: Vec<Tensor<T>>,
    pub micro: usize,
    pub step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: &Model<T>, cfg: TrainConfig) -> Self {
        Trainer { cfg, adam: Adam::new(model), grads: model.params.zero_grads(), micro: 0, step: 0 }
    }

    fn sync(&mut self, model: &Model<T>) {
        while self.grads.len() < model.params.tensors.len() {
            let t = &model.params.tensors[self.grads.len()];
            self.grads.push(Tensor::zeros(t.rows, t.cols));
        }
    }

    /// Runs `loss` on each of `n` items, averages over items and over the
    /// accumulation window, and updates once the window is full. `loss`
    /// returns the per-item components it wants reported, summed into
    /// the graph root.
    pub fn run<F>(&mut self, model: &mut Model<T>, n: usize, mut loss: F) -> Result<StepStats, NeuralError>
    where
        F: for<'a> FnMut(&'a Model<T>, &mut Graph<'a, T>, usize) -> Result<(Option<Var>, [f64; 2]), NeuralError>,
    {
        self.sync(model);
        let mut stats = StepStats::default();
        let accum = self.cfg.grad_accum.max(1);
        let seed = T::from_f64(1.0 / (n.max(1) * accum) as f64);
        for i in 0..n {
            let m: &Model<T> = model;
            let mut g = Graph::new(&m.params);
            let (root, parts) = loss(m, &mut g, i)?;
            let Some(root) = root else { continue };
            let total = g.scalar(root).to_f64();
            if !total.is_finite() {
                return Err(NeuralError::NonFiniteLoss { step: self.step, detail: format!("item {} loss {}", i, total) });
            }
            stats.elm += parts[0] / n as f64;
            stats.ssm += parts[1] / n as f64;
            stats.total += total / n as f64;
            g.backward(root, seed, &mut self.grads);
        }
        self.micro += 1;
        stats.lr = self.cfg.lr_at(self.step);
        if self.micro >= accum {
            let grads = core::mem::take(&mut self.grads);
            self.adam.update(model, &grads, &self.cfg, stats.lr);
            self.grads = grads;
            for g in &mut self.grads {
                g.fill(T::ZERO);
            }
            self.micro = 0;
            self.step += 1;
            stats.updated = true;
        }
        Ok(stats)
    }
}

/// A pre-training input: masked tokens plus the mapping label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PretrainExample {
    pub masked: MaskedSample,
    pub ssm_label: u8,
}

/// `L = L_ELM + L_SSM` for one sample.
pub fn pretrain_loss<'a, T: Scalar>(model: &'a Model<T>, g: &mut Graph<'a, T>, ex: &PretrainExample) -> Result<(Var, [f64; 2]), NeuralError> {
    let hidden = model.forward(g, &ex.masked.sample)?;
    let last = *hidden.last().unwrap();
    let ssm = model.ssm_loss(g, last, ex.ssm_label);
    let ssm_v = g.scalar(ssm).to_f64();
    match model.elm_loss(g, last, &ex.masked.labels) {
        Some(elm) => {
            let elm_v = g.scalar(elm).to_f64();
            Ok((g.add(elm, ssm), [elm_v, ssm_v]))
        }
        None => Ok((ssm, [0.0, ssm_v])),
    }
}

pub fn pretrain_step<T: Scalar>(model: &mut Model<T>, tr: &mut Trainer<T>, batch: &[PretrainExample]) -> Result<StepStats, NeuralError> {
    tr.run(model, batch.len(), |m, g, i| {
        let (v, parts) = pretrain_loss(m, g, &batch[i])?;
        Ok((Some(v), parts))
    })
}

/// `(cos(e_a, e_b) - label)²` through one shared encoder.
pub fn siamese_loss<'a, T: Scalar>(model: &'a Model<T>, g: &mut Graph<'a, T>, a: &Sample, b: &Sample, label: f64) -> Result<Var, NeuralError> {
    let ha = model.forward(g, a)?;
    let ea = model.embed_var(g, &ha, a, EmbedMode::Finetuned);
    let hb = model.forward(g, b)?;
    let eb = model.embed_var(g, &hb, b, EmbedMode::Finetuned);
    let c = g.cosine(ea, eb);
    Ok(g.squared_error(c, T::from_f64(label)))
}

pub fn finetune_siamese_step<T: Scalar>(
    model: &mut Model<T>,
    tr: &mut Trainer<T>,
    batch: &[(Sample, Sample, i8)],
) -> Result<StepStats, NeuralError> {
    tr.run(model, batch.len(), |m, g, i| {
        let (a, b, y) = &batch[i];
        let v = siamese_loss(m, g, a, b, f64::from(*y))?;
        Ok((Some(v), [0.0, 0.0]))
    })
}

pub fn classifier_loss<'a, T: Scalar>(model: &'a Model<T>, g: &mut Graph<'a, T>, s: &Sample, class: usize, head: &str) -> Result<Var, NeuralError> {
    let hidden = model.forward(g, s)?;
    let logits = model.class_logits(g, *hidden.last().unwrap(), head)?;
    Ok(g.cross_entropy(logits, &[class]))
}

pub fn finetune_classifier_step<T: Scalar>(
    model: &mut Model<T>,
    tr: &mut Trainer<T>,
    batch: &[(Sample, usize)],
    head: &str,
) -> Result<StepStats, NeuralError> {
    tr.run(model, batch.len(), |m, g, i| {
        let (s, c) = &batch[i];
        Ok((Some(classifier_loss(m, g, s, *c, head)?), [0.0, 0.0]))
    })
}

pub fn token_loss<'a, T: Scalar>(model: &'a Model<T>, g: &mut Graph<'a, T>, s: &Sample, labels: &[u8], head: &str) -> Result<Var, NeuralError> {
    let hidden = model.forward(g, s)?;
    model.token_loss(g, *hidden.last().unwrap(), s, labels, head)
}

pub fn finetune_token_step<T: Scalar>(
    model: &mut Model<T>,
    tr: &mut Trainer<T>,
    batch: &[(Sample, Vec<u8>)],
    head: &str,
) -> Result<StepStats, NeuralError> {
    tr.run(model, batch.len(), |m, g, i| {
        let (s, l) = &batch[i];
        Ok((Some(token_loss(m, g, s, l, head)?), [0.0, 0.0]))
    })
}
