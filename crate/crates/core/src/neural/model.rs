//! Transformer encoder with token, position and language embeddings, and
//! the heads used for pre-training and fine-tuning.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::graph::{Graph, ParamStore, Var};
use super::tensor::Tensor;
use super::{NeuralError, Scalar};
use crate::corpus::IGNORE;
use crate::rng::Rng;
use crate::tokenizer::{Sample, Vocab, MARK, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_seq: usize,
    pub vocab_size: usize,
    pub n_languages: usize,
}

impl ModelConfig {
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig { hidden: 64, layers: 2, heads: 2, ffn: 256, max_seq: 128, vocab_size, n_languages: 2 }
    }

    pub fn paper(vocab_size: usize) -> Self {
        ModelConfig { hidden: 768, layers: 12, heads: 12, ffn: 3072, max_seq: 512, vocab_size, n_languages: 2 }
    }

    /// Gradient-check scale.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig { hidden: 8, layers: 1, heads: 1, ffn: 16, max_seq: 32, vocab_size, n_languages: 2 }
    }

    pub fn preset(name: &str, vocab_size: usize) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk(vocab_size)),
            "paper" => Some(Self::paper(vocab_size)),
            "tiny" => Some(Self::tiny(vocab_size)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(NeuralError::BadConfig(format!("hidden {} not divisible by heads {}", self.hidden, self.heads)));
        }
        if self.layers == 0 || self.vocab_size == 0 || self.max_seq == 0 || self.n_languages == 0 {
            return Err(NeuralError::BadConfig("zero-sized dimension".into()));
        }
        Ok(())
    }
}

/// How a sequence becomes one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    /// Second-last layer, mean over payload tokens (no specials, no padding).
    Intrinsic,
    /// Last layer, mean over every non-padding token.
    Finetuned,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub config: ModelConfig,
    pub params: ParamStore<T>,
    tok: usize,
    pos: usize,
    lang: usize,
    emb_g: usize,
    emb_b: usize,
    layers: Vec<Layer>,
    elm: (usize, usize),
    ssm: (usize, usize),
    heads: BTreeMap<String, (usize, usize)>,
}

const INIT_STD: f64 = 0.02;

fn normal_tensor<T: Scalar>(rows: usize, cols: usize, rng: &mut Rng) -> Tensor<T> {
    let dist = Normal::new(0.0f64, INIT_STD).expect("valid std");
    let data = (0..rows * cols)
        .map(|_| loop {
            let v = dist.sample(rng);
            if v.abs() <= 2.0 * INIT_STD {
                break T::from_f64(v);
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

fn ones<T: Scalar>(cols: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(1, cols);
    t.fill(T::ONE);
    t
}

/// Parameter names and shapes of a freshly built encoder, in creation order.
fn layout(c: &ModelConfig) -> Vec<(String, usize, usize, u8)> {
    // kind: 0 normal, 1 zeros, 2 ones
    let (h, f) = (c.hidden, c.ffn);
    let mut v: Vec<(String, usize, usize, u8)> = alloc::vec![
        ("emb.token".into(), c.vocab_size, h, 0),
        ("emb.position".into(), c.max_seq, h, 0),
        ("emb.language".into(), c.n_languages, h, 0),
        ("emb.ln.g".into(), 1, h, 2),
        ("emb.ln.b".into(), 1, h, 1),
    ];
    for l in 0..c.layers {
        for (n, r, k, kind) in [
            ("wq", h, h, 0),
            ("bq", 1, h, 1),
            ("wk", h, h, 0),
            ("bk", 1, h, 1),
            ("wv", h, h, 0),
            ("bv", 1, h, 1),
            ("wo", h, h, 0),
            ("bo", 1, h, 1),
            ("ln1.g", 1, h, 2),
            ("ln1.b", 1, h, 1),
            ("w1", h, f, 0),
            ("b1", 1, f, 1),
            ("w2", f, h, 0),
            ("b2", 1, h, 1),
            ("ln2.g", 1, h, 2),
            ("ln2.b", 1, h, 1),
        ] {
            v.push((format!("layer{}.{}", l, n), r, k, kind));
        }
    }
    v.push(("elm.w".into(), h, c.vocab_size, 0));
    v.push(("elm.b".into(), 1, c.vocab_size, 1));
    v.push(("ssm.w".into(), h, 2, 0));
    v.push(("ssm.b".into(), 1, 2, 1));
    v
}

impl<T: Scalar> Model<T> {
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut params = ParamStore::default();
        for (name, r, c, kind) in layout(&config) {
            let t = match kind {
                0 => normal_tensor(r, c, rng),
                1 => Tensor::zeros(r, c),
                _ => ones(c),
            };
            params.add(name, t);
        }
        Model::from_params(config, params)
    }

    /// Wraps loaded parameters; fine-tuning heads are picked up by name.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self, NeuralError> {
        config.validate()?;
        for (name, r, c, _) in layout(&config) {
            let id = params.id(&name).ok_or_else(|| NeuralError::Shape(format!("missing parameter {}", name)))?;
            let t = &params.tensors[id];
            if t.shape() != (r, c) {
                return Err(NeuralError::Shape(format!("{} is {:?}, expected {:?}", name, t.shape(), (r, c))));
            }
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let layers = (0..config.layers)
            .map(|l| {
                let p = |n: &str| id(&format!("layer{}.{}", l, n));
                Layer {
                    wq: p("wq"),
                    bq: p("bq"),
                    wk: p("wk"),
                    bk: p("bk"),
                    wv: p("wv"),
                    bv: p("bv"),
                    wo: p("wo"),
                    bo: p("bo"),
                    ln1_g: p("ln1.g"),
                    ln1_b: p("ln1.b"),
                    w1: p("w1"),
                    b1: p("b1"),
                    w2: p("w2"),
                    b2: p("b2"),
                    ln2_g: p("ln2.g"),
                    ln2_b: p("ln2.b"),
                }
            })
            .collect();
        let mut heads = BTreeMap::new();
        for (i, n) in params.names.iter().enumerate() {
            if let Some(h) = n.strip_prefix("head.").and_then(|r| r.strip_suffix(".w")) {
                let b = params.id(&format!("head.{}.b", h)).ok_or_else(|| NeuralError::Shape(format!("head {} has no bias", h)))?;
                heads.insert(String::from(h), (i, b));
            }
        }
        Ok(Model {
            config,
            tok: id("emb.token"),
            pos: id("emb.position"),
            lang: id("emb.language"),
            emb_g: id("emb.ln.g"),
            emb_b: id("emb.ln.b"),
            layers,
            elm: (id("elm.w"), id("elm.b")),
            ssm: (id("ssm.w"), id("ssm.b")),
            heads,
            params,
        })
    }

    /// Adds (or replaces) a linear head `[hidden, outputs]`.
    pub fn add_head(&mut self, name: &str, outputs: usize, rng: &mut Rng) {
        let w = normal_tensor(self.config.hidden, outputs, rng);
        let b = Tensor::zeros(1, outputs);
        match self.heads.get(name) {
            Some(&(wi, bi)) => {
                self.params.tensors[wi] = w;
                self.params.tensors[bi] = b;
            }
            None => {
                let wi = self.params.add(format!("head.{}.w", name), w);
                let bi = self.params.add(format!("head.{}.b", name), b);
                self.heads.insert(name.into(), (wi, bi));
            }
        }
    }

    pub fn head(&self, name: &str) -> Option<(usize, usize)> {
        self.heads.get(name).copied()
    }

    pub fn head_outputs(&self, name: &str) -> Option<usize> {
        self.heads.get(name).map(|(w, _)| self.params.tensors[*w].cols)
    }

    pub fn check(&self, s: &Sample) -> Result<(), NeuralError> {
        let n = s.token_ids.len();
        if n == 0 {
            return Err(NeuralError::Shape("empty sample".into()));
        }
        if n > self.config.max_seq {
            return Err(NeuralError::Shape(format!("length {} exceeds max_seq {}", n, self.config.max_seq)));
        }
        if s.language_ids.len() != n || s.position_ids.len() != n || s.attention_mask.len() != n {
            return Err(NeuralError::Shape("sample lanes differ in length".into()));
        }
        if let Some(id) = s.token_ids.iter().find(|i| **i as usize >= self.config.vocab_size) {
            return Err(NeuralError::Shape(format!("token id {} outside vocabulary", id)));
        }
        if s.language_ids.iter().any(|l| *l as usize >= self.config.n_languages) {
            return Err(NeuralError::Shape("language id out of range".into()));
        }
        if s.position_ids.iter().any(|p| *p as usize >= self.config.max_seq) {
            return Err(NeuralError::Shape("position id out of range".into()));
        }
        Ok(())
    }

    /// Hidden states: index 0 is the embedding output, index `l` the output
    /// of layer `l`.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a, T>, s: &Sample) -> Result<Vec<Var>, NeuralError> {
        self.check(s)?;
        let keep: Vec<bool> = s.attention_mask.iter().map(|m| *m != 0).collect();
        let (tok, pos, lang) = (g.param(self.tok), g.param(self.pos), g.param(self.lang));
        let t = g.gather(tok, &s.token_ids);
        let p = g.gather(pos, &s.position_ids);
        let l = g.gather(lang, &s.language_ids);
        let x = g.add(t, p);
        let x = g.add(x, l);
        let (eg, eb) = (g.param(self.emb_g), g.param(self.emb_b));
        let mut x = g.layer_norm(x, eg, eb);
        let mut hidden = alloc::vec![x];
        for ly in &self.layers {
            let lin = |g: &mut Graph<'a, T>, x: Var, w: usize, b: usize| {
                let (w, b) = (g.param(w), g.param(b));
                g.linear(x, w, b)
            };
            let q = lin(g, x, ly.wq, ly.bq);
            let k = lin(g, x, ly.wk, ly.bk);
            let v = lin(g, x, ly.wv, ly.bv);
            let a = g.attention(q, k, v, self.config.heads, &keep);
            let o = lin(g, a, ly.wo, ly.bo);
            let r = g.add(x, o);
            let (g1, b1) = (g.param(ly.ln1_g), g.param(ly.ln1_b));
            let x1 = g.layer_norm(r, g1, b1);
            let f = lin(g, x1, ly.w1, ly.b1);
            let f = g.gelu(f);
            let f = lin(g, f, ly.w2, ly.b2);
            let r2 = g.add(x1, f);
            let (g2, b2) = (g.param(ly.ln2_g), g.param(ly.ln2_b));
            x = g.layer_norm(r2, g2, b2);
            hidden.push(x);
        }
        Ok(hidden)
    }

    fn head_logits<'a>(&'a self, g: &mut Graph<'a, T>, x: Var, (w, b): (usize, usize)) -> Var {
        let (w, b) = (g.param(w), g.param(b));
        g.linear(x, w, b)
    }

    /// Mean cross entropy over masked positions; `None` when nothing is masked.
    pub fn elm_loss<'a>(&'a self, g: &mut Graph<'a, T>, last: Var, labels: &[i32]) -> Option<Var> {
        let (rows, targets): (Vec<usize>, Vec<usize>) =
            labels.iter().enumerate().filter(|(_, l)| **l != IGNORE).map(|(i, l)| (i, *l as usize)).unzip();
        if rows.is_empty() {
            return None;
        }
        let x = g.rows(last, &rows);
        let logits = self.head_logits(g, x, self.elm);
        Some(g.cross_entropy(logits, &targets))
    }

    pub fn ssm_logits<'a>(&'a self, g: &mut Graph<'a, T>, last: Var) -> Var {
        let cls = g.rows(last, &[0]);
        self.head_logits(g, cls, self.ssm)
    }

    pub fn ssm_loss<'a>(&'a self, g: &mut Graph<'a, T>, last: Var, label: u8) -> Var {
        let logits = self.ssm_logits(g, last);
        g.cross_entropy(logits, &[label as usize])
    }

    pub fn class_logits<'a>(&'a self, g: &mut Graph<'a, T>, last: Var, head: &str) -> Result<Var, NeuralError> {
        let ids = self.head(head).ok_or_else(|| NeuralError::MissingHead(head.into()))?;
        let cls = g.rows(last, &[0]);
        Ok(self.head_logits(g, cls, ids))
    }

    /// Binary cross entropy on the first token of every instruction except
    /// the marked one. `labels` is parallel to `instr_starts`.
    pub fn token_loss<'a>(&'a self, g: &mut Graph<'a, T>, last: Var, s: &Sample, labels: &[u8], head: &str) -> Result<Var, NeuralError> {
        let ids = self.head(head).ok_or_else(|| NeuralError::MissingHead(head.into()))?;
        let marked = marked_instruction(s).ok_or(NeuralError::MarkMissing)?;
        let (rows, targets): (Vec<usize>, Vec<T>) = s
            .instr_starts
            .iter()
            .zip(labels)
            .enumerate()
            .filter(|(k, _)| *k != marked)
            .map(|(_, (p, l))| (*p, T::from_f64(f64::from(*l))))
            .unzip();
        let x = g.rows(last, &rows);
        let logits = self.head_logits(g, x, ids);
        Ok(g.bce(logits, &targets))
    }

    /// Pooled `[1, hidden]` embedding.
    pub fn embed_var<'a>(&'a self, g: &mut Graph<'a, T>, hidden: &[Var], s: &Sample, mode: EmbedMode) -> Var {
        let n = s.token_ids.len();
        let live = |i: &usize| s.attention_mask[*i] != 0;
        let (layer, mut rows): (Var, Vec<usize>) = match mode {
            EmbedMode::Intrinsic => (
                hidden[hidden.len() - 2],
                (0..n).filter(live).filter(|i| !Vocab::is_special(s.token_ids[*i]) || s.token_ids[*i] == UNK).collect(),
            ),
            EmbedMode::Finetuned => (hidden[hidden.len() - 1], (0..n).filter(live).collect()),
        };
        if rows.is_empty() {
            rows = (0..n).filter(live).collect();
        }
        g.mean_rows(layer, &rows)
    }

    pub fn embed(&self, s: &Sample, mode: EmbedMode) -> Result<Vec<T>, NeuralError> {
        let mut g = Graph::new(&self.params);
        let hidden = self.forward(&mut g, s)?;
        let e = self.embed_var(&mut g, &hidden, s, mode);
        Ok(g.value(e).data.clone())
    }

    pub fn classify(&self, s: &Sample, head: &str) -> Result<usize, NeuralError> {
        let mut g = Graph::new(&self.params);
        let hidden = self.forward(&mut g, s)?;
        let logits = self.class_logits(&mut g, *hidden.last().unwrap(), head)?;
        Ok(argmax(&g.value(logits).data))
    }

    pub fn ssm_predict(&self, s: &Sample) -> Result<u8, NeuralError> {
        let mut g = Graph::new(&self.params);
        let hidden = self.forward(&mut g, s)?;
        let logits = self.ssm_logits(&mut g, *hidden.last().unwrap());
        Ok(argmax(&g.value(logits).data) as u8)
    }

    /// Per-instruction probability of belonging to the marked strand.
    pub fn token_probs(&self, s: &Sample, head: &str) -> Result<Vec<T>, NeuralError> {
        let ids = self.head(head).ok_or_else(|| NeuralError::MissingHead(head.into()))?;
        let mut g = Graph::new(&self.params);
        let hidden = self.forward(&mut g, s)?;
        let x = g.rows(*hidden.last().unwrap(), &s.instr_starts);
        let logits = self.head_logits(&mut g, x, ids);
        Ok(g.value(logits).data.iter().map(|v| T::ONE / (T::ONE + (-*v).exp())).collect())
    }
}

pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate() {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Index (into `instr_starts`) of the instruction right after the first
/// [MARK] token.
pub fn marked_instruction(s: &Sample) -> Option<usize> {
    let m = s.token_ids.iter().position(|t| *t == MARK)?;
    s.instr_starts.iter().position(|p| *p == m + 1)
}

/// Uniform random vectors for baseline comparisons.
pub fn random_embedding(dim: usize, rng: &mut Rng) -> Vec<f32> {
    (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}
