use strandforge_core::corpus::{MaskedSample, IGNORE};
use strandforge_core::neural::train::{classifier_loss, siamese_loss, token_loss};
use strandforge_core::neural::{
    pretrain_loss, pretrain_step, EmbedMode, Graph, Model, ModelConfig, PretrainExample, Tensor, TrainConfig, Trainer, Var,
};
use strandforge_core::rng::seeded;
use strandforge_core::tokenizer::{pad_batch, Sample, CLS, MARK, SEP};

const V: usize = 14;

fn sample(asm: &[u32], sym: &[u32]) -> Sample {
    let mut ids = vec![CLS];
    ids.extend_from_slice(asm);
    ids.push(SEP);
    let mut lang = vec![0; ids.len()];
    if !sym.is_empty() {
        ids.extend_from_slice(sym);
        ids.push(SEP);
        lang.resize(ids.len(), 1);
    }
    let n = ids.len();
    Sample {
        token_ids: ids,
        language_ids: lang,
        position_ids: (0..n as u32).collect(),
        attention_mask: vec![1; n],
        instr_starts: vec![1],
    }
}

fn marked() -> Sample {
    // [CLS] i0(6 7) [MARK] i1(8) [MARK] i2(9 10) [SEP]
    let ids = vec![CLS, 6, 7, MARK, 8, MARK, 9, 10, SEP];
    let n = ids.len();
    Sample {
        token_ids: ids,
        language_ids: vec![0; n],
        position_ids: (0..n as u32).collect(),
        attention_mask: vec![1; n],
        instr_starts: vec![1, 4, 6],
    }
}

fn masked(s: &Sample, at: &[usize]) -> PretrainExample {
    let mut labels = vec![IGNORE; s.len()];
    let mut m = s.clone();
    for &i in at {
        labels[i] = s.token_ids[i] as i32;
        m.token_ids[i] = 4;
    }
    PretrainExample { masked: MaskedSample { sample: m, labels, branches: vec![None; s.len()] }, ssm_label: 1 }
}

fn tiny() -> Model<f64> {
    let mut rng = seeded(3);
    let mut m = Model::new(ModelConfig::tiny(V), &mut rng).unwrap();
    // Unit-scale embeddings and weights three times the 0.02 init, so every
    // path carries signal while a 1e-3 step stays in the locally quadratic
    // regime.
    let (ws, es) = (3.0, 50.0);
    for (name, t) in m.params.names.iter().zip(&mut m.params.tensors) {
        let s = if name.starts_with("emb.") && t.rows > 1 { es } else { ws };
        for v in &mut t.data {
            *v *= s;
        }
    }
    for t in &mut m.params.tensors {
        if t.rows == 1 {
            for v in &mut t.data {
                *v += 0.1;
            }
        }
    }
    m.add_head("cls", 3, &mut rng);
    m.add_head("tok", 1, &mut rng);
    m
}

type LossFn = dyn for<'a> Fn(&'a Model<f64>, &mut Graph<'a, f64>) -> Var;

fn eval(m: &Model<f64>, f: &LossFn) -> f64 {
    let mut g = Graph::new(&m.params);
    let v = f(m, &mut g);
    g.scalar(v)
}

/// Largest relative gap between backprop and central differences.
fn grad_check(name: &str, f: &LossFn) -> f64 {
    let mut m = tiny();
    let mut grads = m.params.zero_grads();
    {
        let mut g = Graph::new(&m.params);
        let v = f(&m, &mut g);
        g.backward(v, 1.0, &mut grads);
    }
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut nonzero = 0;
    for p in 0..m.params.tensors.len() {
        for j in 0..m.params.tensors[p].data.len() {
            let orig = m.params.tensors[p].data[j];
            m.params.tensors[p].data[j] = orig + h;
            let up = eval(&m, f);
            m.params.tensors[p].data[j] = orig - h;
            let down = eval(&m, f);
            m.params.tensors[p].data[j] = orig;
            let num = (up - down) / (2.0 * h);
            let ana = grads[p].data[j];
            if ana.abs() > 1e-8 {
                nonzero += 1;
            }
            let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-6);
            if rel > worst {
                worst = rel;
                if rel > 1e-3 {
                    eprintln!("{}: {} [{}] analytic {} numeric {}", name, m.params.names[p], j, ana, num);
                }
            }
        }
    }
    assert!(nonzero > 20, "{}: too few nonzero gradients ({})", name, nonzero);
    worst
}

#[test]
fn gradients_match_finite_differences() {
    let s = sample(&[6, 7, 8, 9], &[10, 11, 12]);
    let ex = masked(&s, &[2, 6]);
    let b = sample(&[7, 9, 13], &[12, 6]);
    let mk = marked();
    let checks: Vec<(&str, Box<LossFn>)> = vec![
        ("elm", Box::new({
            let ex = ex.clone();
            move |m, g| {
                let h = m.forward(g, &ex.masked.sample).unwrap();
                m.elm_loss(g, *h.last().unwrap(), &ex.masked.labels).unwrap()
            }
        })),
        ("ssm", Box::new({
            let s = s.clone();
            move |m, g| {
                let h = m.forward(g, &s).unwrap();
                m.ssm_loss(g, *h.last().unwrap(), 0)
            }
        })),
        ("pretrain", Box::new({
            let ex = ex.clone();
            move |m, g| pretrain_loss(m, g, &ex).unwrap().0
        })),
        ("siamese", Box::new({
            let (s, b) = (s.clone(), b.clone());
            move |m, g| siamese_loss(m, g, &s, &b, -1.0).unwrap()
        })),
        ("classifier", Box::new({
            let s = s.clone();
            move |m, g| classifier_loss(m, g, &s, 2, "cls").unwrap()
        })),
        ("token", Box::new(move |m, g| token_loss(m, g, &mk, &[1, 0, 0], "tok").unwrap())),
        ("intrinsic-embedding", Box::new({
            let s = s.clone();
            move |m, g| {
                let h = m.forward(g, &s).unwrap();
                let e = m.embed_var(g, &h, &s, EmbedMode::Intrinsic);
                let t = g.constant(Tensor::from_vec(8, 1, (0..8).map(|i| i as f64 - 3.5).collect()));
                g.matmul(e, t)
            }
        })),
    ];
    for (name, f) in &checks {
        let worst = grad_check(name, f.as_ref());
        println!("gradient check {:<20} max relative error {:.2e}", name, worst);
        assert!(worst < 1e-3, "{}: {}", name, worst);
    }
}

#[test]
fn analytic_loss_values() {
    let mut m = Model::<f64>::new(ModelConfig::tiny(V), &mut seeded(1)).unwrap();
    for t in &mut m.params.tensors {
        t.fill(0.0);
    }
    let s = sample(&[6, 7, 8], &[9]);
    let ex = masked(&s, &[1, 2]);
    let mut g = Graph::new(&m.params);
    let (_, parts) = pretrain_loss(&m, &mut g, &ex).unwrap();
    assert!((parts[0] - (V as f64).ln()).abs() < 1e-12);
    assert!((parts[1] - 2f64.ln()).abs() < 1e-12);

    let m = tiny();
    let mut g = Graph::new(&m.params);
    let same = siamese_loss(&m, &mut g, &s, &s, 1.0).unwrap();
    assert!(g.scalar(same).abs() < 1e-12);
    let opposite = siamese_loss(&m, &mut g, &s, &s, -1.0).unwrap();
    assert!((g.scalar(opposite) - 4.0).abs() < 1e-9);
}

#[test]
fn padding_never_changes_losses() {
    let m = tiny();
    let s = sample(&[6, 7, 8, 9], &[10, 11]);
    let short = sample(&[6], &[]);
    let padded = pad_batch(&[s.clone(), short]).samples[1].clone();
    let longer = pad_batch(&[s.clone(), sample(&[6, 7, 8, 9, 10, 11, 12, 13], &[6])]).samples[0].clone();
    assert!(longer.len() > s.len());
    for (a, b) in [(&s, &longer), (&sample(&[6], &[]), &padded)] {
        let ea = masked(a, &[1]);
        let eb = masked(b, &[1]);
        let mut g = Graph::new(&m.params);
        let la = pretrain_loss(&m, &mut g, &ea).unwrap().1;
        let lb = pretrain_loss(&m, &mut g, &eb).unwrap().1;
        assert_eq!(la, lb);
        assert_eq!(m.embed(a, EmbedMode::Finetuned).unwrap(), m.embed(b, EmbedMode::Finetuned).unwrap());
        assert_eq!(m.embed(a, EmbedMode::Intrinsic).unwrap(), m.embed(b, EmbedMode::Intrinsic).unwrap());
    }
}

#[test]
fn attention_rows_are_distributions() {
    let m = tiny();
    let mut s = sample(&[6, 7, 8], &[9]);
    s.attention_mask[4] = 0;
    let mut g = Graph::new(&m.params);
    let h = m.forward(&mut g, &s).unwrap();
    let n = s.len();
    let q = g.constant(Tensor::from_vec(n, 2, (0..2 * n).map(|i| (i as f64 * 0.37).sin()).collect()));
    let v = g.constant(Tensor::from_vec(n, 2, vec![1.0; 2 * n]));
    let out = g.attention(q, q, v, 2, &s.attention_mask.iter().map(|x| *x != 0).collect::<Vec<_>>());
    for x in &g.value(out).data {
        assert!((x - 1.0).abs() < 1e-12);
    }
    let _ = h;
}

#[test]
fn single_token_embedding_is_its_hidden_state() {
    let m = tiny();
    let s = sample(&[6], &[]);
    let mut g = Graph::new(&m.params);
    let h = m.forward(&mut g, &s).unwrap();
    let row = g.value(h[h.len() - 2]).row(1).to_vec();
    assert_eq!(m.embed(&s, EmbedMode::Intrinsic).unwrap(), row);
    let e = m.embed(&s, EmbedMode::Finetuned).unwrap();
    assert!((strandforge_core::neural::cosine(&e, &e) - 1.0).abs() < 1e-12);
}

#[test]
fn zero_rate_leaves_parameters() {
    let mut m = tiny();
    let before = m.params.clone();
    let cfg = TrainConfig { lr: 0.0, warmup_steps: 0, grad_accum: 1, ..TrainConfig::default() };
    let mut tr = Trainer::new(&m, cfg);
    let ex = masked(&sample(&[6, 7, 8], &[9]), &[1]);
    let st = pretrain_step(&mut m, &mut tr, &[ex]).unwrap();
    assert!(st.updated);
    assert_eq!(m.params, before);
}

#[test]
fn accumulation_matches_large_batch() {
    let data: Vec<PretrainExample> = (0..32u32)
        .map(|i| {
            let s = sample(&[6 + i % 7, 6 + (i * 3) % 8, 8], &[6 + (i * 5) % 8]);
            let mut e = masked(&s, &[1 + (i as usize % 3)]);
            e.ssm_label = (i % 2) as u8;
            e
        })
        .collect();
    let base = tiny();
    let mut a = base.clone();
    let mut ta = Trainer::new(&a, TrainConfig { lr: 1e-2, warmup_steps: 0, grad_accum: 1, ..TrainConfig::default() });
    pretrain_step(&mut a, &mut ta, &data).unwrap();
    let mut b = base.clone();
    let mut tb = Trainer::new(&b, TrainConfig { lr: 1e-2, warmup_steps: 0, grad_accum: 2, ..TrainConfig::default() });
    assert!(!pretrain_step(&mut b, &mut tb, &data[..16]).unwrap().updated);
    assert!(pretrain_step(&mut b, &mut tb, &data[16..]).unwrap().updated);
    for (x, y) in a.params.tensors.iter().zip(&b.params.tensors) {
        for (p, q) in x.data.iter().zip(&y.data) {
            assert!((p - q).abs() < 1e-9, "{} vs {}", p, q);
        }
    }
}
