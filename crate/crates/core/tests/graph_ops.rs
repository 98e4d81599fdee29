use strandforge_core::neural::{Graph, ParamStore, Tensor, Var};

fn store() -> ParamStore<f64> {
    let mut p = ParamStore::default();
    let n = 4 * 6;
    p.add("x", Tensor::from_vec(4, 6, (0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect()));
    p.add("y", Tensor::from_vec(4, 6, (0..n).map(|i| ((i * 5 % 13) as f64 - 6.0) * 0.2).collect()));
    p.add("g", Tensor::from_vec(1, 6, vec![1.1, 0.9, 1.3, 0.7, 1.0, 1.2]));
    p.add("b", Tensor::from_vec(1, 6, vec![0.1, -0.2, 0.3, 0.0, 0.05, -0.1]));
    p
}

fn reduce(g: &mut Graph<'_, f64>, v: Var) -> Var {
    let (r, c) = g.value(v).shape();
    let w = g.constant(Tensor::from_vec(c, 1, (0..c).map(|i| i as f64 * 0.5 - 1.0).collect()));
    let y = g.matmul(v, w);
    let ones = g.constant(Tensor::from_vec(1, r, (0..r).map(|i| 1.0 + i as f64 * 0.25).collect()));
    g.matmul(ones, y)
}

fn check(name: &str, f: &dyn for<'a> Fn(&mut Graph<'a, f64>) -> Var) {
    let mut p = store();
    let mut grads = p.zero_grads();
    {
        let mut g = Graph::new(&p);
        let v = f(&mut g);
        let r = reduce(&mut g, v);
        g.backward(r, 1.0, &mut grads);
    }
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for t in 0..p.tensors.len() {
        for j in 0..p.tensors[t].data.len() {
            let o = p.tensors[t].data[j];
            let val = |p: &ParamStore<f64>| {
                let mut g = Graph::new(p);
                let v = f(&mut g);
                let r = reduce(&mut g, v);
                g.scalar(r)
            };
            p.tensors[t].data[j] = o + h;
            let up = val(&p);
            p.tensors[t].data[j] = o - h;
            let dn = val(&p);
            p.tensors[t].data[j] = o;
            let num = (up - dn) / (2.0 * h);
            let a = grads[t].data[j];
            worst = worst.max((a - num).abs() / a.abs().max(num.abs()).max(1e-6));
        }
    }
    assert!(worst < 1e-5, "{}: {}", name, worst);
}

#[test]
fn each_op_differentiates() {
    check("gelu", &|g| {
        let x = g.param(0);
        g.gelu(x)
    });
    check("layer_norm", &|g| {
        let (x, a, b) = (g.param(0), g.param(2), g.param(3));
        g.layer_norm(x, a, b)
    });
    check("attention", &|g| {
        let (x, y) = (g.param(0), g.param(1));
        g.attention(x, y, x, 2, &[true, true, false, true])
    });
    check("matmul+bias", &|g| {
        let (x, y, b) = (g.param(0), g.param(1), g.param(3));
        let w = g.constant(Tensor::from_vec(6, 4, (0..24).map(|i| (i % 5) as f64 * 0.1 - 0.2).collect()));
        let m = g.matmul(x, w);
        let m2 = g.matmul(m, y);
        g.add_row(m2, b)
    });
    check("cross_entropy", &|g| {
        let x = g.param(0);
        g.cross_entropy(x, &[1, 5, 0, 3])
    });
    check("bce", &|g| {
        let x = g.param(0);
        let c = g.rows(x, &[0, 2]);
        let w = g.constant(Tensor::from_vec(6, 1, vec![0.3; 6]));
        let l = g.matmul(c, w);
        g.bce(l, &[1.0, 0.0])
    });
    check("cosine", &|g| {
        let (x, y) = (g.param(0), g.param(1));
        let a = g.mean_rows(x, &[0, 1, 3]);
        let b = g.rows(y, &[2]);
        let c = g.cosine(a, b);
        g.squared_error(c, -1.0)
    });
}
