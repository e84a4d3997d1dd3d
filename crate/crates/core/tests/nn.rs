use cloudray::nn::{
    adam_step, grad_check, Binder, Graph, Mlp, ParamStore, Tensor, TransformerLayer, Var,
};
use cloudray::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn pos_t(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.2..2.0)).collect()).unwrap()
}

/// Weighted mean with fixed pseudo-random weights, so every output entry
/// contributes a distinct gradient.
fn scalarize(g: &mut Graph, y: Var) -> Result<Var> {
    let t = g.value(y).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = rand_t(&mut rng, &t.shape);
    let w = g.leaf(w);
    let p = g.mul(y, w)?;
    Ok(g.mean(p))
}

fn check<F>(name: &str, f: F, inputs: &[Tensor])
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let r = grad_check(|g, v| {
        let y = f(g, v)?;
        scalarize(g, y)
    }, inputs, EPS, TOL)
    .unwrap();
    assert!(r.pass, "{name}: {r:?}");
}

#[test]
fn every_op_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_t(&mut rng, &[3, 4]);
    let b = rand_t(&mut rng, &[4, 5]);
    let c = rand_t(&mut rng, &[3, 4]);
    let row = rand_t(&mut rng, &[4]);
    check("matmul", |g, v| g.matmul(v[0], v[1]), &[a.clone(), b.clone()]);
    check("add_row", |g, v| g.add_row(v[0], v[1]), &[a.clone(), row.clone()]);
    check("mul_row", |g, v| g.mul_row(v[0], v[1]), &[a.clone(), row.clone()]);
    check("add", |g, v| g.add(v[0], v[1]), &[a.clone(), c.clone()]);
    check("sub", |g, v| g.sub(v[0], v[1]), &[a.clone(), c.clone()]);
    check("mul", |g, v| g.mul(v[0], v[1]), &[a.clone(), c.clone()]);
    check("affine", |g, v| Ok(g.affine(v[0], -1.7, 0.3)), &[a.clone()]);
    check("relu", |g, v| Ok(g.relu(v[0])), &[a.clone()]);
    check("layer_norm", |g, v| Ok(g.layer_norm(v[0])), &[a.clone()]);
    check("softmax", |g, v| Ok(g.softmax(v[0])), &[a.clone()]);
    check("max_pool", |g, v| g.max_pool(v[0], 3), &[rand_t(&mut rng, &[6, 4])]);
    check("concat", |g, v| g.concat_cols(&[v[0], v[1]]), &[a.clone(), rand_t(&mut rng, &[3, 2])]);
    check("gather", |g, v| g.gather(v[0], &[2, 0, 2, 1]), &[a.clone()]);
    check("normalize", |g, v| Ok(g.normalize_rows(v[0])), &[a.clone()]);
    check("sum_rows", |g, v| Ok(g.sum_rows(v[0])), &[a.clone()]);
    check("db", |g, v| g.db(v[0]), &[pos_t(&mut rng, &[3, 4])]);
    check("linear", |g, v| g.linear(v[0], v[1], v[2]), &[a.clone(), b.clone(), rand_t(&mut rng, &[5])]);
    let q = rand_t(&mut rng, &[6, 4]);
    let k = rand_t(&mut rng, &[6, 4]);
    let vv = rand_t(&mut rng, &[6, 4]);
    check("attention", |g, v| g.attention(v[0], v[1], v[2], 3, 2), &[q, k, vv]);
}

#[test]
fn library_op_suite_passes() {
    let suite = cloudray::nn::op_suite(3).unwrap();
    assert!(suite.len() >= 18);
    for (name, r) in suite {
        assert!(r.pass, "{name}: {r:?}");
    }
}

#[test]
fn linear_layer_passes_and_corrupted_backward_fails() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_t(&mut rng, &[4, 3]);
    let w = rand_t(&mut rng, &[3, 2]);
    let b = rand_t(&mut rng, &[2]);
    let ok = grad_check(
        |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            scalarize(g, y)
        },
        &[x.clone(), w.clone(), b.clone()],
        EPS,
        TOL,
    )
    .unwrap();
    assert!(ok.pass, "{ok:?}");
    let bad = grad_check(
        |g, v| {
            let y = g.linear(v[0], v[1], v[2])?;
            let y = g.corrupt(y);
            scalarize(g, y)
        },
        &[x, w, b],
        EPS,
        TOL,
    )
    .unwrap();
    assert!(!bad.pass, "{bad:?}");
}

fn block_inputs(seed: u64, d: usize, rows: usize) -> (ParamStore, TransformerLayer, Tensor) {
    let mut store = ParamStore::new();
    let layer = TransformerLayer::new(&mut store, "t", d, 2, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
    (store, layer, rand_t(&mut rng, &[rows, d]))
}

#[test]
fn transformer_block_gradients() {
    let (store, layer, x) = block_inputs(3, 4, 6);
    let names: Vec<String> = store.params.keys().cloned().collect();
    let mut inputs = vec![x];
    inputs.extend(names.iter().map(|n| store.get(n).unwrap().clone()));
    let r = grad_check(
        |g, v| {
            let empty = ParamStore::new();
            let mut p = Binder::new(&empty);
            let y = forward_with_leaves(g, &mut p, &layer, v, &names)?;
            scalarize(g, y)
        },
        &inputs,
        EPS,
        1e-3,
    )
    .unwrap();
    assert!(r.pass, "{r:?}");
}

/// Forward through `layer` using the checker's leaves as parameters.
fn forward_with_leaves(
    g: &mut Graph,
    p: &mut Binder,
    layer: &TransformerLayer,
    v: &[Var],
    names: &[String],
) -> Result<Var> {
    for (n, var) in names.iter().zip(&v[1..]) {
        p.preset(n, *var);
    }
    layer.forward(g, p, v[0], 3)
}

#[test]
fn sequence_of_one_attends_to_itself() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::new();
    let q = g.leaf(rand_t(&mut rng, &[5, 4]));
    let k = g.leaf(rand_t(&mut rng, &[5, 4]));
    let v = rand_t(&mut rng, &[5, 4]);
    let vv = g.leaf(v.clone());
    let out = g.attention(q, k, vv, 1, 2).unwrap();
    assert_eq!(g.value(out).data, v.data);
}

#[test]
fn block_is_permutation_equivariant() {
    let (store, layer, x) = block_inputs(5, 4, 4);
    let perm = [2usize, 0, 3, 1];
    let run = |x: Tensor| {
        let mut g = Graph::new();
        let mut p = Binder::new(&store);
        let xv = g.leaf(x);
        let y = layer.forward(&mut g, &mut p, xv, 4).unwrap();
        g.value(y).clone()
    };
    let y = run(x.clone());
    let xp = Tensor::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let yp = run(xp);
    for (r, &i) in perm.iter().enumerate() {
        for (a, b) in yp.row(r).iter().zip(y.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_is_bitwise_deterministic() {
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 16, 2], false, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = rand_t(&mut rng, &[10, 3]);
    let run = || {
        let mut g = Graph::new();
        let mut p = Binder::new(&store);
        let xv = g.leaf(x.clone());
        let y = mlp.forward(&mut g, &mut p, xv).unwrap();
        g.value(y).data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn adam_reaches_quadratic_minimum() {
    // f(w) = |w|^2 through the graph, so gradients come from backward.
    let mut store = ParamStore::new();
    store.insert("w", Tensor::new(vec![1, 2], vec![0.8, -1.5]).unwrap());
    for _ in 0..200 {
        let mut g = Graph::new();
        let mut p = Binder::new(&store);
        let w = p.var(&mut g, "w").unwrap();
        let sq = g.mul(w, w).unwrap();
        let f = g.sum_rows(sq);
        g.backward(f).unwrap();
        let bindings = p.bindings();
        store.zero_grad();
        store.accumulate(&g, &bindings);
        adam_step(&mut store, 0.05, 0.9, 0.999, 0.0).unwrap();
    }
    let w = &store.get("w").unwrap().data;
    assert!(w.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-3, "{w:?}");
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.leaf(Tensor::zeros(&[2, 3]));
    let b = g.leaf(Tensor::zeros(&[2, 3]));
    let msg = g.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.matches("[2, 3]").count() == 2, "{msg}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn softmax_rows_sum_to_one(m in 1usize..8, n in 1usize..64, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = Graph::new();
        let t = Tensor::new(vec![m, n], (0..m * n).map(|_| rng.gen_range(-30.0..30.0)).collect()).unwrap();
        let x = g.leaf(t);
        let s = g.softmax(x);
        for r in 0..m {
            let sum: f64 = g.value(s).row(r).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn random_shape_matmul_gradients(m in 1usize..8, k in 1usize..8, n in 1usize..8, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&mut rng, &[m, k]);
        let b = rand_t(&mut rng, &[k, n]);
        let r = grad_check(|g, v| { let y = g.matmul(v[0], v[1])?; scalarize(g, y) }, &[a, b], EPS, TOL).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn random_shape_layer_norm_gradients(m in 1usize..6, n in 2usize..16, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rand_t(&mut rng, &[m, n]);
        let r = grad_check(|g, v| { let y = g.layer_norm(v[0]); scalarize(g, y) }, &[a], EPS, TOL).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }
}
