use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing backward gradients with central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Input index and flat element of the worst entry.
    pub worst: (usize, usize),
    pub n_checked: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Entries whose gradients are both below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

fn eval<F>(f: &F, inputs: &[Tensor], backward: bool) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(Error::invalid("grad_check needs a scalar-valued closure"));
    }
    let y = g.value(out).data[0];
    if !backward {
        return Ok((y, Vec::new()));
    }
    g.backward(out)?;
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    Ok((y, grads))
}

/// Compare the gradient of the scalar closure `f` with respect to every
/// input element against `(f(x + eps) - f(x - eps)) / 2 eps`. The error of
/// an entry is `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let (_, analytic) = eval(&f, inputs, true)?;
    let mut work = inputs.to_vec();
    let mut max_rel_err = 0.0f64;
    let mut worst = (0, 0);
    let mut n_checked = 0;
    for i in 0..inputs.len() {
        for e in 0..inputs[i].len() {
            let x0 = inputs[i].data[e];
            work[i].data[e] = x0 + eps;
            let (fp, _) = eval(&f, &work, false)?;
            work[i].data[e] = x0 - eps;
            let (fm, _) = eval(&f, &work, false)?;
            work[i].data[e] = x0;
            let num = (fp - fm) / (2.0 * eps);
            let a = analytic[i][e];
            let err = (a - num).abs() / a.abs().max(num.abs()).max(REL_FLOOR);
            if !(err <= max_rel_err) {
                max_rel_err = err;
                worst = (i, e);
            }
            n_checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_err,
        worst,
        n_checked,
        tol,
        pass: max_rel_err < tol,
    })
}

/// Step and tolerance of the single-op checks.
pub const OP_EPS: f64 = 1e-5;
pub const OP_TOL: f64 = 1e-4;

fn rand_t(rng: &mut rand_chacha::ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    use rand::Rng;
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
}

type OpFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// Gradient check of every differentiable op on random inputs, each
/// scalarised by a weighted mean with fixed random weights.
pub fn op_suite(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let r = |rng: &mut rand_chacha::ChaCha8Rng, s: &[usize]| rand_t(rng, s, -1.0, 1.0);
    let a = r(&mut rng, &[3, 4]);
    let b = r(&mut rng, &[4, 5]);
    let c = r(&mut rng, &[3, 4]);
    let row = r(&mut rng, &[4]);
    let cases: Vec<(&str, OpFn, Vec<Tensor>)> = vec![
        ("matmul", Box::new(|g, v| g.matmul(v[0], v[1])), vec![a.clone(), b.clone()]),
        ("add_row", Box::new(|g, v| g.add_row(v[0], v[1])), vec![a.clone(), row.clone()]),
        ("mul_row", Box::new(|g, v| g.mul_row(v[0], v[1])), vec![a.clone(), row.clone()]),
        ("add", Box::new(|g, v| g.add(v[0], v[1])), vec![a.clone(), c.clone()]),
        ("sub", Box::new(|g, v| g.sub(v[0], v[1])), vec![a.clone(), c.clone()]),
        ("mul", Box::new(|g, v| g.mul(v[0], v[1])), vec![a.clone(), c.clone()]),
        ("affine", Box::new(|g, v| Ok(g.affine(v[0], -1.7, 0.3))), vec![a.clone()]),
        ("relu", Box::new(|g, v| Ok(g.relu(v[0]))), vec![a.clone()]),
        ("layer_norm", Box::new(|g, v| Ok(g.layer_norm(v[0]))), vec![a.clone()]),
        ("softmax", Box::new(|g, v| Ok(g.softmax(v[0]))), vec![a.clone()]),
        ("max_pool", Box::new(|g, v| g.max_pool(v[0], 3)), vec![r(&mut rng, &[6, 4])]),
        ("concat_cols", Box::new(|g, v| g.concat_cols(&[v[0], v[1]])), vec![a.clone(), r(&mut rng, &[3, 2])]),
        ("gather", Box::new(|g, v| g.gather(v[0], &[2, 0, 2, 1])), vec![a.clone()]),
        ("normalize_rows", Box::new(|g, v| Ok(g.normalize_rows(v[0]))), vec![a.clone()]),
        ("sum_rows", Box::new(|g, v| Ok(g.sum_rows(v[0]))), vec![a.clone()]),
        ("db", Box::new(|g, v| g.db(v[0])), vec![rand_t(&mut rng, &[3, 4], 0.2, 2.0)]),
        ("linear", Box::new(|g, v| g.linear(v[0], v[1], v[2])), vec![a.clone(), b.clone(), r(&mut rng, &[5])]),
        (
            "attention",
            Box::new(|g, v| g.attention(v[0], v[1], v[2], 3, 2)),
            vec![r(&mut rng, &[6, 4]), r(&mut rng, &[6, 4]), r(&mut rng, &[6, 4])],
        ),
    ];
    let mut out = Vec::with_capacity(cases.len());
    for (name, f, inputs) in cases {
        let report = grad_check(
            |g, v| {
                let y = f(g, v)?;
                let shape = g.value(y).shape.clone();
                let mut wr = rand_chacha::ChaCha8Rng::seed_from_u64(99);
                let w = g.leaf(rand_t(&mut wr, &shape, -1.0, 1.0));
                let p = g.mul(y, w)?;
                Ok(g.mean(p))
            },
            &inputs,
            OP_EPS,
            OP_TOL,
        )?;
        out.push((name.to_string(), report));
    }
    Ok(out)
}
