//! Reverse-mode tape over 2-D row-major tensors.
//!
//! A [`Graph`] records every operation of one forward pass; `backward`
//! walks the tape once in reverse. Rows are samples (or set members) and
//! columns are features throughout.

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    LayerNorm(Var, Vec<f64>),
    Softmax(Var),
    MaxPool(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    Gather(Var, Vec<usize>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        seq: usize,
        heads: usize,
        probs: Vec<f64>,
    },
    Normalize(Var, Vec<f64>),
    SumRows(Var),
    Mean(Var),
    Db(Var),
    /// Backward deliberately wrong; used as a negative control.
    Corrupt(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// One forward pass and its tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    }
}

fn acc(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(v) => v.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Leaf node (input, constant or parameter).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.val(a), self.val(b));
        let (m, k) = ta.dims2();
        let (k2, n) = tb.dims2();
        if k != k2 || tb.shape.len() != 2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, false, &tb.data, false, &mut out, false);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// `x + b` with `b` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.val(x), self.val(b));
        let (m, n) = tx.dims2();
        if tb.len() != n {
            return Err(shape_err("add_row", tx, tb));
        }
        let mut out = tx.data.clone();
        for r in 0..m {
            out[r * n..(r + 1) * n].iter_mut().zip(&tb.data).for_each(|(o, b)| *o += b);
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddRow(x, b)))
    }

    /// `x * g` with `g` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        let (tx, tg) = (self.val(x), self.val(g));
        let (m, n) = tx.dims2();
        if tg.len() != n {
            return Err(shape_err("mul_row", tx, tg));
        }
        let mut out = tx.data.clone();
        for r in 0..m {
            out[r * n..(r + 1) * n].iter_mut().zip(&tg.data).for_each(|(o, g)| *o *= g);
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MulRow(x, g)))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape != tb.shape {
            return Err(shape_err(name, ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape.clone(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// `s * x + c` elementwise.
    pub fn affine(&mut self, x: Var, s: f64, c: f64) -> Var {
        let t = self.val(x);
        let data = t.data.iter().map(|v| s * v + c).collect();
        let t = Tensor {
            shape: t.shape.clone(),
            data,
        };
        self.push(t, Op::Affine(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let t = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| v.max(0.0)).collect(),
        };
        self.push(t, Op::Relu(x))
    }

    /// Row-wise standardisation (no affine part).
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let (m, n) = t.dims2();
        let mut out = t.data.clone();
        let mut rstd = Vec::with_capacity(m);
        for r in 0..m {
            let row = &mut out[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + LN_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            rstd.push(s);
        }
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        self.push(t, Op::LayerNorm(x, rstd))
    }

    /// Softmax along each row.
    pub fn softmax(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let (m, n) = t.dims2();
        let mut out = t.data.clone();
        for r in 0..m {
            softmax_in_place(&mut out[r * n..(r + 1) * n]);
        }
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        self.push(t, Op::Softmax(x))
    }

    /// Column-wise max over consecutive blocks of `k` rows: `[g*k, c] -> [g, c]`.
    /// Ties go to the first row of the block.
    pub fn max_pool(&mut self, x: Var, k: usize) -> Result<Var> {
        let t = self.val(x);
        let (m, c) = t.dims2();
        if k == 0 || m % k != 0 {
            return Err(Error::Shape {
                op: "max_pool",
                lhs: t.shape.clone(),
                rhs: vec![k],
            });
        }
        let g = m / k;
        let mut out = vec![f64::NEG_INFINITY; g * c];
        let mut arg = vec![0usize; g * c];
        for gi in 0..g {
            for r in 0..k {
                let row = gi * k + r;
                for j in 0..c {
                    let v = t.data[row * c + j];
                    if v > out[gi * c + j] {
                        out[gi * c + j] = v;
                        arg[gi * c + j] = row;
                    }
                }
            }
        }
        let t = Tensor::new(vec![g, c], out)?;
        Ok(self.push(t, Op::MaxPool(x, arg)))
    }

    /// Concatenate along columns; all inputs share the row count.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let m = self.val(xs[0]).dims2().0;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (r, c) = self.val(x).dims2();
            if r != m {
                return Err(shape_err("concat_cols", self.val(xs[0]), self.val(x)));
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let mut off = 0;
            for (&x, &w) in xs.iter().zip(&widths) {
                out[r * n + off..r * n + off + w].copy_from_slice(self.val(x).row(r));
                off += w;
            }
        }
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::ConcatCols(xs.to_vec())))
    }

    /// Rows of `x` picked by `idx` (repeats allowed).
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let t = self.val(x);
        let (m, n) = t.dims2();
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(Error::Shape {
                op: "gather",
                lhs: t.shape.clone(),
                rhs: vec![bad],
            });
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(t.row(i));
        }
        let t = Tensor::new(vec![idx.len(), n], out)?;
        Ok(self.push(t, Op::Gather(x, idx.to_vec())))
    }

    /// Scaled dot-product attention over `q, k, v: [batch*seq, d]`, split
    /// into `heads` column blocks; sequences are consecutive row blocks.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, seq: usize, heads: usize) -> Result<Var> {
        let (tq, tk, tv) = (self.val(q), self.val(k), self.val(v));
        if tq.shape != tk.shape || tq.shape != tv.shape {
            return Err(shape_err("attention", tq, tk));
        }
        let (m, d) = tq.dims2();
        if heads == 0 || d % heads != 0 || seq == 0 || m % seq != 0 {
            return Err(Error::Shape {
                op: "attention",
                lhs: tq.shape.clone(),
                rhs: vec![seq, heads],
            });
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let batch = m / seq;
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = vec![0.0; m * d];
        for b in 0..batch {
            for h in 0..heads {
                let p = &mut probs[(b * heads + h) * seq * seq..(b * heads + h + 1) * seq * seq];
                for i in 0..seq {
                    let qi = &tq.data[(b * seq + i) * d + h * dh..][..dh];
                    for j in 0..seq {
                        let kj = &tk.data[(b * seq + j) * d + h * dh..][..dh];
                        p[i * seq + j] = scale * qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>();
                    }
                    softmax_in_place(&mut p[i * seq..(i + 1) * seq]);
                    let o = &mut out[(b * seq + i) * d + h * dh..][..dh];
                    for j in 0..seq {
                        let w = p[i * seq + j];
                        let vj = &tv.data[(b * seq + j) * d + h * dh..][..dh];
                        o.iter_mut().zip(vj).for_each(|(a, b)| *a += w * b);
                    }
                }
            }
        }
        let t = Tensor::new(vec![m, d], out)?;
        Ok(self.push(
            t,
            Op::Attention {
                q,
                k,
                v,
                seq,
                heads,
                probs,
            },
        ))
    }

    /// Scale each row to unit length.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let (m, n) = t.dims2();
        let mut out = t.data.clone();
        let mut norms = Vec::with_capacity(m);
        for r in 0..m {
            let row = &mut out[r * n..(r + 1) * n];
            let s = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORM_FLOOR);
            row.iter_mut().for_each(|v| *v /= s);
            norms.push(s);
        }
        let t = Tensor {
            shape: vec![m, n],
            data: out,
        };
        self.push(t, Op::Normalize(x, norms))
    }

    /// Row sums: `[m, n] -> [m, 1]`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let (m, n) = t.dims2();
        let data = (0..m).map(|r| t.data[r * n..(r + 1) * n].iter().sum()).collect();
        self.push(
            Tensor {
                shape: vec![m, 1],
                data,
            },
            Op::SumRows(x),
        )
    }

    /// Mean of all entries, as a one-element tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.val(x);
        let v = t.data.iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(v), Op::Mean(x))
    }

    /// `10 log10(x)` elementwise; all entries must be positive.
    pub fn db(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if let Some(v) = t.data.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::invalid(format!("db of non-positive value {v}")));
        }
        let t = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|v| 10.0 * v.log10()).collect(),
        };
        Ok(self.push(t, Op::Db(x)))
    }

    /// Identity forward with a wrong backward, for testing the checker.
    pub fn corrupt(&mut self, x: Var) -> Var {
        let t = self.val(x).clone();
        self.push(t, Op::Corrupt(x))
    }

    /// `x W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    /// Gradients of the one-element node `target` with respect to all nodes.
    pub fn backward(&mut self, target: Var) -> Result<()> {
        if self.val(target).len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.val(target).shape.clone(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[target.0] = Some(vec![1.0]);
        for i in (0..=target.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let (m, k) = ta.dims2();
                let n = tb.dims2().1;
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, g, false, &tb.data, true, &mut ga, false);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, &ta.data, true, g, false, &mut gb, false);
                acc(&mut grads[a.0], &ga);
                acc(&mut grads[b.0], &gb);
            }
            Op::AddRow(x, b) => {
                let n = self.val(*b).len();
                let mut gb = vec![0.0; n];
                for r in g.chunks(n) {
                    gb.iter_mut().zip(r).for_each(|(a, b)| *a += b);
                }
                acc(&mut grads[x.0], g);
                acc(&mut grads[b.0], &gb);
            }
            Op::MulRow(x, gv) => {
                let (tx, tg) = (self.val(*x), self.val(*gv));
                let n = tg.len();
                let mut gx = g.to_vec();
                let mut gg = vec![0.0; n];
                for (gr, xr) in gx.chunks_mut(n).zip(tx.data.chunks(n)) {
                    for j in 0..n {
                        gg[j] += gr[j] * xr[j];
                        gr[j] *= tg.data[j];
                    }
                }
                acc(&mut grads[x.0], &gx);
                acc(&mut grads[gv.0], &gg);
            }
            Op::Add(a, b) => {
                acc(&mut grads[a.0], g);
                acc(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                acc(&mut grads[a.0], g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                acc(&mut grads[b.0], &neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.val(*a), self.val(*b));
                let ga: Vec<f64> = g.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
                let gb: Vec<f64> = g.iter().zip(&ta.data).map(|(x, y)| x * y).collect();
                acc(&mut grads[a.0], &ga);
                acc(&mut grads[b.0], &gb);
            }
            Op::Affine(x, s) => {
                let gx: Vec<f64> = g.iter().map(|v| v * s).collect();
                acc(&mut grads[x.0], &gx);
            }
            Op::Relu(x) => {
                let tx = self.val(*x);
                let gx: Vec<f64> = g
                    .iter()
                    .zip(&tx.data)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(&mut grads[x.0], &gx);
            }
            Op::LayerNorm(x, rstd) => {
                let (_, n) = y.dims2();
                let mut gx = vec![0.0; g.len()];
                for (r, s) in rstd.iter().enumerate() {
                    let gy = &g[r * n..(r + 1) * n];
                    let yy = &y.data[r * n..(r + 1) * n];
                    let mg = gy.iter().sum::<f64>() / n as f64;
                    let mgy = gy.iter().zip(yy).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        gx[r * n + j] = s * (gy[j] - mg - yy[j] * mgy);
                    }
                }
                acc(&mut grads[x.0], &gx);
            }
            Op::Softmax(x) => {
                let (_, n) = y.dims2();
                let mut gx = vec![0.0; g.len()];
                for (r, (gy, yy)) in g.chunks(n).zip(y.data.chunks(n)).enumerate() {
                    let dot: f64 = gy.iter().zip(yy).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[r * n + j] = yy[j] * (gy[j] - dot);
                    }
                }
                acc(&mut grads[x.0], &gx);
            }
            Op::MaxPool(x, arg) => {
                let tx = self.val(*x);
                let c = y.dims2().1;
                let mut gx = vec![0.0; tx.len()];
                for (o, &row) in arg.iter().enumerate() {
                    gx[row * c + o % c] += g[o];
                }
                acc(&mut grads[x.0], &gx);
            }
            Op::ConcatCols(xs) => {
                let (m, n) = y.dims2();
                let mut off = 0;
                for x in xs {
                    let w = self.val(*x).dims2().1;
                    let mut gx = vec![0.0; m * w];
                    for r in 0..m {
                        gx[r * w..(r + 1) * w].copy_from_slice(&g[r * n + off..r * n + off + w]);
                    }
                    acc(&mut grads[x.0], &gx);
                    off += w;
                }
            }
            Op::Gather(x, idx) => {
                let tx = self.val(*x);
                let n = tx.dims2().1;
                let mut gx = vec![0.0; tx.len()];
                for (r, &i) in idx.iter().enumerate() {
                    gx[i * n..(i + 1) * n]
                        .iter_mut()
                        .zip(&g[r * n..(r + 1) * n])
                        .for_each(|(a, b)| *a += b);
                }
                acc(&mut grads[x.0], &gx);
            }
            Op::Attention {
                q,
                k,
                v,
                seq,
                heads,
                probs,
            } => {
                let (tq, tk, tv) = (self.val(*q), self.val(*k), self.val(*v));
                let (m, d) = tq.dims2();
                let (seq, heads) = (*seq, *heads);
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let mut gq = vec![0.0; m * d];
                let mut gk = vec![0.0; m * d];
                let mut gv = vec![0.0; m * d];
                let mut dp = vec![0.0; seq];
                for b in 0..m / seq {
                    for h in 0..heads {
                        let p = &probs[(b * heads + h) * seq * seq..][..seq * seq];
                        for i in 0..seq {
                            let go = &g[(b * seq + i) * d + h * dh..][..dh];
                            for j in 0..seq {
                                let vj = &tv.data[(b * seq + j) * d + h * dh..][..dh];
                                dp[j] = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                                let w = p[i * seq + j];
                                let gvj = &mut gv[(b * seq + j) * d + h * dh..][..dh];
                                gvj.iter_mut().zip(go).for_each(|(a, b)| *a += w * b);
                            }
                            let dot: f64 = (0..seq).map(|j| dp[j] * p[i * seq + j]).sum();
                            for j in 0..seq {
                                let ds = p[i * seq + j] * (dp[j] - dot) * scale;
                                let qi = (b * seq + i) * d + h * dh;
                                let kj = (b * seq + j) * d + h * dh;
                                for t in 0..dh {
                                    gq[qi + t] += ds * tk.data[kj + t];
                                    gk[kj + t] += ds * tq.data[qi + t];
                                }
                            }
                        }
                    }
                }
                acc(&mut grads[q.0], &gq);
                acc(&mut grads[k.0], &gk);
                acc(&mut grads[v.0], &gv);
            }
            Op::Normalize(x, norms) => {
                let (_, n) = y.dims2();
                let mut gx = vec![0.0; g.len()];
                for (r, s) in norms.iter().enumerate() {
                    let gy = &g[r * n..(r + 1) * n];
                    let yy = &y.data[r * n..(r + 1) * n];
                    let dot: f64 = gy.iter().zip(yy).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        gx[r * n + j] = (gy[j] - yy[j] * dot) / s;
                    }
                }
                acc(&mut grads[x.0], &gx);
            }
            Op::SumRows(x) => {
                let n = self.val(*x).dims2().1;
                let gx: Vec<f64> = g.iter().flat_map(|v| std::iter::repeat(*v).take(n)).collect();
                acc(&mut grads[x.0], &gx);
            }
            Op::Mean(x) => {
                let len = self.val(*x).len().max(1);
                acc(&mut grads[x.0], &vec![g[0] / len as f64; len]);
            }
            Op::Db(x) => {
                let tx = self.val(*x);
                let c = 10.0 / std::f64::consts::LN_10;
                let gx: Vec<f64> = g.iter().zip(&tx.data).map(|(gv, xv)| gv * c / xv).collect();
                acc(&mut grads[x.0], &gx);
            }
            Op::Corrupt(x) => {
                let gx: Vec<f64> = g.iter().map(|v| 1.5 * v).collect();
                acc(&mut grads[x.0], &gx);
            }
        }
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}
