use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{Binder, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Fully connected layer `x W + b` with `W: [in, out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub name: String,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, seed: u64) -> Self {
        store.insert_uniform(&format!("{name}.w"), &[d_in, d_out], d_in, seed);
        store.insert_uniform(&format!("{name}.b"), &[d_out], d_in, seed);
        Linear {
            name: name.to_string(),
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, x: Var) -> Result<Var> {
        let w = p.var(g, &format!("{}.w", self.name))?;
        let b = p.var(g, &format!("{}.b", self.name))?;
        g.linear(x, w, b)
    }
}

/// Row standardisation followed by a learned per-feature scale and shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub name: String,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        store.insert(&format!("{name}.gamma"), Tensor::new(vec![d], vec![1.0; d]).expect("shape"));
        store.insert(&format!("{name}.beta"), Tensor::zeros(&[d]));
        LayerNorm { name: name.to_string() }
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, x: Var) -> Result<Var> {
        let gamma = p.var(g, &format!("{}.gamma", self.name))?;
        let beta = p.var(g, &format!("{}.beta", self.name))?;
        let n = g.layer_norm(x);
        let s = g.mul_row(n, gamma)?;
        g.add_row(s, beta)
    }
}

/// Stack of linear layers with ReLU between them. The last layer is linear
/// unless `relu_last` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub relu_last: bool,
}

impl Mlp {
    /// `widths` lists every layer width including the input.
    pub fn new(store: &mut ParamStore, name: &str, widths: &[usize], relu_last: bool, seed: u64) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], seed))
            .collect();
        Mlp { layers, relu_last }
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.d_out)
    }

    pub fn forward(&self, g: &mut Graph, p: &mut Binder, mut x: Var) -> Result<Var> {
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(g, p, x)?;
            if i + 1 < n || self.relu_last {
                x = g.relu(x);
            }
        }
        Ok(x)
    }
}

/// Pre-norm transformer block:
/// `h' = h + MHA(LN h)`, `h'' = h' + FFN(LN h')`,
/// with `FFN = Linear(d, 2d) -> ReLU -> Linear(2d, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerLayer {
    pub d: usize,
    pub heads: usize,
    ln1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl TransformerLayer {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, seed: u64) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::invalid(format!("feature dim {d} not divisible by {heads} heads")));
        }
        Ok(TransformerLayer {
            d,
            heads,
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d),
            wq: Linear::new(store, &format!("{name}.wq"), d, d, seed),
            wk: Linear::new(store, &format!("{name}.wk"), d, d, seed),
            wv: Linear::new(store, &format!("{name}.wv"), d, d, seed),
            wo: Linear::new(store, &format!("{name}.wo"), d, d, seed),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d),
            ff1: Linear::new(store, &format!("{name}.ff1"), d, 2 * d, seed),
            ff2: Linear::new(store, &format!("{name}.ff2"), 2 * d, d, seed),
        })
    }

    /// `x: [batch * seq, d]`; attention runs within each block of `seq` rows.
    pub fn forward(&self, g: &mut Graph, p: &mut Binder, x: Var, seq: usize) -> Result<Var> {
        let n = self.ln1.forward(g, p, x)?;
        let q = self.wq.forward(g, p, n)?;
        let k = self.wk.forward(g, p, n)?;
        let v = self.wv.forward(g, p, n)?;
        let a = g.attention(q, k, v, seq, self.heads)?;
        let a = self.wo.forward(g, p, a)?;
        let h = g.add(x, a)?;
        let n = self.ln2.forward(g, p, h)?;
        let f = self.ff1.forward(g, p, n)?;
        let f = g.relu(f);
        let f = self.ff2.forward(g, p, f)?;
        g.add(h, f)
    }
}

/// Apply one pre-norm self-attention block to `x: [batch * seq, d]`.
pub fn multi_head_attention(
    g: &mut Graph,
    p: &mut Binder,
    layer: &TransformerLayer,
    x: Var,
    seq: usize,
) -> Result<Var> {
    layer.forward(g, p, x, seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indivisible_heads_rejected() {
        let mut s = ParamStore::new();
        assert!(TransformerLayer::new(&mut s, "t", 6, 4, 0).is_err());
    }

    #[test]
    fn mlp_widths() {
        let mut s = ParamStore::new();
        let m = Mlp::new(&mut s, "m", &[3, 5, 2], false, 1);
        assert_eq!(m.d_out(), 2);
        assert_eq!(s.n_values(), 3 * 5 + 5 + 5 * 2 + 2);
    }
}
