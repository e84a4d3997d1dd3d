use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::named;

/// A trainable tensor with its Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(skip)]
    pub grad: Option<Vec<f64>>,
}

/// Named parameters, ordered by name, plus the optimizer step counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub params: BTreeMap<String, Param>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let n = value.len();
        self.params.insert(
            name.to_string(),
            Param {
                value,
                m: vec![0.0; n],
                v: vec![0.0; n],
                grad: None,
            },
        );
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation seeded by
    /// `seed` and the parameter name.
    pub fn insert_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, seed: u64) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(named(seed, name));
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(
            name,
            Tensor {
                shape: shape.to_vec(),
                data,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn n_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(|p| p.grad = None);
    }

    /// Add the gradients recorded in `g` for every bound parameter.
    pub fn accumulate(&mut self, g: &Graph, bindings: &[(String, Var)]) {
        for (name, var) in bindings {
            if let (Some(p), Some(gr)) = (self.params.get_mut(name), g.grad(*var)) {
                match &mut p.grad {
                    Some(acc) => acc.iter_mut().zip(gr).for_each(|(a, b)| *a += b),
                    None => p.grad = Some(gr.to_vec()),
                }
            }
        }
    }

    /// Hex SHA-256 of all parameter values in name order.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            h.update(name.as_bytes());
            for v in &p.value.data {
                h.update(v.to_le_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }
}

/// Lazily maps parameter names to graph leaves for one forward pass.
#[derive(Debug)]
pub struct Binder<'a> {
    store: &'a ParamStore,
    vars: HashMap<String, Var>,
}

impl<'a> Binder<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Binder {
            store,
            vars: HashMap::new(),
        }
    }

    pub fn var(&mut self, g: &mut Graph, name: &str) -> Result<Var> {
        if let Some(v) = self.vars.get(name) {
            return Ok(*v);
        }
        let t = self.store.get(name)?.clone();
        let v = g.leaf(t);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Use an existing node for `name` instead of a fresh leaf.
    pub fn preset(&mut self, name: &str, var: Var) {
        self.vars.insert(name.to_string(), var);
    }

    /// Parameter-to-node bindings in name order.
    pub fn bindings(&self) -> Vec<(String, Var)> {
        let mut v: Vec<(String, Var)> = self.vars.iter().map(|(k, v)| (k.clone(), *v)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }
}

/// How the "weight decay" hyperparameter is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum WeightDecay {
    /// Learning rate multiplied by `factor` every `every` epochs.
    EpochLr { factor: f64, every: usize },
    /// Decoupled per-step decay `w -= lr * coef * w`.
    Decoupled { coef: f64 },
}

impl Default for WeightDecay {
    fn default() -> Self {
        WeightDecay::EpochLr {
            factor: 0.8,
            every: 100,
        }
    }
}

impl WeightDecay {
    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            WeightDecay::EpochLr { factor, every } if every > 0 => base * factor.powi((epoch / every) as i32),
            _ => base,
        }
    }

    pub fn step_coef(&self) -> f64 {
        match *self {
            WeightDecay::Decoupled { coef } => coef,
            _ => 0.0,
        }
    }
}

const ADAM_EPS: f64 = 1e-8;

/// One bias-corrected Adam update with decoupled decay `weight_decay`.
pub fn adam_step(store: &mut ParamStore, lr: f64, beta1: f64, beta2: f64, weight_decay: f64) -> Result<()> {
    if let Some((name, _)) = store.params.iter().find(|(_, p)| p.grad.is_none()) {
        return Err(Error::MissingGradient(name.clone()));
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for p in store.params.values_mut() {
        let g = p.grad.take().expect("checked above");
        for i in 0..g.len() {
            p.m[i] = beta1 * p.m[i] + (1.0 - beta1) * g[i];
            p.v[i] = beta2 * p.v[i] + (1.0 - beta2) * g[i] * g[i];
            let mh = p.m[i] / c1;
            let vh = p.v[i] / c2;
            let w = &mut p.value.data[i];
            *w -= lr * (mh / (vh.sqrt() + ADAM_EPS) + weight_decay * *w);
        }
    }
    Ok(())
}

pub const CHECKPOINT_FORMAT: &str = "cloudray-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointBody {
    format: String,
    version: u32,
    config_hash: String,
    config: serde_json::Value,
    store: ParamStore,
}

fn digest(body: &serde_json::Value) -> Result<String> {
    let text = serde_json::to_string(body)?;
    Ok(format!("{:x}", Sha256::digest(text.as_bytes())))
}

/// Hex SHA-256 of a serialisable configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    digest(&serde_json::to_value(cfg)?)
}

/// Write parameters, optimizer state and configuration as JSON with an
/// integrity digest.
pub fn save_checkpoint<T: Serialize>(path: &Path, store: &ParamStore, config: &T) -> Result<()> {
    let config = serde_json::to_value(config)?;
    let body = CheckpointBody {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config_hash: digest(&config)?,
        config,
        store: store.clone(),
    };
    let mut value = serde_json::to_value(&body)?;
    let sum = digest(&value)?;
    value
        .as_object_mut()
        .expect("struct serialises to an object")
        .insert("sha256".into(), sum.into());
    std::fs::write(path, serde_json::to_string(&value)?)?;
    Ok(())
}

/// Read a checkpoint, verifying format, version and digest. Returns the
/// parameters and the stored configuration.
pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let text = std::fs::read_to_string(path)?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Checkpoint("not a JSON object".into()))?;
    let sum = obj
        .remove("sha256")
        .and_then(|v| v.as_str().map(str::to_string))
        .ok_or_else(|| Error::Checkpoint("missing sha256".into()))?;
    if digest(&value)? != sum {
        return Err(Error::Checkpoint("digest mismatch".into()));
    }
    let body: CheckpointBody = serde_json::from_value(value)?;
    if body.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unknown format `{}`", body.format)));
    }
    if body.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", body.version)));
    }
    if digest(&body.config)? != body.config_hash {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    Ok((body.store, body.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grad(store: &mut ParamStore) {
        // f(w) = sum(w^2) / 2 -> grad = w.
        for p in store.params.values_mut() {
            p.grad = Some(p.value.data.clone());
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![2], vec![0.5, -1.0]).unwrap());
        s.params.get_mut("w").unwrap().grad = Some(vec![0.0, 0.0]);
        adam_step(&mut s, 0.1, 0.9, 0.999, 0.0).unwrap();
        assert_eq!(s.get("w").unwrap().data, vec![0.5, -1.0]);
    }

    #[test]
    fn descends_on_square() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0));
        s.params.get_mut("w").unwrap().grad = Some(vec![2.0]);
        adam_step(&mut s, 0.1, 0.9, 0.999, 0.0).unwrap();
        assert!(s.get("w").unwrap().data[0] < 1.0);
    }

    #[test]
    fn quadratic_converges() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap());
        for _ in 0..200 {
            quad_grad(&mut s);
            adam_step(&mut s, 0.05, 0.9, 0.999, 0.0).unwrap();
        }
        let w = &s.get("w").unwrap().data;
        let norm = (w[0] * w[0] + w[1] * w[1]).sqrt();
        assert!(norm < 1e-3, "{norm}");
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(1.0));
        assert!(matches!(adam_step(&mut s, 0.1, 0.9, 0.999, 0.0), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn lr_schedule() {
        let wd = WeightDecay::default();
        assert_eq!(wd.lr_at(1.0, 99), 1.0);
        assert!((wd.lr_at(1.0, 100) - 0.8).abs() < 1e-15);
        assert!((wd.lr_at(1.0, 250) - 0.64).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_and_tamper() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut s = ParamStore::new();
        s.insert_uniform("a.w", &[3, 2], 3, 7);
        s.step = 12;
        save_checkpoint(&path, &s, &serde_json::json!({"width": 4})).unwrap();
        let (back, cfg) = load_checkpoint(&path).unwrap();
        assert_eq!(back, s);
        assert_eq!(cfg["width"], 4);
        let text = std::fs::read_to_string(&path).unwrap().replace("\"step\":12", "\"step\":13");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
