use std::path::Path;

use super::encoder::CropPlan;
use super::{posenc, LossWeights, Mechanism, SurrogateConfig};
use crate::em::{Material, PolAmp};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::nn::{load_checkpoint, save_checkpoint, Binder, Graph, Linear, Mlp, ParamStore, Tensor, TransformerLayer, Var};
use crate::seed::mix;

/// Scaled material parameters `(log10(1 + sigma) / 7, eps_r / 10, S, K_x)`.
pub fn material_input(m: &Material) -> [f64; 4] {
    [(1.0 + m.sigma).log10() / 7.0, m.eps_r / 10.0, m.s, m.k_x]
}

/// Network inputs for a batch of interactions.
#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub plans: Vec<&'a CropPlan>,
    pub d_in: Vec<Vec3>,
    pub d_out: Vec<Vec3>,
    pub bounce: Vec<usize>,
    pub material: Vec<[f64; 4]>,
}

impl Batch<'_> {
    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }
}

/// Encoder, direction predictor and amplitude predictor for one mechanism.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub config: SurrogateConfig,
    pub mechanism: Mechanism,
    pub store: ParamStore,
    sa_mlps: Vec<Mlp>,
    env: Mlp,
    dir_in: Linear,
    layers: Vec<TransformerLayer>,
    head: Linear,
    mat: Option<Linear>,
    amp: Mlp,
}

fn dir_rows(ds: &[Vec3], k: usize) -> Tensor {
    let rows: Vec<Vec<f64>> = ds
        .iter()
        .map(|d| {
            let mut r = vec![d.x, d.y, d.z];
            r.extend(posenc(d, k));
            r
        })
        .collect();
    Tensor::from_rows(&rows).expect("equal widths")
}

impl SurrogateModel {
    pub fn new(config: SurrogateConfig, mechanism: Mechanism) -> Result<Self> {
        config.validate()?;
        let seed = mix(config.seed, &[mechanism as u64]);
        let mut s = ParamStore::new();
        let mut sa_mlps = Vec::new();
        let mut prev = 0;
        for (i, l) in config.sa.iter().enumerate() {
            sa_mlps.push(Mlp::new(&mut s, &format!("enc.sa{i}"), &[3 + prev, l.width, l.width], true, seed));
            prev = l.width;
        }
        let env = Mlp::new(&mut s, "enc.out", &[prev, config.d_env, config.d_env], false, seed);
        let pe = 3 + 6 * config.posenc_k;
        let width = config.width();
        let dir_in = Linear::new(&mut s, "dir.in", pe, config.dir_emb, seed);
        s.insert_uniform("dir.pos", &[config.max_bounces, width], width, seed);
        let layers = (0..config.n_layers)
            .map(|i| TransformerLayer::new(&mut s, &format!("dir.layer{i}"), width, config.heads, seed))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut s, "dir.head", width, 3, seed);
        let mat = config
            .use_material
            .then(|| Linear::new(&mut s, "amp.mat", 4, config.mat_emb, seed));
        let amp_in = 2 * pe + config.d_env + if config.use_material { config.mat_emb } else { 0 };
        let mut widths = vec![amp_in];
        widths.extend(&config.amp_widths);
        let amp = Mlp::new(&mut s, "amp.mlp", &widths, false, seed);
        Ok(SurrogateModel {
            config,
            mechanism,
            store: s,
            sa_mlps,
            env,
            dir_in,
            layers,
            head,
            mat,
            amp,
        })
    }

    /// Scene features `[batch, d_env]`.
    pub fn encode(&self, g: &mut Graph, p: &mut Binder, plans: &[&CropPlan]) -> Result<Var> {
        let b = plans.len();
        if b == 0 {
            return Err(Error::EmptyDataset);
        }
        let mut feat: Option<Var> = None;
        let mut prev_n = 0;
        for (li, lvl) in self.config.sa.iter().enumerate() {
            let rows = lvl.n * lvl.k;
            let mut offs = Vec::with_capacity(b * rows * 3);
            let mut idx = Vec::with_capacity(b * rows);
            for (bi, plan) in plans.iter().enumerate() {
                let lp = plan
                    .levels
                    .get(li)
                    .filter(|lp| lp.n == lvl.n && lp.k == lvl.k)
                    .ok_or_else(|| Error::invalid("crop plan does not match the encoder levels"))?;
                offs.extend_from_slice(&lp.offsets);
                idx.extend(lp.members.iter().map(|m| bi * prev_n + m));
            }
            let o = g.leaf(Tensor::new(vec![b * rows, 3], offs)?);
            let x = match feat {
                None => o,
                Some(f) => {
                    let gathered = g.gather(f, &idx)?;
                    g.concat_cols(&[o, gathered])?
                }
            };
            let h = self.sa_mlps[li].forward(g, p, x)?;
            feat = Some(g.max_pool(h, lvl.k)?);
            prev_n = lvl.n;
        }
        let pooled = g.max_pool(feat.expect("at least one level"), prev_n)?;
        self.env.forward(g, p, pooled)
    }

    /// Unit outgoing directions `[batch, 3]`.
    pub fn direction(&self, g: &mut Graph, p: &mut Binder, feat: Var, d_in: &[Vec3], bounce: &[usize]) -> Result<Var> {
        let x = g.leaf(dir_rows(d_in, self.config.posenc_k));
        let e = self.dir_in.forward(g, p, x)?;
        let mut h = g.concat_cols(&[e, feat])?;
        let pos = p.var(g, "dir.pos")?;
        let last = self.config.max_bounces - 1;
        let idx: Vec<usize> = bounce.iter().map(|b| (*b).min(last)).collect();
        let pe = g.gather(pos, &idx)?;
        h = g.add(h, pe)?;
        for l in &self.layers {
            h = l.forward(g, p, h, 1)?;
        }
        let raw = self.head.forward(g, p, h)?;
        Ok(g.normalize_rows(raw))
    }

    /// Interaction matrices as 8 reals per row `[batch, 8]`.
    pub fn amplitude(
        &self,
        g: &mut Graph,
        p: &mut Binder,
        feat: Var,
        d_in: &[Vec3],
        d_out: &[Vec3],
        material: &[[f64; 4]],
    ) -> Result<Var> {
        let k = self.config.posenc_k;
        let a = g.leaf(dir_rows(d_in, k));
        let b = g.leaf(dir_rows(d_out, k));
        let mut parts = vec![a, b, feat];
        if let Some(mat) = &self.mat {
            let rows: Vec<Vec<f64>> = material.iter().map(|m| m.to_vec()).collect();
            let m = g.leaf(Tensor::from_rows(&rows)?);
            let e = mat.forward(g, p, m)?;
            parts.push(g.relu(e));
        }
        let x = g.concat_cols(&parts)?;
        self.amp.forward(g, p, x)
    }

    /// Weighted training loss of a batch. Returns the total node and the
    /// direction and amplitude terms.
    pub fn loss(
        &self,
        g: &mut Graph,
        p: &mut Binder,
        batch: &Batch,
        truth_dir: &[Vec3],
        truth_amp: &[[f64; 8]],
        w: LossWeights,
    ) -> Result<(Var, f64, f64)> {
        let n = batch.len();
        if truth_dir.len() != n || truth_amp.len() != n {
            return Err(Error::invalid("labels do not match the batch"));
        }
        let feat = self.encode(g, p, &batch.plans)?;
        let dir = self.direction(g, p, feat, &batch.d_in, &batch.bounce)?;
        let t = g.leaf(Tensor::from_rows(&truth_dir.iter().map(|d| vec![d.x, d.y, d.z]).collect::<Vec<_>>())?);
        let t = g.normalize_rows(t);
        let c = g.mul(dir, t)?;
        let c = g.sum_rows(c);
        let c = g.mean(c);
        let l_dir = g.affine(c, -1.0, 1.0);
        let amp = self.amplitude(g, p, feat, &batch.d_in, &batch.d_out, &batch.material)?;
        let l_att = match self.mechanism {
            Mechanism::Deterministic => {
                let t = g.leaf(Tensor::new(vec![n, 8], truth_amp.concat())?);
                let d = g.sub(amp, t)?;
                let sq = g.mul(d, d)?;
                g.mean(sq)
            }
            Mechanism::NonDeterministic => {
                let keep: Vec<usize> = (0..n)
                    .filter(|&i| truth_amp[i].iter().map(|v| v * v).sum::<f64>() > 0.0)
                    .collect();
                if keep.is_empty() {
                    return Err(Error::invalid("every sample has zero truth power"));
                }
                let truth_db: Vec<f64> = keep
                    .iter()
                    .map(|&i| 10.0 * truth_amp[i].iter().map(|v| v * v).sum::<f64>().log10())
                    .collect();
                let a = g.gather(amp, &keep)?;
                let sq = g.mul(a, a)?;
                let pw = g.sum_rows(sq);
                let pw = g.affine(pw, 1.0, f64::MIN_POSITIVE);
                let db = g.db(pw)?;
                let t = g.leaf(Tensor::new(vec![keep.len(), 1], truth_db)?);
                let d = g.sub(db, t)?;
                let sq = g.mul(d, d)?;
                g.mean(sq)
            }
        };
        let dv = g.value(l_dir).data[0];
        let av = g.value(l_att).data[0];
        let a = g.affine(l_dir, w.dir, 0.0);
        let b = g.affine(l_att, w.att, 0.0);
        Ok((g.add(a, b)?, dv, av))
    }

    /// Scene features for each crop, computed in chunks.
    pub fn features(&self, plans: &[&CropPlan]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(plans.len());
        for chunk in plans.chunks(256) {
            let mut g = Graph::new();
            let mut p = Binder::new(&self.store);
            let f = self.encode(&mut g, &mut p, chunk)?;
            let t = g.value(f);
            out.extend((0..chunk.len()).map(|i| t.row(i).to_vec()));
        }
        Ok(out)
    }

    fn feat_leaf(g: &mut Graph, feats: &[&[f64]]) -> Result<Var> {
        let rows: Vec<Vec<f64>> = feats.iter().map(|f| f.to_vec()).collect();
        Ok(g.leaf(Tensor::from_rows(&rows)?))
    }

    /// Outgoing directions from precomputed features.
    pub fn predict_direction(&self, feats: &[&[f64]], d_in: &[Vec3], bounce: &[usize]) -> Result<Vec<Vec3>> {
        if feats.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let mut p = Binder::new(&self.store);
        let f = Self::feat_leaf(&mut g, feats)?;
        let d = self.direction(&mut g, &mut p, f, d_in, bounce)?;
        let t = g.value(d);
        Ok((0..feats.len()).map(|i| Vec3::from_column_slice(t.row(i))).collect())
    }

    /// Interaction matrices from precomputed features.
    pub fn predict_amplitude(
        &self,
        feats: &[&[f64]],
        d_in: &[Vec3],
        d_out: &[Vec3],
        material: &[[f64; 4]],
    ) -> Result<Vec<PolAmp>> {
        if feats.is_empty() {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let mut p = Binder::new(&self.store);
        let f = Self::feat_leaf(&mut g, feats)?;
        let a = self.amplitude(&mut g, &mut p, f, d_in, d_out, material)?;
        let t = g.value(a);
        Ok((0..feats.len()).map(|i| PolAmp::from_reals(t.row(i))).collect())
    }

    /// Write the parameters with the configuration and mechanism as sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(
            path,
            &self.store,
            &serde_json::json!({"surrogate": self.config, "mechanism": self.mechanism}),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, cfg) = load_checkpoint(path)?;
        let config: SurrogateConfig = serde_json::from_value(cfg["surrogate"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad surrogate config: {e}")))?;
        let mechanism: Mechanism = serde_json::from_value(cfg["mechanism"].clone())
            .map_err(|e| Error::Checkpoint(format!("bad mechanism: {e}")))?;
        let mut m = SurrogateModel::new(config, mechanism)?;
        let same = m.store.params.len() == store.params.len()
            && m.store
                .params
                .iter()
                .all(|(k, v)| store.params.get(k).is_some_and(|w| w.value.shape == v.value.shape));
        if !same {
            return Err(Error::Checkpoint("parameters do not match the configuration".into()));
        }
        m.store = store;
        Ok(m)
    }
}
