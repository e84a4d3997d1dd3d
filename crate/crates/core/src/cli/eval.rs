use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{read_channel, ChannelFile, PathRecord};
use crate::metrics::{path_loss_of, rms_ds_of};

/// Highest bounce order reported separately.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub link: String,
    pub pl_truth_db: f64,
    pub pl_pred_db: f64,
    pub ds_truth_ns: f64,
    pub ds_pred_ns: f64,
    pub angle_1_deg: Option<f64>,
    pub angle_2_deg: Option<f64>,
    pub angle_3_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n_links: usize,
    pub pl_rmse_db: f64,
    pub ds_rmse_ns: f64,
    /// Mean over links of the per-order angular error, when defined.
    pub angle_deg: [Option<f64>; MAX_ORDER],
}

fn channels(dir: &Path) -> Result<BTreeMap<String, ChannelFile>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.extension().is_some_and(|x| x == "json") {
            if let Ok(c) = read_channel(&p) {
                out.insert(c.link.clone(), c);
            }
        }
    }
    Ok(out)
}

fn angle(a: &PathRecord, b: &PathRecord) -> f64 {
    let s: f64 = a
        .hops
        .iter()
        .zip(&b.hops)
        .map(|(x, y)| x.dir_out.cross(&y.dir_out).norm().atan2(x.dir_out.dot(&y.dir_out)).to_degrees())
        .sum();
    s / a.hops.len() as f64
}

/// For each reference path of `order` bounces, the closest predicted path
/// of the same order by mean hop-direction angle; the mean of those
/// angles. `None` when either side has no path of that order.
pub fn order_angle(pred: &ChannelFile, truth: &ChannelFile, order: usize) -> Option<f64> {
    let p: Vec<&PathRecord> = pred.paths.iter().filter(|r| r.bounces == order).collect();
    let t: Vec<&PathRecord> = truth.paths.iter().filter(|r| r.bounces == order).collect();
    if p.is_empty() || t.is_empty() {
        return None;
    }
    let sum: f64 = t
        .iter()
        .map(|tr| p.iter().map(|pr| angle(pr, tr)).fold(f64::INFINITY, f64::min))
        .sum();
    Some(sum / t.len() as f64)
}

fn rmse(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

/// Compare channel files matched by link id. Writes `eval.csv` and
/// `summary.json` to `out`.
pub fn cmd_eval(pred_dir: &Path, truth_dir: &Path, out: &Path) -> Result<EvalSummary> {
    let pred = channels(pred_dir)?;
    let truth = channels(truth_dir)?;
    let mut rows = Vec::new();
    for (id, t) in &truth {
        let p = pred
            .get(id)
            .ok_or_else(|| Error::Schema(format!("no prediction for link {id}")))?;
        let (tg, pg) = (t.gains(), p.gains());
        let ang = |o| order_angle(p, t, o);
        rows.push(EvalRow {
            link: id.clone(),
            pl_truth_db: path_loss_of(&tg)?,
            pl_pred_db: path_loss_of(&pg)?,
            ds_truth_ns: rms_ds_of(&tg)? * 1e9,
            ds_pred_ns: rms_ds_of(&pg)? * 1e9,
            angle_1_deg: ang(1),
            angle_2_deg: ang(2),
            angle_3_deg: ang(3),
        });
    }
    if rows.is_empty() {
        return Err(Error::Schema(format!("no channel files in {}", truth_dir.display())));
    }
    let mean_opt = |f: &dyn Fn(&EvalRow) -> Option<f64>| {
        let v: Vec<f64> = rows.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let summary = EvalSummary {
        n_links: rows.len(),
        pl_rmse_db: rmse(rows.iter().map(|r| r.pl_pred_db - r.pl_truth_db)),
        ds_rmse_ns: rmse(rows.iter().map(|r| r.ds_pred_ns - r.ds_truth_ns)),
        angle_deg: [
            mean_opt(&|r| r.angle_1_deg),
            mean_opt(&|r| r.angle_2_deg),
            mean_opt(&|r| r.angle_3_deg),
        ],
    };
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("eval.csv")).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.flush()?;
    std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    Ok(summary)
}
