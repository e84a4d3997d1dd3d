//! Condensed channel parameters: power delay profile, path loss, RMS delay
//! spread and per-hop angular error.
//!
//! Powers are summed incoherently; path loss is isotropic (no antenna gain).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::em::PathGain;
use crate::error::{Error, Result};
use crate::tracer::{ChannelRealization, TracedPath};

/// Default PDP bin width (seconds).
pub const DEFAULT_BIN: f64 = 1e-9;

/// Binned power delay profile; only non-empty bins are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdp {
    /// `(bin start delay, linear power)`, strictly increasing in delay.
    pub bins: Vec<(f64, f64)>,
    pub bin_width: f64,
}

impl Pdp {
    pub fn total_power(&self) -> f64 {
        self.bins.iter().map(|b| b.1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedParams {
    pub pl_db: f64,
    pub ds_ns: f64,
}

pub fn pdp(real: &ChannelRealization, bin_width: f64) -> Result<Pdp> {
    pdp_of(&real.gains(), bin_width)
}

pub fn pdp_of(gains: &[PathGain], bin_width: f64) -> Result<Pdp> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::invalid(format!("bin width must be positive, got {bin_width}")));
    }
    let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
    for g in gains {
        if !(g.tau >= 0.0) {
            return Err(Error::invalid(format!("negative delay {}", g.tau)));
        }
        *acc.entry((g.tau / bin_width).floor() as u64).or_default() += g.power();
    }
    Ok(Pdp {
        bins: acc.into_iter().map(|(k, p)| (k as f64 * bin_width, p)).collect(),
        bin_width,
    })
}

fn total_power(gains: &[PathGain]) -> Result<f64> {
    let p: f64 = gains.iter().map(PathGain::power).sum();
    if !(p > 0.0) {
        return Err(Error::invalid("channel carries no power"));
    }
    Ok(p)
}

/// `-10 log10(sum |a|^2)` in dB.
pub fn path_loss(real: &ChannelRealization) -> Result<f64> {
    path_loss_of(&real.gains())
}

pub fn path_loss_of(gains: &[PathGain]) -> Result<f64> {
    Ok(-10.0 * total_power(gains)?.log10())
}

/// Power-weighted standard deviation of the delays (seconds).
pub fn rms_ds(real: &ChannelRealization) -> Result<f64> {
    rms_ds_of(&real.gains())
}

pub fn rms_ds_of(gains: &[PathGain]) -> Result<f64> {
    let p = total_power(gains)?;
    let mean = gains.iter().map(|g| g.power() * g.tau).sum::<f64>() / p;
    // Centred second moment avoids cancellation at large common delays.
    let var = gains.iter().map(|g| g.power() * (g.tau - mean).powi(2)).sum::<f64>() / p;
    Ok(var.max(0.0).sqrt())
}

pub fn condensed(real: &ChannelRealization) -> Result<CondensedParams> {
    Ok(CondensedParams {
        pl_db: path_loss(real)?,
        ds_ns: rms_ds(real)? * 1e9,
    })
}

/// Mean angle (degrees) between corresponding outgoing hop directions,
/// evaluated with `atan2` so near-identical directions stay accurate.
pub fn angular_error(pred: &TracedPath, truth: &TracedPath) -> Result<f64> {
    if pred.hops.len() != truth.hops.len() {
        return Err(Error::invalid(format!(
            "bounce counts differ: {} vs {}",
            pred.hops.len(),
            truth.hops.len()
        )));
    }
    if pred.hops.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred
        .hops
        .iter()
        .zip(&truth.hops)
        .map(|(a, b)| a.dir_out.cross(&b.dir_out).norm().atan2(a.dir_out.dot(&b.dir_out)).to_degrees())
        .sum();
    Ok(sum / pred.hops.len() as f64)
}

/// One row of the per-link CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub link_id: String,
    pub pl_db: f64,
    pub ds_ns: f64,
    pub n_paths: usize,
}

impl LinkRow {
    pub fn of(link_id: &str, real: &ChannelRealization) -> Result<Self> {
        let c = condensed(real)?;
        Ok(LinkRow {
            link_id: link_id.to_string(),
            pl_db: c.pl_db,
            ds_ns: c.ds_ns,
            n_paths: real.len(),
        })
    }
}

pub fn write_csv<W: Write>(rows: &[LinkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{Complex, PolAmp};

    fn g(a: f64, tau: f64) -> PathGain {
        PathGain {
            t: PolAmp::identity(),
            tau,
            a: Complex::new(a, 0.0),
            length: tau * crate::em::C0,
        }
    }

    #[test]
    fn pdp_examples() {
        let p = pdp_of(&[g(1.0, 10e-9)], 1e-9).unwrap();
        assert_eq!(p.bins.len(), 1);
        assert!((p.bins[0].0 - 10e-9).abs() < 1e-18 && p.bins[0].1 == 1.0);
        let p = pdp_of(&[g(1.0, 10.2e-9), g(0.5, 10.7e-9)], 1e-9).unwrap();
        assert_eq!(p.bins.len(), 1);
        assert!((p.bins[0].1 - 1.25).abs() < 1e-15);
        assert!(pdp_of(&[], 1e-9).unwrap().bins.is_empty());
    }

    #[test]
    fn path_loss_examples() {
        assert_eq!(path_loss_of(&[g(1.0, 0.0)]).unwrap(), 0.0);
        let one = path_loss_of(&[g(0.1, 0.0)]).unwrap();
        let two = path_loss_of(&[g(0.1, 0.0), g(0.1, 1e-9)]).unwrap();
        assert!((one - two - 10.0 * 2f64.log10()).abs() < 1e-12);
        assert!(path_loss_of(&[g(0.0, 0.0)]).is_err());
    }

    #[test]
    fn rms_ds_examples() {
        assert_eq!(rms_ds_of(&[g(0.3, 5e-9)]).unwrap(), 0.0);
        let ds = rms_ds_of(&[g(1.0, 0.0), g(1.0, 20e-9)]).unwrap();
        assert!((ds - 10e-9).abs() < 1e-20);
    }

    #[test]
    fn csv_export() {
        let rows = vec![LinkRow {
            link_id: "a,b".into(),
            pl_db: 61.5,
            ds_ns: 3.25,
            n_paths: 4,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "link_id,pl_db,ds_ns,n_paths\n\"a,b\",61.5,3.25,4\n");
    }
}
