use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use super::{HarnessError, Result};
use crate::linkbudget::{
    expected_sinr_at_range, interference_psd, max_range, watts_to_dbm, InterferencePsd, LinkBudgetParams, MaxRange,
    RangeBranch, SinrModel,
};

/// `start:stop:step` range sweep, stop inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSweep {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for RangeSweep {
    fn default() -> Self {
        Self { start: 10.0, stop: 1330.0, step: 10.0 }
    }
}

impl RangeSweep {
    pub fn ranges(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

impl FromStr for RangeSweep {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HarnessError::Config(format!("range sweep '{s}' is not start:stop:step"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0 && stop >= start && start > 0.0) {
            return Err(HarnessError::Config(format!(
                "range sweep '{s}' needs 0 < start <= stop and a positive step"
            )));
        }
        Ok(Self { start, stop, step })
    }
}

/// One row of the SINR-vs-range table. Curves are `None` outside the receive
/// window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub range_m: f64,
    pub sinr_db_model: Option<f64>,
    pub sinr_db_windowed: Option<f64>,
    pub snr_db_thermal_only: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub max_range: MaxRange,
    pub psd: InterferencePsd,
    pub curve: Vec<CurvePoint>,
}

pub fn model_report(p: &LinkBudgetParams, sweep: RangeSweep) -> Result<ModelReport> {
    let curve = sweep
        .ranges()
        .into_iter()
        .map(|r| CurvePoint {
            range_m: r,
            sinr_db_model: expected_sinr_at_range(p, r, SinrModel::Unwindowed).ok(),
            sinr_db_windowed: expected_sinr_at_range(p, r, SinrModel::Windowed).ok(),
            snr_db_thermal_only: expected_sinr_at_range(p, r, SinrModel::ThermalOnly).ok(),
        })
        .collect();
    Ok(ModelReport {
        max_range: max_range(p)?,
        psd: interference_psd(p)?,
        curve,
    })
}

impl ModelReport {
    /// Human-readable key figures.
    pub fn summary(&self) -> String {
        let m = &self.max_range;
        let w = &m.window;
        let mut s = String::new();
        let _ = writeln!(s, "r_star     {:10.3} m", m.r_star);
        let _ = writeln!(s, "r_max      {:10.3} m ({} branch)", m.r_max, m.branch);
        let _ = writeln!(s, "r_cp       {:10.3} m", w.r_cp);
        let _ = writeln!(s, "r_low      {:10.3} m", w.r_low_clamped());
        let _ = writeln!(s, "r_limit    {:10.3} m", w.r_limit);
        let _ = writeln!(s, "noise and interference PSD, dBm/Hz:");
        let _ = writeln!(s, "  thermal  {:10.3}", watts_to_dbm(self.psd.n0_rx));
        let _ = writeln!(s, "  S3,Tx    {:10.3}", watts_to_dbm(self.psd.s3_tx));
        let _ = writeln!(s, "  S3,Rx    {:10.3}", watts_to_dbm(self.psd.s3_rx));
        let _ = writeln!(s, "  total    {:10.3}", watts_to_dbm(self.psd.s_total));
        s
    }

    pub fn write_curve_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for p in &self.curve {
            out.serialize(p)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Departures from the reference figures: r_max 540 m on the far
/// branch (±5 m), r_cp 89.3 m (±0.5 m), r_limit 1339 m (±2 m).
pub fn reference_violations(m: &MaxRange) -> Vec<String> {
    let mut out = Vec::new();
    if (m.r_max - 540.0).abs() > 5.0 || m.branch != RangeBranch::Far {
        out.push(format!("r_max {:.3} m ({} branch), expected 540 ± 5 m far", m.r_max, m.branch));
    }
    if (m.window.r_cp - 89.3).abs() > 0.5 {
        out.push(format!("r_cp {:.3} m, expected 89.3 ± 0.5 m", m.window.r_cp));
    }
    if (m.window.r_limit - 1339.0).abs() > 2.0 {
        out.push(format!("r_limit {:.3} m, expected 1339 ± 2 m", m.window.r_limit));
    }
    out
}
