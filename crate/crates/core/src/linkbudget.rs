//! Analytic link budget of a mono-static OFDM radar built from communication
//! hardware: noise-plus-intermodulation PSD, SNR at unit range, achievable
//! distance and the receive-window-limited maximum distance.
//!
//! Internal arithmetic is linear SI throughout. The dB forms only appear in
//! [`ParamsFile`], the on-disk representation of [`LinkBudgetParams`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SPEED_OF_LIGHT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkBudgetError {
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("parameter `{name}` out of range: {reason}")]
    OutOfRange { name: &'static str, reason: String },
    #[error("intercept point `{name}` must be positive and finite, got {value}")]
    BadInterceptPoint { name: &'static str, value: f64 },
    #[error("r_max = {r_max:.3} m lies outside the receive window ({r_low:.3} m, {r_limit:.3} m)")]
    OutOfWindow { r_max: f64, r_low: f64, r_limit: f64 },
    #[error("range {range:.3} m outside the detectable interval ({r_low:.3} m, {r_limit:.3} m)")]
    RangeOutsideWindow { range: f64, r_low: f64, r_limit: f64 },
    #[error("achievable distance {r_star:.3} m is below the near limit {r_star_min:.3} m")]
    BelowNearLimit { r_star: f64, r_star_min: f64 },
    #[error("parameter file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, LinkBudgetError>;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    linear_to_db(watts) + 30.0
}

/// System and hardware parameters of the radar link, all linear SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsFile", into = "ParamsFile")]
pub struct LinkBudgetParams {
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Cyclic prefix length as a fraction of the useful symbol duration.
    pub l_cp: f64,
    /// Sensing receive-window offset relative to Tx, seconds.
    pub t_rx: f64,
    pub n_subcarriers: usize,
    /// OFDM symbols used for sensing per frame.
    pub m_symbols: usize,
    /// Total radiated power, W.
    pub p_tx: f64,
    /// Tx third-order output intercept point, W.
    pub oip3_tx: f64,
    /// Rx third-order input intercept point, W.
    pub iip3_rx: f64,
    pub n_tx: f64,
    pub n_rx: f64,
    pub g_tx: f64,
    pub g_rx: f64,
    /// Tx-Rx isolation of a single radiator pair, linear.
    pub isolation: f64,
    /// Sum coupling loss over all clutter and targets, linear.
    pub c_total: f64,
    /// Thermal noise PSD k_B*T, W/Hz.
    pub noise_psd: f64,
    pub noise_figure: f64,
    /// Radar cross section, m^2.
    pub rcs: f64,
    pub gamma_min: f64,
    /// Lower end of the `near` branch interval. `None` means max(r_low, 0).
    pub r_star_min: Option<f64>,
}

impl LinkBudgetParams {
    /// Reference 5G FR2 sensing setup (200 MHz, mu = 3) with the
    /// small-UAV cross section of -17 dBsm and a 17 dB detection threshold.
    pub fn fr2_reference() -> Self {
        Self {
            f_c: 27.6e9,
            delta_f: 120e3,
            l_cp: 1.0 / 14.0,
            t_rx: 0.0,
            n_subcarriers: 1584,
            m_symbols: 832,
            p_tx: dbm_to_watts(28.1),
            oip3_tx: dbm_to_watts(23.1),
            iip3_rx: dbm_to_watts(-13.3),
            n_tx: 96.0,
            n_rx: 96.0,
            g_tx: db_to_linear(23.4),
            g_rx: db_to_linear(23.4),
            isolation: db_to_linear(103.0),
            c_total: db_to_linear(85.0),
            noise_psd: dbm_to_watts(-174.0),
            noise_figure: db_to_linear(5.0),
            rcs: db_to_linear(-17.0),
            gamma_min: db_to_linear(17.0),
            r_star_min: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("f_c", self.f_c),
            ("delta_f", self.delta_f),
            ("p_tx", self.p_tx),
            ("n_tx", self.n_tx),
            ("n_rx", self.n_rx),
            ("g_tx", self.g_tx),
            ("g_rx", self.g_rx),
            ("isolation", self.isolation),
            ("c_total", self.c_total),
            ("noise_psd", self.noise_psd),
            ("noise_figure", self.noise_figure),
            ("rcs", self.rcs),
            ("gamma_min", self.gamma_min),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LinkBudgetError::NonPositive { name, value });
            }
        }
        for (name, value) in [("oip3_tx", self.oip3_tx), ("iip3_rx", self.iip3_rx)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(LinkBudgetError::BadInterceptPoint { name, value });
            }
        }
        if self.n_subcarriers == 0 {
            return Err(LinkBudgetError::OutOfRange {
                name: "n_subcarriers",
                reason: "must be at least 1".into(),
            });
        }
        if self.m_symbols == 0 {
            return Err(LinkBudgetError::OutOfRange {
                name: "m_symbols",
                reason: "must be at least 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.l_cp) {
            return Err(LinkBudgetError::OutOfRange {
                name: "l_cp",
                reason: format!("{} not in [0, 1)", self.l_cp),
            });
        }
        if !(self.t_rx >= 0.0 && self.t_rx.is_finite()) {
            return Err(LinkBudgetError::OutOfRange {
                name: "t_rx",
                reason: format!("{} must be >= 0", self.t_rx),
            });
        }
        Ok(())
    }

    /// Parses a parameter file in the [`ParamsFile`] layout.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LinkBudgetError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ParamsFile::from(self.clone())).expect("parameters serialize to TOML")
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Duration of one OFDM symbol including the cyclic prefix.
    pub fn symbol_duration(&self) -> f64 {
        (1.0 + self.l_cp) / self.delta_f
    }

    /// Two-way gain of a point target at unit range, without beam-pattern loss:
    /// `G_tx G_rx sigma lambda^2 / (4 pi)^3`.
    pub fn unit_range_gain(&self) -> f64 {
        self.g_tx * self.g_rx * self.rcs * self.wavelength().powi(2) / (4.0 * PI).powi(3)
    }
}

/// Reference parameters as written in a parameter file: powers in dBm, gains and losses in
/// dB, PSD in dBm/Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub f_c_hz: f64,
    pub delta_f_hz: f64,
    pub l_cp: f64,
    #[serde(default)]
    pub t_rx_s: f64,
    pub n: usize,
    pub m: usize,
    pub p_tx_dbm: f64,
    pub oip3_tx_dbm: f64,
    pub iip3_rx_dbm: f64,
    pub n_tx: f64,
    pub n_rx: f64,
    pub g_tx_db: f64,
    pub g_rx_db: f64,
    pub isolation_db: f64,
    pub c_total_db: f64,
    pub n0_dbm_per_hz: f64,
    pub f_rx_db: f64,
    pub rcs_dbsm: f64,
    pub gamma_min_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_star_min_m: Option<f64>,
}

impl TryFrom<ParamsFile> for LinkBudgetParams {
    type Error = LinkBudgetError;

    fn try_from(f: ParamsFile) -> Result<Self> {
        let p = LinkBudgetParams {
            f_c: f.f_c_hz,
            delta_f: f.delta_f_hz,
            l_cp: f.l_cp,
            t_rx: f.t_rx_s,
            n_subcarriers: f.n,
            m_symbols: f.m,
            p_tx: dbm_to_watts(f.p_tx_dbm),
            oip3_tx: dbm_to_watts(f.oip3_tx_dbm),
            iip3_rx: dbm_to_watts(f.iip3_rx_dbm),
            n_tx: f.n_tx,
            n_rx: f.n_rx,
            g_tx: db_to_linear(f.g_tx_db),
            g_rx: db_to_linear(f.g_rx_db),
            isolation: db_to_linear(f.isolation_db),
            c_total: db_to_linear(f.c_total_db),
            noise_psd: dbm_to_watts(f.n0_dbm_per_hz),
            noise_figure: db_to_linear(f.f_rx_db),
            rcs: db_to_linear(f.rcs_dbsm),
            gamma_min: db_to_linear(f.gamma_min_db),
            r_star_min: f.r_star_min_m,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<LinkBudgetParams> for ParamsFile {
    fn from(p: LinkBudgetParams) -> Self {
        ParamsFile {
            f_c_hz: p.f_c,
            delta_f_hz: p.delta_f,
            l_cp: p.l_cp,
            t_rx_s: p.t_rx,
            n: p.n_subcarriers,
            m: p.m_symbols,
            p_tx_dbm: watts_to_dbm(p.p_tx),
            oip3_tx_dbm: watts_to_dbm(p.oip3_tx),
            iip3_rx_dbm: watts_to_dbm(p.iip3_rx),
            n_tx: p.n_tx,
            n_rx: p.n_rx,
            g_tx_db: linear_to_db(p.g_tx),
            g_rx_db: linear_to_db(p.g_rx),
            isolation_db: linear_to_db(p.isolation),
            c_total_db: linear_to_db(p.c_total),
            n0_dbm_per_hz: watts_to_dbm(p.noise_psd),
            f_rx_db: linear_to_db(p.noise_figure),
            rcs_dbsm: linear_to_db(p.rcs),
            gamma_min_db: linear_to_db(p.gamma_min),
            r_star_min_m: p.r_star_min,
        }
    }
}

/// Noise and interference PSD decomposition at the receiver input, W/Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterferencePsd {
    pub s_total: f64,
    pub n0_rx: f64,
    pub s3_tx: f64,
    pub s3_rx: f64,
}

/// Thermal noise plus the strongest (3rd order) intermodulation products of
/// the Tx power amplifiers and the Rx low-noise amplifiers.
pub fn interference_psd(p: &LinkBudgetParams) -> Result<InterferencePsd> {
    p.validate()?;
    let n0_rx = p.noise_psd * p.noise_figure;
    let p_pa_out = p.p_tx / p.n_tx;
    let p_lna_in = p.p_tx * (1.0 / (p.c_total * p.n_rx) + 1.0 / p.isolation);
    let p_rx = p.p_tx * (1.0 / p.c_total + 1.0 / p.isolation);
    let bandwidth = p.n_subcarriers as f64 * p.delta_f;
    let s3_tx = p_rx / (p.oip3_tx / p_pa_out).powi(2) / bandwidth;
    let s3_rx = p_rx / (p.iip3_rx / p_lna_in).powi(2) / bandwidth;
    Ok(InterferencePsd {
        s_total: n0_rx + s3_tx + s3_rx,
        n0_rx,
        s3_tx,
        s3_rx,
    })
}

/// SNR at 1 m range after integrating M symbols, against a given PSD.
fn snr_at_unit_range_with(p: &LinkBudgetParams, psd: f64) -> f64 {
    p.p_tx * (p.m_symbols as f64 / p.delta_f) * p.unit_range_gain() / psd
}

/// Signal-to-noise-plus-interference ratio at unit range, linear.
pub fn snr_unit_range(p: &LinkBudgetParams) -> Result<f64> {
    let psd = interference_psd(p)?;
    Ok(snr_at_unit_range_with(p, psd.s_total))
}

/// Achievable distance with the receive window matched to the target delay.
pub fn r_star(p: &LinkBudgetParams) -> Result<f64> {
    Ok((snr_unit_range(p)? / p.gamma_min).powf(0.25))
}

/// Characteristic ranges of the OFDM receive window, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RangeWindowModel {
    /// Range whose round-trip delay equals the useful symbol duration.
    pub r_sym: f64,
    /// Range whose round-trip delay equals the symbol duration including CP.
    pub r_0: f64,
    pub r_cp: f64,
    pub r_rx: f64,
    /// May be negative; see [`RangeWindowModel::r_low_clamped`].
    pub r_low: f64,
    pub r_limit: f64,
}

impl RangeWindowModel {
    pub fn from_params(p: &LinkBudgetParams) -> Self {
        let r_sym = SPEED_OF_LIGHT / (2.0 * p.delta_f);
        let r_rx = p.t_rx * SPEED_OF_LIGHT / 2.0;
        let r_0 = (1.0 + p.l_cp) * r_sym;
        Self {
            r_sym,
            r_0,
            r_cp: p.l_cp * r_sym,
            r_rx,
            r_low: r_rx - r_sym,
            r_limit: r_rx + r_0,
        }
    }

    pub fn r_low_clamped(&self) -> f64 {
        self.r_low.max(0.0)
    }

    pub fn contains(&self, r: f64) -> bool {
        r > self.r_low && r < self.r_limit
    }

    /// Fraction of the echo amplitude that falls into the receive window.
    /// One inside `[r_rx, r_rx + r_cp]`, ramping linearly to zero at `r_low`
    /// and `r_limit`.
    pub fn overlap(&self, r: f64) -> f64 {
        if r <= self.r_low || r >= self.r_limit {
            0.0
        } else if r < self.r_rx {
            (r - self.r_low) / self.r_sym
        } else if r <= self.r_rx + self.r_cp {
            1.0
        } else {
            (self.r_limit - r) / self.r_sym
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeBranch {
    Near,
    Cp,
    Far,
}

impl std::fmt::Display for RangeBranch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RangeBranch::Near => "near",
            RangeBranch::Cp => "cp",
            RangeBranch::Far => "far",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxRange {
    pub r_max: f64,
    pub r_star: f64,
    pub branch: RangeBranch,
    pub window: RangeWindowModel,
}

/// Maximum detectable distance accounting for the limited receive window.
pub fn max_range(p: &LinkBudgetParams) -> Result<MaxRange> {
    let r_star = r_star(p)?;
    let window = RangeWindowModel::from_params(p);
    let r_star_min = p.r_star_min.unwrap_or_else(|| window.r_low_clamped());
    max_range_for(r_star, r_star_min, &window)
}

/// Piecewise mapping from an achievable distance `r_star` to the
/// window-limited maximum distance.
pub fn max_range_for(r_star: f64, r_star_min: f64, window: &RangeWindowModel) -> Result<MaxRange> {
    let w = window;
    let a = r_star * r_star / (2.0 * w.r_sym);
    let (r_max, branch) = if r_star > w.r_rx + w.r_cp {
        (-a + (a * a + 2.0 * a * (w.r_rx + w.r_0)).sqrt(), RangeBranch::Far)
    } else if r_star >= w.r_rx {
        (r_star, RangeBranch::Cp)
    } else if r_star >= r_star_min {
        (a + (a * a - 2.0 * a * (w.r_rx - w.r_sym)).sqrt(), RangeBranch::Near)
    } else {
        return Err(LinkBudgetError::BelowNearLimit { r_star, r_star_min });
    };
    if r_max < w.r_low || r_max > w.r_limit {
        return Err(LinkBudgetError::OutOfWindow {
            r_max,
            r_low: w.r_low,
            r_limit: w.r_limit,
        });
    }
    Ok(MaxRange {
        r_max,
        r_star,
        branch,
        window: *w,
    })
}

/// Which expected-SINR curve to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinrModel {
    /// Pure fourth-power law with the full interference PSD.
    Unwindowed,
    /// Fourth-power law scaled by the squared receive-window overlap.
    Windowed,
    /// Fourth-power law against thermal receiver noise only.
    ThermalOnly,
}

/// Expected post-integration SINR of the configured target at range `r`, dB.
pub fn expected_sinr_at_range(p: &LinkBudgetParams, r: f64, model: SinrModel) -> Result<f64> {
    let window = RangeWindowModel::from_params(p);
    if !(window.contains(r) && r > 0.0) {
        return Err(LinkBudgetError::RangeOutsideWindow {
            range: r,
            r_low: window.r_low_clamped(),
            r_limit: window.r_limit,
        });
    }
    let psd = interference_psd(p)?;
    let sinr = match model {
        SinrModel::Unwindowed => snr_at_unit_range_with(p, psd.s_total) / r.powi(4),
        SinrModel::Windowed => {
            snr_at_unit_range_with(p, psd.s_total) / r.powi(4) * window.overlap(r).powi(2)
        }
        SinrModel::ThermalOnly => snr_at_unit_range_with(p, psd.n0_rx) / r.powi(4),
    };
    Ok(linear_to_db(sinr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn db_round_trip() {
        for x in [1e-20, 3.7e-3, 1.0, 42.0, 9.9e17] {
            assert_relative_eq!(db_to_linear(linear_to_db(x)), x, max_relative = 1e-12);
            assert_relative_eq!(dbm_to_watts(watts_to_dbm(x)), x, max_relative = 1e-12);
        }
    }

    #[test]
    fn thermal_psd_is_table_product() {
        let psd = interference_psd(&LinkBudgetParams::fr2_reference()).unwrap();
        assert_relative_eq!(watts_to_dbm(psd.n0_rx), -169.0, epsilon = 1e-9);
    }

    #[test]
    fn intermods_vanish_at_zero_power() {
        let mut p = LinkBudgetParams::fr2_reference();
        p.p_tx = 1e-12;
        let psd = interference_psd(&p).unwrap();
        assert_relative_eq!(psd.s_total, psd.n0_rx, max_relative = 1e-12);
    }

    #[test]
    fn rejects_bad_intercept_points() {
        let mut p = LinkBudgetParams::fr2_reference();
        p.iip3_rx = 0.0;
        assert!(matches!(
            interference_psd(&p),
            Err(LinkBudgetError::BadInterceptPoint { name: "iip3_rx", .. })
        ));
        p.iip3_rx = 1e-3;
        p.oip3_tx = -1.0;
        assert!(matches!(
            interference_psd(&p),
            Err(LinkBudgetError::BadInterceptPoint { name: "oip3_tx", .. })
        ));
    }

    #[test]
    fn rejects_invalid_params() {
        let mut p = LinkBudgetParams::fr2_reference();
        p.l_cp = 1.0;
        assert!(p.validate().is_err());
        let mut p = LinkBudgetParams::fr2_reference();
        p.m_symbols = 0;
        assert!(p.validate().is_err());
        let mut p = LinkBudgetParams::fr2_reference();
        p.rcs = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn middle_branch_is_identity() {
        let w = RangeWindowModel::from_params(&LinkBudgetParams::fr2_reference());
        let m = max_range_for(50.0, 0.0, &w).unwrap();
        assert_eq!(m.branch, RangeBranch::Cp);
        assert_eq!(m.r_max, 50.0);
    }

    #[test]
    fn window_overlap_shape() {
        let mut p = LinkBudgetParams::fr2_reference();
        p.t_rx = 2e-6;
        let w = RangeWindowModel::from_params(&p);
        assert_eq!(w.overlap(w.r_rx + 0.5 * w.r_cp), 1.0);
        assert_relative_eq!(w.overlap(w.r_rx + w.r_cp), 1.0, max_relative = 1e-12);
        assert_relative_eq!(w.overlap(w.r_low + 0.5 * w.r_sym), 0.5, max_relative = 1e-12);
        assert_eq!(w.overlap(w.r_limit + 1.0), 0.0);
        assert_eq!(w.overlap(w.r_low - 1.0), 0.0);
    }

    #[test]
    fn out_of_window_range_is_an_error() {
        let p = LinkBudgetParams::fr2_reference();
        assert!(expected_sinr_at_range(&p, 1400.0, SinrModel::Windowed).is_err());
        assert!(expected_sinr_at_range(&p, 0.0, SinrModel::Unwindowed).is_err());
    }

    #[test]
    fn params_file_round_trip() {
        let p = LinkBudgetParams::fr2_reference();
        let text = toml::to_string(&p).unwrap();
        assert!(text.contains("p_tx_dbm"));
        let back: LinkBudgetParams = toml::from_str(&text).unwrap();
        assert_relative_eq!(back.p_tx, p.p_tx, max_relative = 1e-12);
        assert_relative_eq!(back.c_total, p.c_total, max_relative = 1e-12);
        assert_eq!(back.n_subcarriers, p.n_subcarriers);
    }
}
