//! Scenario configuration read from a flat TOML file.
//!
//! Every key is optional; missing keys take the defaults below. Currents and
//! voltages are given in mA and mV, the energy threshold in µW. Unknown keys
//! are rejected.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Layout;
use crate::optimizer::{DualMethod, SolverOptions};
use crate::params::PhysParams;
use crate::utility::QosSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iterative,
    Baseline,
    Oracle,
    /// Iterative and baseline, plus the grid oracle when the instance is small enough.
    All,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Algorithm::Iterative),
            "baseline" => Ok(Algorithm::Baseline),
            "oracle" => Ok(Algorithm::Oracle),
            "all" => Ok(Algorithm::All),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualMethodKey {
    Exact,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bandwidth_hz: f64,
    pub pd_area_iu_m2: f64,
    pub pd_area_ehu_m2: f64,
    pub optical_filter_gain: f64,
    pub half_intensity_angle_deg: f64,
    pub conv_factor_a_per_w: f64,
    pub refractive_index: f64,
    pub bias_max_ma: f64,
    pub bias_min_ma: f64,
    pub fill_factor: f64,
    pub led_power_w_per_a: f64,
    pub thermal_voltage_mv: f64,
    pub dark_current_a: f64,
    pub noise_psd_a2_per_hz: f64,
    pub wall_reflectance: f64,
    pub wall_patch_edge_m: f64,

    /// Room extent (x, y, z) in m.
    pub room_m: [f64; 3],
    pub user_height_m: f64,
    pub ap_rows: usize,
    pub ap_cols: usize,
    pub ap_spacing_m: f64,
    pub n_iu: usize,
    pub n_ehu: usize,

    /// FoV semi-angle for single solves and the alpha/eta sweeps.
    pub fov_deg: f64,
    /// Values visited by the fov sweep.
    pub fov_sweep_deg: Vec<f64>,
    /// Weights visited by the alpha sweep; the first one is used elsewhere.
    pub alpha: Vec<f64>,
    /// EHU fractions visited by the eta sweep, at a fixed total user count.
    pub eta: Vec<f64>,
    pub rate_threshold_bps: f64,
    pub energy_threshold_uw: f64,
    pub omega: f64,

    pub trials: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub tolerance: f64,
    pub max_iter: usize,
    pub dual_method: DualMethodKey,
    pub random_initial_duals: Option<u64>,
    /// Points per power axis for the grid oracle.
    pub oracle_points: usize,
    /// CSV destination; stdout when absent.
    pub output: Option<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p = PhysParams::default();
        let l = Layout::default();
        let o = SolverOptions::default();
        Self {
            bandwidth_hz: p.bandwidth,
            pd_area_iu_m2: p.pd_area_iu,
            pd_area_ehu_m2: p.pd_area_ehu,
            optical_filter_gain: p.optical_filter_gain,
            half_intensity_angle_deg: p.half_intensity_angle,
            conv_factor_a_per_w: p.conv_factor_rho,
            refractive_index: p.refractive_index,
            bias_max_ma: p.bias_max * 1e3,
            bias_min_ma: p.bias_min * 1e3,
            fill_factor: p.fill_factor,
            led_power_w_per_a: p.led_power,
            thermal_voltage_mv: p.thermal_voltage * 1e3,
            dark_current_a: p.dark_current,
            noise_psd_a2_per_hz: p.noise_psd,
            wall_reflectance: p.wall_reflectance,
            wall_patch_edge_m: p.wall_patch_edge,
            room_m: l.room,
            user_height_m: l.user_height,
            ap_rows: l.ap_rows,
            ap_cols: l.ap_cols,
            ap_spacing_m: l.ap_spacing,
            n_iu: l.n_iu,
            n_ehu: l.n_ehu,
            fov_deg: p.fov_semi_angle,
            fov_sweep_deg: vec![40.0, 45.0, 50.0, 55.0, 60.0, 65.0],
            alpha: (0..=10).map(|i| i as f64 / 10.0).collect(),
            eta: (0..=10).map(|i| i as f64 / 10.0).collect(),
            rate_threshold_bps: 10e6,
            energy_threshold_uw: 1.0,
            omega: 12e3,
            trials: 100,
            seed: 1,
            algorithm: Algorithm::All,
            tolerance: o.tolerance,
            max_iter: o.max_iter,
            dual_method: DualMethodKey::Exact,
            random_initial_duals: None,
            oracle_points: 200,
            output: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::Config(format!("alpha {a} outside [0, 1]")));
        }
        if let Some(e) = self.eta.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Config(format!("eta {e} outside [0, 1]")));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config("omega must be positive".into()));
        }
        if !(self.rate_threshold_bps >= 0.0 && self.energy_threshold_uw >= 0.0) {
            return Err(Error::Config("thresholds must be nonnegative".into()));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tolerance must be positive and max_iter at least 1".into()));
        }
        if self.oracle_points < 2 {
            return Err(Error::Config("oracle_points must be at least 2".into()));
        }
        for fov in std::iter::once(&self.fov_deg).chain(&self.fov_sweep_deg) {
            self.params(*fov).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Physical parameters in SI units with the given FoV.
    pub fn params(&self, fov_deg: f64) -> PhysParams {
        PhysParams {
            bandwidth: self.bandwidth_hz,
            pd_area_iu: self.pd_area_iu_m2,
            pd_area_ehu: self.pd_area_ehu_m2,
            optical_filter_gain: self.optical_filter_gain,
            half_intensity_angle: self.half_intensity_angle_deg,
            fov_semi_angle: fov_deg,
            conv_factor_rho: self.conv_factor_a_per_w,
            refractive_index: self.refractive_index,
            bias_max: self.bias_max_ma * 1e-3,
            bias_min: self.bias_min_ma * 1e-3,
            fill_factor: self.fill_factor,
            led_power: self.led_power_w_per_a,
            thermal_voltage: self.thermal_voltage_mv * 1e-3,
            dark_current: self.dark_current_a,
            noise_psd: self.noise_psd_a2_per_hz,
            wall_reflectance: self.wall_reflectance,
            wall_patch_edge: self.wall_patch_edge_m,
        }
    }

    pub fn layout(&self, n_iu: usize, n_ehu: usize) -> Layout {
        Layout {
            room: self.room_m,
            user_height: self.user_height_m,
            ap_rows: self.ap_rows,
            ap_cols: self.ap_cols,
            ap_spacing: self.ap_spacing_m,
            n_iu,
            n_ehu,
            wall_patch_edge: self.wall_patch_edge_m,
        }
    }

    pub fn qos(&self, n_iu: usize, n_ehu: usize, alpha: f64) -> QosSpec {
        QosSpec::uniform(n_iu, n_ehu, self.rate_threshold_bps, self.energy_threshold_uw * 1e-6, alpha, self.omega)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerance,
            max_iter: self.max_iter,
            dual_method: match self.dual_method {
                DualMethodKey::Exact => DualMethod::Exact,
                DualMethodKey::Subgradient => DualMethod::Subgradient,
            },
            random_initial_duals: self.random_initial_duals,
            ..SolverOptions::default()
        }
    }

    /// `(n_iu, n_ehu)` for an EHU fraction at the configured total user count.
    pub fn split_users(&self, eta: f64) -> (usize, usize) {
        let total = self.n_iu + self.n_ehu;
        let n_ehu = ((eta * total as f64).round() as usize).min(total);
        (total - n_ehu, n_ehu)
    }
}
