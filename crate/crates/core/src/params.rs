//! Physical constants of the link, stored in SI units.

use crate::error::{Error, Result};

/// Physical parameters of the LEDs, photodiodes, solar cells and room surfaces.
///
/// Currents are in amperes, powers in watts and lengths in meters. Angles are
/// kept in degrees since that is how they are configured.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Modulation bandwidth `W` in Hz.
    pub bandwidth: f64,
    /// Photodiode area of information users in m².
    pub pd_area_iu: f64,
    /// Solar-panel area of energy-harvesting users in m².
    pub pd_area_ehu: f64,
    pub optical_filter_gain: f64,
    /// LED half-intensity radiation angle in degrees.
    pub half_intensity_angle: f64,
    /// Receiver field-of-view semi-angle in degrees.
    pub fov_semi_angle: f64,
    /// Optical-to-electric conversion factor in A/W.
    pub conv_factor_rho: f64,
    pub refractive_index: f64,
    /// Upper end of the LED linear region, `I_H`, in A.
    pub bias_max: f64,
    /// Lower end of the LED linear region, `I_L`, in A.
    pub bias_min: f64,
    pub fill_factor: f64,
    /// LED power per unit drive current, W/A.
    pub led_power: f64,
    /// Thermal voltage in V.
    pub thermal_voltage: f64,
    /// Dark saturation current in A.
    pub dark_current: f64,
    /// Noise power spectral density in A²/Hz.
    pub noise_psd: f64,
    /// Reflectance of the walls; 0 disables the first-reflection path.
    pub wall_reflectance: f64,
    /// Edge length of the square wall patches in m.
    pub wall_patch_edge: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            bandwidth: 20e6,
            pd_area_iu: 0.1e-4,
            pd_area_ehu: 0.04,
            optical_filter_gain: 1.0,
            half_intensity_angle: 60.0,
            fov_semi_angle: 45.0,
            conv_factor_rho: 0.53,
            refractive_index: 1.5,
            bias_max: 12e-3,
            bias_min: 0.0,
            fill_factor: 0.75,
            led_power: 10.0,
            thermal_voltage: 25e-3,
            dark_current: 1e-10,
            noise_psd: 1e-22,
            wall_reflectance: 0.8,
            wall_patch_edge: 0.25,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth", self.bandwidth),
            ("pd_area_iu", self.pd_area_iu),
            ("pd_area_ehu", self.pd_area_ehu),
            ("optical_filter_gain", self.optical_filter_gain),
            ("conv_factor_rho", self.conv_factor_rho),
            ("refractive_index", self.refractive_index),
            ("bias_max", self.bias_max),
            ("fill_factor", self.fill_factor),
            ("led_power", self.led_power),
            ("thermal_voltage", self.thermal_voltage),
            ("dark_current", self.dark_current),
            ("noise_psd", self.noise_psd),
            ("wall_patch_edge", self.wall_patch_edge),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {value}")));
            }
        }
        if !(self.bias_min >= 0.0 && self.bias_min < self.bias_max) {
            return Err(Error::InvalidParams(format!(
                "need 0 <= bias_min < bias_max, got [{}, {}]",
                self.bias_min, self.bias_max
            )));
        }
        for (name, angle) in [
            ("half_intensity_angle", self.half_intensity_angle),
            ("fov_semi_angle", self.fov_semi_angle),
        ] {
            if !(angle > 0.0 && angle < 90.0) {
                return Err(Error::InvalidParams(format!("{name} must lie in (0, 90) degrees, got {angle}")));
            }
        }
        if !(0.0..=1.0).contains(&self.wall_reflectance) {
            return Err(Error::InvalidParams(format!(
                "wall_reflectance must lie in [0, 1], got {}",
                self.wall_reflectance
            )));
        }
        Ok(())
    }

    /// Lambertian emission order `m = -1 / log2(cos θ½)`.
    pub fn lambertian_order(&self) -> f64 {
        -1.0 / self.half_intensity_angle.to_radians().cos().log2()
    }

    /// Optical concentrator gain for an incidence angle given in radians.
    pub fn concentrator_gain(&self, incidence: f64) -> f64 {
        let fov = self.fov_semi_angle.to_radians();
        if incidence <= fov {
            self.refractive_index.powi(2) / fov.sin().powi(2)
        } else {
            0.0
        }
    }

    /// Midpoint of the linear region, the smallest admissible DC bias.
    pub fn bias_floor(&self) -> f64 {
        0.5 * (self.bias_max + self.bias_min)
    }

    /// Largest per-AP message power, `P_opt² ((I_H - I_L)/2)²`.
    pub fn power_cap(&self) -> f64 {
        (self.led_power * 0.5 * (self.bias_max - self.bias_min)).powi(2)
    }

    /// Rate prefactor `β = W/2`.
    pub fn rate_prefactor(&self) -> f64 {
        0.5 * self.bandwidth
    }

    /// SNR per watt of message power, `γ = e ρ² P_opt² / (2π W N₀)`.
    pub fn snr_per_watt(&self) -> f64 {
        std::f64::consts::E * self.conv_factor_rho.powi(2) * self.led_power.powi(2)
            / (2.0 * std::f64::consts::PI * self.bandwidth * self.noise_psd)
    }

    /// `f ρ P_opt V_t`, the harvested-power prefactor.
    pub(crate) fn harvest_prefactor(&self) -> f64 {
        self.fill_factor * self.conv_factor_rho * self.led_power * self.thermal_voltage
    }
}
