//! Sum-rate bound, harvested-energy model, power/bias coupling and the
//! weighted objective.
//!
//! Rates use base-2 logarithms and the SNR coefficient
//! `γ = e ρ² P_opt² / (2π W N₀)`, i.e. the LED power enters the SNR the same
//! way it enters the minimum-power threshold. Harvested energy is a power
//! (`f · I_DC · V_oc`, watts); energy thresholds are read as energy per second.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::params::PhysParams;
use crate::precoding::PrecoderSet;

/// Joint decision: per-AP DC bias (A) and per-IU message power (W).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub bias: DVector<f64>,
    pub powers: DVector<f64>,
}

/// Quality-of-service requirements and objective weights.
#[derive(Debug, Clone, PartialEq)]
pub struct QosSpec {
    /// Minimum rate per information user, bits/s.
    pub rate_thresholds: DVector<f64>,
    /// Minimum harvested power per energy-harvesting user, W.
    pub energy_thresholds: DVector<f64>,
    /// Weight of the sum-rate term, in [0, 1].
    pub alpha: f64,
    /// Magnitude equalizer dividing the energy term.
    pub omega: f64,
}

impl QosSpec {
    /// Same thresholds for every user.
    pub fn uniform(n_iu: usize, n_ehu: usize, rate: f64, energy: f64, alpha: f64, omega: f64) -> Self {
        Self {
            rate_thresholds: DVector::from_element(n_iu, rate),
            energy_thresholds: DVector::from_element(n_ehu, energy),
            alpha,
            omega,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rate_thresholds.iter().chain(self.energy_thresholds.iter()).any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidParams("QoS thresholds must be finite and nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParams(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParams(format!("omega must be positive, got {}", self.omega)));
        }
        Ok(())
    }
}

/// Rate of a single user at message power `p`.
pub fn user_rate(p: f64, params: &PhysParams) -> f64 {
    params.rate_prefactor() * (params.snr_per_watt() * p).ln_1p() / std::f64::consts::LN_2
}

/// Lower bound on the network sum-rate in bits/s.
pub fn sum_rate(powers: &DVector<f64>, params: &PhysParams) -> Result<f64> {
    if let Some(user) = powers.iter().position(|p| !(*p >= 0.0)) {
        return Err(Error::NegativePower { user });
    }
    Ok(powers.iter().fold(0.0, |acc, &p| acc + user_rate(p, params)))
}

/// Smallest message power meeting a rate threshold.
pub fn min_power(rate_threshold: f64, params: &PhysParams) -> f64 {
    (rate_threshold / params.rate_prefactor() * std::f64::consts::LN_2).exp_m1() / params.snr_per_watt()
}

pub fn min_powers(qos: &QosSpec, params: &PhysParams) -> DVector<f64> {
    qos.rate_thresholds.map(|r| min_power(r, params))
}

/// `I_H - sqrt(Ḡ P) / P_opt` without the linear-range check.
pub(crate) fn bias_unchecked(powers: &DVector<f64>, precoder: &PrecoderSet, params: &PhysParams) -> DVector<f64> {
    precoder
        .ap_powers(powers)
        .map(|q| params.bias_max - q.max(0.0).sqrt() / params.led_power)
}

/// DC bias implied by the message powers through the peak-amplitude
/// coupling. Biases that fall below the midpoint of the linear region are
/// reported as an error rather than clamped.
pub fn bias_from_powers(powers: &DVector<f64>, precoder: &PrecoderSet, params: &PhysParams) -> Result<DVector<f64>> {
    if powers.len() != precoder.n_iu() {
        return Err(Error::Dimension(format!(
            "{} powers for {} information users",
            powers.len(),
            precoder.n_iu()
        )));
    }
    let ap = precoder.ap_powers(powers);
    if let Some(i) = ap.iter().position(|q| !(*q >= 0.0)) {
        return Err(Error::NegativePower { user: i });
    }
    let bias = bias_unchecked(powers, precoder, params);
    let floor = params.bias_floor() - BIAS_TOL * params.bias_max;
    if let Some(ap) = bias.iter().position(|b| *b < floor) {
        return Err(Error::BiasOutOfRange { ap, bias: bias[ap] });
    }
    Ok(bias)
}

/// Slack allowed on the bias box, relative to `I_H`.
pub const BIAS_TOL: f64 = 1e-9;

/// Harvested power of one EHU with channel vector `h` under bias `b`.
pub fn harvested_energy(bias: &DVector<f64>, h: &DVector<f64>, params: &PhysParams) -> f64 {
    let hb = h.dot(bias);
    let current = params.conv_factor_rho * params.led_power * hb;
    params.harvest_prefactor() * hb * (current / params.dark_current).ln_1p()
}

/// Sum of harvested power over the rows of `h_ehu`.
pub fn total_energy(bias: &DVector<f64>, h_ehu: &DMatrix<f64>, params: &PhysParams) -> f64 {
    h_ehu
        .row_iter()
        .fold(0.0, |acc, row| acc + harvested_energy(bias, &row.transpose(), params))
}

pub fn weighted_objective(alloc: &Allocation, qos: &QosSpec, channel: &ChannelMatrix, params: &PhysParams) -> f64 {
    let rate = alloc.powers.iter().fold(0.0, |acc, &p| acc + user_rate(p.max(0.0), params));
    let energy = total_energy(&alloc.bias, &channel.ehu(), params);
    qos.alpha * rate + (1.0 - qos.alpha) / qos.omega * energy
}

/// How the bias and power vectors must be tied together.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    /// `Ḡ P = P_opt² (I_H - b)²`, used by the iterative solver.
    Equality,
    /// `Ḡ P <= P_opt² (I_H - b)²`, leftover amplitude headroom allowed.
    Headroom,
}

/// A violated constraint found by [`check_allocation`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Rate { user: usize, rate: f64, threshold: f64 },
    Energy { user: usize, energy: f64, threshold: f64 },
    BiasBox { ap: usize, bias: f64 },
    Coupling { ap: usize, lhs: f64, rhs: f64 },
    NegativePower { user: usize },
}

/// Lists every constraint the allocation breaks at relative tolerance `tol`.
pub fn check_allocation(
    alloc: &Allocation,
    qos: &QosSpec,
    channel: &ChannelMatrix,
    precoder: &PrecoderSet,
    params: &PhysParams,
    coupling: Coupling,
    tol: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (j, &p) in alloc.powers.iter().enumerate() {
        if p < 0.0 {
            out.push(Violation::NegativePower { user: j });
            continue;
        }
        let rate = user_rate(p, params);
        let threshold = qos.rate_thresholds[j];
        if rate < threshold * (1.0 - tol) {
            out.push(Violation::Rate { user: j, rate, threshold });
        }
    }
    for k in 0..channel.n_ehu() {
        let energy = harvested_energy(&alloc.bias, &channel.ehu_row(k), params);
        let threshold = qos.energy_thresholds[k];
        if energy < threshold * (1.0 - tol) {
            out.push(Violation::Energy { user: k, energy, threshold });
        }
    }
    let lo = params.bias_floor() * (1.0 - tol);
    let hi = params.bias_max * (1.0 + tol);
    for (i, &b) in alloc.bias.iter().enumerate() {
        if !(b >= lo && b <= hi) {
            out.push(Violation::BiasBox { ap: i, bias: b });
        }
    }
    let ap = precoder.ap_powers(&alloc.powers.map(|p| p.max(0.0)));
    // Compared on amplitudes, sqrt(Ḡ P) / P_opt against I_H - b. Half the power
    // tolerance in amplitude, plus a rounding floor for APs that carry almost no
    // message power.
    let floor = 64.0 * f64::EPSILON * params.bias_max;
    for (i, &b) in alloc.bias.iter().enumerate() {
        let lhs = ap[i].sqrt() / params.led_power;
        let rhs = params.bias_max - b;
        let slack = 0.5 * tol * lhs.max(rhs) + floor;
        let broken = match coupling {
            Coupling::Equality => (lhs - rhs).abs() > slack,
            Coupling::Headroom => lhs > rhs + slack,
        };
        if broken {
            out.push(Violation::Coupling { ap: i, lhs, rhs });
        }
    }
    out
}
