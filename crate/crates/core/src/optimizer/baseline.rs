//! Equal-bias baseline: one DC bias shared by every AP, blended between the
//! smallest bias that powers the EHUs and the largest one the rate thresholds
//! leave room for.

use nalgebra::{DMatrix, DVector};

use super::iterative::{infeasible_report, Instance};
use super::{ConstraintClass, SolverReport};
use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::numerics::{newton_root, solve_lp, LpProblem, LpStatus};
use crate::params::PhysParams;
use crate::precoding::PrecoderSet;
use crate::utility::{min_powers, Allocation, QosSpec};

/// Smallest equal bias meeting every EHU threshold, floored at the midpoint
/// of the linear region. Each EHU's requirement is the root of
/// `b c₁ ln(1 + c₂ b) = E_th` on `[0, 2 I_H]`.
pub fn min_equal_bias(h_ehu: &DMatrix<f64>, qos: &QosSpec, params: &PhysParams) -> Result<DVector<f64>> {
    if qos.energy_thresholds.len() != h_ehu.nrows() {
        return Err(Error::Dimension(format!(
            "{} energy thresholds for {} EHUs",
            qos.energy_thresholds.len(),
            h_ehu.nrows()
        )));
    }
    let mut required = params.bias_floor();
    let bracket = (0.0, 2.0 * params.bias_max);
    for k in 0..h_ehu.nrows() {
        let gain = h_ehu.row(k).sum();
        let c1 = params.harvest_prefactor() * gain;
        let c2 = params.conv_factor_rho * params.led_power * gain / params.dark_current;
        let e_th = qos.energy_thresholds[k];
        let f = |b: f64| b * c1 * (c2 * b).ln_1p() - e_th;
        let df = |b: f64| c1 * (c2 * b).ln_1p() + b * c1 * c2 / (1.0 + c2 * b);
        let root = newton_root(f, df, params.bias_max, 1e-14 * e_th, bracket).map_err(|_| {
            Error::Infeasible(format!("EHU {k} cannot reach {e_th:e} W with an equal bias up to {:e} A", bracket.1))
        })?;
        if root > params.bias_max {
            return Err(Error::Infeasible(format!("EHU {k} needs an equal bias of {root:e} A, above I_H")));
        }
        required = required.max(root);
    }
    Ok(DVector::from_element(h_ehu.ncols(), required))
}

/// Largest equal bias leaving every AP the amplitude its share of the
/// rate-threshold powers needs.
pub fn max_equal_bias(precoder: &PrecoderSet, qos: &QosSpec, params: &PhysParams) -> DVector<f64> {
    let p_min = min_powers(qos, params);
    let peak = precoder.ap_powers(&p_min).iter().fold(0.0f64, |a, &q| a.max(q));
    let b = params.bias_max.min(params.bias_max - peak.sqrt() / params.led_power);
    DVector::from_element(precoder.n_ap(), b)
}

/// Equal bias `α b_min + (1 - α) b_max`; message powers from the LP that
/// maximizes the summed SNR within the amplitude that bias leaves. At `α = 0`
/// the rate-threshold powers are kept.
pub fn solve_baseline(
    channel: &ChannelMatrix,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
) -> Result<SolverReport> {
    let inst = Instance::new(channel, precoder, qos, params)?;
    let (n_ap, n_iu) = (inst.n_ap(), channel.n_iu());
    let b_min = match min_equal_bias(&inst.h_ehu, qos, params) {
        Ok(b) => b[0],
        Err(Error::Infeasible(_)) => return Ok(infeasible_report(ConstraintClass::Energy, n_ap, n_iu)),
        Err(e) => return Err(e),
    };
    let b_max = max_equal_bias(precoder, qos, params)[0];
    if b_max < params.bias_floor() * (1.0 - 1e-12) {
        return Ok(infeasible_report(ConstraintClass::Rate, n_ap, n_iu));
    }
    if b_min > b_max {
        return Ok(infeasible_report(ConstraintClass::EqualBias, n_ap, n_iu));
    }

    let alpha = qos.alpha;
    let b = alpha * b_min + (1.0 - alpha) * b_max;
    let powers = if alpha == 0.0 || n_iu == 0 {
        inst.p_min.clone()
    } else {
        let gamma = params.snr_per_watt();
        let budget = (params.led_power * (params.bias_max - b)).powi(2);
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in 0..n_ap {
            let coef = precoder.g_bar.row(i).transpose() / gamma;
            let scale = budget.max(coef.amax());
            if scale > 0.0 {
                rows.push(coef / scale);
                rhs.push(budget / scale);
            }
        }
        let a = DMatrix::from_fn(rows.len(), n_iu, |r, c| rows[r][c]);
        let mut lp = LpProblem::new(DVector::from_element(n_iu, 1.0), a, DVector::from_vec(rhs));
        lp.bounds = inst.p_min.iter().map(|p| (gamma * p, f64::INFINITY)).collect();
        let sol = solve_lp(&lp);
        if sol.status != LpStatus::Optimal {
            return Ok(infeasible_report(ConstraintClass::Surrogate, n_ap, n_iu));
        }
        DVector::from_fn(n_iu, |j, _| (sol.x[j] / gamma).max(inst.p_min[j]))
    };
    let allocation = Allocation { bias: DVector::from_element(n_ap, b), powers };
    Ok(inst.report(qos, allocation, 1, Some(1), Vec::new(), None))
}
