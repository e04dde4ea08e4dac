use nalgebra::DVector;

use super::model::LinearizedModel;
use crate::error::{Error, Result};
use crate::params::PhysParams;
use crate::precoding::PrecoderSet;
use crate::utility::{min_powers, QosSpec};

/// Multipliers of the convexified problem in physical units, plus the base
/// subgradient steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Rate constraints `P_j >= P_j,min`.
    pub lambda: DVector<f64>,
    /// Linearized energy constraints.
    pub mu: DVector<f64>,
    /// Per-AP power caps.
    pub d: DVector<f64>,
    pub step_mu: f64,
    pub step_d: f64,
}

impl DualState {
    pub fn zeros(n_iu: usize, n_ehu: usize, n_ap: usize, step_mu: f64, step_d: f64) -> Self {
        Self {
            lambda: DVector::zeros(n_iu),
            mu: DVector::zeros(n_ehu),
            d: DVector::zeros(n_ap),
            step_mu,
            step_d,
        }
    }

    /// `Σ_k μ_k w_k + Σ_i d_i ḡ_i`, the constraint part of the stationarity
    /// condition shared by the power and λ formulas.
    fn pressure(&self, model: &LinearizedModel, precoder: &PrecoderSet) -> DVector<f64> {
        &model.w_k * &self.mu + precoder.g_bar.transpose() * &self.d
    }
}

/// Stationary message powers for the given multipliers, floored at the
/// rate-threshold powers.
pub fn kkt_power(
    duals: &DualState,
    model: &LinearizedModel,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
) -> Result<DVector<f64>> {
    let (alpha, beta, gamma) = (qos.alpha, params.rate_prefactor(), params.snr_per_watt());
    let pressure = duals.pressure(model, precoder);
    let p_min = min_powers(qos, params);
    let mut powers = DVector::zeros(p_min.len());
    for j in 0..powers.len() {
        let denom = -(1.0 - alpha) * model.w[j] / qos.omega + duals.lambda[j] - pressure[j];
        if !(denom < 0.0) {
            return Err(Error::UnboundedPower { user: j });
        }
        let p = -alpha * beta / (std::f64::consts::LN_2 * denom) - 1.0 / gamma;
        powers[j] = p.max(p_min[j]);
    }
    Ok(powers)
}

/// λ from the stationarity condition solved with `P_j = P_j,min`, floored at 0.
pub fn lambda_from_equality(
    mu: &DVector<f64>,
    d: &DVector<f64>,
    model: &LinearizedModel,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
) -> DVector<f64> {
    let (alpha, beta, gamma) = (qos.alpha, params.rate_prefactor(), params.snr_per_watt());
    let pressure = &model.w_k * mu + precoder.g_bar.transpose() * d;
    let p_min = min_powers(qos, params);
    DVector::from_fn(p_min.len(), |j, _| {
        let v = -alpha * beta / (std::f64::consts::LN_2 * (p_min[j] + 1.0 / gamma))
            + (1.0 - alpha) * model.w[j] / qos.omega
            + pressure[j];
        v.max(0.0)
    })
}

/// One projected subgradient step on μ and d with steps `δ / √iter`, then λ
/// re-solved from the new μ and d.
pub fn update_duals(
    state: &DualState,
    powers: &DVector<f64>,
    model: &LinearizedModel,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
    iter: usize,
) -> DualState {
    let root = (iter.max(1) as f64).sqrt();
    let delta_mu = state.step_mu / root;
    let delta_d = state.step_d / root;
    let energy_lhs = model.w_k.transpose() * powers;
    let mu = DVector::from_fn(state.mu.len(), |k, _| {
        (state.mu[k] + delta_mu * (energy_lhs[k] - model.m[k])).max(0.0)
    });
    let ap = precoder.ap_powers(powers);
    let cap = params.power_cap();
    let d = DVector::from_fn(state.d.len(), |i, _| (state.d[i] + delta_d * (ap[i] - cap)).max(0.0));
    let lambda = lambda_from_equality(&mu, &d, model, precoder, qos, params);
    DualState { lambda, mu, d, step_mu: state.step_mu, step_d: state.step_d }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn one_user_model(w: f64, w_k: &[f64]) -> LinearizedModel {
        let n_ehu = w_k.len();
        LinearizedModel {
            b_hat: DVector::from_element(2, 0.006),
            g_b: DMatrix::zeros(2, 1),
            z: DVector::zeros(n_ehu),
            x_k: DMatrix::zeros(2, n_ehu),
            x: 0.0,
            w_k: DMatrix::from_row_slice(1, n_ehu, w_k),
            w: DVector::from_element(1, w),
            m: DVector::from_element(n_ehu, 1.0),
        }
    }

    fn precoder_1x2() -> PrecoderSet {
        PrecoderSet { g: DMatrix::from_element(2, 1, 0.5), g_bar: DMatrix::from_element(2, 1, 0.25) }
    }

    #[test]
    fn closed_form_scalar_value() {
        let params = PhysParams { bandwidth: 2e7, ..PhysParams::default() };
        let qos = QosSpec::uniform(1, 0, 0.0, 0.0, 0.5, 1.0);
        // (1 - α) w / ω = 1 puts the denominator at -1
        let model = one_user_model(2.0, &[]);
        let duals = DualState::zeros(1, 0, 2, 1.0, 1.0);
        let p = kkt_power(&duals, &model, &precoder_1x2(), &qos, &params).unwrap();
        let expected = 7213475.204444817 - 1.0 / params.snr_per_watt();
        assert!((p[0] - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn nonnegative_denominator_is_rejected() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(1, 0, 0.0, 0.0, 1.0, 1.0);
        let model = one_user_model(0.0, &[]);
        let duals = DualState::zeros(1, 0, 2, 1.0, 1.0);
        let e = kkt_power(&duals, &model, &precoder_1x2(), &qos, &params);
        assert_eq!(e, Err(Error::UnboundedPower { user: 0 }));
    }

    #[test]
    fn power_shrinks_as_cap_dual_grows() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(1, 0, 0.0, 0.0, 1.0, 1.0);
        let model = one_user_model(0.0, &[]);
        let pre = precoder_1x2();
        let mut prev = f64::INFINITY;
        for d in [1e20, 2e20, 4e20, 8e20] {
            let mut duals = DualState::zeros(1, 0, 2, 1.0, 1.0);
            duals.d.fill(d);
            let p = kkt_power(&duals, &model, &pre, &qos, &params).unwrap()[0];
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn symmetric_users_get_equal_power() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(2, 1, 1e6, 0.0, 0.7, 12e3);
        let model = LinearizedModel {
            b_hat: DVector::from_element(2, 0.006),
            g_b: DMatrix::zeros(2, 2),
            z: DVector::zeros(1),
            x_k: DMatrix::zeros(2, 1),
            x: 0.0,
            w_k: DMatrix::from_element(2, 1, 3.0e5),
            w: DVector::from_element(2, 3.0e5),
            m: DVector::from_element(1, 1.0),
        };
        let pre = PrecoderSet { g: DMatrix::from_element(2, 2, 1e6), g_bar: DMatrix::from_element(2, 2, 1e12) };
        let mut duals = DualState::zeros(2, 1, 2, 1.0, 1.0);
        duals.mu[0] = 1e16;
        duals.d.fill(1e10);
        let p = kkt_power(&duals, &model, &pre, &qos, &params).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn subgradient_step_arithmetic() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(1, 1, 0.0, 0.0, 0.5, 12e3);
        // w_kᵀ P - m_k = 3 - 1 = 2
        let model = one_user_model(1.0, &[3.0]);
        let pre = precoder_1x2();
        let state = DualState::zeros(1, 1, 2, 0.1, 0.1);
        let next = update_duals(&state, &DVector::from_element(1, 1.0), &model, &pre, &qos, &params, 1);
        assert!((next.mu[0] - 0.2).abs() < 1e-15);
        // slack constraint stays at zero
        let slack = update_duals(&state, &DVector::from_element(1, 0.1), &model, &pre, &qos, &params, 1);
        assert_eq!(slack.mu[0], 0.0);
        // ḡᵢᵀP = 0.25 is far above the cap, so d moves by δ_d times the excess
        assert!((next.d[0] - 0.1 * (0.25 - params.power_cap())).abs() < 1e-15);
    }

    #[test]
    fn persistent_violation_grows_mu_and_cuts_power() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(1, 1, 0.0, 0.0, 0.5, 12e3);
        let model = one_user_model(1.0, &[3.0]);
        let pre = precoder_1x2();
        let p = DVector::from_element(1, 1.0);
        let s1 = update_duals(&DualState::zeros(1, 1, 2, 1e20, 0.0), &p, &model, &pre, &qos, &params, 1);
        let s2 = update_duals(&s1, &p, &model, &pre, &qos, &params, 2);
        // 2e20, then 2e20 + 1e20·2/√2
        assert!((s1.mu[0] - 2e20).abs() <= 1e6);
        assert!((s2.mu[0] - (2e20 + 2e20 / 2f64.sqrt())).abs() <= 1e6);
        let p1 = kkt_power(&s1, &model, &pre, &qos, &params).unwrap()[0];
        let p2 = kkt_power(&s2, &model, &pre, &qos, &params).unwrap()[0];
        assert!(p2 < p1);
    }

    #[test]
    fn equality_lambda_lifts_power_to_threshold() {
        let params = PhysParams::default();
        let qos = QosSpec::uniform(1, 1, 5e7, 0.0, 0.5, 12e3);
        let model = one_user_model(1.0, &[3.0]);
        let pre = precoder_1x2();
        let mut state = DualState::zeros(1, 1, 2, 1.0, 1.0);
        state.mu[0] = 1e25;
        state.lambda = lambda_from_equality(&state.mu, &state.d, &model, &pre, &qos, &params);
        assert!(state.lambda[0] > 0.0);
        let p = kkt_power(&state, &model, &pre, &qos, &params).unwrap()[0];
        let p_min = crate::utility::min_power(5e7, &params);
        assert!((p - p_min).abs() <= 1e-9 * p_min);
    }
}
