use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::PhysParams;
use crate::precoding::{linearized_map, PrecoderSet};
use crate::utility::QosSpec;

/// Surrogate of the energy terms around an expansion bias `b̂`.
///
/// With `z_k = ln(1 + ρ P_opt h_kᵀ b̂ / I₀)` frozen, the harvested power of
/// EHU `k` becomes the affine function `x_kᵀ (I_H 1 - G_b P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    pub b_hat: DVector<f64>,
    pub g_b: DMatrix<f64>,
    pub z: DVector<f64>,
    /// Column `k` is `x_k` (length `N_A`).
    pub x_k: DMatrix<f64>,
    /// `Σ_k I_H x_kᵀ 1`.
    pub x: f64,
    /// Column `k` is `w_k = G_bᵀ x_k` (length `N_IU`).
    pub w_k: DMatrix<f64>,
    pub w: DVector<f64>,
    /// `I_H x_kᵀ 1 - E_th,k`.
    pub m: DVector<f64>,
}

impl LinearizedModel {
    pub fn n_ehu(&self) -> usize {
        self.z.len()
    }

    /// Surrogate of total harvested power, `x - wᵀP`.
    pub fn energy(&self, powers: &DVector<f64>) -> f64 {
        self.x - self.w.dot(powers)
    }
}

pub fn linearize(
    precoder: &PrecoderSet,
    h_ehu: &DMatrix<f64>,
    b_hat: &DVector<f64>,
    qos: &QosSpec,
    params: &PhysParams,
) -> Result<LinearizedModel> {
    let n_ap = precoder.n_ap();
    let n_ehu = h_ehu.nrows();
    if h_ehu.ncols() != n_ap || qos.energy_thresholds.len() != n_ehu {
        return Err(Error::Dimension(format!(
            "EHU channel is {}x{}, expected {}x{} to match thresholds and APs",
            h_ehu.nrows(),
            h_ehu.ncols(),
            qos.energy_thresholds.len(),
            n_ap
        )));
    }
    let g_b = linearized_map(precoder, b_hat, params)?;

    let current_per_bias = params.conv_factor_rho * params.led_power / params.dark_current;
    let mut z = DVector::zeros(n_ehu);
    let mut x_k = DMatrix::zeros(n_ap, n_ehu);
    for k in 0..n_ehu {
        let h = h_ehu.row(k).transpose();
        z[k] = (current_per_bias * h.dot(b_hat)).ln_1p();
        x_k.set_column(k, &(h * (params.harvest_prefactor() * z[k])));
    }
    let w_k = g_b.transpose() * &x_k;
    let w = w_k.column_sum();
    let m = DVector::from_fn(n_ehu, |k, _| params.bias_max * x_k.column(k).sum() - qos.energy_thresholds[k]);
    let x = params.bias_max * x_k.sum();
    Ok(LinearizedModel { b_hat: b_hat.clone(), g_b, z, x_k, x, w_k, w, m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::zf_precoder;
    use crate::utility::{bias_from_powers, harvested_energy};

    fn instance() -> (PrecoderSet, DMatrix<f64>, QosSpec) {
        let h_iu = DMatrix::from_row_slice(2, 4, &[3.0e-6, 1.0e-6, 4.0e-7, 2.0e-7, 5.0e-7, 2.5e-6, 8.0e-7, 1.2e-6]);
        let h_ehu = DMatrix::from_row_slice(2, 4, &[1.0e-6, 2.0e-6, 1.5e-6, 0.5e-6, 0.7e-6, 0.9e-6, 2.2e-6, 1.1e-6]);
        let qos = QosSpec::uniform(2, 2, 1e6, 1e-7, 0.5, 12e3);
        (zf_precoder(&h_iu).unwrap(), h_ehu, qos)
    }

    #[test]
    fn midpoint_expansion_log_factor() {
        let params = PhysParams::default();
        let (pre, h_ehu, qos) = instance();
        let b_hat = DVector::from_element(4, params.bias_floor());
        let m = linearize(&pre, &h_ehu, &b_hat, &qos, &params).unwrap();
        let hb = h_ehu.row(0).sum() * 0.006;
        let expected = (0.53 * 10.0 * hb / 1e-10f64).ln_1p();
        assert!((m.z[0] - expected).abs() < 1e-13 * expected);
        assert!(m.z.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn no_ehus_gives_empty_sums() {
        let params = PhysParams::default();
        let (pre, _, _) = instance();
        let qos = QosSpec::uniform(2, 0, 1e6, 0.0, 0.5, 12e3);
        let b_hat = DVector::from_element(4, params.bias_floor());
        let m = linearize(&pre, &DMatrix::zeros(0, 4), &b_hat, &qos, &params).unwrap();
        assert_eq!(m.x, 0.0);
        assert!(m.w.iter().all(|v| *v == 0.0));
        assert_eq!(m.w_k.ncols(), 0);
    }

    #[test]
    fn recomposition_matches_surrogate_sum() {
        let params = PhysParams::default();
        let (pre, h_ehu, qos) = instance();
        let b_hat = DVector::from_vec(vec![0.007, 0.0091, 0.0112, 0.0065]);
        let m = linearize(&pre, &h_ehu, &b_hat, &qos, &params).unwrap();
        for powers in [DVector::from_vec(vec![1e-16, 3e-16]), DVector::from_vec(vec![2e-15, 4e-17])] {
            let b_lin = DVector::from_element(4, params.bias_max) - &m.g_b * &powers;
            let direct: f64 = (0..2).map(|k| m.x_k.column(k).dot(&b_lin)).sum();
            assert!((m.energy(&powers) - direct).abs() <= 1e-12 * direct.abs());
        }
    }

    #[test]
    fn surrogate_is_exact_at_its_own_expansion_point() {
        let params = PhysParams::default();
        let (pre, h_ehu, qos) = instance();
        let powers = DVector::from_vec(vec![2e-16, 1e-16]);
        let b = bias_from_powers(&powers, &pre, &params).unwrap();
        let m = linearize(&pre, &h_ehu, &b, &qos, &params).unwrap();
        let exact: f64 = (0..2).map(|k| harvested_energy(&b, &h_ehu.row(k).transpose(), &params)).sum();
        assert!((m.energy(&powers) - exact).abs() <= 1e-12 * exact);
    }
}
