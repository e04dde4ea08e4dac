//! Zero-forcing precoder over the information-user channel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::PhysParams;

/// Largest accepted condition number of `H Hᵀ`.
pub const MAX_GRAM_CONDITION: f64 = 1e12;
/// Largest accepted entry of `|H G - I|`.
pub const ZF_RESIDUAL_TOL: f64 = 1e-8;

/// The precoder `G` (APs × IUs) and its entrywise square `Ḡ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub g: DMatrix<f64>,
    pub g_bar: DMatrix<f64>,
}

impl PrecoderSet {
    pub fn n_ap(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_iu(&self) -> usize {
        self.g.ncols()
    }

    /// Per-AP message power `Ḡ P`.
    pub fn ap_powers(&self, powers: &DVector<f64>) -> DVector<f64> {
        &self.g_bar * powers
    }
}

/// `G = Hᵀ (H Hᵀ)⁻¹` via a Cholesky solve of the Gram system with one round of
/// iterative refinement. Rejects ill-conditioned draws so the caller can
/// redraw user positions.
pub fn zf_precoder(h_iu: &DMatrix<f64>) -> Result<PrecoderSet> {
    let (n_iu, n_ap) = h_iu.shape();
    if n_iu >= n_ap {
        return Err(Error::TooManyInformationUsers { n_iu, n_ap });
    }
    if n_iu == 0 {
        let empty = DMatrix::zeros(n_ap, 0);
        return Ok(PrecoderSet { g: empty.clone(), g_bar: empty });
    }

    let gram = h_iu * h_iu.transpose();
    let eig = gram.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::DegenerateChannel { condition });
    }
    let chol = gram.clone().cholesky().ok_or(Error::DegenerateChannel { condition })?;

    let mut x = chol.solve(h_iu);
    let residual = h_iu - &gram * &x;
    x += chol.solve(&residual);
    let g = x.transpose();

    let deviation = (h_iu * &g - DMatrix::<f64>::identity(n_iu, n_iu)).amax();
    if !(deviation <= ZF_RESIDUAL_TOL) {
        return Err(Error::DegenerateChannel { condition });
    }
    let g_bar = g.map(|v| v * v);
    Ok(PrecoderSet { g, g_bar })
}

/// Bias-linearized map `G_b`: row `i` is `ḡ_i / (P_opt² (I_H - b̂_i))`, so that
/// `I_H - G_b P` reproduces the exact bias when `P` maps back to `b̂`.
pub fn linearized_map(precoder: &PrecoderSet, b_hat: &DVector<f64>, params: &PhysParams) -> Result<DMatrix<f64>> {
    if b_hat.len() != precoder.n_ap() {
        return Err(Error::Dimension(format!(
            "expansion bias has {} entries for {} APs",
            b_hat.len(),
            precoder.n_ap()
        )));
    }
    let mut g_b = precoder.g_bar.clone();
    for (i, &b) in b_hat.iter().enumerate() {
        let headroom = params.bias_max - b;
        if !(headroom > 0.0) {
            return Err(Error::LinearizationSingular { ap: i });
        }
        g_b.row_mut(i).scale_mut(1.0 / (params.led_power.powi(2) * headroom));
    }
    Ok(g_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn padded_identity_inverts_to_stacked_identity() {
        let mut h = DMatrix::zeros(3, 5);
        for i in 0..3 {
            h[(i, i)] = 1.0;
        }
        let p = zf_precoder(&h).unwrap();
        let mut expected = DMatrix::zeros(5, 3);
        for i in 0..3 {
            expected[(i, i)] = 1.0;
        }
        assert!((p.g - expected).amax() < 1e-15);
    }

    #[test]
    fn matches_dense_solve_oracle() {
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.2, 0.1, 0.3, 0.9, 0.4, 0.7]);
        // numpy: solve(H Hᵀ, H)ᵀ
        let expected = DMatrix::from_row_slice(
            4,
            2,
            &[
                1.06224066, -0.42323651, -0.02904564, 0.59751037, -0.04149378, 0.28215768, -0.39419087,
                0.68049793,
            ],
        );
        let p = zf_precoder(&h).unwrap();
        assert!((&p.g - expected).amax() < 1e-8);
        assert!(p.g_bar.iter().all(|v| *v >= 0.0));
        assert!((p.g_bar[(0, 1)] - 0.42323651f64.powi(2)).abs() < 1e-8);
    }

    #[test]
    fn rejects_rank_deficient_rows() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(zf_precoder(&h), Err(Error::DegenerateChannel { .. })));
        let square = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(zf_precoder(&square), Err(Error::TooManyInformationUsers { .. })));
    }

    #[test]
    fn no_information_users_gives_empty_precoder() {
        let p = zf_precoder(&DMatrix::zeros(0, 4)).unwrap();
        assert_eq!(p.g.shape(), (4, 0));
    }

    #[test]
    fn linearized_map_row_scale_at_midpoint() {
        let params = PhysParams::default();
        let h = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let p = zf_precoder(&h).unwrap();
        let b_hat = DVector::from_element(2, 0.006);
        let g_b = linearized_map(&p, &b_hat, &params).unwrap();
        let scale = 1.0 / (100.0 * 0.006);
        assert!((g_b[(0, 0)] - p.g_bar[(0, 0)] * scale).abs() < 1e-15);
    }

    #[test]
    fn linearized_map_rejects_full_bias() {
        let params = PhysParams::default();
        let p = zf_precoder(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        let b_hat = DVector::from_vec(vec![0.006, params.bias_max]);
        assert_eq!(linearized_map(&p, &b_hat, &params), Err(Error::LinearizationSingular { ap: 1 }));
    }

    #[test]
    fn linearized_bias_is_exact_at_expansion_point() {
        let params = PhysParams::default();
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.2, 0.1, 0.3, 0.9, 0.4, 0.7]);
        let p = zf_precoder(&h).unwrap();
        let powers = DVector::from_vec(vec![1.0e-4, 3.0e-5]);
        let b_hat = crate::utility::bias_from_powers(&powers, &p, &params).unwrap();
        let g_b = linearized_map(&p, &b_hat, &params).unwrap();
        let b_lin = DVector::from_element(4, params.bias_max) - &g_b * &powers;
        assert!((b_lin - &b_hat).amax() < 1e-15);
    }

    #[test]
    fn linearized_map_reproduces_componentwise_ratio() {
        let params = PhysParams::default();
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.5, 0.2, 0.1, 0.3, 0.9, 0.4, 0.7]);
        let p = zf_precoder(&h).unwrap();
        let b_hat = DVector::from_vec(vec![0.006, 0.007, 0.0105, 0.0119]);
        let powers = DVector::from_vec(vec![2.5e-4, 7.0e-5]);
        let g_b = linearized_map(&p, &b_hat, &params).unwrap();
        let lhs = &g_b * &powers;
        let ap = &p.g_bar * &powers;
        for i in 0..4 {
            let rhs = ap[i] / (params.led_power.powi(2) * (params.bias_max - b_hat[i]));
            assert!((lhs[i] - rhs).abs() <= 1e-14 * rhs.abs());
        }
    }
}
