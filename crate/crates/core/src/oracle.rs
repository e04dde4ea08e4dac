//! Exhaustive grid search over message powers for instances with at most two
//! information users. Constraint checks here are written out from the model
//! equations directly and share no code with the solvers' checker.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::params::PhysParams;
use crate::precoding::PrecoderSet;
use crate::utility::{Allocation, QosSpec};

/// Largest number of information users the grid search accepts.
pub const MAX_ORACLE_IUS: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub objective: f64,
    /// Grid points visited.
    pub evaluated: usize,
}

/// Per-user power axes: log-spaced from `P_j,min` to the largest `P_j` that
/// keeps every AP within its cap while the other users sit at their minimum.
/// A zero minimum becomes an explicit zero first point.
pub fn power_axes(precoder: &PrecoderSet, qos: &QosSpec, params: &PhysParams, points: usize) -> Vec<Vec<f64>> {
    let n_iu = precoder.n_iu();
    let gamma = params.snr_per_watt();
    let beta = params.rate_prefactor();
    let floor: Vec<f64> = (0..n_iu).map(|j| ((qos.rate_thresholds[j] / beta).exp2() - 1.0) / gamma).collect();
    let cap = params.power_cap();
    let g_bar = &precoder.g_bar;
    (0..n_iu)
        .map(|j| {
            let mut top = f64::INFINITY;
            for i in 0..precoder.n_ap() {
                if g_bar[(i, j)] > 0.0 {
                    let others: f64 = (0..n_iu).filter(|&l| l != j).map(|l| g_bar[(i, l)] * floor[l]).sum();
                    top = top.min((cap - others) / g_bar[(i, j)]);
                }
            }
            let lo = if floor[j] > 0.0 { floor[j] } else { top * 1e-9 };
            if !(top > lo) {
                return vec![floor[j]];
            }
            let ratio = (top / lo).ln();
            let mut axis: Vec<f64> =
                (0..points).map(|s| lo * (ratio * s as f64 / (points - 1) as f64).exp()).collect();
            axis[points - 1] = top;
            if floor[j] == 0.0 {
                axis[0] = 0.0;
            }
            axis
        })
        .collect()
}

pub fn grid_search(
    channel: &ChannelMatrix,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
    alpha: f64,
    grid_points_per_dim: usize,
) -> Result<OracleResult> {
    let n_iu = precoder.n_iu();
    if n_iu > MAX_ORACLE_IUS {
        return Err(Error::InvalidParams(format!("grid search handles at most {MAX_ORACLE_IUS} IUs, got {n_iu}")));
    }
    if grid_points_per_dim < 2 {
        return Err(Error::InvalidParams("grid search needs at least 2 points per dimension".into()));
    }
    let axes = power_axes(precoder, qos, params, grid_points_per_dim);
    let n_ap = precoder.n_ap();
    let h_ehu = channel.ehu();

    let gamma = params.snr_per_watt();
    let beta = params.rate_prefactor();
    let cap = params.power_cap();
    let mid = 0.5 * (params.bias_max + params.bias_min);
    let harvest = params.fill_factor * params.conv_factor_rho * params.led_power * params.thermal_voltage;
    let to_current = params.conv_factor_rho * params.led_power;

    let evaluate = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
        let mut bias = vec![0.0; n_ap];
        for i in 0..n_ap {
            let q: f64 = (0..n_iu).map(|j| precoder.g_bar[(i, j)] * p[j]).sum();
            if q > cap * (1.0 + 1e-12) {
                return None;
            }
            bias[i] = params.bias_max - q.sqrt() / params.led_power;
            if bias[i] < mid * (1.0 - 1e-12) || bias[i] > params.bias_max {
                return None;
            }
        }
        let mut energy = 0.0;
        for k in 0..h_ehu.nrows() {
            let hb: f64 = (0..n_ap).map(|i| h_ehu[(k, i)] * bias[i]).sum();
            let e = harvest * hb * (1.0 + to_current * hb / params.dark_current).ln();
            if e < qos.energy_thresholds[k] {
                return None;
            }
            energy += e;
        }
        let rate: f64 = p.iter().map(|&pj| beta * (1.0 + gamma * pj).log2()).sum();
        Some((alpha * rate + (1.0 - alpha) / qos.omega * energy, bias))
    };

    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut evaluated = 0;
    let mut index = vec![0usize; n_iu];
    loop {
        let p: Vec<f64> = (0..n_iu).map(|j| axes[j][index[j]]).collect();
        evaluated += 1;
        if let Some((objective, bias)) = evaluate(&p) {
            if best.as_ref().is_none_or(|b| objective > b.0) {
                best = Some((objective, p, bias));
            }
        }
        // odometer over the axes, first user fastest
        let mut d = 0;
        while d < n_iu {
            index[d] += 1;
            if index[d] < axes[d].len() {
                break;
            }
            index[d] = 0;
            d += 1;
        }
        if d == n_iu {
            break;
        }
    }

    let (objective, p, bias) = best.ok_or_else(|| Error::Infeasible("no grid point meets every constraint".into()))?;
    Ok(OracleResult {
        allocation: Allocation { bias: DVector::from_vec(bias), powers: DVector::from_vec(p) },
        objective,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precoding::zf_precoder;
    use nalgebra::DMatrix;

    fn tiny(n_iu: usize) -> (ChannelMatrix, PrecoderSet) {
        let rows = [
            [3.0e-6, 1.0e-6, 4.0e-7, 2.0e-7],
            [5.0e-7, 2.5e-6, 8.0e-7, 1.2e-6],
            [5.0e-3, 1.0e-2, 7.5e-3, 2.5e-3],
        ];
        let mut gains = DMatrix::zeros(n_iu + 1, 4);
        for r in 0..n_iu {
            gains.row_mut(r).copy_from_slice(&rows[r]);
        }
        gains.row_mut(n_iu).copy_from_slice(&rows[2]);
        let ch = ChannelMatrix::new(gains, n_iu).unwrap();
        let pre = zf_precoder(&ch.iu()).unwrap();
        (ch, pre)
    }

    #[test]
    fn two_points_visit_the_endpoints() {
        let params = PhysParams::default();
        let (ch, pre) = tiny(1);
        let qos = QosSpec::uniform(1, 1, 1e7, 1e-6, 0.5, 12e3);
        let r = grid_search(&ch, &pre, &qos, &params, 0.5, 2).unwrap();
        assert_eq!(r.evaluated, 2);
        let axis = &power_axes(&pre, &qos, &params, 2)[0];
        assert!(r.allocation.powers[0] == axis[0] || r.allocation.powers[0] == axis[1]);
    }

    #[test]
    fn refinement_never_loses() {
        let params = PhysParams::default();
        let (ch, pre) = tiny(2);
        let qos = QosSpec::uniform(2, 1, 1e7, 1e-6, 0.5, 12e3);
        let coarse = grid_search(&ch, &pre, &qos, &params, 0.5, 20).unwrap();
        // 39 points contain every point of the 20-point axis
        let fine = grid_search(&ch, &pre, &qos, &params, 0.5, 39).unwrap();
        assert!(fine.objective >= coarse.objective * (1.0 - 1e-14));
    }

    #[test]
    fn guards() {
        let params = PhysParams::default();
        let (ch, pre) = tiny(1);
        let qos = QosSpec::uniform(1, 1, 1e7, 1e-6, 0.5, 12e3);
        assert!(grid_search(&ch, &pre, &qos, &params, 0.5, 1).is_err());
        let qos = QosSpec::uniform(1, 1, 1e7, 10.0, 0.5, 12e3);
        assert!(matches!(grid_search(&ch, &pre, &qos, &params, 0.5, 10), Err(Error::Infeasible(_))));
    }
}
