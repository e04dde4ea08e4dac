//! Reference checks shared by the integration tests. Nothing here calls the
//! library's own checker or solvers beyond the function under test.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vlc_dcbias::config::ScenarioConfig;
use vlc_dcbias::experiment::draw_scenario;
use vlc_dcbias::geometry::ChannelMatrix;
use vlc_dcbias::numerics::{bisect, newton_root, solve_lp, LpProblem, LpStatus};
use vlc_dcbias::params::PhysParams;
use vlc_dcbias::precoding::zf_precoder;
use vlc_dcbias::utility::{Allocation, QosSpec};

/// Best objective over the vertices of `{A x <= b, x >= 0}`, or `None` when
/// no vertex is feasible. Only meaningful for bounded polytopes.
pub fn vertex_max(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<f64> {
    let n = c.len();
    let m = a.nrows();
    let mut rows = DMatrix::zeros(m + n, n);
    rows.rows_mut(0, m).copy_from(a);
    let mut rhs = DVector::zeros(m + n);
    rhs.rows_mut(0, m).copy_from(b);
    for j in 0..n {
        rows[(m + j, j)] = -1.0;
    }
    let total = m + n;
    let mut best: Option<f64> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |r, col| rows[(pick[r], col)]);
        let sub_rhs = DVector::from_fn(n, |r, _| rhs[pick[r]]);
        if sub.determinant().abs() > 1e-12 {
            if let Some(x) = sub.lu().solve(&sub_rhs) {
                let slack = &rhs - &rows * &x;
                if slack.iter().all(|s| *s >= -1e-9) {
                    let v = c.dot(&x);
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        }
        // next n-subset in lexicographic order
        let mut i = n;
        while i > 0 && pick[i - 1] == total - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for k in i..n {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

#[derive(Debug, Default)]
pub struct KernelStats {
    pub total: usize,
    pub passed: usize,
    pub worst: f64,
}

impl KernelStats {
    fn record(&mut self, ok: bool, err: f64) {
        self.total += 1;
        self.passed += usize::from(ok);
        if err.is_finite() {
            self.worst = self.worst.max(err);
        } else {
            self.worst = f64::INFINITY;
        }
    }

    pub fn all_passed(&self) -> bool {
        self.total > 0 && self.passed == self.total
    }
}

/// Simplex against vertex enumeration on random bounded LPs with two or three
/// variables; infeasible draws must be reported infeasible by both.
pub fn lp_kernel(count: usize, seed: u64) -> KernelStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = KernelStats::default();
    for _ in 0..count {
        let n = rng.random_range(2..=3);
        let m_free = rng.random_range(1..=4);
        let m = m_free + n;
        let mut a = DMatrix::zeros(m, n);
        let mut b = DVector::zeros(m);
        for r in 0..m_free {
            for col in 0..n {
                a[(r, col)] = rng.random_range(-1.0..1.0);
            }
            b[r] = rng.random_range(-0.5..2.0);
        }
        // box rows keep the polytope bounded
        for j in 0..n {
            a[(m_free + j, j)] = 1.0;
            b[m_free + j] = rng.random_range(0.5..3.0);
        }
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let reference = vertex_max(&c, &a, &b);
        let sol = solve_lp(&LpProblem::new(c, a, b));
        match (reference, sol.status) {
            (Some(v), LpStatus::Optimal) => {
                let err = (sol.objective - v).abs();
                stats.record(err <= 1e-8, err);
            }
            (None, LpStatus::Infeasible) => stats.record(true, 0.0),
            _ => stats.record(false, f64::INFINITY),
        }
    }
    stats
}

/// Safeguarded Newton against plain bisection on the equal-bias harvesting
/// equation `b c₁ ln(1 + c₂ b) = E` with random gains and roots. Error is
/// relative to the root.
pub fn newton_kernel(count: usize, seed: u64) -> KernelStats {
    let p = PhysParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = KernelStats::default();
    let bracket = (0.0, 2.0 * p.bias_max);
    for _ in 0..count {
        let gain = 10f64.powf(rng.random_range(-3.0..-1.3));
        let c1 = p.fill_factor * p.conv_factor_rho * p.led_power * p.thermal_voltage * gain;
        let c2 = p.conv_factor_rho * p.led_power * gain / p.dark_current;
        let root = rng.random_range(1e-5..bracket.1 * 0.99);
        let e = root * c1 * (1.0 + c2 * root).ln();
        let f = |b: f64| b * c1 * (1.0 + c2 * b).ln() - e;
        let df = |b: f64| c1 * (1.0 + c2 * b).ln() + b * c1 * c2 / (1.0 + c2 * b);
        let x0 = rng.random_range(bracket.0..bracket.1);
        let newton = newton_root(f, df, x0, 1e-14 * e, bracket);
        let reference = bisect(f, bracket, 200);
        match (newton, reference) {
            (Ok(x), Ok(r)) => {
                let err = (x - r).abs() / r;
                stats.record(err <= 1e-10, err);
            }
            _ => stats.record(false, f64::INFINITY),
        }
    }
    stats
}

/// `H G = I` on IU channels drawn from random default-room placements with
/// one to eight IUs.
pub fn zf_kernel(count: usize, seed: u64) -> KernelStats {
    let mut stats = KernelStats::default();
    let cfg = ScenarioConfig { seed, ..ScenarioConfig::default() };
    for t in 0..count {
        let n_iu = 1 + t % 8;
        let Ok(sc) = draw_scenario(&cfg, cfg.fov_deg, n_iu, 1, t) else {
            stats.record(false, f64::INFINITY);
            continue;
        };
        let h = sc.channel.iu();
        let g = zf_precoder(&h).expect("draw_scenario already accepted it").g;
        let err = (&h * &g - DMatrix::<f64>::identity(n_iu, n_iu)).amax();
        stats.record(err <= 1e-8, err);
    }
    stats
}

/// Constraint audit written from the model equations: rate floors, energy
/// floors, the bias box and the bias/power coupling, all at relative
/// tolerance `tol`. Returns a description of each violation.
pub fn audit(
    alloc: &Allocation,
    channel: &ChannelMatrix,
    g: &DMatrix<f64>,
    qos: &QosSpec,
    p: &PhysParams,
    equality: bool,
    tol: f64,
) -> Vec<String> {
    let mut issues = Vec::new();
    let beta = p.bandwidth / 2.0;
    let e = std::f64::consts::E;
    let gamma = e * p.conv_factor_rho.powi(2) * p.led_power.powi(2)
        / (2.0 * std::f64::consts::PI * p.bandwidth * p.noise_psd);
    for (j, &pj) in alloc.powers.iter().enumerate() {
        let rate = beta * (1.0 + gamma * pj).log2();
        if !(pj >= 0.0) || rate < qos.rate_thresholds[j] * (1.0 - tol) {
            issues.push(format!("IU {j}: rate {rate:e} below {:e}", qos.rate_thresholds[j]));
        }
    }
    let h_ehu = channel.gains.rows(channel.n_iu(), channel.n_ehu());
    for k in 0..channel.n_ehu() {
        let hb: f64 = (0..alloc.bias.len()).map(|i| h_ehu[(k, i)] * alloc.bias[i]).sum();
        let i_dc = p.conv_factor_rho * p.led_power * hb;
        let v_oc = p.thermal_voltage * (1.0 + i_dc / p.dark_current).ln();
        let energy = p.fill_factor * i_dc * v_oc;
        if !(energy >= qos.energy_thresholds[k] * (1.0 - tol)) {
            issues.push(format!("EHU {k}: energy {energy:e} below {:e}", qos.energy_thresholds[k]));
        }
    }
    let mid = 0.5 * (p.bias_max + p.bias_min);
    for (i, &b) in alloc.bias.iter().enumerate() {
        if !(b >= mid * (1.0 - tol) && b <= p.bias_max * (1.0 + tol)) {
            issues.push(format!("AP {i}: bias {b:e} outside [{mid:e}, {:e}]", p.bias_max));
        }
    }
    // Σ_j g_ij² P_j against P_opt² (I_H - b_i)²; the floor covers rounding of
    // b near I_H, where the amplitude is the difference of two close numbers
    let ulp = 4.0 * f64::EPSILON * p.bias_max;
    for i in 0..alloc.bias.len() {
        let lhs: f64 = (0..alloc.powers.len()).map(|j| g[(i, j)] * g[(i, j)] * alloc.powers[j]).sum();
        let amp = p.bias_max - alloc.bias[i];
        let rhs = (p.led_power * amp).powi(2);
        let slack = tol * lhs.max(rhs) + p.led_power.powi(2) * 2.0 * amp.abs().max(ulp) * ulp;
        let broken = if equality { (lhs - rhs).abs() > slack } else { lhs > rhs + slack };
        if broken {
            issues.push(format!("AP {i}: coupling {lhs:e} vs {rhs:e}"));
        }
    }
    issues
}
