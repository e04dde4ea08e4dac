use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::barrier::SeparableProblem;
use super::dual::{kkt_power, lambda_from_equality, update_duals, DualState};
use super::model::{linearize, LinearizedModel};
use super::{
    ConstraintClass, DualMethod, SolveStatus, SolverOptions, SolverReport, TraceEntry, ACCEPT_TOL, POLISH_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::geometry::ChannelMatrix;
use crate::numerics::{solve_lp, LpProblem, LpStatus};
use crate::params::PhysParams;
use crate::precoding::PrecoderSet;
use crate::utility::{
    bias_unchecked, check_allocation, harvested_energy, min_powers, sum_rate, total_energy, weighted_objective,
    Allocation, Coupling, QosSpec,
};

/// Everything a solve needs, validated once.
pub(crate) struct Instance<'a> {
    pub channel: &'a ChannelMatrix,
    pub precoder: &'a PrecoderSet,
    pub qos: &'a QosSpec,
    pub params: &'a PhysParams,
    pub h_ehu: DMatrix<f64>,
    pub p_min: DVector<f64>,
}

impl<'a> Instance<'a> {
    pub fn new(
        channel: &'a ChannelMatrix,
        precoder: &'a PrecoderSet,
        qos: &'a QosSpec,
        params: &'a PhysParams,
    ) -> Result<Self> {
        params.validate()?;
        qos.validate()?;
        if precoder.n_ap() != channel.n_ap() || precoder.n_iu() != channel.n_iu() {
            return Err(Error::Dimension(format!(
                "precoder is {}x{} for a channel with {} APs and {} IUs",
                precoder.n_ap(),
                precoder.n_iu(),
                channel.n_ap(),
                channel.n_iu()
            )));
        }
        if qos.rate_thresholds.len() != channel.n_iu() || qos.energy_thresholds.len() != channel.n_ehu() {
            return Err(Error::Dimension(format!(
                "{} rate and {} energy thresholds for {} IUs and {} EHUs",
                qos.rate_thresholds.len(),
                qos.energy_thresholds.len(),
                channel.n_iu(),
                channel.n_ehu()
            )));
        }
        let p_min = min_powers(qos, params);
        Ok(Self { channel, precoder, qos, params, h_ehu: channel.ehu(), p_min })
    }

    pub fn n_ap(&self) -> usize {
        self.channel.n_ap()
    }

    /// The bias at the rate-threshold powers, which is the largest bias any
    /// rate-feasible allocation can have. Fails if that point already breaks
    /// the linear region or cannot power the EHUs.
    pub fn top_bias(&self) -> std::result::Result<DVector<f64>, ConstraintClass> {
        let cap = self.params.power_cap();
        if self.precoder.ap_powers(&self.p_min).iter().any(|q| *q > cap * (1.0 + 1e-12)) {
            return Err(ConstraintClass::Rate);
        }
        let top = bias_unchecked(&self.p_min, self.precoder, self.params);
        for k in 0..self.h_ehu.nrows() {
            let e = harvested_energy(&top, &self.h_ehu.row(k).transpose(), self.params);
            if e < self.qos.energy_thresholds[k] {
                return Err(ConstraintClass::Energy);
            }
        }
        Ok(top)
    }

    /// Expansion points stay inside `[midpoint, I_H)` so `G_b` is finite.
    fn clamp_expansion(&self, b: &DVector<f64>) -> DVector<f64> {
        let hi = self.params.bias_max * (1.0 - 1e-9);
        b.map(|v| v.clamp(self.params.bias_floor(), hi))
    }

    pub fn report(
        &self,
        qos: &QosSpec,
        allocation: Allocation,
        iterations: usize,
        converged_at: Option<usize>,
        trace: Vec<TraceEntry>,
        duals: Option<DualState>,
    ) -> SolverReport {
        let status = if converged_at.is_some() { SolveStatus::Ok } else { SolveStatus::MaxIter };
        SolverReport {
            objective: weighted_objective(&allocation, qos, self.channel, self.params),
            sum_rate: sum_rate(&allocation.powers, self.params).unwrap_or(f64::NAN),
            total_energy: total_energy(&allocation.bias, &self.h_ehu, self.params),
            allocation,
            iterations,
            converged: converged_at.is_some(),
            converged_at,
            trace,
            status,
            duals,
        }
    }
}

pub(crate) fn infeasible_report(class: ConstraintClass, n_ap: usize, n_iu: usize) -> SolverReport {
    SolverReport {
        allocation: Allocation {
            bias: DVector::from_element(n_ap, f64::NAN),
            powers: DVector::from_element(n_iu, f64::NAN),
        },
        objective: f64::NAN,
        sum_rate: f64::NAN,
        total_energy: f64::NAN,
        iterations: 0,
        converged: false,
        converged_at: None,
        trace: Vec::new(),
        status: SolveStatus::Infeasible(class),
        duals: None,
    }
}

/// Best-feasible bookkeeping and the per-iteration trace.
struct Tracker<'a> {
    inst: &'a Instance<'a>,
    qos: &'a QosSpec,
    best: Allocation,
    best_objective: f64,
    trace: Vec<TraceEntry>,
}

impl<'a> Tracker<'a> {
    fn new(inst: &'a Instance<'a>, qos: &'a QosSpec, start: Allocation) -> Self {
        let best_objective = weighted_objective(&start, qos, inst.channel, inst.params);
        Self { inst, qos, best: start, best_objective, trace: Vec::new() }
    }

    fn offer(&mut self, iteration: usize, candidate: Allocation, bias_step: f64) {
        let inst = self.inst;
        let objective = weighted_objective(&candidate, self.qos, inst.channel, inst.params);
        let feasible = check_allocation(
            &candidate,
            self.qos,
            inst.channel,
            inst.precoder,
            inst.params,
            Coupling::Equality,
            ACCEPT_TOL,
        )
        .is_empty();
        if feasible && objective > self.best_objective {
            self.best = candidate;
            self.best_objective = objective;
        }
        self.trace.push(TraceEntry { iteration, objective, best_objective: self.best_objective, bias_step, feasible });
    }

    fn skip(&mut self, iteration: usize, bias_step: f64) {
        self.trace.push(TraceEntry {
            iteration,
            objective: f64::NAN,
            best_objective: self.best_objective,
            bias_step,
            feasible: false,
        });
    }
}

/// Stopping rule on the bias change, with optional polishing past the
/// reported tolerance.
struct Convergence {
    tolerance: f64,
    polish: bool,
    converged_at: Option<usize>,
    last_step: f64,
}

impl Convergence {
    fn new(opts: &SolverOptions) -> Self {
        Self { tolerance: opts.tolerance, polish: opts.polish, converged_at: None, last_step: f64::INFINITY }
    }

    fn should_stop(&mut self, iteration: usize, step: f64, b_hat_norm: f64) -> bool {
        let mut stop = false;
        if step < self.tolerance * b_hat_norm {
            self.converged_at.get_or_insert(iteration);
            stop = !self.polish || step <= POLISH_TOLERANCE * b_hat_norm || step >= self.last_step;
        }
        self.last_step = step;
        stop
    }
}

fn trivial_report(inst: &Instance, qos: &QosSpec, top: DVector<f64>) -> SolverReport {
    // no message power to allocate: every AP sits at full bias
    let allocation = Allocation { bias: top, powers: DVector::zeros(0) };
    inst.report(qos, allocation, 1, Some(1), Vec::new(), None)
}

/// Weighted sum-rate / harvested-energy maximization by successive
/// convexification around the bias vector.
///
/// `α = 0` is delegated to [`solve_max_energy`].
pub fn solve_weighted(
    channel: &ChannelMatrix,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    if qos.alpha == 0.0 {
        return solve_max_energy(channel, precoder, qos, params, opts);
    }
    let inst = Instance::new(channel, precoder, qos, params)?;
    let top = match inst.top_bias() {
        Ok(top) => top,
        Err(class) => return Ok(infeasible_report(class, inst.n_ap(), channel.n_iu())),
    };
    if channel.n_iu() == 0 {
        return Ok(trivial_report(&inst, qos, top));
    }
    match opts.dual_method {
        DualMethod::Exact => weighted_exact(&inst, top, opts),
        DualMethod::Subgradient => weighted_subgradient(&inst, top, opts),
    }
}

fn weighted_exact(inst: &Instance, top: DVector<f64>, opts: &SolverOptions) -> Result<SolverReport> {
    let start = Allocation { bias: top.clone(), powers: inst.p_min.clone() };
    let mut tracker = Tracker::new(inst, inst.qos, start);
    let mut conv = Convergence::new(opts);
    let fallback = inst.clamp_expansion(&top);
    let mut b_hat = DVector::from_element(inst.n_ap(), inst.params.bias_floor());
    let mut duals = None;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let model = linearize(inst.precoder, &inst.h_ehu, &b_hat, inst.qos, inst.params)?;
        let Some((powers, state)) = solve_surrogate(inst, &model, opts.step0) else {
            // the linearization at b̂ cut off every point; restart from the
            // rate-threshold bias, where the surrogate is exact
            let step = (&fallback - &b_hat).norm();
            tracker.skip(it, step);
            if b_hat == fallback {
                break;
            }
            b_hat = fallback.clone();
            continue;
        };
        let bias = bias_unchecked(&powers, inst.precoder, inst.params);
        let step = (&bias - &b_hat).norm();
        let norm = b_hat.norm();
        tracker.offer(it, Allocation { bias: bias.clone(), powers }, step);
        duals = Some(state);
        if conv.should_stop(it, step, norm) {
            break;
        }
        b_hat = inst.clamp_expansion(&bias);
    }
    Ok(inst.report(inst.qos, tracker.best, iterations, conv.converged_at, tracker.trace, duals))
}

/// Natural subgradient steps: `step0` times the multiplier scale that makes
/// the constraint term comparable to the marginal rate, per unit violation.
fn natural_steps(inst: &Instance, model: &LinearizedModel, step0: f64) -> (f64, f64) {
    let alpha = inst.qos.alpha.max(f64::EPSILON);
    let scale = alpha * inst.params.rate_prefactor() * inst.params.snr_per_watt() / std::f64::consts::LN_2;
    let w_max = model.w_k.amax();
    let m_max = model.m.amax();
    let step_mu = if w_max > 0.0 && m_max > 0.0 { step0 * scale / (w_max * m_max) } else { step0 };
    let g_max = inst.precoder.g_bar.amax();
    let step_d = if g_max > 0.0 { step0 * scale / (g_max * inst.params.power_cap()) } else { step0 };
    (step_mu, step_d)
}

fn weighted_subgradient(inst: &Instance, top: DVector<f64>, opts: &SolverOptions) -> Result<SolverReport> {
    let start = Allocation { bias: top, powers: inst.p_min.clone() };
    let mut tracker = Tracker::new(inst, inst.qos, start);
    let mut conv = Convergence::new(opts);
    let mut b_hat = DVector::from_element(inst.n_ap(), inst.params.bias_floor());
    let mut model = linearize(inst.precoder, &inst.h_ehu, &b_hat, inst.qos, inst.params)?;

    let (step_mu, step_d) = natural_steps(inst, &model, opts.step0);
    let mut duals = DualState::zeros(inst.channel.n_iu(), inst.channel.n_ehu(), inst.n_ap(), step_mu, step_d);
    if let Some(seed) = opts.random_initial_duals {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu_scale = step_mu * model.m.amax();
        let d_scale = step_d * inst.params.power_cap();
        duals.mu.iter_mut().for_each(|v| *v = rng.random::<f64>() * mu_scale);
        duals.d.iter_mut().for_each(|v| *v = rng.random::<f64>() * d_scale);
    }
    duals.lambda = lambda_from_equality(&duals.mu, &duals.d, &model, inst.precoder, inst.qos, inst.params);

    let mut iterations = 0;
    for it in 1..=opts.max_iter {
        iterations = it;
        let powers = match kkt_power(&duals, &model, inst.precoder, inst.qos, inst.params) {
            Ok(p) => p,
            Err(Error::UnboundedPower { .. }) => {
                duals.step_mu *= 0.5;
                duals.step_d *= 0.5;
                duals.lambda = lambda_from_equality(&duals.mu, &duals.d, &model, inst.precoder, inst.qos, inst.params);
                tracker.skip(it, f64::NAN);
                continue;
            }
            Err(e) => return Err(e),
        };
        let bias = bias_unchecked(&powers, inst.precoder, inst.params);
        let step = (&bias - &b_hat).norm();
        let norm = b_hat.norm();
        tracker.offer(it, Allocation { bias: bias.clone(), powers: powers.clone() }, step);
        if conv.should_stop(it, step, norm) {
            break;
        }
        b_hat = inst.clamp_expansion(&bias);
        model = linearize(inst.precoder, &inst.h_ehu, &b_hat, inst.qos, inst.params)?;
        duals = update_duals(&duals, &powers, &model, inst.precoder, inst.qos, inst.params, it);
    }
    Ok(inst.report(inst.qos, tracker.best, iterations, conv.converged_at, tracker.trace, Some(duals)))
}

/// Which block of the scaled constraint matrix a row came from.
#[derive(Clone, Copy)]
enum Row {
    Energy(usize),
    Cap(usize),
    Floor(usize),
}

/// Constraint rows of the convexified problem in SNR units `y = γ P`, each
/// scaled by `max(|rhs|, ‖coef‖∞)`. Returns `None` if a row reads `0 <= negative`.
fn scaled_rows(inst: &Instance, model: &LinearizedModel, floors: bool) -> Option<(DMatrix<f64>, DVector<f64>, Vec<(Row, f64)>)> {
    let n = inst.channel.n_iu();
    let gamma = inst.params.snr_per_watt();
    let cap = inst.params.power_cap();
    let mut raw: Vec<(Row, DVector<f64>, f64)> = Vec::new();
    for k in 0..model.n_ehu() {
        raw.push((Row::Energy(k), model.w_k.column(k) / gamma, model.m[k]));
    }
    for i in 0..inst.n_ap() {
        raw.push((Row::Cap(i), inst.precoder.g_bar.row(i).transpose() / gamma, cap));
    }
    if floors {
        for j in 0..n {
            let mut coef = DVector::zeros(n);
            coef[j] = -1.0;
            raw.push((Row::Floor(j), coef, -gamma * inst.p_min[j]));
        }
    }

    let mut kept = Vec::new();
    for (row, coef, rhs) in raw {
        let scale = rhs.abs().max(coef.amax());
        if coef.amax() == 0.0 {
            if rhs < 0.0 {
                return None;
            }
            continue;
        }
        kept.push((row, coef / scale, rhs / scale, scale));
    }
    let a = DMatrix::from_fn(kept.len(), n, |r, c| kept[r].1[c]);
    let r = DVector::from_iterator(kept.len(), kept.iter().map(|k| k.2));
    let meta = kept.iter().map(|k| (k.0, k.3)).collect();
    Some((a, r, meta))
}

/// Solves the convexified problem at `model` and returns the powers with the
/// multipliers converted back to physical units.
fn solve_surrogate(inst: &Instance, model: &LinearizedModel, step0: f64) -> Option<(DVector<f64>, DualState)> {
    let (alpha, omega) = (inst.qos.alpha, inst.qos.omega);
    let gamma = inst.params.snr_per_watt();
    let kappa = std::f64::consts::LN_2 / inst.params.rate_prefactor();
    let (a, r, meta) = scaled_rows(inst, model, true)?;
    let c = &model.w * (kappa * (1.0 - alpha) / omega / gamma);
    let problem = SeparableProblem { alpha, c, a, r };
    let sol = problem.solve()?;

    let powers = DVector::from_fn(sol.y.len(), |j, _| (sol.y[j] / gamma).max(inst.p_min[j]));
    let (step_mu, step_d) = natural_steps(inst, model, step0);
    let mut duals = DualState::zeros(inst.channel.n_iu(), inst.channel.n_ehu(), inst.n_ap(), step_mu, step_d);
    for (idx, &(row, scale)) in meta.iter().enumerate() {
        let nu = sol.nu[idx] / (kappa * scale);
        match row {
            Row::Energy(k) => duals.mu[k] = nu,
            Row::Cap(i) => duals.d[i] = nu,
            Row::Floor(j) => duals.lambda[j] = nu * gamma,
        }
    }
    Some((powers, duals))
}

/// Total harvested-energy maximization under the rate and linear-region
/// constraints: a linear program per outer iteration. The report's objective
/// is evaluated with `α = 0`.
pub fn solve_max_energy(
    channel: &ChannelMatrix,
    precoder: &PrecoderSet,
    qos: &QosSpec,
    params: &PhysParams,
    opts: &SolverOptions,
) -> Result<SolverReport> {
    let inst = Instance::new(channel, precoder, qos, params)?;
    let qos0 = qos.with_alpha(0.0);
    let top = match inst.top_bias() {
        Ok(top) => top,
        Err(class) => return Ok(infeasible_report(class, inst.n_ap(), channel.n_iu())),
    };
    if channel.n_iu() == 0 {
        return Ok(trivial_report(&inst, &qos0, top));
    }

    let gamma = params.snr_per_watt();
    let start = Allocation { bias: top.clone(), powers: inst.p_min.clone() };
    let mut tracker = Tracker::new(&inst, &qos0, start);
    let mut conv = Convergence::new(opts);
    let fallback = inst.clamp_expansion(&top);
    let mut b_hat = DVector::from_element(inst.n_ap(), params.bias_floor());
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;
        let model = linearize(precoder, &inst.h_ehu, &b_hat, qos, params)?;
        let lp_point = scaled_rows(&inst, &model, false).and_then(|(a, r, _)| {
            // maximize x - wᵀP, i.e. minimize wᵀy; the constant x is dropped
            let w = &model.w / gamma;
            let norm = w.amax();
            let objective = if norm > 0.0 { -w / norm } else { DVector::zeros(w.len()) };
            let mut lp = LpProblem::new(objective, a, r);
            lp.bounds = inst.p_min.iter().map(|p| (gamma * p, f64::INFINITY)).collect();
            let sol = solve_lp(&lp);
            (sol.status == LpStatus::Optimal).then_some(sol.x)
        });
        let Some(y) = lp_point else {
            let step = (&fallback - &b_hat).norm();
            tracker.skip(it, step);
            if b_hat == fallback {
                break;
            }
            b_hat = fallback.clone();
            continue;
        };
        let powers = DVector::from_fn(y.len(), |j, _| (y[j] / gamma).max(inst.p_min[j]));
        let bias = bias_unchecked(&powers, precoder, params);
        let step = (&bias - &b_hat).norm();
        let norm = b_hat.norm();
        tracker.offer(it, Allocation { bias: bias.clone(), powers }, step);
        if conv.should_stop(it, step, norm) {
            break;
        }
        b_hat = inst.clamp_expansion(&bias);
    }
    Ok(inst.report(&qos0, tracker.best, iterations, conv.converged_at, tracker.trace, None))
}
