//! Monte-Carlo trials, parameter sweeps and CSV output.
//!
//! Trial `i` always places users with seed `seed + i`, whatever the sweep
//! point or algorithm, so every comparison is paired.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, ScenarioConfig};
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, channel_matrix, ChannelMatrix};
use crate::optimizer::{solve_baseline, solve_weighted, ConstraintClass, SolveStatus, TraceEntry};
use crate::oracle::{grid_search, MAX_ORACLE_IUS};
use crate::params::PhysParams;
use crate::precoding::{zf_precoder, PrecoderSet};
use crate::utility::{sum_rate, total_energy, Allocation};

/// Placement attempts per trial before a degenerate channel counts as a failure.
pub const MAX_DRAWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Iterative,
    Baseline,
    Oracle,
}

impl Solver {
    pub fn label(&self) -> &'static str {
        match self {
            Solver::Iterative => "iterative",
            Solver::Baseline => "baseline",
            Solver::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub solver: Solver,
    pub status: SolveStatus,
    pub objective: f64,
    pub sum_rate: f64,
    pub total_energy: f64,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    pub allocation: Allocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub index: usize,
    /// Placement seed actually used (differs from `seed + index` after a redraw).
    pub seed: u64,
    pub alpha: f64,
    pub outcomes: Vec<Outcome>,
    /// Set when the trial produced no solver output at all.
    pub failure: Option<String>,
}

impl TrialResult {
    pub fn outcome(&self, solver: Solver) -> Option<&Outcome> {
        self.outcomes.iter().find(|o| o.solver == solver)
    }
}

/// One drawn instance: channel and precoder for a given FoV and user split.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub params: PhysParams,
    pub channel: ChannelMatrix,
    pub precoder: PrecoderSet,
}

/// Builds the instance for trial `index`, redrawing placements whose IU
/// channel is too ill-conditioned for zero-forcing.
pub fn draw_scenario(cfg: &ScenarioConfig, fov_deg: f64, n_iu: usize, n_ehu: usize, index: usize) -> Result<Scenario> {
    let params = cfg.params(fov_deg);
    params.validate()?;
    let layout = cfg.layout(n_iu, n_ehu);
    let base = cfg.seed.wrapping_add(index as u64);
    let mut reseed = ChaCha8Rng::seed_from_u64(base);
    reseed.set_stream(1);
    let mut seed = base;
    let mut last = None;
    for _ in 0..MAX_DRAWS {
        let geometry = build_geometry(&layout, seed)?;
        let channel = channel_matrix(&geometry, &params);
        match zf_precoder(&channel.iu()) {
            Ok(precoder) => return Ok(Scenario { seed, params, channel, precoder }),
            Err(e @ Error::DegenerateChannel { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
        seed = reseed.random();
    }
    Err(last.expect("at least one draw"))
}

fn solver_outcome(solver: Solver, report: crate::optimizer::SolverReport) -> Outcome {
    Outcome {
        solver,
        status: report.status,
        objective: report.objective,
        sum_rate: report.sum_rate,
        total_energy: report.total_energy,
        iterations: report.iterations,
        converged_at: report.converged_at,
        allocation: report.allocation,
    }
}

/// Runs the configured algorithms on one instance at one weight.
pub fn solve_scenario(cfg: &ScenarioConfig, sc: &Scenario, alpha: f64) -> Result<Vec<Outcome>> {
    let (n_iu, n_ehu) = (sc.channel.n_iu(), sc.channel.n_ehu());
    let qos = cfg.qos(n_iu, n_ehu, alpha);
    let opts = cfg.solver_options();
    let (iterative, baseline, oracle) = match cfg.algorithm {
        Algorithm::Iterative => (true, false, false),
        Algorithm::Baseline => (false, true, false),
        Algorithm::Oracle => (false, false, true),
        Algorithm::All => (true, true, n_iu <= MAX_ORACLE_IUS),
    };
    let mut out = Vec::new();
    if iterative {
        let r = solve_weighted(&sc.channel, &sc.precoder, &qos, &sc.params, &opts)?;
        out.push(solver_outcome(Solver::Iterative, r));
    }
    if baseline {
        let r = solve_baseline(&sc.channel, &sc.precoder, &qos, &sc.params)?;
        out.push(solver_outcome(Solver::Baseline, r));
    }
    if oracle {
        let outcome = match grid_search(&sc.channel, &sc.precoder, &qos, &sc.params, alpha, cfg.oracle_points) {
            Ok(r) => Outcome {
                solver: Solver::Oracle,
                status: SolveStatus::Ok,
                objective: r.objective,
                sum_rate: sum_rate(&r.allocation.powers, &sc.params)?,
                total_energy: total_energy(&r.allocation.bias, &sc.channel.ehu(), &sc.params),
                iterations: 1,
                converged_at: Some(1),
                allocation: r.allocation,
            },
            Err(Error::Infeasible(_)) => Outcome {
                solver: Solver::Oracle,
                status: SolveStatus::Infeasible(ConstraintClass::Joint),
                objective: f64::NAN,
                sum_rate: f64::NAN,
                total_energy: f64::NAN,
                iterations: 1,
                converged_at: None,
                allocation: Allocation {
                    bias: nalgebra::DVector::from_element(sc.channel.n_ap(), f64::NAN),
                    powers: nalgebra::DVector::from_element(n_iu, f64::NAN),
                },
            },
            Err(e) => return Err(e),
        };
        out.push(outcome);
    }
    Ok(out)
}

/// Trial `index` at every weight in `alphas`, on one shared placement.
pub fn run_trial_alphas(
    cfg: &ScenarioConfig,
    fov_deg: f64,
    n_iu: usize,
    n_ehu: usize,
    alphas: &[f64],
    index: usize,
) -> Vec<TrialResult> {
    let failed = |seed: u64, alpha: f64, msg: String| TrialResult {
        index,
        seed,
        alpha,
        outcomes: Vec::new(),
        failure: Some(msg),
    };
    let base = cfg.seed.wrapping_add(index as u64);
    let sc = match draw_scenario(cfg, fov_deg, n_iu, n_ehu, index) {
        Ok(sc) => sc,
        Err(e) => return alphas.iter().map(|&a| failed(base, a, e.to_string())).collect(),
    };
    alphas
        .iter()
        .map(|&alpha| match solve_scenario(cfg, &sc, alpha) {
            Ok(outcomes) => TrialResult { index, seed: sc.seed, alpha, outcomes, failure: None },
            Err(e) => failed(sc.seed, alpha, e.to_string()),
        })
        .collect()
}

/// Trial `index` at the configured FoV, user counts and first weight.
pub fn run_trial(cfg: &ScenarioConfig, index: usize) -> TrialResult {
    let alpha = cfg.alpha.first().copied().unwrap_or(0.5);
    run_trial_alphas(cfg, cfg.fov_deg, cfg.n_iu, cfg.n_ehu, &[alpha], index).remove(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Alpha,
    Fov,
    Eta,
    Convergence,
}

impl std::str::FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(SweepKind::Alpha),
            "fov" => Ok(SweepKind::Fov),
            "eta" => Ok(SweepKind::Eta),
            "convergence" => Ok(SweepKind::Convergence),
            other => Err(Error::Config(format!("unknown sweep kind '{other}'"))),
        }
    }
}

/// Every trial at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: Vec<TrialResult>,
}

/// Runs all trials at every point of an alpha, fov or eta sweep. Trials run
/// in parallel; results come back ordered by (value, trial index).
pub fn sweep_trials(cfg: &ScenarioConfig, kind: SweepKind) -> Result<Vec<SweepPoint>> {
    let alpha0 = cfg.alpha.first().copied().unwrap_or(0.5);
    let trials = cfg.trials;
    match kind {
        SweepKind::Alpha => {
            if cfg.alpha.is_empty() {
                return Err(Error::Config("alpha list is empty".into()));
            }
            let per_trial: Vec<Vec<TrialResult>> = (0..trials)
                .into_par_iter()
                .map(|i| run_trial_alphas(cfg, cfg.fov_deg, cfg.n_iu, cfg.n_ehu, &cfg.alpha, i))
                .collect();
            Ok(cfg
                .alpha
                .iter()
                .enumerate()
                .map(|(a, &value)| SweepPoint { value, trials: per_trial.iter().map(|t| t[a].clone()).collect() })
                .collect())
        }
        SweepKind::Fov => {
            if cfg.fov_sweep_deg.is_empty() {
                return Err(Error::Config("fov_sweep_deg is empty".into()));
            }
            Ok(cfg
                .fov_sweep_deg
                .iter()
                .map(|&fov| SweepPoint {
                    value: fov,
                    trials: (0..trials)
                        .into_par_iter()
                        .map(|i| run_trial_alphas(cfg, fov, cfg.n_iu, cfg.n_ehu, &[alpha0], i).remove(0))
                        .collect(),
                })
                .collect())
        }
        SweepKind::Eta => {
            if cfg.eta.is_empty() {
                return Err(Error::Config("eta list is empty".into()));
            }
            Ok(cfg
                .eta
                .iter()
                .map(|&eta| {
                    let (n_iu, n_ehu) = cfg.split_users(eta);
                    SweepPoint {
                        value: eta,
                        trials: (0..trials)
                            .into_par_iter()
                            .map(|i| run_trial_alphas(cfg, cfg.fov_deg, n_iu, n_ehu, &[alpha0], i).remove(0))
                            .collect(),
                    }
                })
                .collect())
        }
        SweepKind::Convergence => Err(Error::Config("the convergence sweep has no trial table; use convergence_trace".into())),
    }
}

/// Trial averages for one solver at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub solver: Solver,
    pub weighted_sum: f64,
    pub sum_rate: f64,
    pub energy: f64,
    pub feasible_trials: usize,
    pub mean_iterations: f64,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        if self.feasible_trials == 0 {
            "infeasible"
        } else {
            "ok"
        }
    }
}

/// Means over trials whose outcome carries a solution; other trials are
/// counted out.
pub fn summarize(points: &[SweepPoint]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for point in points {
        let mut solvers: Vec<Solver> = [Solver::Iterative, Solver::Baseline, Solver::Oracle]
            .into_iter()
            .filter(|&s| point.trials.iter().any(|t| t.outcome(s).is_some()))
            .collect();
        if solvers.is_empty() {
            // every trial failed before solving
            solvers = vec![Solver::Iterative, Solver::Baseline];
        }
        for solver in solvers {
            let ok: Vec<&Outcome> = point
                .trials
                .iter()
                .filter_map(|t| t.outcome(solver))
                .filter(|o| o.status.has_solution())
                .collect();
            let n = ok.len();
            let mean = |f: fn(&Outcome) -> f64| {
                if n == 0 {
                    f64::NAN
                } else {
                    ok.iter().map(|o| f(o)).sum::<f64>() / n as f64
                }
            };
            rows.push(SweepRow {
                value: point.value,
                solver,
                weighted_sum: mean(|o| o.objective),
                sum_rate: mean(|o| o.sum_rate),
                energy: mean(|o| o.total_energy),
                feasible_trials: n,
                mean_iterations: mean(|o| o.iterations as f64),
            });
        }
    }
    rows
}

/// Fixed twelve-significant-digit rendering used in every CSV cell.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.11e}")
    }
}

pub fn sweep_column(kind: SweepKind) -> &'static str {
    match kind {
        SweepKind::Alpha => "alpha",
        SweepKind::Fov => "fov_deg",
        SweepKind::Eta => "eta",
        SweepKind::Convergence => "iteration",
    }
}

pub fn write_sweep_csv<W: Write>(out: &mut W, kind: SweepKind, rows: &[SweepRow]) -> std::io::Result<()> {
    writeln!(
        out,
        "{},algo,weighted_sum,sum_rate_bps,energy_W,feasible_trials,mean_iterations,status",
        sweep_column(kind)
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.value,
            r.solver.label(),
            fmt_num(r.weighted_sum),
            fmt_num(r.sum_rate),
            fmt_num(r.energy),
            r.feasible_trials,
            fmt_num(r.mean_iterations),
            r.status()
        )?;
    }
    Ok(())
}

/// Per-iteration trace of the iterative solver on trial 0 at the first weight.
pub fn convergence_trace(cfg: &ScenarioConfig) -> Result<Vec<TraceEntry>> {
    let alpha = cfg.alpha.first().copied().unwrap_or(0.5);
    let sc = draw_scenario(cfg, cfg.fov_deg, cfg.n_iu, cfg.n_ehu, 0)?;
    let qos = cfg.qos(cfg.n_iu, cfg.n_ehu, alpha);
    let report = solve_weighted(&sc.channel, &sc.precoder, &qos, &sc.params, &cfg.solver_options())?;
    Ok(report.trace)
}

pub fn write_trace_csv<W: Write>(out: &mut W, trace: &[TraceEntry]) -> std::io::Result<()> {
    writeln!(out, "iteration,objective,best_objective,bias_step,feasible")?;
    for t in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            t.iteration,
            fmt_num(t.objective),
            fmt_num(t.best_objective),
            fmt_num(t.bias_step),
            t.feasible
        )?;
    }
    Ok(())
}

/// Solver versus grid search on one small instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub index: usize,
    pub n_iu: usize,
    pub alpha: f64,
    pub solver: Outcome,
    pub oracle: Outcome,
    /// `(solver - oracle) / |oracle|`; 0 when both are infeasible.
    pub relative_gap: f64,
}

impl OracleComparison {
    pub fn agrees(&self, tol: f64) -> bool {
        match (self.solver.status.has_solution(), self.oracle.status.has_solution()) {
            (true, true) => self.relative_gap.abs() <= tol,
            (false, false) => true,
            _ => false,
        }
    }
}

/// Four APs on a 2 m lattice in a 4 m × 4 m room, one EHU and one or two IUs.
pub fn tiny_config(cfg: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        room_m: [4.0, 4.0, cfg.room_m[2]],
        ap_rows: 2,
        ap_cols: 2,
        ap_spacing_m: 2.0,
        algorithm: Algorithm::All,
        ..cfg.clone()
    }
}

/// Compares the iterative solver with grid search on `instances` tiny
/// scenarios, alternating one and two IUs and cycling through the weights.
pub fn oracle_check(cfg: &ScenarioConfig, instances: usize) -> Result<Vec<OracleComparison>> {
    let tiny = tiny_config(cfg);
    let alphas = if cfg.alpha.is_empty() { vec![0.5] } else { cfg.alpha.clone() };
    (0..instances)
        .into_par_iter()
        .map(|i| {
            let n_iu = 1 + i % MAX_ORACLE_IUS;
            let alpha = alphas[i % alphas.len()];
            let sc = draw_scenario(&tiny, tiny.fov_deg, n_iu, 1, i)?;
            let mut outcomes = solve_scenario(&tiny, &sc, alpha)?;
            let take = |outcomes: &mut Vec<Outcome>, s: Solver| {
                let at = outcomes.iter().position(|o| o.solver == s).expect("solver ran");
                outcomes.swap_remove(at)
            };
            let oracle = take(&mut outcomes, Solver::Oracle);
            let solver = take(&mut outcomes, Solver::Iterative);
            let relative_gap = if solver.status.has_solution() && oracle.status.has_solution() {
                (solver.objective - oracle.objective) / oracle.objective.abs()
            } else {
                0.0
            };
            Ok(OracleComparison { index: i, n_iu, alpha, solver, oracle, relative_gap })
        })
        .collect()
}
