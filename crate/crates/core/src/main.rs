use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vlc_dcbias::config::{Algorithm, ScenarioConfig};
use vlc_dcbias::error::Error;
use vlc_dcbias::experiment::{
    convergence_trace, fmt_num, oracle_check, run_trial_alphas, summarize, sweep_trials, write_sweep_csv,
    write_trace_csv, SweepKind,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "vlc-dcbias", version, about = "DC-bias and message-power allocation for VLC networks")]
struct Cli {
    /// TOML scenario file; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// iterative, baseline, oracle or all.
    #[arg(long, global = true)]
    algorithm: Option<Algorithm>,
    /// Monte-Carlo trials per sweep point.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit CSV (the only tabular format).
    #[arg(long, global = true, default_value_t = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the allocation.
    Solve {
        /// Trial index; its placement matches the same index in a sweep.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Weight on the sum-rate; the first configured weight by default.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Monte-Carlo sweep written as CSV.
    Sweep {
        /// alpha, fov, eta or convergence.
        #[arg(long)]
        kind: SweepKind,
    },
    /// Compare the iterative solver with grid search on small instances.
    OracleCheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Largest accepted relative objective gap.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(a) = cli.algorithm {
        cfg.algorithm = a;
    }
    if let Some(t) = cli.trials {
        cfg.trials = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_output(cfg: &ScenarioConfig) -> io::Result<Box<dyn Write>> {
    Ok(match &cfg.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_vec(v: &nalgebra::DVector<f64>) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(" ")
}

fn solve(cfg: &ScenarioConfig, trial: usize, alpha: Option<f64>) -> Result<u8, Box<dyn std::error::Error>> {
    let alpha = alpha.or(cfg.alpha.first().copied()).unwrap_or(0.5);
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Box::new(Error::Config(format!("alpha {alpha} outside [0, 1]"))));
    }
    let result = run_trial_alphas(cfg, cfg.fov_deg, cfg.n_iu, cfg.n_ehu, &[alpha], trial).remove(0);
    let mut out = open_output(cfg)?;
    writeln!(out, "trial {} seed {} alpha {}", result.index, result.seed, result.alpha)?;
    if let Some(msg) = &result.failure {
        writeln!(out, "failed: {msg}")?;
        out.flush()?;
        return Ok(EXIT_INFEASIBLE);
    }
    for o in &result.outcomes {
        writeln!(out, "[{}] status {}", o.solver.label(), o.status.label())?;
        if let vlc_dcbias::optimizer::SolveStatus::Infeasible(class) = o.status {
            writeln!(out, "  violated: {class:?}")?;
            continue;
        }
        writeln!(out, "  objective     {}", fmt_num(o.objective))?;
        writeln!(out, "  sum_rate_bps  {}", fmt_num(o.sum_rate))?;
        writeln!(out, "  energy_W      {}", fmt_num(o.total_energy))?;
        writeln!(out, "  iterations    {}", o.iterations)?;
        writeln!(out, "  bias_A        {}", fmt_vec(&o.allocation.bias))?;
        writeln!(out, "  powers_W      {}", fmt_vec(&o.allocation.powers))?;
    }
    out.flush()?;
    let any = result.outcomes.iter().any(|o| o.status.has_solution());
    Ok(if any { 0 } else { EXIT_INFEASIBLE })
}

fn sweep(cfg: &ScenarioConfig, kind: SweepKind) -> Result<u8, Box<dyn std::error::Error>> {
    if kind == SweepKind::Convergence {
        let trace = convergence_trace(cfg)?;
        let mut out = open_output(cfg)?;
        write_trace_csv(&mut out, &trace)?;
        out.flush()?;
        return Ok(if trace.iter().any(|t| t.feasible) { 0 } else { EXIT_INFEASIBLE });
    }
    let rows = summarize(&sweep_trials(cfg, kind)?);
    let mut out = open_output(cfg)?;
    write_sweep_csv(&mut out, kind, &rows)?;
    out.flush()?;
    Ok(if rows.iter().all(|r| r.feasible_trials == 0) { EXIT_INFEASIBLE } else { 0 })
}

fn check(cfg: &ScenarioConfig, instances: usize, tol: f64) -> Result<u8, Box<dyn std::error::Error>> {
    let comparisons = oracle_check(cfg, instances)?;
    let mut out = open_output(cfg)?;
    writeln!(out, "index,n_iu,alpha,solver_objective,oracle_objective,relative_gap,agrees")?;
    let mut failures = 0;
    for c in &comparisons {
        let ok = c.agrees(tol);
        failures += usize::from(!ok);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.index,
            c.n_iu,
            c.alpha,
            fmt_num(c.solver.objective),
            fmt_num(c.oracle.objective),
            fmt_num(c.relative_gap),
            ok
        )?;
    }
    out.flush()?;
    eprintln!("{}/{} instances within {tol}", comparisons.len() - failures, comparisons.len());
    Ok(if failures == 0 { 0 } else { EXIT_FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let result = match cli.command {
        Command::Solve { trial, alpha } => solve(&cfg, trial, alpha),
        Command::Sweep { kind } => sweep(&cfg, kind),
        Command::OracleCheck { instances, tolerance } => check(&cfg, instances, tolerance),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::Config(_)) => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            };
            ExitCode::from(code)
        }
    }
}
