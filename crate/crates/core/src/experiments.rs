//! Experiment runners behind the CLI: single solves, parameter sweeps and
//! Monte Carlo validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AxisVariable, Command, Gamma0Resolution, RunConfig};
use crate::error::{Error, Result};
use crate::model::{
    cycles_per_bit, gamma0, latency_quantile, total_cdf, total_latency_law, DesignPoint,
    SystemParams,
};
use crate::montecarlo::{simulate_latency, simulate_outage, QuantileMode, SimConfig};
use crate::optimizer::{
    solve_expected_baseline, solve_latency_constrained, solve_outage_constrained, ActiveConstraint,
    LatencyCriterion, SolveResult,
};
use crate::specfun::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Outage-constrained latency minimization.
    P1a,
    /// Latency-constrained outage minimization.
    P2a,
    /// Mean-latency baseline.
    Baseline,
}

/// One solved (or infeasible) design; the CSV row schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub problem: ProblemKind,
    pub axis: String,
    pub axis_value: f64,
    pub fr_ghz: f64,
    pub rho_th: Option<f64>,
    pub q_opt: Option<f64>,
    pub epsilon_opt: Option<f64>,
    pub objective: Option<f64>,
    /// The constrained latency statistic at the optimum, seconds.
    pub latency_s: Option<f64>,
    pub feasible: bool,
    pub no_compression: bool,
    pub compression_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub gamma0: Gamma0Resolution,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy)]
struct Task {
    problem: ProblemKind,
    axis_value: f64,
    clock_hz: f64,
    rho_th: Option<f64>,
}

fn criterion_of(rho: Option<f64>) -> LatencyCriterion {
    rho.map_or(LatencyCriterion::Mean, LatencyCriterion::Quantile)
}

fn run_task(cfg: &RunConfig, g0: &Gamma0Resolution, axis: &str, task: Task) -> Result<SweepRow> {
    let p = cfg.params_at(task.clock_hz, g0);
    let solved = match task.problem {
        ProblemKind::P1a => {
            solve_outage_constrained(&p, task.axis_value, task.rho_th.unwrap_or(0.95))
        }
        ProblemKind::P2a => {
            solve_latency_constrained(&p, task.axis_value, task.rho_th.unwrap_or(0.95))
        }
        ProblemKind::Baseline => solve_expected_baseline(&p, task.axis_value),
    };
    let mut row = SweepRow {
        problem: task.problem,
        axis: axis.to_string(),
        axis_value: task.axis_value,
        fr_ghz: task.clock_hz / 1e9,
        rho_th: task.rho_th,
        q_opt: None,
        epsilon_opt: None,
        objective: None,
        latency_s: None,
        feasible: false,
        no_compression: false,
        compression_fraction: None,
    };
    match solved {
        Ok(r) => {
            let (latency, fraction) = latency_split(&p, &r, criterion_of(task.rho_th))?;
            row.q_opt = Some(r.q_opt);
            row.epsilon_opt = Some(r.epsilon_opt);
            row.objective = Some(r.objective);
            row.latency_s = Some(latency);
            row.feasible = r.feasible;
            row.no_compression = r.is_active(ActiveConstraint::NoCompression);
            row.compression_fraction = Some(fraction);
            Ok(row)
        }
        Err(Error::Infeasible(_)) => Ok(row),
        Err(e) => Err(e),
    }
}

/// Latency statistic at the optimum and the share of it spent compressing.
fn latency_split(
    p: &SystemParams,
    r: &SolveResult,
    criterion: LatencyCriterion,
) -> Result<(f64, f64)> {
    let weight = criterion.compression_weight(p.kappa)?;
    let compression = weight * p.data_bits * cycles_per_bit(r.q_opt, p.psi)? / p.clock_hz;
    let dp = r.design_point();
    let total = match criterion {
        LatencyCriterion::Quantile(rho) => latency_quantile(p, &dp, rho)?,
        LatencyCriterion::Mean => crate::model::expected_latency(p, &dp)?,
    };
    Ok((total, (compression / total).clamp(0.0, 1.0)))
}

fn collect_rows(
    cfg: &RunConfig,
    g0: &Gamma0Resolution,
    axis: &str,
    tasks: Vec<Task>,
) -> Result<Vec<SweepRow>> {
    tasks
        .par_iter()
        .map(|&t| run_task(cfg, g0, axis, t))
        .collect()
}

/// Solve along the configured axis for every clock × ρ_th combination.
///
/// An `eps_th` axis yields outage-constrained rows; a latency-budget axis yields
/// latency-constrained rows plus, with `include_baseline`, mean-latency
/// baseline rows. Rows are ordered by problem, clock, ρ_th, then axis value.
pub fn run_sweep(cfg: &RunConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let axis = cfg
        .axis
        .ok_or_else(|| Error::Argument("sweep needs an axis (config `axis` or --axis)".into()))?;
    let g0 = cfg.resolve_gamma0()?;
    let values = axis.values();
    let mut tasks = Vec::new();
    let primary = match axis.variable {
        AxisVariable::EpsTh => ProblemKind::P1a,
        AxisVariable::TThS => ProblemKind::P2a,
    };
    for &clock_hz in &cfg.clocks_hz {
        for &rho in &cfg.rho_th {
            for &v in &values {
                tasks.push(Task {
                    problem: primary,
                    axis_value: v,
                    clock_hz,
                    rho_th: Some(rho),
                });
            }
        }
    }
    if cfg.include_baseline && axis.variable == AxisVariable::TThS {
        for &clock_hz in &cfg.clocks_hz {
            for &v in &values {
                tasks.push(Task {
                    problem: ProblemKind::Baseline,
                    axis_value: v,
                    clock_hz,
                    rho_th: None,
                });
            }
        }
    }
    let rows = collect_rows(cfg, &g0, axis.name(), tasks)?;
    Ok(SweepResult { gamma0: g0, rows })
}

/// A single solve for every clock (× ρ_th where relevant).
pub fn run_solve(cfg: &RunConfig, command: Command) -> Result<SweepResult> {
    cfg.validate()?;
    let g0 = cfg.resolve_gamma0()?;
    let missing = |k: &str| Error::Config {
        line: 0,
        key: k.into(),
        msg: "required by this command".into(),
    };
    let (problem, axis, value, rhos): (ProblemKind, &str, f64, Vec<Option<f64>>) = match command {
        Command::SolveP1 => (
            ProblemKind::P1a,
            "eps_th",
            cfg.eps_th.ok_or_else(|| missing("eps_th"))?,
            cfg.rho_th.iter().map(|&r| Some(r)).collect(),
        ),
        Command::SolveP2 => (
            ProblemKind::P2a,
            "t_th_s",
            cfg.t_th_s.ok_or_else(|| missing("t_th_ms"))?,
            cfg.rho_th.iter().map(|&r| Some(r)).collect(),
        ),
        Command::SolveBaseline => (
            ProblemKind::Baseline,
            "t_th_s",
            cfg.t_th_s.ok_or_else(|| missing("t_th_ms"))?,
            vec![None],
        ),
        other => return Err(Error::Argument(format!("{other:?} is not a single solve"))),
    };
    let mut tasks = Vec::new();
    for &clock_hz in &cfg.clocks_hz {
        for &rho_th in &rhos {
            tasks.push(Task {
                problem,
                axis_value: value,
                clock_hz,
                rho_th,
            });
        }
    }
    let rows = collect_rows(cfg, &g0, axis, tasks)?;
    Ok(SweepResult { gamma0: g0, rows })
}

/// Analytic-versus-simulated comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub quantity: String,
    pub fr_ghz: f64,
    pub q: f64,
    pub epsilon: f64,
    pub analytic: f64,
    pub empirical: f64,
    pub abs_error: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub gamma0: Gamma0Resolution,
    pub design: DesignPoint,
    pub rows: Vec<ValidationRow>,
}

/// Re-simulate a design point and compare against the analytic model.
///
/// The point is `design_q`/`design_epsilon` when configured, otherwise the
/// latency-constrained optimum at `t_th` (first clock, first ρ_th), otherwise
/// the outage-constrained optimum at `eps_th`.
pub fn run_validate(cfg: &RunConfig) -> Result<ValidationResult> {
    cfg.validate()?;
    let g0 = cfg.resolve_gamma0()?;
    let clock_hz = cfg.clocks_hz[0];
    let rho = cfg.rho_th[0];
    let p = cfg.params_at(clock_hz, &g0);
    let design = match (cfg.design, cfg.t_th_s, cfg.eps_th) {
        (Some(d), _, _) => d,
        (None, Some(t), _) => solve_latency_constrained(&p, t, rho)?.design_point(),
        (None, None, Some(e)) => solve_outage_constrained(&p, e, rho)?.design_point(),
        _ => {
            return Err(Error::Config {
                line: 0,
                key: "design_q".into(),
                msg: "validate needs design_q/design_epsilon, t_th_ms or eps_th".into(),
            })
        }
    };
    let deadline = match cfg.t_th_s {
        Some(t) if cfg.design.is_none() => t,
        _ => latency_quantile(&p, &design, rho)?,
    };

    let n = cfg.n_samples;
    let mut sim = SimConfig::new(p.clone(), design, n, cfg.seed);
    sim.quantile_levels = cfg.rho_th.clone();
    sim.reliability_times = vec![deadline];
    sim.count_outage = false;
    sim.quantile_mode = if n > 10_000_000 {
        QuantileMode::Reservoir(1_000_000)
    } else {
        QuantileMode::Exact
    };
    let report = simulate_latency(&sim)?;
    let law = total_latency_law(&p, &design)?;
    let outage = simulate_outage(design.epsilon, gamma0(&p), n, &RngStream::new(cfg.seed, 1))?;

    let row = |quantity: String, analytic: f64, empirical: f64, tolerance: f64| {
        let abs_error = (empirical - analytic).abs();
        ValidationRow {
            quantity,
            fr_ghz: clock_hz / 1e9,
            q: design.q,
            epsilon: design.epsilon,
            analytic,
            empirical,
            abs_error,
            tolerance,
            within_tolerance: abs_error <= tolerance,
        }
    };
    let mut rows = vec![row(
        "mean_latency_s".into(),
        report.analytic_mean_s,
        report.empirical_mean_s,
        5e-3 * report.analytic_mean_s,
    )];
    for q in &report.empirical_quantiles {
        rows.push(row(
            format!("latency_quantile_s@{}", q.rho),
            q.analytic_s,
            q.empirical_s,
            1e-2 * q.analytic_s,
        ));
    }
    rows.push(row(
        "ks_distance".into(),
        0.0,
        report.ks_distance,
        report.ks_critical_1pct(),
    ));
    let on_time = total_cdf(&law, deadline);
    rows.push(row(
        format!("p_latency_le_s@{deadline}"),
        on_time,
        report.empirical_reliability_at[0].probability,
        1e-2,
    ));
    let se = (design.epsilon * (1.0 - design.epsilon) / n as f64).sqrt();
    rows.push(row("outage".into(), design.epsilon, outage, 2.0 * se));
    Ok(ValidationResult {
        gamma0: g0,
        design,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn sweep_row_layout() {
        let mut cfg = RunConfig::reference();
        cfg.axis = Some("t_th_ms:200:600:5:lin".parse().unwrap());
        cfg.include_baseline = true;
        let r = run_sweep(&cfg).unwrap();
        // 3 clocks x 3 rho x 5 points + 3 clocks x 5 baseline points
        assert_eq!(r.rows.len(), 45 + 15);
        assert!(r.rows[..45]
            .iter()
            .all(|row| row.problem == ProblemKind::P2a));
        assert!(r.rows[45..]
            .iter()
            .all(|row| row.problem == ProblemKind::Baseline && row.rho_th.is_none()));
        for row in &r.rows {
            if row.feasible {
                assert!(row.q_opt.unwrap() >= 1.0);
                let e = row.epsilon_opt.unwrap();
                assert!(e > 0.0 && e < 1.0);
                let f = row.compression_fraction.unwrap();
                assert!((0.0..=1.0).contains(&f));
            }
        }
    }

    #[test]
    fn infeasible_rows_are_recorded() {
        let mut cfg = parse_config("gamma0 = 5000\nfr_ghz = 5").unwrap();
        cfg.axis = Some("t_th_ms:0.001:400:3:lin".parse().unwrap());
        let r = run_sweep(&cfg).unwrap();
        assert!(!r.rows[0].feasible);
        assert!(r.rows[0].epsilon_opt.is_none());
        assert!(r.rows[2].feasible);
    }

    #[test]
    fn sweep_needs_axis() {
        assert!(run_sweep(&RunConfig::reference()).is_err());
    }

    #[test]
    fn single_solves() {
        let cfg = RunConfig::reference();
        let p1 = run_solve(&cfg, Command::SolveP1).unwrap();
        assert_eq!(p1.rows.len(), 9);
        let base = run_solve(&cfg, Command::SolveBaseline).unwrap();
        assert_eq!(base.rows.len(), 3);
        let bare = parse_config("fr_ghz = 5").unwrap();
        assert!(matches!(
            run_solve(&bare, Command::SolveP2),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn validate_solved_point() {
        let mut cfg = RunConfig::reference();
        cfg.clocks_hz = vec![5e9];
        cfg.n_samples = 400_000;
        let v = run_validate(&cfg).unwrap();
        for row in &v.rows {
            assert!(row.within_tolerance, "{row:?}");
        }
        let again = run_validate(&cfg).unwrap();
        assert_eq!(v, again);
    }
}
