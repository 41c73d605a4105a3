//! Reliability-aware design solvers.
//!
//! Both design problems collapse to one dimension:
//!
//! * outage-constrained: W(Q, ε) decreases in ε, so the optimum sits on
//!   ε = ε_th and only Q is searched (W is strictly convex in Q);
//! * latency-constrained: with the latency constraint binding, 1/R(ε) = U(Q)
//!   and U is strictly concave in Q. The mean-latency baseline has the same
//!   shape with V(Q) in place of U(Q).
//!
//! Each 1-D problem is a root of a strictly increasing derivative on Q >= 1,
//! found by safeguarded Newton. [`grid_oracle`] brute-forces the original
//! two-variable problems for cross-checking.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{
    cycles_per_bit, epsilon_of_rate, gamma0, rate_of_epsilon, total_cdf, total_latency_law,
    DesignPoint, Gamma0Mode, SystemParams,
};
use crate::specfun::inv_reg_lower_gamma;

/// Smallest outage the solvers will use.
pub const EPSILON_MIN: f64 = 1e-9;
/// Largest outage the solvers will use.
pub const EPSILON_MAX: f64 = 1.0 - 1e-12;

const Q_REL_TOL: f64 = 1e-12;
const MAX_ITER: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveConstraint {
    /// Q = 1: transmitting uncompressed is optimal.
    NoCompression,
    /// ε = ε_th.
    OutageThreshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub q_opt: f64,
    pub epsilon_opt: f64,
    /// Latency in seconds for the outage-constrained problem; outage
    /// probability for the latency-constrained problems.
    pub objective: f64,
    pub iterations: usize,
    pub feasible: bool,
    pub active_constraints: Vec<ActiveConstraint>,
}

impl SolveResult {
    pub fn is_active(&self, c: ActiveConstraint) -> bool {
        self.active_constraints.contains(&c)
    }

    pub fn design_point(&self) -> DesignPoint {
        DesignPoint {
            q: self.q_opt,
            epsilon: self.epsilon_opt,
        }
    }
}

/// Which latency statistic a design constrains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "rho")]
pub enum LatencyCriterion {
    /// ρ-quantile of the latency.
    Quantile(f64),
    /// Mean latency.
    Mean,
}

impl LatencyCriterion {
    /// Multiplier on the mean compression time: τ0/κ for a quantile, 1 for the mean.
    pub fn compression_weight(&self, kappa: f64) -> Result<f64> {
        match *self {
            LatencyCriterion::Quantile(rho) => {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(domain("rho_th", rho, "0 < rho_th < 1"));
                }
                Ok(inv_reg_lower_gamma(kappa, rho)? / kappa)
            }
            LatencyCriterion::Mean => Ok(1.0),
        }
    }
}

// T(Q) = w·D·C(Q)/f_R + D·T0/(Q·R): the latency statistic at a fixed rate.
#[derive(Debug, Clone, Copy)]
struct LatencyShape {
    compression_s_per_cycle: f64,
    tx_s_per_rate: f64,
    psi: f64,
}

impl LatencyShape {
    fn new(p: &SystemParams, weight: f64) -> Self {
        Self {
            compression_s_per_cycle: weight * p.data_bits / p.clock_hz,
            tx_s_per_rate: p.data_bits * p.channel_use_s,
            psi: p.psi,
        }
    }

    fn compression(&self, q: f64) -> f64 {
        self.compression_s_per_cycle * cycles_per_bit(q, self.psi).unwrap_or(f64::INFINITY)
    }

    fn latency(&self, q: f64, rate: f64) -> f64 {
        self.compression(q) + self.tx_s_per_rate / (q * rate)
    }

    fn d_latency_dq(&self, q: f64, rate: f64) -> f64 {
        let e = (self.psi * q).exp();
        self.compression_s_per_cycle * self.psi * e - self.tx_s_per_rate / (q * q * rate)
    }

    fn d2_latency_dq2(&self, q: f64, rate: f64) -> f64 {
        let e = (self.psi * q).exp();
        self.compression_s_per_cycle * self.psi * self.psi * e
            + 2.0 * self.tx_s_per_rate / (q * q * q * rate)
    }

    /// 1/R admitted at budget `t`: (Q / (D·T0))·(t − compression(Q)).
    fn inverse_rate(&self, q: f64, t: f64) -> f64 {
        q / self.tx_s_per_rate * (t - self.compression(q))
    }

    fn d_inverse_rate(&self, q: f64, t: f64) -> f64 {
        let e = (self.psi * q).exp();
        // d/dQ [Q·C(Q)] = (1 + Qψ)e^(Qψ) − e^ψ
        let d_qc = (1.0 + q * self.psi) * e - self.psi.exp();
        (t - self.compression_s_per_cycle * d_qc) / self.tx_s_per_rate
    }

    fn d2_inverse_rate(&self, q: f64) -> f64 {
        let e = (self.psi * q).exp();
        -self.compression_s_per_cycle * (2.0 * self.psi + q * self.psi * self.psi) * e
            / self.tx_s_per_rate
    }
}

/// Root of a strictly increasing `g` on `[1, ∞)`.
///
/// Returns `(q, iterations, boundary)`; `boundary` is true when `g(1) >= 0`.
/// The upper bracket grows geometrically; Newton steps that leave the bracket
/// are replaced by bisection.
fn increasing_root_from_one(
    g: impl Fn(f64) -> f64,
    g_prime: impl Fn(f64) -> f64,
) -> Result<(f64, usize, bool)> {
    let mut lo = 1.0_f64;
    if g(lo) >= 0.0 {
        return Ok((1.0, 0, true));
    }
    let mut iterations = 0;
    let mut width = 0.25_f64;
    let mut hi = lo + width;
    while g(hi) < 0.0 {
        lo = hi;
        width *= 2.0;
        hi = lo + width;
        iterations += 1;
        if iterations > MAX_ITER || !hi.is_finite() {
            return Err(Error::NonConvergence {
                routine: "compression ratio bracket",
                iterations,
            });
        }
    }
    let mut x = 0.5 * (lo + hi);
    while iterations < MAX_ITER {
        iterations += 1;
        let gx = g(x);
        if gx == 0.0 {
            return Ok((x, iterations, false));
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = g_prime(x);
        let newton = x - gx / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= Q_REL_TOL * x || hi - lo <= Q_REL_TOL * hi {
            return Ok((next, iterations, false));
        }
        x = next;
    }
    Err(Error::NonConvergence {
        routine: "compression ratio search",
        iterations,
    })
}

fn check_params(p: &SystemParams) -> Result<()> {
    p.validate()?;
    let g = gamma0(p);
    if !(g > 0.0) || !g.is_finite() {
        return Err(domain("gamma0", g, "gamma0 > 0"));
    }
    Ok(())
}

/// W(Q, ε): the ρ-quantile of the total latency.
pub fn w_objective(p: &SystemParams, q: f64, epsilon: f64, rho_th: f64) -> Result<f64> {
    crate::model::latency_quantile(p, &DesignPoint::new(q, epsilon)?, rho_th)
}

/// Analytic Hessian of W in (Q, R) coordinates, R being the rate.
pub fn w_hessian_q_rate(p: &SystemParams, q: f64, rate: f64, rho_th: f64) -> Result<[[f64; 2]; 2]> {
    let shape = LatencyShape::new(
        p,
        LatencyCriterion::Quantile(rho_th).compression_weight(p.kappa)?,
    );
    let dt = shape.tx_s_per_rate;
    let d_qq = shape.d2_latency_dq2(q, rate);
    let d_qr = dt / (q * q * rate * rate);
    let d_rr = 2.0 * dt / (q * rate * rate * rate);
    Ok([[d_qq, d_qr], [d_qr, d_rr]])
}

/// W as a function of (Q, R) directly.
pub fn w_of_q_rate(p: &SystemParams, q: f64, rate: f64, rho_th: f64) -> Result<f64> {
    let shape = LatencyShape::new(
        p,
        LatencyCriterion::Quantile(rho_th).compression_weight(p.kappa)?,
    );
    Ok(shape.latency(q, rate))
}

/// U(Q) (quantile criterion) or V(Q)·1 (mean criterion, scaled identically):
/// the largest 1/R compatible with latency budget `t_th` at ratio `q`.
pub fn inverse_rate_at_budget(
    p: &SystemParams,
    q: f64,
    t_th: f64,
    criterion: LatencyCriterion,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(domain("q", q, "q >= 1"));
    }
    let shape = LatencyShape::new(p, criterion.compression_weight(p.kappa)?);
    Ok(shape.inverse_rate(q, t_th))
}

/// First derivative of [`inverse_rate_at_budget`] in Q.
pub fn d_inverse_rate_at_budget(
    p: &SystemParams,
    q: f64,
    t_th: f64,
    criterion: LatencyCriterion,
) -> Result<f64> {
    let shape = LatencyShape::new(p, criterion.compression_weight(p.kappa)?);
    Ok(shape.d_inverse_rate(q, t_th))
}

/// Second derivative of [`inverse_rate_at_budget`] in Q.
pub fn d2_inverse_rate_at_budget(
    p: &SystemParams,
    q: f64,
    criterion: LatencyCriterion,
) -> Result<f64> {
    let shape = LatencyShape::new(p, criterion.compression_weight(p.kappa)?);
    Ok(shape.d2_inverse_rate(q))
}

/// Minimize the chosen latency statistic over Q >= 1 at a fixed outage.
pub fn minimize_latency_at_outage(
    p: &SystemParams,
    epsilon: f64,
    criterion: LatencyCriterion,
) -> Result<SolveResult> {
    check_params(p)?;
    let rate = rate_of_epsilon(epsilon, gamma0(p))?;
    if rate == 0.0 {
        return Err(Error::Infeasible(
            "zero outage admits no positive rate".into(),
        ));
    }
    let shape = LatencyShape::new(p, criterion.compression_weight(p.kappa)?);
    let (q, iterations, boundary) = increasing_root_from_one(
        |q| shape.d_latency_dq(q, rate),
        |q| shape.d2_latency_dq2(q, rate),
    )?;
    let mut active = Vec::new();
    if boundary {
        active.push(ActiveConstraint::NoCompression);
    }
    Ok(SolveResult {
        q_opt: q,
        epsilon_opt: epsilon,
        objective: shape.latency(q, rate),
        iterations,
        feasible: true,
        active_constraints: active,
    })
}

/// Outage-constrained design: minimize the ρ_th latency quantile subject to
/// ε <= ε_th and Q >= 1.
pub fn solve_outage_constrained(p: &SystemParams, eps_th: f64, rho_th: f64) -> Result<SolveResult> {
    if !(eps_th > 0.0) {
        return Err(Error::Infeasible(format!(
            "outage threshold {eps_th} leaves no admissible positive rate"
        )));
    }
    if !(eps_th < 1.0) {
        return Err(domain("eps_th", eps_th, "0 < eps_th < 1"));
    }
    if !(rho_th > 0.0 && rho_th < 1.0) {
        return Err(domain("rho_th", rho_th, "0 < rho_th < 1"));
    }
    let epsilon = eps_th.clamp(EPSILON_MIN, EPSILON_MAX);
    let mut res = minimize_latency_at_outage(p, epsilon, LatencyCriterion::Quantile(rho_th))?;
    res.active_constraints
        .push(ActiveConstraint::OutageThreshold);
    Ok(res)
}

fn solve_budget_constrained(
    p: &SystemParams,
    t_th: f64,
    criterion: LatencyCriterion,
) -> Result<SolveResult> {
    check_params(p)?;
    if !(t_th > 0.0) || !t_th.is_finite() {
        return Err(domain("t_th", t_th, "t_th > 0"));
    }
    let shape = LatencyShape::new(p, criterion.compression_weight(p.kappa)?);
    let (q, iterations, boundary) = increasing_root_from_one(
        |q| -shape.d_inverse_rate(q, t_th),
        |q| -shape.d2_inverse_rate(q),
    )?;
    let inv_rate = shape.inverse_rate(q, t_th);
    if !(inv_rate > 0.0) {
        return Err(Error::Infeasible(format!(
            "latency budget {t_th} s leaves no time for transmission"
        )));
    }
    let g0 = gamma0(p);
    let epsilon = epsilon_of_rate(1.0 / inv_rate, g0)?;
    if !(epsilon <= EPSILON_MAX) {
        return Err(Error::Infeasible(format!(
            "latency budget {t_th} s needs outage above {EPSILON_MAX}"
        )));
    }
    let epsilon = epsilon.max(EPSILON_MIN);
    let mut active = Vec::new();
    if boundary {
        active.push(ActiveConstraint::NoCompression);
    }
    Ok(SolveResult {
        q_opt: q,
        epsilon_opt: epsilon,
        objective: epsilon,
        iterations,
        feasible: true,
        active_constraints: active,
    })
}

/// Latency-constrained design: minimize ε subject to the ρ_th latency quantile
/// meeting `t_th` (at equality) and Q >= 1.
pub fn solve_latency_constrained(p: &SystemParams, t_th: f64, rho_th: f64) -> Result<SolveResult> {
    if !(rho_th > 0.0 && rho_th < 1.0) {
        return Err(domain("rho_th", rho_th, "0 < rho_th < 1"));
    }
    solve_budget_constrained(p, t_th, LatencyCriterion::Quantile(rho_th))
}

/// Baseline design that budgets the *mean* latency instead of a quantile.
pub fn solve_expected_baseline(p: &SystemParams, t_th: f64) -> Result<SolveResult> {
    solve_budget_constrained(p, t_th, LatencyCriterion::Mean)
}

/// Smallest latency budget under which outage `epsilon` is achievable.
pub fn required_budget(p: &SystemParams, epsilon: f64, criterion: LatencyCriterion) -> Result<f64> {
    Ok(minimize_latency_at_outage(p, epsilon, criterion)?.objective)
}

/// γ0 for which [`required_budget`] at `epsilon` equals `target_s`.
///
/// Bisection in log γ0; the budget is strictly decreasing in γ0.
pub fn calibrate_gamma0(
    p: &SystemParams,
    epsilon: f64,
    target_s: f64,
    criterion: LatencyCriterion,
) -> Result<f64> {
    if !(target_s > 0.0) {
        return Err(domain("target_s", target_s, "target_s > 0"));
    }
    let budget = |ln_g: f64| -> Result<f64> {
        let q = p.clone().with_gamma0(Gamma0Mode::Fixed(ln_g.exp()));
        required_budget(&q, epsilon, criterion)
    };
    let (mut lo, mut hi) = ((1e-6f64).ln(), (1e15f64).ln());
    if budget(lo)? < target_s || budget(hi)? > target_s {
        return Err(Error::Infeasible(format!(
            "no gamma0 in [1e-6, 1e15] gives a {target_s} s budget"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if budget(mid)? > target_s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Brute-force search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub q_max: f64,
    pub n_q: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub n_eps: usize,
}

impl GridSpec {
    pub fn new(q_max: f64, n_q: usize, eps_min: f64, eps_max: f64, n_eps: usize) -> Result<Self> {
        let g = Self {
            q_max,
            n_q,
            eps_min,
            eps_max,
            n_eps,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_q < 2 || self.n_eps < 2 {
            return Err(Error::Argument(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        if !(self.q_max > 1.0) || !self.q_max.is_finite() {
            return Err(domain("q_max", self.q_max, "q_max > 1"));
        }
        if !(self.eps_min > 0.0 && self.eps_min < self.eps_max && self.eps_max < 1.0) {
            return Err(domain("eps_min", self.eps_min, "0 < eps_min < eps_max < 1"));
        }
        Ok(())
    }

    pub fn q_step(&self) -> f64 {
        (self.q_max - 1.0) / (self.n_q - 1) as f64
    }

    pub fn q_points(&self) -> Vec<f64> {
        let h = self.q_step();
        (0..self.n_q).map(|i| 1.0 + h * i as f64).collect()
    }

    pub fn eps_points(&self) -> Vec<f64> {
        log_space(self.eps_min, self.eps_max, self.n_eps)
    }
}

pub(crate) fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "problem")]
pub enum Problem {
    OutageConstrained { eps_th: f64, rho_th: f64 },
    LatencyConstrained { t_th: f64, rho_th: f64 },
    ExpectedBaseline { t_th: f64 },
}

/// Exhaustive search of the original two-variable problems.
///
/// * outage-constrained: evaluates W on every (Q, ε) grid pair with ε <= ε_th;
/// * latency-constrained / baseline: for each Q, finds the smallest ε whose
///   latency statistic meets the budget, scanning the ε grid for the first
///   feasible point and bisecting the last gap. Feasibility is judged through
///   the forward CDF (or mean), not through the U/V reduction.
///
/// Rows are evaluated in parallel and reduced in grid order.
pub fn grid_oracle(p: &SystemParams, problem: Problem, grid: &GridSpec) -> Result<SolveResult> {
    check_params(p)?;
    grid.validate()?;
    let qs = grid.q_points();
    let eps = grid.eps_points();

    let per_q: Vec<Result<Option<(f64, f64, f64)>>> = match problem {
        Problem::OutageConstrained { eps_th, rho_th } => {
            let allowed: Vec<f64> = eps.iter().copied().filter(|&e| e <= eps_th).collect();
            qs.par_iter()
                .map(|&q| {
                    let mut best: Option<(f64, f64, f64)> = None;
                    for &e in &allowed {
                        let w = w_objective(p, q, e, rho_th)?;
                        if best.is_none_or(|b| w < b.2) {
                            best = Some((q, e, w));
                        }
                    }
                    Ok(best)
                })
                .collect()
        }
        Problem::LatencyConstrained { t_th, rho_th } => qs
            .par_iter()
            .map(|&q| {
                min_feasible_epsilon(&eps, |e| {
                    let law = total_latency_law(p, &DesignPoint { q, epsilon: e })?;
                    Ok(total_cdf(&law, t_th) >= rho_th)
                })
                .map(|o| o.map(|e| (q, e, e)))
            })
            .collect(),
        Problem::ExpectedBaseline { t_th } => qs
            .par_iter()
            .map(|&q| {
                min_feasible_epsilon(&eps, |e| {
                    let law = total_latency_law(p, &DesignPoint { q, epsilon: e })?;
                    Ok(law.mean() <= t_th)
                })
                .map(|o| o.map(|e| (q, e, e)))
            })
            .collect(),
    };

    let mut best: Option<(f64, f64, f64)> = None;
    for r in per_q {
        if let Some(cand) = r? {
            if best.is_none_or(|b| cand.2 < b.2) {
                best = Some(cand);
            }
        }
    }
    let (q, e, objective) =
        best.ok_or_else(|| Error::Infeasible("no feasible point on the oracle grid".into()))?;
    let mut active = Vec::new();
    if q == 1.0 {
        active.push(ActiveConstraint::NoCompression);
    }
    if let Problem::OutageConstrained { eps_th, .. } = problem {
        if e == eps
            .iter()
            .copied()
            .rfind(|&x| x <= eps_th)
            .unwrap_or(f64::NAN)
        {
            active.push(ActiveConstraint::OutageThreshold);
        }
    }
    Ok(SolveResult {
        q_opt: q,
        epsilon_opt: e,
        objective,
        iterations: grid.n_q * grid.n_eps,
        feasible: true,
        active_constraints: active,
    })
}

// Feasibility is monotone in ε (higher outage, higher rate, shorter latency).
fn min_feasible_epsilon(
    eps: &[f64],
    feasible: impl Fn(f64) -> Result<bool>,
) -> Result<Option<f64>> {
    let mut prev: Option<f64> = None;
    for &e in eps {
        if feasible(e)? {
            let Some(mut lo) = prev else {
                return Ok(Some(e));
            };
            let mut hi = e;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if feasible(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-14 * hi {
                    break;
                }
            }
            return Ok(Some(hi));
        }
        prev = Some(e);
    }
    Ok(None)
}
