//! Penalty majorization-minimization (PMM).
//!
//! The binary collaboration bits are relaxed to `[0,1]` and pushed back to
//! binary by the exact penalty `φ(x) = (1/β) Σ x_k (1 − x_k)`. Because `φ`
//! is concave, each MM step replaces it by its tangent at the current
//! iterate, which upper-bounds it, touches it at the iterate and is affine.
//! Every step is then the convex problem in [`subproblem`], and the relaxed
//! objective never increases along the iterates.
//!
//! Power is not a decision variable inside the loop: the objective ignores
//! `p`, so each user runs at the minimum power `g_k(x_k)` that meets its
//! deadline.

pub mod subproblem;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::local_search_from;
use crate::error::{IracError, Result};
use crate::instance::Instance;
use crate::solution::{Solution, SolveStatus};

pub use subproblem::{solve_subproblem, KktResiduals, SubproblemSolution};

const POLISH_MAX_MOVES: usize = 1000;

/// Starting point of the MM iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPoint {
    /// Every user at the same fraction.
    Uniform(f64),
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmParams {
    /// Initial penalty parameter; `None` uses `1 / max_k L_k`.
    pub beta: Option<f64>,
    /// Factor applied to β whenever the iterates settle on a non-binary point.
    pub beta_shrink: f64,
    pub max_outer_iters: usize,
    /// Stop when `‖x⁺ − x‖_∞` falls below this.
    pub x_tol: f64,
    pub dual_tol: f64,
    /// Largest distance to {0,1} accepted as binary.
    pub binary_tol: f64,
    pub initial_x: InitialPoint,
    /// After rounding, spend leftover budget and descend over single flips
    /// and swaps.
    pub polish: bool,
}

impl Default for PmmParams {
    fn default() -> Self {
        Self {
            beta: None,
            beta_shrink: 0.5,
            max_outer_iters: 200,
            x_tol: 1e-6,
            dual_tol: 1e-10,
            binary_tol: 1e-3,
            initial_x: InitialPoint::Uniform(0.5),
            polish: true,
        }
    }
}

impl PmmParams {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Some(b) = self.beta {
            if !(b > 0.0 && b.is_finite()) {
                v.push(format!("beta must be > 0 (got {b})"));
            }
        }
        if !(self.beta_shrink > 0.0 && self.beta_shrink < 1.0) {
            v.push(format!(
                "beta_shrink must be in (0,1) (got {})",
                self.beta_shrink
            ));
        }
        for (name, t) in [
            ("x_tol", self.x_tol),
            ("dual_tol", self.dual_tol),
            ("binary_tol", self.binary_tol),
        ] {
            if !(t > 0.0) {
                v.push(format!("{name} must be > 0 (got {t})"));
            }
        }
        match &self.initial_x {
            InitialPoint::Uniform(t) if !(0.0..=1.0).contains(t) => {
                v.push(format!("initial_x uniform value {t} outside [0,1]"))
            }
            InitialPoint::Given(x) if x.iter().any(|t| !(0.0..=1.0).contains(t)) => {
                v.push("initial_x has entries outside [0,1]".into())
            }
            _ => {}
        }
        v
    }
}

fn check_box(x: &[f64]) -> Result<()> {
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(IracError::domain(format!("x entry {bad} outside [0,1]")));
    }
    Ok(())
}

/// `φ(x) = (1/β) Σ x_k (1 − x_k)`.
pub fn penalty(x: &[f64], beta: f64) -> Result<f64> {
    check_box(x)?;
    if !(beta > 0.0) {
        return Err(IracError::domain(format!("beta must be > 0 (got {beta})")));
    }
    Ok(x.iter().map(|v| v * (1.0 - v)).sum::<f64>() / beta)
}

/// Tangent majorizer of [`penalty`] at `x_prev`, evaluated at `x`:
/// `Σ (x_k − 2 x_prev_k x_k + x_prev_k²) / β`, with its (constant) gradient
/// `(1 − 2 x_prev) / β`.
pub fn surrogate_penalty(x: &[f64], x_prev: &[f64], beta: f64) -> Result<(f64, Vec<f64>)> {
    check_box(x)?;
    check_box(x_prev)?;
    if x.len() != x_prev.len() {
        return Err(IracError::domain("x and x_prev differ in length"));
    }
    if !(beta > 0.0) {
        return Err(IracError::domain(format!("beta must be > 0 (got {beta})")));
    }
    let value = x
        .iter()
        .zip(x_prev)
        .map(|(v, p)| v - 2.0 * p * v + p * p)
        .sum::<f64>()
        / beta;
    let grad = x_prev.iter().map(|p| (1.0 - 2.0 * p) / beta).collect();
    Ok((value, grad))
}

/// Relaxed objective `Σ (1 − x_k) L_k + φ(x)`.
pub fn penalized_objective(inst: &Instance, x: &[f64], beta: f64) -> f64 {
    inst.p1_objective_relaxed(x) + x.iter().map(|v| v * (1.0 - v)).sum::<f64>() / beta
}

fn distance_to_binary(x: &[f64]) -> f64 {
    x.iter().map(|v| v.min(1.0 - v)).fold(0.0, f64::max)
}

/// Minimal powers `p_k = g_k(x_k)` meeting the rate constraint with equality.
pub fn recover_power(inst: &Instance, x: &[f64]) -> Vec<f64> {
    inst.curves()
        .iter()
        .zip(x)
        .map(|(c, &xk)| c.power(xk.clamp(0.0, 1.0)))
        .collect()
}

pub fn recover_power_binary(inst: &Instance, x: &[bool]) -> Vec<f64> {
    inst.curves()
        .iter()
        .zip(x)
        .map(|(c, &on)| if on { c.full() } else { 0.0 })
        .collect()
}

/// Thresholds `x_cont` at 0.5, then drops users with the least gain per
/// full-frame watt (`L_k / g_k(1)`) until the power and cardinality budgets
/// hold.
pub fn round_and_repair(inst: &Instance, x_cont: &[f64]) -> Vec<bool> {
    let x: Vec<bool> = x_cont.iter().map(|&v| v >= 0.5).collect();
    repair(inst, x)
}

/// Full-frame powers `g_k(1)`.
pub fn full_powers(inst: &Instance) -> Vec<f64> {
    inst.curves().iter().map(|c| c.full()).collect()
}

fn selected_power(x: &[bool], full: &[f64]) -> f64 {
    x.iter()
        .zip(full)
        .filter(|(on, _)| **on)
        .map(|(_, p)| p)
        .sum()
}

/// Drops lowest gain-per-watt users until `x` fits both budgets.
pub fn repair(inst: &Instance, x: Vec<bool>) -> Vec<bool> {
    repair_with(inst, x, &full_powers(inst))
}

/// [`repair`] with precomputed full-frame powers.
pub fn repair_with(inst: &Instance, mut x: Vec<bool>, full: &[f64]) -> Vec<bool> {
    let mut count = x.iter().filter(|&&b| b).count();
    while count > inst.max_collab || selected_power(&x, full) > inst.power_budget {
        let victim = (0..x.len())
            .filter(|&k| x[k])
            .min_by(|&i, &j| {
                let ri = inst.switching_gain[i] / full[i];
                let rj = inst.switching_gain[j] / full[j];
                ri.total_cmp(&rj).then(j.cmp(&i))
            })
            .expect("infeasible decision has an active user");
        x[victim] = false;
        count -= 1;
    }
    x
}

/// Admits users in decreasing order of `priority` (ties: larger
/// `L_k / g_k(1)`, then lower index) while both budgets allow. Users with no
/// gain are never added.
pub fn complete(inst: &Instance, x: Vec<bool>, priority: &[f64]) -> Vec<bool> {
    complete_with(inst, x, priority, &full_powers(inst))
}

/// [`complete`] with precomputed full-frame powers.
pub fn complete_with(
    inst: &Instance,
    mut x: Vec<bool>,
    priority: &[f64],
    full: &[f64],
) -> Vec<bool> {
    let ratio: Vec<f64> = inst
        .switching_gain
        .iter()
        .zip(full)
        .map(|(l, p)| l / p)
        .collect();
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| {
        priority[j]
            .total_cmp(&priority[i])
            .then(ratio[j].total_cmp(&ratio[i]))
            .then(i.cmp(&j))
    });
    let mut count = x.iter().filter(|&&b| b).count();
    for k in order {
        if count >= inst.max_collab {
            break;
        }
        if x[k] || inst.switching_gain[k] <= 0.0 {
            continue;
        }
        x[k] = true;
        if selected_power(&x, full) > inst.power_budget {
            x[k] = false;
        } else {
            count += 1;
        }
    }
    x
}

/// One MM iteration, for convergence diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmStep {
    pub beta: f64,
    /// Relaxed objective at the new iterate under `beta`.
    pub objective: f64,
    /// Relaxed objective at the previous iterate under `beta`.
    pub previous_objective: f64,
    pub step: f64,
    pub kkt: KktResiduals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmRun {
    pub x: Vec<f64>,
    pub steps: Vec<MmStep>,
    pub converged: bool,
    pub final_beta: f64,
}

/// Feasible relaxed start: the requested point when it satisfies both
/// budgets, else the largest uniform fraction (at most the requested one)
/// that does, else zero.
fn initial_point(inst: &Instance, init: &InitialPoint) -> Result<Vec<f64>> {
    let k = inst.num_users();
    let curves = inst.curves();
    let fits = |x: &[f64]| {
        let power: f64 = curves.iter().zip(x).map(|(c, &v)| c.power(v)).sum();
        power <= inst.power_budget && x.iter().sum::<f64>() <= inst.max_collab as f64
    };
    let start = match init {
        InitialPoint::Uniform(t) => vec![*t; k],
        InitialPoint::Given(x) => {
            if x.len() != k {
                return Err(IracError::domain(
                    "initial_x length does not match instance",
                ));
            }
            check_box(x)?;
            x.clone()
        }
    };
    if fits(&start) {
        return Ok(start);
    }
    let mut t = start.iter().copied().fold(0.0, f64::max);
    t = t.min(inst.max_collab as f64 / k as f64);
    for _ in 0..60 {
        let x = vec![t; k];
        if fits(&x) {
            return Ok(x);
        }
        t *= 0.5;
    }
    Ok(vec![0.0; k])
}

/// Runs the MM iterations and returns the final relaxed iterate.
pub fn run_mm(inst: &Instance, params: &PmmParams) -> Result<MmRun> {
    inst.ensure_valid()?;
    let issues = params.validate();
    if !issues.is_empty() {
        return Err(IracError::Validation(issues));
    }
    let max_gain = inst.switching_gain.iter().copied().fold(0.0, f64::max);
    let mut beta = params
        .beta
        .unwrap_or(if max_gain > 0.0 { 1.0 / max_gain } else { 1.0 });
    let mut x = initial_point(inst, &params.initial_x)?;
    let mut steps = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_outer_iters {
        let previous_objective = penalized_objective(inst, &x, beta);
        let sub = solve_subproblem(inst, &x, beta, params.dual_tol)?;
        let step = sub
            .x
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let objective = penalized_objective(inst, &sub.x, beta);
        debug_assert!(
            objective <= previous_objective + 1e-9 * previous_objective.abs().max(1.0),
            "MM ascent: {previous_objective} -> {objective}"
        );
        steps.push(MmStep {
            beta,
            objective,
            previous_objective,
            step,
            kkt: sub.kkt,
        });
        x = sub.x;
        if step <= params.x_tol {
            if distance_to_binary(&x) <= params.binary_tol {
                converged = true;
                break;
            }
            beta *= params.beta_shrink;
        }
    }
    Ok(MmRun {
        x,
        steps,
        converged,
        final_beta: beta,
    })
}

/// Solves the IRAC problem with PMM and returns a feasible binary decision.
///
/// The final relaxed iterate is thresholded and repaired. With
/// `params.polish` the leftover budget is then filled in order of the relaxed
/// values and the decision is refined by single flips and swaps.
pub fn pmm_solve(inst: &Instance, params: &PmmParams) -> Result<Solution> {
    let started = Instant::now();
    let run = run_mm(inst, params)?;
    let mut x = round_and_repair(inst, &run.x);
    if params.polish {
        x = complete(inst, x, &run.x);
        // scan by gain rather than index so relabeling users cannot change
        // the result
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&i, &j| {
            inst.switching_gain[j]
                .total_cmp(&inst.switching_gain[i])
                .then(i.cmp(&j))
        });
        x = local_search_from(inst, x, POLISH_MAX_MOVES, &order).0;
    }
    let p = recover_power_binary(inst, &x);
    let mut sol = Solution::assemble("pmm", inst, x, p, started.elapsed())?;
    sol.surrogate_trace = run.steps.iter().map(|s| s.objective).collect();
    sol.iterations = run.steps.len();
    sol.status = if run.converged {
        SolveStatus::Converged
    } else {
        SolveStatus::MaxIters
    };
    if !sol.feasibility.feasible {
        return Err(IracError::Solver(format!(
            "pmm produced an infeasible decision: {:?}",
            sol.feasibility.violations
        )));
    }
    Ok(sol)
}
