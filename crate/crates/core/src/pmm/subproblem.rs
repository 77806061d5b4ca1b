//! The convex inner problem of the MM loop, after eliminating `p`:
//!
//! ```text
//! minimize    Σ a_k x_k
//! subject to  Σ g_k(x_k) ≤ P,   Σ x_k ≤ S,   0 ≤ x_k ≤ 1
//! ```
//!
//! Dualizing both coupling constraints with prices `μ` (power) and `ν`
//! (cardinality) separates the Lagrangian per user. Each user's minimizer of
//! `(a_k + ν) x + μ g_k(x)` over `[0,1]` is closed form because `g_k'` is an
//! exponential. `μ` is found by bisection (in log space) for every trial
//! `ν`, and `ν` by an outer bisection; the composed cardinality map is
//! non-increasing in `ν` since it is the derivative of a concave partial
//! dual.

use serde::{Deserialize, Serialize};

use crate::error::{IracError, Result};
use crate::instance::Instance;
use crate::link::PowerCurve;

const MAX_BISECTIONS: usize = 400;
/// Width of the log-price bracket searched below the all-zero price.
const LOG_PRICE_SPAN: f64 = 700.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
/// All residuals are dimensionless so one tolerance fits every instance.
pub struct KktResiduals {
    /// Largest projected-gradient violation of the Lagrangian, relative to
    /// `|a_k| + ν + μ g_k'(x_k)`.
    pub stationarity: f64,
    /// `max(0, Σ g_k − P) / P`.
    pub power_feasibility: f64,
    /// `max(0, Σ x_k − S) / max(S, 1)`.
    pub cardinality_feasibility: f64,
    /// `|P − Σ g_k| / P` when `μ > 0`, else zero.
    pub power_complementarity: f64,
    /// `|S − Σ x_k| / max(S, 1)` when `ν > 0`, else zero.
    pub cardinality_complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.power_feasibility,
            self.cardinality_feasibility,
            self.power_complementarity,
            self.cardinality_complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    /// Power price `μ ≥ 0` (per watt).
    pub power_price: f64,
    /// Cardinality price `ν ≥ 0`.
    pub cardinality_price: f64,
    /// `Σ a_k x_k`.
    pub objective: f64,
    pub kkt: KktResiduals,
}

/// Linear coefficients of the MM subproblem: `a_k = −L_k + (1 − 2 x_prev_k)/β`.
/// `β = ∞` drops the penalty and leaves the plain relaxation of P1.
pub fn surrogate_coefficients(inst: &Instance, x_prev: &[f64], beta: f64) -> Vec<f64> {
    inst.switching_gain
        .iter()
        .zip(x_prev)
        .map(|(l, xp)| {
            if beta.is_infinite() {
                -l
            } else {
                -l + (1.0 - 2.0 * xp) / beta
            }
        })
        .collect()
}

/// Solves the MM subproblem anchored at `x_prev` with penalty parameter
/// `beta`.
pub fn solve_subproblem(
    inst: &Instance,
    x_prev: &[f64],
    beta: f64,
    dual_tol: f64,
) -> Result<SubproblemSolution> {
    if x_prev.len() != inst.num_users() {
        return Err(IracError::domain("x_prev length does not match instance"));
    }
    if x_prev.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(IracError::domain("x_prev must lie in [0,1]"));
    }
    if !(beta > 0.0) {
        return Err(IracError::domain(format!("beta must be > 0 (got {beta})")));
    }
    let coeffs = surrogate_coefficients(inst, x_prev, beta);
    let curves = inst.curves();
    solve_linear_over_curves(
        &coeffs,
        &curves,
        inst.power_budget,
        inst.max_collab as f64,
        dual_tol,
    )
}

struct Relaxation<'a> {
    coeffs: &'a [f64],
    curves: &'a [PowerCurve],
    budget: f64,
}

struct Response {
    x: Vec<f64>,
    power: f64,
    count: f64,
}

impl Relaxation<'_> {
    fn user_response(&self, k: usize, mu: f64, nu: f64) -> f64 {
        let s = self.coeffs[k] + nu;
        if s >= 0.0 {
            return 0.0;
        }
        if mu == 0.0 {
            return 1.0;
        }
        let target = -s / mu;
        let curve = &self.curves[k];
        if target <= curve.slope(0.0) {
            return 0.0;
        }
        if target >= curve.slope(1.0) {
            return 1.0;
        }
        curve.fraction_for_slope(target).clamp(0.0, 1.0)
    }

    fn response(&self, mu: f64, nu: f64) -> Response {
        let x: Vec<f64> = (0..self.coeffs.len())
            .map(|k| self.user_response(k, mu, nu))
            .collect();
        let power = self.power(&x);
        let count = x.iter().sum();
        Response { x, power, count }
    }

    fn power(&self, x: &[f64]) -> f64 {
        self.curves.iter().zip(x).map(|(c, &xk)| c.power(xk)).sum()
    }

    /// Smallest price meeting the power budget for a given `ν`.
    fn power_price(&self, nu: f64) -> (f64, Response) {
        let free = self.response(0.0, nu);
        if free.power <= self.budget {
            return (0.0, free);
        }
        // Above this price every user sits at x = 0.
        let ceiling = (0..self.coeffs.len())
            .filter(|&k| self.coeffs[k] + nu < 0.0)
            .map(|k| -(self.coeffs[k] + nu) / self.curves[k].slope(0.0))
            .fold(0.0, f64::max);
        let mut hi = ceiling.ln();
        let mut lo = hi - LOG_PRICE_SPAN;
        let mut best = self.response(ceiling, nu);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let r = self.response(mid.exp(), nu);
            if r.power <= self.budget {
                hi = mid;
                best = r;
            } else {
                lo = mid;
            }
        }
        (hi.exp(), best)
    }
}

/// Minimizes `Σ a_k x_k` subject to `Σ g_k(x_k) ≤ budget`, `Σ x_k ≤ cap`
/// and the unit box.
pub fn solve_linear_over_curves(
    coeffs: &[f64],
    curves: &[PowerCurve],
    budget: f64,
    cap: f64,
    dual_tol: f64,
) -> Result<SubproblemSolution> {
    if coeffs.len() != curves.len() {
        return Err(IracError::domain("coefficient/curve length mismatch"));
    }
    if coeffs.iter().any(|a| !a.is_finite()) {
        return Err(IracError::domain("non-finite subproblem coefficient"));
    }
    let k = coeffs.len();
    let budget = budget.max(0.0);
    let rel = Relaxation {
        coeffs,
        curves,
        budget,
    };

    let (mu0, r0) = rel.power_price(0.0);
    let (mu, nu, x) = if r0.count <= cap {
        (mu0, 0.0, r0.x)
    } else {
        // Above this price no user wants to collaborate.
        let mut hi = coeffs.iter().map(|a| -a).fold(0.0, f64::max);
        let mut lo = 0.0;
        let (mut mu_hi, mut r_hi) = rel.power_price(hi);
        let mut r_lo = r0;
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let (m, r) = rel.power_price(mid);
            if r.count <= cap {
                hi = mid;
                mu_hi = m;
                r_hi = r;
            } else {
                lo = mid;
                r_lo = r;
            }
        }
        // The cardinality map can jump at the optimal price (users whose
        // coefficient ties it); blend the two bracket responses to land on
        // the cap exactly. Convexity of g keeps the blend within budget.
        let theta = if r_lo.count > r_hi.count {
            ((cap - r_hi.count) / (r_lo.count - r_hi.count)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let x = r_hi
            .x
            .iter()
            .zip(&r_lo.x)
            .map(|(b, a)| b + theta * (a - b))
            .collect();
        (mu_hi, hi, x)
    };

    let kkt = kkt_residuals(coeffs, curves, budget, cap, &x, mu, nu);
    if !(kkt.max() <= dual_tol.sqrt().max(1e-6)) {
        return Err(IracError::Solver(format!(
            "dual bisection did not converge: μ={mu:.3e}, ν={nu:.3e}, residuals {kkt:?}"
        )));
    }
    let objective = coeffs.iter().zip(&x).map(|(a, xk)| a * xk).sum();
    debug_assert_eq!(x.len(), k);
    Ok(SubproblemSolution {
        x,
        power_price: mu,
        cardinality_price: nu,
        objective,
        kkt,
    })
}

/// KKT residuals of `x` with prices `(μ, ν)` for the linear-over-curves
/// problem.
pub fn kkt_residuals(
    coeffs: &[f64],
    curves: &[PowerCurve],
    budget: f64,
    cap: f64,
    x: &[f64],
    mu: f64,
    nu: f64,
) -> KktResiduals {
    let mut stationarity: f64 = 0.0;
    for ((a, c), &xk) in coeffs.iter().zip(curves).zip(x) {
        let price = mu * c.slope(xk);
        let grad = a + nu + price;
        let violation = if xk <= 0.0 {
            (-grad).max(0.0)
        } else if xk >= 1.0 {
            grad.max(0.0)
        } else {
            grad.abs()
        };
        let scale = a.abs() + nu + price;
        if violation > 0.0 {
            stationarity = stationarity.max(violation / scale);
        }
    }
    let power: f64 = curves.iter().zip(x).map(|(c, &xk)| c.power(xk)).sum();
    let count: f64 = x.iter().sum();
    let power_scale = if budget > 0.0 { budget } else { 1.0 };
    let count_scale = cap.max(1.0);
    KktResiduals {
        stationarity,
        power_feasibility: (power - budget).max(0.0) / power_scale,
        cardinality_feasibility: (count - cap).max(0.0) / count_scale,
        power_complementarity: if mu > 0.0 {
            (budget - power).abs() / power_scale
        } else {
            0.0
        },
        cardinality_complementarity: if nu > 0.0 {
            (cap - count).abs() / count_scale
        } else {
            0.0
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::ScenarioConfig;

    fn instance(gains: &[f64], channels: &[f64], budget: f64, cap: usize) -> Instance {
        let cfg = ScenarioConfig {
            power_budget: budget,
            max_collab: cap,
            ..ScenarioConfig::paper_truck()
        };
        Instance::from_gains(gains.to_vec(), channels.to_vec(), &cfg)
    }

    #[test]
    fn unconstrained_negative_coefficients_select_everyone() {
        let inst = instance(&[0.02, 0.03, 0.05], &[1e-3, 1e-4, 1e-2], 1e6, 3);
        let s = solve_subproblem(&inst, &[0.5; 3], f64::INFINITY, 1e-10).unwrap();
        assert_eq!(s.x, vec![1.0; 3]);
        assert_eq!(s.power_price, 0.0);
        assert_eq!(s.cardinality_price, 0.0);
    }

    #[test]
    fn single_slot_picks_most_negative_coefficient() {
        let curves = [PowerCurve {
            scale: 1e-6,
            exponent: 2.0,
        }; 2];
        let s = solve_linear_over_curves(&[-3.0, -1.0], &curves, 1e6, 1.0, 1e-10).unwrap();
        assert!(
            (s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12,
            "{:?}",
            s.x
        );
        assert!(s.kkt.max() < 1e-10);
    }

    #[test]
    fn ties_are_split_to_meet_the_cap() {
        let curves = [PowerCurve {
            scale: 1e-6,
            exponent: 2.0,
        }; 3];
        let s = solve_linear_over_curves(&[-1.0, -1.0, -1.0], &curves, 1e6, 2.0, 1e-10).unwrap();
        assert!((s.x.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        assert!((s.objective + 2.0).abs() < 1e-12);
        assert!(s.kkt.max() < 1e-10, "{:?}", s.kkt);
    }

    #[test]
    fn zero_cap_and_zero_budget_give_zero() {
        let curves = [PowerCurve {
            scale: 1e-6,
            exponent: 2.0,
        }; 2];
        let s = solve_linear_over_curves(&[-1.0, -2.0], &curves, 1.0, 0.0, 1e-10).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
        let s = solve_linear_over_curves(&[-1.0, -2.0], &curves, 0.0, 2.0, 1e-10).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn power_bound_solution_is_interior_and_tight() {
        let cfg = ScenarioConfig::paper_truck();
        let inst = crate::instance::generate_instance(
            &ScenarioConfig {
                power_budget: 1e-4,
                ..cfg
            },
            3,
        )
        .unwrap();
        let s = solve_subproblem(&inst, &[0.5; 20], f64::INFINITY, 1e-10).unwrap();
        let power: f64 = inst
            .curves()
            .iter()
            .zip(&s.x)
            .map(|(c, x)| c.power(*x))
            .sum();
        assert!(s.power_price > 0.0);
        assert!((power - 1e-4).abs() < 1e-12, "{power}");
        assert!(s.kkt.max() < 1e-10, "{:?}", s.kkt);
    }

    #[test]
    fn rejects_bad_inputs() {
        let inst = instance(&[0.02], &[1e-3], 1.0, 1);
        assert!(solve_subproblem(&inst, &[1.5], 1.0, 1e-10).is_err());
        assert!(solve_subproblem(&inst, &[0.5, 0.5], 1.0, 1e-10).is_err());
        assert!(solve_subproblem(&inst, &[0.5], 0.0, 1e-10).is_err());
    }
}
