//! Comparison schemes. All return the same [`Solution`] type so they can be
//! scored head to head; only [`solve_edge_gs`] may return an infeasible one.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{IracError, Result};
use crate::instance::Instance;
use crate::pmm::{recover_power_binary, round_and_repair, subproblem};
use crate::solution::{Solution, SolveStatus};

/// Largest user count [`solve_brute_force`] accepts.
pub const BRUTE_FORCE_MAX_USERS: usize = 22;

fn full_powers(inst: &Instance) -> Vec<f64> {
    inst.curves().iter().map(|c| c.full()).collect()
}

/// Walks `order` and admits each user at full-frame power while both budgets
/// allow it.
fn admit_in_order(inst: &Instance, order: &[usize]) -> Vec<bool> {
    let full = full_powers(inst);
    let mut x = vec![false; inst.num_users()];
    let mut used = 0.0;
    let mut count = 0;
    for &k in order {
        if count < inst.max_collab && used + full[k] <= inst.power_budget {
            x[k] = true;
            used += full[k];
            count += 1;
        }
    }
    x
}

fn finish(name: &str, inst: &Instance, x: Vec<bool>, started: Instant) -> Result<Solution> {
    let p = recover_power_binary(inst, &x);
    Solution::assemble(name, inst, x, p, started.elapsed())
}

/// UserGS: everyone renders locally.
pub fn solve_user_gs(inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    finish("user_gs", inst, vec![false; inst.num_users()], started)
}

/// EdgeGS: everyone downloads an edge render. Each user gets its full-frame
/// power; when that overshoots the budget all powers are scaled down
/// proportionally so they sum to `P`. The result is flagged infeasible when
/// a deadline or the collaboration cap is missed.
pub fn solve_edge_gs(inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    let k = inst.num_users();
    let mut p = full_powers(inst);
    let total: f64 = p.iter().sum();
    if total > inst.power_budget {
        let scale = inst.power_budget / total;
        p.iter_mut().for_each(|v| *v *= scale);
    }
    let mut sol = Solution::assemble("edge_gs", inst, vec![true; k], p, started.elapsed())?;
    if !sol.feasibility.feasible {
        sol.status = SolveStatus::Infeasible;
    }
    Ok(sol)
}

/// MaxRate: admits users by decreasing channel gain, ignoring rendering
/// gains. With full-frame power every admitted user carries the same rate,
/// so this maximizes the sum rate by admitting as many users as fit.
pub fn solve_max_rate(inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    let mut order: Vec<usize> = (0..inst.num_users()).collect();
    order.sort_by(|&i, &j| {
        inst.channel_gain[j]
            .total_cmp(&inst.channel_gain[i])
            .then(i.cmp(&j))
    });
    finish("max_rate", inst, admit_in_order(inst, &order), started)
}

/// Greedy: admits users by decreasing switching gain `L_k`.
pub fn solve_greedy(inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    finish("greedy", inst, greedy_decision(inst), started)
}

fn greedy_decision(inst: &Instance) -> Vec<bool> {
    let mut order: Vec<usize> = (0..inst.num_users()).collect();
    order.sort_by(|&i, &j| {
        inst.switching_gain[j]
            .total_cmp(&inst.switching_gain[i])
            .then(i.cmp(&j))
    });
    admit_in_order(inst, &order)
}

/// Rounding: solves the continuous relaxation of the GS-switching problem
/// (no penalty) and rounds it with the same repair rule PMM uses.
pub fn solve_rounding(inst: &Instance, dual_tol: f64) -> Result<Solution> {
    let started = Instant::now();
    let zeros = vec![0.0; inst.num_users()];
    let relaxed = subproblem::solve_subproblem(inst, &zeros, f64::INFINITY, dual_tol)?;
    let x = round_and_repair(inst, &relaxed.x);
    finish("rounding", inst, x, started)
}

/// Local search from the greedy decision over single additions and
/// one-in/one-out swaps, taking the first strictly improving feasible move.
/// `seed` fixes the scan order.
pub fn solve_local_search(inst: &Instance, max_iters: usize, seed: u64) -> Result<Solution> {
    let started = Instant::now();
    let mut order: Vec<usize> = (0..inst.num_users()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (x, trace) = local_search_from(inst, greedy_decision(inst), max_iters, &order);
    let mut sol = finish("local_search", inst, x, started)?;
    sol.iterations = trace.len().saturating_sub(1);
    sol.surrogate_trace = trace;
    Ok(sol)
}

/// Improves a feasible decision, scanning users in `order`; returns it with
/// the objective after every accepted move (starting point first).
pub fn local_search_from(
    inst: &Instance,
    mut x: Vec<bool>,
    max_iters: usize,
    order: &[usize],
) -> (Vec<bool>, Vec<f64>) {
    let k = inst.num_users();
    let full = full_powers(inst);
    let gain = &inst.switching_gain;

    let power_of = |x: &[bool]| -> f64 { (0..k).map(|u| if x[u] { full[u] } else { 0.0 }).sum() };
    let mut trace = vec![inst.p1_objective(&x)];
    for _ in 0..max_iters {
        let used = power_of(&x);
        let count = x.iter().filter(|&&b| b).count();
        let mut accepted = None;

        if count < inst.max_collab {
            accepted = order
                .iter()
                .copied()
                .find(|&j| !x[j] && gain[j] > 0.0 && used + full[j] <= inst.power_budget)
                .map(|j| (None, j));
        }
        if accepted.is_none() {
            'swap: for &i in order.iter().filter(|&&i| x[i]) {
                for &j in order.iter().filter(|&&j| !x[j]) {
                    if gain[j] > gain[i] && used - full[i] + full[j] <= inst.power_budget {
                        accepted = Some((Some(i), j));
                        break 'swap;
                    }
                }
            }
        }
        match accepted {
            Some((out, inn)) => {
                if let Some(i) = out {
                    x[i] = false;
                }
                x[inn] = true;
                // re-check against the exact index-order sum
                if power_of(&x) > inst.power_budget {
                    if let Some(i) = out {
                        x[i] = true;
                    }
                    x[inn] = false;
                    break;
                }
                trace.push(inst.p1_objective(&x));
            }
            None => break,
        }
    }
    (x, trace)
}

/// Exhaustive search over all decisions with at most `S` collaborators.
/// Ties prefer fewer collaborators, then the lexicographically smallest `x`.
pub fn solve_brute_force(inst: &Instance) -> Result<Solution> {
    let started = Instant::now();
    let x = brute_force_decision(inst)?;
    let mut sol = finish("brute_force", inst, x, started)?;
    sol.iterations = 1usize << inst.num_users();
    Ok(sol)
}

pub fn brute_force_decision(inst: &Instance) -> Result<Vec<bool>> {
    let k = inst.num_users();
    if k > BRUTE_FORCE_MAX_USERS {
        return Err(IracError::domain(format!(
            "brute force is capped at {BRUTE_FORCE_MAX_USERS} users (instance has {k})"
        )));
    }
    let full = full_powers(inst);
    let gain = &inst.switching_gain;
    // bit k of `lex_key` is user 0 at the top, so a smaller key is a
    // lexicographically smaller x
    let lex_key = |mask: u32| -> u32 { (0..k).fold(0u32, |acc, u| (acc << 1) | ((mask >> u) & 1)) };
    let mut best: Option<(f64, u32, u32, u32)> = None;
    for mask in 0u32..(1u32 << k) {
        let count = mask.count_ones();
        if count as usize > inst.max_collab {
            continue;
        }
        let mut power = 0.0;
        let mut objective = 0.0;
        for u in 0..k {
            if mask >> u & 1 == 1 {
                power += full[u];
            } else {
                objective += gain[u];
            }
        }
        if power > inst.power_budget {
            continue;
        }
        let candidate = (objective, count, lex_key(mask), mask);
        let better = match &best {
            None => true,
            Some(b) => candidate
                .0
                .total_cmp(&b.0)
                .then(candidate.1.cmp(&b.1))
                .then(candidate.2.cmp(&b.2))
                .is_lt(),
        };
        if better {
            best = Some(candidate);
        }
    }
    let mask = best.map(|b| b.3).unwrap_or(0);
    Ok((0..k).map(|u| mask >> u & 1 == 1).collect())
}
