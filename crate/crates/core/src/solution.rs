use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::instance::Instance;
use crate::link::{check_feasibility, FeasibilityReport, FEASIBILITY_TOL};
use crate::schema::{read_json, write_json, SOLUTION_SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    /// Iteration cap reached; the result is still the best feasible point.
    MaxIters,
    /// Returned on purpose without satisfying every constraint (EdgeGS).
    Infeasible,
}

/// A binary collaboration decision with its power allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub solver: String,
    pub x: Vec<bool>,
    /// Transmit power per user in watts; zero for local users.
    pub p: Vec<f64>,
    /// `Σ (1 − x_k) L_k`.
    pub objective_p1: f64,
    /// Per-iteration relaxed objective values, for convergence plots.
    #[serde(default)]
    pub surrogate_trace: Vec<f64>,
    pub feasibility: FeasibilityReport,
    pub wall_time: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl Solution {
    /// Assembles a solution, evaluating its objective and feasibility.
    pub fn assemble(
        solver: &str,
        inst: &Instance,
        x: Vec<bool>,
        p: Vec<f64>,
        elapsed: Duration,
    ) -> Result<Self> {
        let feasibility = check_feasibility(inst, &x, &p, FEASIBILITY_TOL)?;
        let status = if feasibility.feasible {
            SolveStatus::Converged
        } else {
            SolveStatus::Infeasible
        };
        Ok(Self {
            solver: solver.to_string(),
            objective_p1: inst.p1_objective(&x),
            x,
            p,
            surrogate_trace: Vec::new(),
            feasibility,
            wall_time: elapsed.as_secs_f64(),
            iterations: 0,
            status,
        })
    }

    pub fn num_selected(&self) -> usize {
        self.x.iter().filter(|&&b| b).count()
    }

    pub fn selected(&self) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, SOLUTION_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path, SOLUTION_SCHEMA)
    }
}
