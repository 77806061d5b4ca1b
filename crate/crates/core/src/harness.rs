//! Experiment configuration, paired Monte-Carlo sweeps and reports.
//!
//! Every run draws one instance; every solver and every power level of the
//! sweep sees that same draw, so rows with equal `run_index` are paired.
//! Reports are byte-stable: rows are sorted before writing and floats use
//! nine significant digits. Wall times go to a separate `timings.csv` so the
//! deterministic files never contain them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    solve_brute_force, solve_edge_gs, solve_greedy, solve_local_search, solve_max_rate,
    solve_rounding, solve_user_gs, BRUTE_FORCE_MAX_USERS,
};
use crate::error::{IracError, Result};
use crate::ilo::{infer, IloModel};
use crate::instance::{generate_instance, Instance, ScenarioConfig};
use crate::link::FEASIBILITY_TOL;
use crate::metrics::evaluate_solution;
use crate::pmm::{pmm_solve, PmmParams};
use crate::schema::{write_json, REPORT_SCHEMA};
use crate::solution::Solution;
use crate::units::de_power_list;

pub const THREADS_ENV: &str = "IRAC_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    UserGs,
    EdgeGs,
    MaxRate,
    Greedy,
    LocalSearch,
    Rounding,
    Pmm,
    BruteForce,
    Ilo,
}

impl SolverKind {
    pub const ALL: [SolverKind; 9] = [
        SolverKind::UserGs,
        SolverKind::EdgeGs,
        SolverKind::MaxRate,
        SolverKind::Greedy,
        SolverKind::LocalSearch,
        SolverKind::Rounding,
        SolverKind::Pmm,
        SolverKind::BruteForce,
        SolverKind::Ilo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::UserGs => "user_gs",
            SolverKind::EdgeGs => "edge_gs",
            SolverKind::MaxRate => "max_rate",
            SolverKind::Greedy => "greedy",
            SolverKind::LocalSearch => "local_search",
            SolverKind::Rounding => "rounding",
            SolverKind::Pmm => "pmm",
            SolverKind::BruteForce => "brute_force",
            SolverKind::Ilo => "ilo",
        }
    }

    /// EdgeGS ignores the constraints by design.
    pub fn must_be_feasible(self) -> bool {
        self != SolverKind::EdgeGs
    }

    fn known_names() -> String {
        Self::ALL.map(|s| s.name()).join(", ")
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = IracError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                IracError::Validation(vec![format!(
                    "unknown solver {s:?} (known: {})",
                    Self::known_names()
                )])
            })
    }
}

/// Everything a solver may need besides the instance.
#[derive(Debug, Clone, Default)]
pub struct SolverContext {
    pub pmm: PmmParams,
    pub local_search_iters: usize,
    pub ilo_model: Option<Arc<IloModel>>,
}

impl SolverContext {
    pub fn new(pmm: PmmParams) -> Self {
        Self {
            pmm,
            local_search_iters: DEFAULT_LOCAL_SEARCH_ITERS,
            ilo_model: None,
        }
    }
}

pub const DEFAULT_LOCAL_SEARCH_ITERS: usize = 1000;

/// Runs one solver. Local search is seeded from the instance's run index.
pub fn run_solver(kind: SolverKind, inst: &Instance, ctx: &SolverContext) -> Result<Solution> {
    match kind {
        SolverKind::UserGs => solve_user_gs(inst),
        SolverKind::EdgeGs => solve_edge_gs(inst),
        SolverKind::MaxRate => solve_max_rate(inst),
        SolverKind::Greedy => solve_greedy(inst),
        SolverKind::LocalSearch => solve_local_search(inst, ctx.local_search_iters, inst.run_index),
        SolverKind::Rounding => solve_rounding(inst, ctx.pmm.dual_tol),
        SolverKind::Pmm => pmm_solve(inst, &ctx.pmm),
        SolverKind::BruteForce => solve_brute_force(inst),
        SolverKind::Ilo => match &ctx.ilo_model {
            Some(m) => infer(m, inst),
            None => Err(IracError::Validation(vec![
                "solver ilo needs a trained model (ilo_model)".into(),
            ])),
        },
    }
}

/// Like [`run_solver`], but a constraint violation from a solver that must
/// be feasible is an error.
pub fn run_solver_checked(
    kind: SolverKind,
    inst: &Instance,
    ctx: &SolverContext,
) -> Result<Solution> {
    let sol = run_solver(kind, inst, ctx)?;
    if kind.must_be_feasible() && !sol.feasibility.feasible {
        return Err(IracError::Solver(format!(
            "{kind} returned an infeasible decision on run {} (P = {} W)",
            inst.run_index, inst.power_budget
        )));
    }
    Ok(sol)
}

pub fn parse_solvers(names: &[String]) -> Result<Vec<SolverKind>> {
    let mut issues = Vec::new();
    let mut out = Vec::new();
    for n in names {
        match n.parse::<SolverKind>() {
            Ok(k) if out.contains(&k) => issues.push(format!("solver {n:?} listed twice")),
            Ok(k) => out.push(k),
            Err(IracError::Validation(v)) => issues.extend(v),
            Err(e) => return Err(e),
        }
    }
    if issues.is_empty() {
        Ok(out)
    } else {
        Err(IracError::Validation(issues))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
}

/// A TOML experiment description. All fields have defaults; an empty file
/// runs every non-learned solver on the default sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: ScenarioConfig,
    /// Watts, or strings with units such as `"10 mW"`.
    #[serde(deserialize_with = "de_power_list")]
    pub power_sweep: Vec<f64>,
    pub solvers: Vec<String>,
    pub num_runs: u64,
    /// Overrides `scenario.seed` when set.
    pub base_seed: Option<u64>,
    pub output_dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    pub pmm: PmmParams,
    pub local_search_iters: usize,
    pub ilo_model: Option<PathBuf>,
    /// Run drawn for the case study.
    pub case_run: u64,
    /// Power budget for the case study; defaults to the scenario's.
    #[serde(deserialize_with = "de_opt_power")]
    pub case_power: Option<f64>,
}

fn de_opt_power<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Option<f64>, D::Error> {
    crate::units::de_power(d).map(Some)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            scenario: ScenarioConfig::paper_truck(),
            power_sweep: vec![10e-3, 20e-3, 30e-3, 40e-3],
            solvers: [
                SolverKind::UserGs,
                SolverKind::EdgeGs,
                SolverKind::MaxRate,
                SolverKind::Greedy,
                SolverKind::LocalSearch,
                SolverKind::Rounding,
                SolverKind::Pmm,
            ]
            .map(|s| s.name().to_string())
            .to_vec(),
            num_runs: 100,
            base_seed: None,
            output_dir: PathBuf::from("results"),
            formats: vec![ReportFormat::Csv, ReportFormat::Json],
            pmm: PmmParams::default(),
            local_search_iters: DEFAULT_LOCAL_SEARCH_ITERS,
            ilo_model: None,
            case_run: 0,
            case_power: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| IracError::Parse(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            IracError::Parse(m) => IracError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| IracError::Parse(e.to_string()))
    }

    /// The scenario with `base_seed` applied.
    pub fn effective_scenario(&self) -> ScenarioConfig {
        let mut s = self.scenario.clone();
        if let Some(seed) = self.base_seed {
            s.seed = seed;
        }
        s
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .scenario
            .validate()
            .into_iter()
            .map(|m| format!("scenario: {m}"))
            .collect();
        v.extend(self.pmm.validate().into_iter().map(|m| format!("pmm: {m}")));
        if self.num_runs == 0 {
            v.push("num_runs must be >= 1".into());
        }
        if self.power_sweep.is_empty() {
            v.push("power_sweep must not be empty".into());
        }
        for p in &self.power_sweep {
            if !(*p > 0.0 && p.is_finite()) {
                v.push(format!("power_sweep entries must be > 0 W (got {p})"));
            }
        }
        if let Some(p) = self.case_power {
            if !(p > 0.0 && p.is_finite()) {
                v.push(format!("case_power must be > 0 W (got {p})"));
            }
        }
        if self.solvers.is_empty() {
            v.push("solvers must not be empty".into());
        }
        if self.formats.is_empty() {
            v.push("formats must not be empty".into());
        }
        match parse_solvers(&self.solvers) {
            Ok(_) => {}
            Err(IracError::Validation(issues)) => v.extend(issues),
            Err(e) => v.push(e.to_string()),
        }
        let listed = |k: SolverKind| self.solvers.iter().any(|s| s == k.name());
        if listed(SolverKind::Ilo) && self.ilo_model.is_none() {
            v.push("solver ilo needs ilo_model".into());
        }
        if listed(SolverKind::BruteForce) && self.scenario.num_users > BRUTE_FORCE_MAX_USERS {
            v.push(format!(
                "brute_force supports at most {BRUTE_FORCE_MAX_USERS} users (scenario has {})",
                self.scenario.num_users
            ));
        }
        v
    }

    /// Validated solver list and context, with the ILO model loaded.
    pub fn prepare(&self) -> Result<(Vec<SolverKind>, SolverContext)> {
        let issues = self.validate();
        if !issues.is_empty() {
            return Err(IracError::Validation(issues));
        }
        let kinds = parse_solvers(&self.solvers)?;
        let mut ctx = SolverContext::new(self.pmm.clone());
        ctx.local_search_iters = self.local_search_iters;
        if kinds.contains(&SolverKind::Ilo) {
            let path = self.ilo_model.as_ref().expect("validated");
            let model = IloModel::load(path)?;
            if model.num_users != self.scenario.num_users {
                return Err(IracError::Validation(vec![format!(
                    "ilo model is for {} users, scenario has {}",
                    model.num_users, self.scenario.num_users
                )]));
            }
            ctx.ilo_model = Some(Arc::new(model));
        }
        Ok((kinds, ctx))
    }
}

/// One solver on one run at one power level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub solver: SolverKind,
    pub power_budget: f64,
    pub run_index: u64,
    pub instance_hash: String,
    pub objective_p1: f64,
    pub total_loss: f64,
    pub mean_psnr: f64,
    pub max_latency: f64,
    pub num_selected: usize,
    pub total_power: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregates for one `(solver, P)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub solver: SolverKind,
    pub power_budget: f64,
    pub runs: usize,
    pub total_loss: MeanStd,
    pub mean_psnr: MeanStd,
    pub max_latency: MeanStd,
    pub objective_p1: MeanStd,
    pub num_selected: MeanStd,
    pub feasible_rate: f64,
    /// Fraction of runs whose slowest user misses the deadline (beyond the
    /// feasibility tolerance).
    pub deadline_miss_rate: f64,
    #[serde(skip)]
    pub wall_time: MeanStd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    /// Sorted by power level, then solver order in the config, then run.
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn cell(&self, solver: SolverKind, power_budget: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.solver == solver && s.power_budget == power_budget)
    }

    pub fn rows_for(&self, solver: SolverKind, power_budget: f64) -> impl Iterator<Item = &RunRow> {
        self.rows
            .iter()
            .filter(move |r| r.solver == solver && r.power_budget == power_budget)
    }

    /// Checks that all solvers of a `(P, run)` pair saw the same instance.
    pub fn pairing_violations(&self) -> usize {
        let mut bad = 0;
        let mut seen = std::collections::BTreeMap::new();
        for r in &self.rows {
            let key = (r.power_budget.to_bits(), r.run_index);
            match seen.get(&key) {
                None => {
                    seen.insert(key, &r.instance_hash);
                }
                Some(h) if *h != &r.instance_hash => bad += 1,
                Some(_) => {}
            }
        }
        bad
    }

    /// Writes the requested formats into `dir` and returns the paths.
    pub fn write(&self, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if formats.contains(&ReportFormat::Csv) {
            let p = dir.join("results.csv");
            std::fs::write(&p, self.results_csv()?)?;
            written.push(p);
            let p = dir.join("summary.csv");
            std::fs::write(&p, self.summary_csv()?)?;
            written.push(p);
        }
        if formats.contains(&ReportFormat::Json) {
            let p = dir.join("report.json");
            write_json(
                &p,
                REPORT_SCHEMA,
                &JsonReport {
                    config: &self.config,
                    summary: &self.summary,
                },
            )?;
            written.push(p);
        }
        let p = dir.join("timings.csv");
        std::fs::write(&p, self.timings_csv()?)?;
        written.push(p);
        Ok(written)
    }

    pub fn results_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "solver",
            "power_budget_w",
            "run",
            "instance_hash",
            "objective_p1",
            "total_loss",
            "mean_psnr_db",
            "max_latency_s",
            "num_selected",
            "total_power_w",
            "feasible",
            "iterations",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.solver.name().to_string(),
                sci(r.power_budget),
                r.run_index.to_string(),
                r.instance_hash.clone(),
                sci(r.objective_p1),
                sci(r.total_loss),
                sci(r.mean_psnr),
                sci(r.max_latency),
                r.num_selected.to_string(),
                sci(r.total_power),
                r.feasible.to_string(),
                r.iterations.to_string(),
            ])?;
        }
        finish_csv(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "solver",
            "power_budget_w",
            "runs",
            "total_loss_mean",
            "total_loss_std",
            "mean_psnr_db_mean",
            "mean_psnr_db_std",
            "max_latency_s_mean",
            "max_latency_s_std",
            "objective_p1_mean",
            "objective_p1_std",
            "num_selected_mean",
            "feasible_rate",
            "deadline_miss_rate",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.solver.name().to_string(),
                sci(s.power_budget),
                s.runs.to_string(),
                sci(s.total_loss.mean),
                sci(s.total_loss.std),
                sci(s.mean_psnr.mean),
                sci(s.mean_psnr.std),
                sci(s.max_latency.mean),
                sci(s.max_latency.std),
                sci(s.objective_p1.mean),
                sci(s.objective_p1.std),
                sci(s.num_selected.mean),
                sci(s.feasible_rate),
                sci(s.deadline_miss_rate),
            ])?;
        }
        finish_csv(w)
    }

    /// Wall-time aggregates; not reproducible byte for byte.
    pub fn timings_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "solver",
            "power_budget_w",
            "runs",
            "wall_time_s_mean",
            "wall_time_s_std",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.solver.name().to_string(),
                sci(s.power_budget),
                s.runs.to_string(),
                sci(s.wall_time.mean),
                sci(s.wall_time.std),
            ])?;
        }
        finish_csv(w)
    }
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a ExperimentConfig,
    summary: &'a [SummaryRow],
}

/// Nine significant digits; `-0` prints as `0`.
pub fn sci(v: f64) -> String {
    format!("{:.8e}", v + 0.0)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| IracError::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn make_row(kind: SolverKind, inst: &Instance, hash: &str, sol: &Solution) -> Result<RunRow> {
    let m = evaluate_solution(inst, &sol.x, &sol.p)?;
    Ok(RunRow {
        solver: kind,
        power_budget: inst.power_budget,
        run_index: inst.run_index,
        instance_hash: hash.to_string(),
        objective_p1: sol.objective_p1,
        total_loss: m.total_loss,
        mean_psnr: m.mean_psnr,
        max_latency: m.max_latency,
        num_selected: sol.num_selected(),
        total_power: sol.p.iter().sum(),
        feasible: sol.feasibility.feasible,
        iterations: sol.iterations,
        wall_time: sol.wall_time,
    })
}

fn summarize(
    rows: &[RunRow],
    kinds: &[SolverKind],
    sweep: &[f64],
    deadline: f64,
) -> Vec<SummaryRow> {
    // users served at full power finish exactly at the deadline
    let late = deadline * (1.0 + FEASIBILITY_TOL);
    let mut out = Vec::new();
    for &p in sweep {
        for &kind in kinds {
            let cell: Vec<&RunRow> = rows
                .iter()
                .filter(|r| r.solver == kind && r.power_budget == p)
                .collect();
            let n = cell.len().max(1) as f64;
            out.push(SummaryRow {
                solver: kind,
                power_budget: p,
                runs: cell.len(),
                total_loss: MeanStd::of(cell.iter().map(|r| r.total_loss)),
                mean_psnr: MeanStd::of(cell.iter().map(|r| r.mean_psnr)),
                max_latency: MeanStd::of(cell.iter().map(|r| r.max_latency)),
                objective_p1: MeanStd::of(cell.iter().map(|r| r.objective_p1)),
                num_selected: MeanStd::of(cell.iter().map(|r| r.num_selected as f64)),
                feasible_rate: cell.iter().filter(|r| r.feasible).count() as f64 / n,
                deadline_miss_rate: cell.iter().filter(|r| r.max_latency > late).count() as f64 / n,
                wall_time: MeanStd::of(cell.iter().map(|r| r.wall_time)),
            });
        }
    }
    out
}

/// Runs the sweep in parallel over runs. Unknown solvers and other config
/// problems are reported before any instance is drawn.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let (kinds, ctx) = cfg.prepare()?;
    let scenario = cfg.effective_scenario();
    let per_run: Vec<Vec<RunRow>> = (0..cfg.num_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<RunRow>> {
            let base = generate_instance(&scenario, run)?;
            let mut rows = Vec::with_capacity(kinds.len() * cfg.power_sweep.len());
            for &p in &cfg.power_sweep {
                let inst = base.with_power_budget(p);
                let hash = inst.content_hash();
                for &kind in &kinds {
                    let sol = run_solver_checked(kind, &inst, &ctx)?;
                    rows.push(make_row(kind, &inst, &hash, &sol)?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let power_rank = |p: f64| {
        cfg.power_sweep
            .iter()
            .position(|&q| q == p)
            .unwrap_or(usize::MAX)
    };
    let solver_rank = |k: SolverKind| kinds.iter().position(|&q| q == k).unwrap_or(usize::MAX);
    let mut rows: Vec<RunRow> = per_run.into_iter().flatten().collect();
    rows.sort_by_key(|r| {
        (
            power_rank(r.power_budget),
            solver_rank(r.solver),
            r.run_index,
        )
    });
    let summary = summarize(&rows, &kinds, &cfg.power_sweep, scenario.deadline);
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        summary,
    })
}

/// One line of a solver comparison on a single instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub solver: SolverKind,
    pub objective_p1: f64,
    pub feasible: bool,
    pub selected: Vec<usize>,
    pub wall_time: f64,
}

pub fn compare_solvers(
    inst: &Instance,
    kinds: &[SolverKind],
    ctx: &SolverContext,
) -> Result<Vec<CompareRow>> {
    inst.ensure_valid()?;
    kinds
        .iter()
        .map(|&kind| {
            let sol = run_solver(kind, inst, ctx)?;
            Ok(CompareRow {
                solver: kind,
                objective_p1: sol.objective_p1,
                feasible: sol.feasibility.feasible,
                selected: sol.selected(),
                wall_time: sol.wall_time,
            })
        })
        .collect()
}

/// Fixed-width table; the time column is optional so the output can be
/// compared byte for byte.
pub fn format_compare_table(rows: &[CompareRow], with_time: bool) -> String {
    let mut out = format!("{:<14} {:>16} {:>9}", "solver", "objective_p1", "feasible");
    if with_time {
        out.push_str(&format!(" {:>12}", "wall_time_s"));
    }
    out.push_str("  selected\n");
    for r in rows {
        out.push_str(&format!(
            "{:<14} {:>16} {:>9}",
            r.solver.name(),
            sci(r.objective_p1),
            r.feasible
        ));
        if with_time {
            out.push_str(&format!(" {:>12}", format!("{:.3e}", r.wall_time)));
        }
        let sel: Vec<String> = r.selected.iter().map(|k| k.to_string()).collect();
        out.push_str(&format!("  [{}]\n", sel.join(",")));
    }
    out
}

/// Per-user decision of one solver on the case-study instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyRow {
    pub solver: SolverKind,
    pub user: usize,
    pub collaborate: bool,
    pub switching_gain: f64,
    pub channel_gain: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudy {
    pub instance: Instance,
    pub rows: Vec<CaseStudyRow>,
}

impl CaseStudy {
    pub fn column(&self, solver: SolverKind) -> Vec<&CaseStudyRow> {
        self.rows.iter().filter(|r| r.solver == solver).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "solver",
            "user",
            "x",
            "switching_gain",
            "channel_gain",
            "power_w",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.solver.name().to_string(),
                r.user.to_string(),
                u8::from(r.collaborate).to_string(),
                sci(r.switching_gain),
                sci(r.channel_gain),
                sci(r.power),
            ])?;
        }
        finish_csv(w)
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let p = dir.join("case_study.csv");
        std::fs::write(&p, self.to_csv()?)?;
        Ok(p)
    }
}

/// Decisions of every configured solver on one instance.
pub fn case_study_on(
    inst: &Instance,
    kinds: &[SolverKind],
    ctx: &SolverContext,
) -> Result<CaseStudy> {
    let mut rows = Vec::new();
    for &kind in kinds {
        let sol = run_solver_checked(kind, inst, ctx)?;
        for k in 0..inst.num_users() {
            rows.push(CaseStudyRow {
                solver: kind,
                user: k,
                collaborate: sol.x[k],
                switching_gain: inst.switching_gain[k],
                channel_gain: inst.channel_gain[k],
                power: sol.p[k],
            });
        }
    }
    Ok(CaseStudy {
        instance: inst.clone(),
        rows,
    })
}

/// Case study on run `cfg.case_run` at `cfg.case_power`.
pub fn case_study(cfg: &ExperimentConfig) -> Result<CaseStudy> {
    let (kinds, ctx) = cfg.prepare()?;
    let scenario = cfg.effective_scenario();
    let mut inst = generate_instance(&scenario, cfg.case_run)?;
    if let Some(p) = cfg.case_power {
        inst = inst.with_power_budget(p);
    }
    case_study_on(&inst, &kinds, &ctx)
}

/// Sizes the global thread pool from `IRAC_THREADS` when it is set.
/// Returns the thread count in effect.
pub fn configure_threads_from_env() -> Result<usize> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
            IracError::Validation(vec![format!(
                "{THREADS_ENV} must be a positive integer (got {v:?})"
            )])
        })?;
        // a pool built earlier in the process keeps its size
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(rayon::current_num_threads())
}
