//! Integrated rendering and communication (IRAC) for edge-collaborative
//! Gaussian splatting.
//!
//! Each of `K` users either renders its view with a compressed on-device
//! model or downloads a frame rendered by a large model on an edge server.
//! Offloading needs a downlink fast enough to meet a frame deadline, so the
//! edge must jointly choose who collaborates (`x`) and how its transmit power
//! budget is split (`p`). This crate provides:
//!
//! * [`instance`]: the problem data model and a seeded scenario generator,
//! * [`link`]: rate, minimum-power and latency physics plus feasibility checks,
//! * [`metrics`]: SSIM, rendering error, PSNR calibration and solution scoring,
//! * [`pmm`]: the penalty majorization-minimization solver,
//! * [`baselines`]: comparison schemes and an exhaustive oracle,
//! * [`ilo`]: an imitation-learned MLP that mimics the PMM solver,
//! * [`harness`]: configuration, Monte-Carlo experiments and reports.

// `!(a > b)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod ilo;
pub mod instance;
pub mod link;
pub mod metrics;
pub mod pmm;
pub mod schema;
pub mod solution;
pub mod units;

pub use error::{IracError, Result};
pub use instance::{Instance, QualityConfig, QualityProfile, ScenarioConfig};
pub use link::{FeasibilityReport, PowerCurve, UserLink};
pub use metrics::{Image, SystemMetrics};
pub use pmm::{pmm_solve, PmmParams};
pub use solution::{Solution, SolveStatus};
