//! Fixed inputs shared by the criterion benchmarks.

use irac_core::instance::generate_instance;
use irac_core::{Instance, ScenarioConfig};

/// Default scenario instance for a given run.
pub fn default_instance(run: u64) -> Instance {
    generate_instance(&ScenarioConfig::paper_truck(), run).expect("default scenario is valid")
}

/// Scenario with `k` users and a collaboration cap of `k / 2`, small enough
/// for exhaustive search.
pub fn small_instance(k: usize, run: u64) -> Instance {
    let cfg = ScenarioConfig {
        num_users: k,
        max_collab: k / 2,
        power_budget: 0.01,
        ..ScenarioConfig::paper_truck()
    };
    generate_instance(&cfg, run).expect("small scenario is valid")
}
