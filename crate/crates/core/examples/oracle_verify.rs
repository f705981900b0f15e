//! Checks the filter against exhaustive enumeration and compares the solved
//! policy with the brute-force optimum on a short horizon.

use double_disorder::detect::tabulate_policy;
use double_disorder::oracle::{best_blind_policy, brute_force_policy, evaluate_policy_exact};
use double_disorder::verify::verify_model;
use double_disorder::{solve, ModelSpec, SolverConfig};

fn main() -> anyhow::Result<()> {
    let spec = ModelSpec::tiny();
    let report = verify_model(&spec, 6)?;
    println!(
        "verify: {} prefixes, filter error {:.2e}, passed: {}",
        report.prefixes, report.filter_oracle_max_error, report.passed
    );

    let horizon = 5;
    let cfg = SolverConfig {
        horizon: Some(horizon),
        ..SolverConfig::default()
    };
    let policy = solve(&spec, &cfg)?;
    let table = tabulate_policy(&spec, &policy, horizon)?;
    let value = evaluate_policy_exact(&spec, &table, horizon)?;
    let optimum = brute_force_policy(&spec, horizon)?.value;
    let (j, k, blind) = best_blind_policy(&spec, horizon);
    println!("solver policy {value:.6}, optimum {optimum:.6}, best blind ({j},{k}) {blind:.6}");
    Ok(())
}
