//! Estimates the probability of detecting both change points exactly and
//! compares it with the exact value of the same policy.

use double_disorder::cli::evaluate;
use double_disorder::{solve, ModelSpec, SolverConfig};

fn main() -> anyhow::Result<()> {
    let spec = ModelSpec::tiny();
    let horizon = 5;
    let cfg = SolverConfig {
        horizon: Some(horizon),
        ..SolverConfig::default()
    };
    let policy = solve(&spec, &cfg)?;
    let report = evaluate(&spec, &policy, 50_000, 0, Some(horizon))?;
    let (lo, hi) = report.wilson_ci_95;
    println!(
        "estimate: {:.4}  95% CI [{lo:.4}, {hi:.4}]",
        report.detection_prob_estimate
    );
    println!("exact policy value: {:?}", report.policy_value_exact);
    println!("brute-force optimum: {:?}", report.oracle_value);
    Ok(())
}
