//! Solves the stopping problem for a three-regime model and inspects the
//! resulting thresholds.

use double_disorder::simulate::rng_for_seed;
use double_disorder::{solve, ModelSpec, SolverConfig};

fn main() -> anyhow::Result<()> {
    let spec = ModelSpec::random(&mut rng_for_seed(12), 2, 3);
    let cfg = SolverConfig {
        grid_resolution: 12,
        ..SolverConfig::default()
    };
    let policy = solve(&spec, &cfg)?;
    let log = &policy.iteration_log;
    println!(
        "grid nodes: {}, second-stop sweeps: {}, first-stop sweeps: {}",
        policy.grid.len(),
        log.second_stop.len(),
        log.first_stop.len()
    );

    let uniform = vec![1.0 / 3.0; 3];
    for t in 0..spec.alphabet_size {
        for u in 0..spec.alphabet_size {
            println!(
                "t={t} u={u}: r*={:.4}  spawn={:.4}  first payoff={:.4}  stop first: {}",
                policy.r_star_at(t, u, &uniform),
                policy.spawn_threshold_at(&spec, t, u, &uniform),
                policy.first_payoff_at(t, u),
                policy.in_b_star(t, u)
            );
        }
    }
    Ok(())
}
