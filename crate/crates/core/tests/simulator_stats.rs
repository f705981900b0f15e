//! Goodness of fit of the simulator against the priors and kernels, each a
//! chi-square test at the 1% level.

mod common;

use std::path::Path;

use double_disorder::cli::cmd_simulate;
use double_disorder::model::{prior_theta1_pmf, regime_prior_pmf};
use double_disorder::simulate::{read_trajectories, rng_for_seed, sample_change_points, Simulator, NEVER};
use double_disorder::ModelSpec;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pearson statistic over `bins` with a final tail bin collecting the rest
/// of the probability.
fn chi_square_passes(counts: &[u64], probs: &[f64]) -> bool {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.99);
    stat < critical
}

fn binned(values: impl Iterator<Item = usize>, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins + 1];
    for v in values {
        counts[v.min(bins)] += 1;
    }
    counts
}

fn with_tail(mut probs: Vec<f64>) -> Vec<f64> {
    let rest = 1.0 - probs.iter().sum::<f64>();
    probs.push(rest);
    probs
}

fn gap_pmf(spec: &ModelSpec, g: usize) -> f64 {
    if g == 0 {
        spec.rho
    } else {
        (1.0 - spec.rho) * spec.p2.powi(g as i32 - 1) * spec.q2
    }
}

#[test]
fn change_points_follow_the_priors() {
    let mut spec = ModelSpec::tiny();
    spec.pi = 0.1;
    spec.rho = 0.25;
    let mut rng = rng_for_seed(2024);
    let draws: Vec<(usize, usize)> = (0..100_000).map(|_| sample_change_points(&spec, &mut rng)).collect();

    let bins = 15;
    let counts = binned(draws.iter().map(|d| d.0), bins);
    let probs = with_tail((0..bins).map(|j| prior_theta1_pmf(&spec, j)).collect());
    assert!(chi_square_passes(&counts, &probs));

    let counts = binned(draws.iter().map(|d| d.1 - d.0), bins);
    let probs = with_tail((0..bins).map(|g| gap_pmf(&spec, g)).collect());
    assert!(chi_square_passes(&counts, &probs));
}

#[test]
fn regimes_follow_their_prior() {
    let spec = common::random_models(2, &[3], 1, 5).remove(0);
    let sim = Simulator::new(&spec);
    let counts = (0..50_000u64).fold(vec![0u64; 3], |mut acc, s| {
        acc[sim.sample_seeded(0, s).regime] += 1;
        acc
    });
    let probs: Vec<f64> = (0..3).map(|u| regime_prior_pmf(&spec, u).unwrap()).collect();
    assert!(chi_square_passes(&counts, &probs));
}

#[test]
fn transitions_follow_the_active_kernel() {
    let mut spec = common::random_models(3, &[1], 1, 8).remove(0);
    spec.pi = 0.0;
    let sim = Simulator::new(&spec);
    // tally (x, y) moves inside each segment, then test each row
    let mut pre = vec![vec![0u64; 3]; 3];
    let mut post = vec![vec![0u64; 3]; 3];
    for seed in 0..20_000 {
        let t = sim.sample_seeded(12, seed);
        for n in 1..t.observations.len() {
            let (x, y) = (t.observations[n - 1], t.observations[n]);
            if n < t.theta1 {
                pre[x][y] += 1;
            } else if t.theta2 != NEVER && n >= t.theta2 {
                post[x][y] += 1;
            }
        }
    }
    for x in 0..3 {
        assert!(chi_square_passes(&pre[x], &spec.kernel_pre[x]), "pre row {x}");
        assert!(chi_square_passes(&post[x], &spec.kernel_post[x]), "post row {x}");
    }
}

#[test]
fn simulate_command_matches_theta1_prior() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let mut spec = ModelSpec::tiny();
    spec.pi = 0.05;
    std::fs::write(&model, spec.to_json_pretty()).unwrap();
    let csv = cmd_simulate(Path::new(&model), Some(1), 100_000, 77).unwrap();
    let batch = read_trajectories(csv.as_bytes(), "simulated").unwrap();
    assert_eq!(batch.len(), 100_000);
    let bins = 20;
    let counts = binned(batch.iter().map(|t| t.theta1), bins);
    let probs = with_tail((0..bins).map(|j| prior_theta1_pmf(&spec, j)).collect());
    assert!(chi_square_passes(&counts, &probs));
}
