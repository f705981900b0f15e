//! The recursive filter against brute-force enumeration on every short path.

mod common;

use double_disorder::likelihood::{transition_weight, transition_weight_aggregate};
use double_disorder::oracle::{enumerate_posteriors, enumeration_table};
use double_disorder::simulate::Simulator;
use double_disorder::verify::{expectation_identity_error, posterior_error, random_filter_states};
use double_disorder::{init_filter, ModelSpec};
use proptest::prelude::*;

fn instances() -> Vec<ModelSpec> {
    let mut models = vec![ModelSpec::tiny()];
    models.extend(common::random_models(2, &[1, 2], 3, 17));
    models.extend(common::random_models(3, &[2], 2, 18));
    models
}

#[test]
fn filter_matches_enumeration_on_all_paths() {
    for spec in instances() {
        for (path, state) in common::all_filtered_paths(&spec, 4) {
            let exact = enumerate_posteriors(&spec, &path).unwrap();
            let err = posterior_error(&state, &exact);
            assert!(err < 1e-10, "path {path:?}: error {err}");
        }
    }
}

#[test]
fn path_density_recursion() {
    for spec in instances() {
        for (path, state) in common::all_filtered_paths(&spec, 4) {
            let s_n = enumeration_table(&spec, &path).unwrap().normalizer;
            for y in 0..spec.alphabet_size {
                let mut child = path.clone();
                child.push(y);
                let s_next = enumeration_table(&spec, &child).unwrap().normalizer;
                let h = transition_weight(&spec, state.cur_obs, y, &state.belief);
                assert!((s_next - h * s_n).abs() <= 1e-12 * s_next.max(1e-300), "{child:?}");
            }
        }
    }
}

#[test]
fn aggregate_and_per_regime_weights_agree() {
    for spec in instances() {
        for (_, state) in common::all_filtered_paths(&spec, 3) {
            for y in 0..spec.alphabet_size {
                let a = transition_weight(&spec, state.cur_obs, y, &state.belief);
                let b = transition_weight_aggregate(&spec, state.cur_obs, y, &state.belief);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn expectation_identities_on_random_states() {
    for (i, spec) in instances().into_iter().enumerate() {
        for state in random_filter_states(&spec, 20, 100 + i as u64).unwrap() {
            assert!(expectation_identity_error(&spec, &state).unwrap() < 1e-12);
        }
    }
}

#[test]
fn long_paths_stay_normalized_with_pruning() {
    for spec in instances() {
        let sim = Simulator::new(&spec);
        for seed in 0..10 {
            let t = sim.sample_seeded(400, seed);
            let mut state = init_filter(&spec);
            for &y in &t.observations[1..] {
                state = state.step(&spec, y).unwrap();
                assert!(state.belief.is_consistent(1e-9));
                assert!(state.total_pair_mass() <= state.belief.total_pi1() - state.belief.total_pi2() + 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beliefs_stay_ordered(seed in 0u64..10_000, steps in 1usize..60, regimes in 1usize..4) {
        let spec = common::random_models(3, &[regimes], 1, seed).remove(0);
        let t = Simulator::new(&spec).sample_seeded(steps, seed);
        let mut state = init_filter(&spec);
        for &y in &t.observations[1..] {
            state = state.step(&spec, y).unwrap();
            let b = &state.belief;
            prop_assert!((b.upsilon.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for u in 0..regimes {
                prop_assert!(b.pi2[u] <= b.pi1[u] + 1e-12);
                prop_assert!(b.pi1[u] + b.pi12[u] <= b.upsilon[u] + 1e-12);
                prop_assert!(b.pi2[u] >= -1e-15 && b.pi12[u] >= -1e-15);
            }
        }
    }
}
