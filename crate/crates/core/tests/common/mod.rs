#![allow(dead_code)]

use double_disorder::filter::{init_filter_with, FilterState};
use double_disorder::simulate::rng_for_seed;
use double_disorder::ModelSpec;

/// Randomized models: `count` per regime count in `regimes`, seeded so the
/// instance set is fixed.
pub fn random_models(alphabet: usize, regimes: &[usize], count: usize, seed: u64) -> Vec<ModelSpec> {
    let mut rng = rng_for_seed(seed);
    regimes
        .iter()
        .flat_map(|&k| (0..count).map(move |_| k))
        .map(|k| ModelSpec::random(&mut rng, alphabet, k))
        .collect()
}

/// Every path `x_0..x_n` with `n <= max_len`, each paired with its filter
/// state (no pruning), in depth-first order.
pub fn all_filtered_paths(spec: &ModelSpec, max_len: usize) -> Vec<(Vec<usize>, FilterState)> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![spec.initial_state], init_filter_with(spec, 0.0))];
    while let Some((path, state)) = stack.pop() {
        if path.len() <= max_len {
            for y in 0..spec.alphabet_size {
                if let Ok(next) = state.step(spec, y) {
                    let mut child = path.clone();
                    child.push(y);
                    stack.push((child, next));
                }
            }
        }
        out.push((path, state));
    }
    out
}

/// The model with every kernel replaced by the pre-change kernel.
pub fn uninformative(spec: &ModelSpec) -> ModelSpec {
    let mut s = spec.clone();
    s.kernel_mid = vec![s.kernel_pre.clone(); s.regime_count];
    s.kernel_post = s.kernel_pre.clone();
    s
}
