//! Exhaustive consistency checks of the filter against brute-force
//! enumeration, plus the one-step expectation identities it must satisfy.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{init_filter_with, FilterState};
use crate::likelihood::{transition_weight, BeliefVector};
use crate::model::ModelSpec;
use crate::oracle::{enumerate_posteriors, enumeration_table, ExactPosteriors, MAX_ENUMERATION_LEN};
use crate::simulate::Simulator;

/// Tolerance used by [`verify_model`] to decide pass or fail.
pub const VERIFY_TOL: f64 = 1e-10;

/// Largest absolute difference between a filter state and the enumerated
/// posteriors, over every belief component and every pair posterior.
pub fn posterior_error(state: &FilterState, exact: &ExactPosteriors) -> f64 {
    let b = &state.belief;
    let e = &exact.belief;
    let mut err: f64 = 0.0;
    for (x, y) in [
        (&b.pi1, &e.pi1),
        (&b.pi2, &e.pi2),
        (&b.pi12, &e.pi12),
        (&b.upsilon, &e.upsilon),
    ] {
        for (a, c) in x.iter().zip(y) {
            err = err.max((a - c).abs());
        }
    }
    let k = b.upsilon.len();
    let zero = vec![0.0; k];
    let keys = state.pair_beliefs.keys().chain(exact.pair_beliefs.keys());
    for m in keys {
        let got = state.pair_beliefs.get(m).unwrap_or(&zero);
        let want = exact.pair_beliefs.get(m).unwrap_or(&zero);
        for (a, c) in got.iter().zip(want) {
            err = err.max((a - c).abs());
        }
    }
    err
}

/// Worst violation of the one-step expectation identities at `state`,
/// testing every indicator function `1{X_{n+1} = y}`.
///
/// For each regime `u`, with `H(y)` the predictive density and primes
/// marking the posteriors after observing `y`:
///
/// ```text
/// H(y) (Υ' - Π¹' - Π¹²') = p1 (Υ - Π¹ - Π¹²) f⁰(y)
/// H(y) (Π¹' - Π²')       = [q1 (Υ - Π¹ - Π¹²) + p2 (Π¹ - Π²)] f¹_u(y)
/// H(y) Π²'               = [q2 Π¹ + p2 Π² + q1 Π¹²] f²(y)
/// H(y) Π¹²'              = p1 Π¹² f⁰(y)
/// ```
///
/// and the four right-hand sides summed over `u` equal `H(y)`.
pub fn expectation_identity_error(spec: &ModelSpec, state: &FilterState) -> Result<f64> {
    let x = state.cur_obs;
    let b = &state.belief;
    let (p1, q1, p2, q2) = (spec.p1, spec.q1, spec.p2, spec.q2);
    let mut err: f64 = 0.0;
    for y in 0..spec.alphabet_size {
        let h = transition_weight(spec, x, y, b);
        let (f0, f2) = (spec.f_pre(x, y), spec.f_post(x, y));
        let next = if h > 0.0 { Some(state.step(spec, y)?) } else { None };
        let mut total = 0.0;
        for u in 0..spec.regime_count {
            let later = b.upsilon[u] - b.pi1[u] - b.pi12[u];
            let rhs = [
                p1 * later * f0,
                (q1 * later + p2 * (b.pi1[u] - b.pi2[u])) * spec.f_mid(u, x, y),
                (q2 * b.pi1[u] + p2 * b.pi2[u] + q1 * b.pi12[u]) * f2,
                p1 * b.pi12[u] * f0,
            ];
            total += rhs.iter().sum::<f64>();
            let lhs = match &next {
                Some(s) => {
                    let n = &s.belief;
                    [
                        h * (n.upsilon[u] - n.pi1[u] - n.pi12[u]),
                        h * (n.pi1[u] - n.pi2[u]),
                        h * n.pi2[u],
                        h * n.pi12[u],
                    ]
                }
                None => [0.0; 4],
            };
            for (l, r) in lhs.iter().zip(&rhs) {
                err = err.max((l - r).abs());
            }
        }
        err = err.max((total - h).abs());
    }
    Ok(err)
}

/// `|Σ_y H(x, y, belief) - 1|`, worst over `x`.
pub fn normalization_error(spec: &ModelSpec, belief: &BeliefVector) -> f64 {
    (0..spec.alphabet_size)
        .map(|x| {
            let total: f64 = (0..spec.alphabet_size)
                .map(|y| transition_weight(spec, x, y, belief))
                .sum();
            (total - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// A random belief satisfying the ordering constraints: the mass of each
/// regime is split into four disjoint configuration masses.
pub fn random_belief<R: Rng + ?Sized>(rng: &mut R, regime_count: usize) -> BeliefVector {
    let upsilon = uniform_simplex(rng, regime_count);
    let mut belief = BeliefVector {
        pi1: Vec::with_capacity(regime_count),
        pi2: Vec::with_capacity(regime_count),
        pi12: Vec::with_capacity(regime_count),
        upsilon: upsilon.clone(),
    };
    for mass in upsilon {
        // [both later, simultaneous later, between, after both]
        let parts = uniform_simplex(rng, 4);
        belief.pi12.push(mass * parts[1]);
        belief.pi1.push(mass * (parts[2] + parts[3]));
        belief.pi2.push(mass * parts[3]);
    }
    belief
}

/// Uniform point on the simplex: normalized standard exponentials.
fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

/// Filter states at random times along simulated paths.
pub fn random_filter_states(spec: &ModelSpec, count: usize, seed: u64) -> Result<Vec<FilterState>> {
    let sim = Simulator::new(spec);
    (0..count as u64)
        .map(|i| {
            let t = sim.sample_seeded(1 + (i as usize % 15), seed.wrapping_add(i));
            let mut state = init_filter_with(spec, 0.0);
            for &y in &t.observations[1..] {
                state = state.step(spec, y)?;
            }
            Ok(state)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub model_digest: String,
    pub depth: usize,
    /// Observation prefixes checked, including the empty one.
    pub prefixes: usize,
    pub filter_oracle_max_error: f64,
    /// Worst relative error of `S_{n+1} = H S_n` over all extensions.
    pub recursion_max_rel_error: f64,
    pub identity_max_error: f64,
    pub normalization_max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Runs every check over all positive-probability paths up to `depth`.
pub fn verify_model(spec: &ModelSpec, depth: usize) -> Result<VerifyReport> {
    spec.validate()?;
    if depth > MAX_ENUMERATION_LEN {
        return Err(Error::GuardExceeded {
            what: "depth",
            value: depth,
            limit: MAX_ENUMERATION_LEN,
        });
    }
    let mut report = VerifyReport {
        model_digest: spec.digest(),
        depth,
        prefixes: 0,
        filter_oracle_max_error: 0.0,
        recursion_max_rel_error: 0.0,
        identity_max_error: 0.0,
        normalization_max_error: 0.0,
        tolerance: VERIFY_TOL,
        passed: false,
    };
    let root = init_filter_with(spec, 0.0);
    let mut stack = vec![(vec![spec.initial_state], root)];
    while let Some((path, state)) = stack.pop() {
        report.prefixes += 1;
        let exact = enumerate_posteriors(spec, &path)?;
        report.filter_oracle_max_error = report.filter_oracle_max_error.max(posterior_error(&state, &exact));
        report.identity_max_error = report.identity_max_error.max(expectation_identity_error(spec, &state)?);
        report.normalization_max_error = report
            .normalization_max_error
            .max(normalization_error(spec, &state.belief));
        if path.len() > depth {
            continue;
        }
        let density = exact.table.normalizer;
        let x = state.cur_obs;
        for y in 0..spec.alphabet_size {
            let h = transition_weight(spec, x, y, &state.belief);
            let mut child = path.clone();
            child.push(y);
            let next_density = enumeration_table(spec, &child)?.normalizer;
            let predicted = h * density;
            let rel = (next_density - predicted).abs() / next_density.abs().max(f64::MIN_POSITIVE);
            report.recursion_max_rel_error =
                report
                    .recursion_max_rel_error
                    .max(if next_density == 0.0 { predicted.abs() } else { rel });
            if h > 0.0 {
                let next = state.step(spec, y)?;
                stack.push((child, next));
            }
        }
    }
    report.passed = [
        report.filter_oracle_max_error,
        report.recursion_max_rel_error,
        report.identity_max_error,
        report.normalization_max_error,
    ]
    .iter()
    .all(|&e| e <= VERIFY_TOL);
    Ok(report)
}
