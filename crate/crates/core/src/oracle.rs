//! Brute-force ground truth for small instances.
//!
//! Posteriors come from explicit Bayes over every `(θ1, θ2, ε1)`
//! configuration, with the configurations beyond the path folded into
//! closed-form geometric masses. Optimal double stopping comes from backward
//! induction over the full tree of observation prefixes. Nothing here uses the
//! filter recursions or any belief-sufficiency argument.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::check_start;
use crate::likelihood::BeliefVector;
use crate::model::{gap_pmf, powu, prior_theta1_pmf, ModelSpec};

/// Longest path accepted by [`enumerate_posteriors`].
pub const MAX_ENUMERATION_LEN: usize = 20;
/// Longest horizon accepted by the policy oracles.
pub const MAX_POLICY_HORIZON: usize = 8;

/// Where the two change points sit relative to a path of length `n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Configuration {
    /// `θ1 = first <= θ2 = second <= n`
    Settled { first: usize, second: usize },
    /// `θ1 = first <= n < θ2`
    FirstOnly { first: usize },
    /// `n < θ1 = θ2`
    SimultaneousPending,
    /// `n < θ1 < θ2`
    BothPending,
}

#[derive(Clone, Debug, Serialize)]
pub struct EnumerationTable {
    pub path: Vec<usize>,
    /// Joint weight `P(configuration, ε1 = u) * likelihood(path | configuration, u)`.
    pub weights: BTreeMap<(Configuration, usize), f64>,
    /// `S_n(path)`: the sum of all weights.
    pub normalizer: f64,
}

#[derive(Clone, Debug)]
pub struct ExactPosteriors {
    pub belief: BeliefVector,
    /// `P(θ1 = m, θ2 > n, ε1 = u | path)` for every `m <= n`.
    pub pair_beliefs: BTreeMap<usize, Vec<f64>>,
    pub table: EnumerationTable,
}

/// Plain product of kernel entries. `first`/`second` may exceed the path.
fn likelihood(spec: &ModelSpec, path: &[usize], first: usize, second: usize, u: usize) -> f64 {
    let mut prod = 1.0;
    for r in 1..path.len() {
        let (x, y) = (path[r - 1], path[r]);
        prod *= if r < first {
            spec.kernel_pre[x][y]
        } else if r < second {
            spec.kernel_mid[u][x][y]
        } else {
            spec.kernel_post[x][y]
        };
    }
    prod
}

pub fn enumeration_table(spec: &ModelSpec, path: &[usize]) -> Result<EnumerationTable> {
    check_start(spec, path)?;
    let n = path.len() - 1;
    if n > MAX_ENUMERATION_LEN {
        return Err(Error::GuardExceeded {
            what: "path length",
            value: n,
            limit: MAX_ENUMERATION_LEN,
        });
    }
    let mut weights = BTreeMap::new();
    for u in 0..spec.regime_count {
        let ru = spec.regime_prior[u];
        for j in 0..=n {
            let pj = prior_theta1_pmf(spec, j);
            for k in j..=n {
                let w = pj * gap_pmf(spec, k - j) * ru * likelihood(spec, path, j, k, u);
                weights.insert((Configuration::Settled { first: j, second: k }, u), w);
            }
            let tail = pj * (1.0 - spec.rho) * powu(spec.p2, n - j);
            let w = tail * ru * likelihood(spec, path, j, n + 1, u);
            weights.insert((Configuration::FirstOnly { first: j }, u), w);
        }
        let pending = spec.prior_theta1_survival(n) * ru * likelihood(spec, path, n + 1, n + 1, u);
        weights.insert((Configuration::SimultaneousPending, u), spec.rho * pending);
        weights.insert((Configuration::BothPending, u), (1.0 - spec.rho) * pending);
    }
    let normalizer = weights.values().sum();
    Ok(EnumerationTable {
        path: path.to_vec(),
        weights,
        normalizer,
    })
}

/// Exact posteriors of every tracked event given the path `x_0..x_n`.
pub fn enumerate_posteriors(spec: &ModelSpec, path: &[usize]) -> Result<ExactPosteriors> {
    let table = enumeration_table(spec, path)?;
    let n = path.len() - 1;
    let k = spec.regime_count;
    let z = table.normalizer;
    if z.is_nan() || z <= 0.0 {
        return Err(Error::ZeroLikelihood {
            from: path[n.saturating_sub(1)],
            to: path[n],
            time: n,
        });
    }
    let mut belief = BeliefVector {
        pi1: vec![0.0; k],
        pi2: vec![0.0; k],
        pi12: vec![0.0; k],
        upsilon: vec![0.0; k],
    };
    let mut pair_beliefs: BTreeMap<usize, Vec<f64>> = (0..=n).map(|m| (m, vec![0.0; k])).collect();
    for (&(config, u), &w) in &table.weights {
        let p = w / z;
        belief.upsilon[u] += p;
        match config {
            Configuration::Settled { .. } => {
                belief.pi1[u] += p;
                belief.pi2[u] += p;
            }
            Configuration::FirstOnly { first } => {
                belief.pi1[u] += p;
                pair_beliefs.get_mut(&first).expect("m <= n")[u] += p;
            }
            Configuration::SimultaneousPending => belief.pi12[u] += p,
            Configuration::BothPending => {}
        }
    }
    Ok(ExactPosteriors {
        belief,
        pair_beliefs,
        table,
    })
}

/// `P(θ1 = m, θ2 = n, X_1..X_n = prefix[1..])` with `n = prefix.len() - 1`.
pub fn hit_probability(spec: &ModelSpec, prefix: &[usize], m: usize) -> f64 {
    let n = prefix.len() - 1;
    debug_assert!(m <= n);
    let prior = prior_theta1_pmf(spec, m) * gap_pmf(spec, n - m);
    if prior == 0.0 {
        return 0.0;
    }
    (0..spec.regime_count)
        .map(|u| spec.regime_prior[u] * likelihood(spec, prefix, m, n, u))
        .sum::<f64>()
        * prior
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon > MAX_POLICY_HORIZON {
        return Err(Error::GuardExceeded {
            what: "horizon",
            value: horizon,
            limit: MAX_POLICY_HORIZON,
        });
    }
    Ok(())
}

/// Stop/continue decisions indexed by observation prefix (`x_0` included).
///
/// `first[prefix]` says whether to make the first stop at the end of
/// `prefix` given no earlier first stop; `second[(m, prefix)]` says whether to
/// make the second stop there given the first stop was at `m`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecisionTable {
    pub first: HashMap<Vec<usize>, bool>,
    pub second: HashMap<(usize, Vec<usize>), bool>,
}

/// Prefixes `x_0..x_n` of every positive-probability path up to `horizon`.
pub fn reachable_prefixes(spec: &ModelSpec, horizon: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut stack = vec![vec![spec.initial_state]];
    while let Some(prefix) = stack.pop() {
        if prefix.len() <= horizon {
            let x = *prefix.last().expect("non-empty");
            for y in (0..spec.alphabet_size).rev() {
                if spec.f_pre(x, y) > 0.0 {
                    let mut child = prefix.clone();
                    child.push(y);
                    stack.push(child);
                }
            }
        }
        out.push(prefix);
    }
    out
}

impl DecisionTable {
    /// Builds a table by querying `first(prefix)` and `second(m, prefix)` on
    /// every reachable prefix.
    pub fn tabulate(
        spec: &ModelSpec,
        horizon: usize,
        mut first: impl FnMut(&[usize]) -> bool,
        mut second: impl FnMut(usize, &[usize]) -> bool,
    ) -> Self {
        let mut table = DecisionTable::default();
        for prefix in reachable_prefixes(spec, horizon) {
            let n = prefix.len() - 1;
            for m in 0..=n {
                table.second.insert((m, prefix.clone()), second(m, &prefix));
            }
            table.first.insert(prefix.clone(), first(&prefix));
        }
        table
    }

    pub fn never(spec: &ModelSpec, horizon: usize) -> Self {
        Self::tabulate(spec, horizon, |_| false, |_, _| false)
    }

    /// Data-ignoring policy that stops at the fixed times `j <= k`.
    pub fn blind(spec: &ModelSpec, horizon: usize, j: usize, k: usize) -> Self {
        Self::tabulate(spec, horizon, |p| p.len() - 1 == j, |_, p| p.len() - 1 == k)
    }

    pub fn random<R: Rng + ?Sized>(spec: &ModelSpec, horizon: usize, rng: &mut R) -> Self {
        let mut table = DecisionTable::default();
        for prefix in reachable_prefixes(spec, horizon) {
            let n = prefix.len() - 1;
            for m in 0..=n {
                table.second.insert((m, prefix.clone()), rng.random_bool(0.4));
            }
            table.first.insert(prefix, rng.random_bool(0.3));
        }
        table
    }

    fn first_at(&self, prefix: &[usize]) -> Result<bool> {
        self.first
            .get(prefix)
            .copied()
            .ok_or_else(|| Error::UndefinedPrefix(prefix.to_vec()))
    }

    fn second_at(&self, m: usize, prefix: &[usize]) -> Result<bool> {
        self.second
            .get(&(m, prefix.to_vec()))
            .copied()
            .ok_or_else(|| Error::UndefinedPrefix(prefix.to_vec()))
    }
}

#[derive(Clone, Debug)]
pub struct OraclePolicy {
    pub horizon: usize,
    pub value: f64,
    pub table: DecisionTable,
}

/// Exact optimum of `P(τ = θ1, σ = θ2)` over adapted pairs `τ <= σ <= horizon`.
pub fn brute_force_policy(spec: &ModelSpec, horizon: usize) -> Result<OraclePolicy> {
    check_horizon(horizon)?;
    let mut table = DecisionTable::default();
    let mut prefix = vec![spec.initial_state];
    let (value, _) = solve_prefix(spec, horizon, &mut prefix, &mut table);
    Ok(OraclePolicy { horizon, value, table })
}

/// Returns the outer value at `prefix` and the inner values for every first
/// stop `m <= n`, all as joint (unnormalized) probabilities.
fn solve_prefix(
    spec: &ModelSpec,
    horizon: usize,
    prefix: &mut Vec<usize>,
    table: &mut DecisionTable,
) -> (f64, Vec<f64>) {
    let n = prefix.len() - 1;
    let payoff: Vec<f64> = (0..=n).map(|m| hit_probability(spec, prefix, m)).collect();

    let mut cont_outer = 0.0;
    let mut cont_inner = vec![0.0; n + 1];
    if n < horizon {
        let x = prefix[n];
        for y in 0..spec.alphabet_size {
            if spec.f_pre(x, y) <= 0.0 {
                continue;
            }
            prefix.push(y);
            let (outer, inner) = solve_prefix(spec, horizon, prefix, table);
            prefix.pop();
            cont_outer += outer;
            for m in 0..=n {
                cont_inner[m] += inner[m];
            }
        }
    }

    let mut inner = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let stop = payoff[m] >= cont_inner[m];
        table.second.insert((m, prefix.clone()), stop);
        inner.push(payoff[m].max(cont_inner[m]));
    }
    let stop_first = inner[n] >= cont_outer;
    table.first.insert(prefix.clone(), stop_first);
    (inner[n].max(cont_outer), inner)
}

/// Exact `P(τ = θ1, σ = θ2)` under a tabulated policy, stopping no later than
/// `horizon` (pairs still open at the horizon count as misses).
pub fn evaluate_policy_exact(spec: &ModelSpec, policy: &DecisionTable, horizon: usize) -> Result<f64> {
    check_horizon(horizon)?;
    let mut prefix = vec![spec.initial_state];
    evaluate_prefix(spec, policy, horizon, &mut prefix, None)
}

fn evaluate_prefix(
    spec: &ModelSpec,
    policy: &DecisionTable,
    horizon: usize,
    prefix: &mut Vec<usize>,
    first_stop: Option<usize>,
) -> Result<f64> {
    let n = prefix.len() - 1;
    let mut first_stop = first_stop;
    if first_stop.is_none() && policy.first_at(prefix)? {
        first_stop = Some(n);
    }
    if let Some(m) = first_stop {
        if policy.second_at(m, prefix)? {
            return Ok(hit_probability(spec, prefix, m));
        }
    }
    if n == horizon {
        return Ok(0.0);
    }
    let x = prefix[n];
    let mut total = 0.0;
    for y in 0..spec.alphabet_size {
        if spec.f_pre(x, y) <= 0.0 {
            continue;
        }
        prefix.push(y);
        total += evaluate_prefix(spec, policy, horizon, prefix, first_stop)?;
        prefix.pop();
    }
    Ok(total)
}

/// Best data-ignoring pair: `max_{j <= k <= horizon} P(θ1 = j, θ2 = k)`.
pub fn best_blind_policy(spec: &ModelSpec, horizon: usize) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for j in 0..=horizon {
        for k in j..=horizon {
            let v = prior_theta1_pmf(spec, j) * gap_pmf(spec, k - j);
            if v > best.2 {
                best = (j, k, v);
            }
        }
    }
    best
}

#[derive(Clone, Debug, Serialize)]
pub struct PrefixDecision {
    pub prefix: String,
    pub stop_first: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondDecision {
    pub first_stop: usize,
    pub prefix: String,
    pub stop_second: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PosteriorRow {
    pub prefix: String,
    pub normalizer: f64,
    pub belief: BeliefVector,
    pub pair_beliefs: BTreeMap<usize, Vec<f64>>,
}

/// Regression snapshot of the oracle on one model.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub horizon: usize,
    pub optimal_value: f64,
    pub blind_value: f64,
    pub blind_times: (usize, usize),
    pub first_decisions: Vec<PrefixDecision>,
    pub second_decisions: Vec<SecondDecision>,
    pub posteriors: Vec<PosteriorRow>,
}

pub(crate) fn prefix_key(prefix: &[usize]) -> String {
    prefix.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn oracle_report(spec: &ModelSpec, horizon: usize) -> Result<OracleReport> {
    let policy = brute_force_policy(spec, horizon)?;
    let (bj, bk, blind_value) = best_blind_policy(spec, horizon);
    let mut prefixes = reachable_prefixes(spec, horizon);
    prefixes.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));

    let mut first_decisions = Vec::new();
    let mut second_decisions = Vec::new();
    let mut posteriors = Vec::new();
    for prefix in &prefixes {
        let key = prefix_key(prefix);
        first_decisions.push(PrefixDecision {
            prefix: key.clone(),
            stop_first: policy.table.first[prefix],
        });
        for m in 0..prefix.len() {
            second_decisions.push(SecondDecision {
                first_stop: m,
                prefix: key.clone(),
                stop_second: policy.table.second[&(m, prefix.clone())],
            });
        }
        let exact = enumerate_posteriors(spec, prefix)?;
        posteriors.push(PosteriorRow {
            prefix: key,
            normalizer: exact.table.normalizer,
            belief: exact.belief,
            pair_beliefs: exact.pair_beliefs,
        });
    }
    Ok(OracleReport {
        horizon,
        optimal_value: policy.value,
        blind_value,
        blind_times: (bj, bk),
        first_decisions,
        second_decisions,
        posteriors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::init_filter_with;
    use crate::likelihood::configuration_densities;
    use rand::SeedableRng;

    #[test]
    fn empty_path_gives_prior() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 0.3;
        spec.rho = 0.4;
        let exact = enumerate_posteriors(&spec, &[0]).unwrap();
        let init = init_filter_with(&spec, 0.0);
        for (a, b) in [
            (&exact.belief.pi1, &init.belief.pi1),
            (&exact.belief.pi2, &init.belief.pi2),
            (&exact.belief.pi12, &init.belief.pi12),
            (&exact.belief.upsilon, &init.belief.upsilon),
        ] {
            assert!((a[0] - b[0]).abs() < 1e-15);
        }
        assert!((exact.pair_beliefs[&0][0] - init.pair_mass(0)).abs() < 1e-15);
    }

    #[test]
    fn normalizer_matches_configuration_densities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for k in 1..=2 {
            let spec = ModelSpec::random(&mut rng, 3, k);
            let path = [spec.initial_state, 1, 2, 2, 0, 1];
            let t = enumeration_table(&spec, &path).unwrap();
            let s = configuration_densities(&spec, &path).values().iter().sum::<f64>();
            assert!((t.normalizer - s).abs() < 1e-10 * s.max(1e-300));
        }
    }

    #[test]
    fn uninformative_posteriors_equal_priors() {
        let mut spec = ModelSpec::tiny();
        spec.kernel_mid[0] = spec.kernel_pre.clone();
        spec.kernel_post = spec.kernel_pre.clone();
        spec.pi = 0.25;
        spec.rho = 0.35;
        let exact = enumerate_posteriors(&spec, &[0, 1, 1, 0]).unwrap();
        let n = 3;
        let p_le: f64 = (0..=n).map(|j| prior_theta1_pmf(&spec, j)).sum();
        assert!((exact.belief.pi1[0] - p_le).abs() < 1e-14);
        assert!((exact.belief.pi12[0] - spec.rho * spec.prior_theta1_survival(n)).abs() < 1e-14);
    }

    #[test]
    fn guards() {
        let spec = ModelSpec::tiny();
        let long = vec![0; 22];
        assert!(matches!(
            enumerate_posteriors(&spec, &long),
            Err(Error::GuardExceeded { .. })
        ));
        assert!(matches!(brute_force_policy(&spec, 9), Err(Error::GuardExceeded { .. })));
    }

    #[test]
    fn certain_changes_stop_immediately() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 1.0;
        spec.rho = 1.0;
        let p = brute_force_policy(&spec, 4).unwrap();
        assert!((p.value - 1.0).abs() < 1e-15);
        assert!(p.table.first[&vec![0]]);
        assert!(p.table.second[&(0, vec![0])]);
    }

    #[test]
    fn useless_data_gives_blind_value() {
        let mut spec = ModelSpec::tiny();
        spec.kernel_mid[0] = spec.kernel_pre.clone();
        spec.kernel_post = spec.kernel_pre.clone();
        spec.pi = 0.1;
        spec.rho = 0.2;
        let p = brute_force_policy(&spec, 5).unwrap();
        let (_, _, blind) = best_blind_policy(&spec, 5);
        assert!((p.value - blind).abs() < 1e-14, "{} vs {blind}", p.value);
    }

    #[test]
    fn self_consistency_and_never() {
        let spec = ModelSpec::tiny();
        let p = brute_force_policy(&spec, 5).unwrap();
        let v = evaluate_policy_exact(&spec, &p.table, 5).unwrap();
        assert!((v - p.value).abs() < 1e-14);
        let never = DecisionTable::never(&spec, 5);
        assert_eq!(evaluate_policy_exact(&spec, &never, 5).unwrap(), 0.0);
    }

    #[test]
    fn blind_table_value() {
        let spec = ModelSpec::tiny();
        let (j, k, v) = best_blind_policy(&spec, 5);
        let t = DecisionTable::blind(&spec, 5, j, k);
        assert!((evaluate_policy_exact(&spec, &t, 5).unwrap() - v).abs() < 1e-14);
    }

    #[test]
    fn optimum_dominates_random_policies() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for k in 1..=2 {
            let spec = ModelSpec::random(&mut rng, 2, k);
            let best = brute_force_policy(&spec, 4).unwrap().value;
            for _ in 0..100 {
                let t = DecisionTable::random(&spec, 4, &mut rng);
                assert!(evaluate_policy_exact(&spec, &t, 4).unwrap() <= best + 1e-14);
            }
        }
    }

    #[test]
    fn missing_prefix_is_an_error() {
        let spec = ModelSpec::tiny();
        let mut t = DecisionTable::never(&spec, 3);
        t.first.remove(&vec![0, 1]);
        assert!(matches!(
            evaluate_policy_exact(&spec, &t, 3),
            Err(Error::UndefinedPrefix(p)) if p == vec![0, 1]
        ));
    }
}
