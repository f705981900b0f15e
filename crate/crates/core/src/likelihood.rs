//! Path likelihoods under fixed change points, the four disorder-configuration
//! densities, and the one-step transition weight `H` that normalizes every
//! posterior update.

use serde::{Deserialize, Serialize};

use crate::model::{gap_pmf, powu, prior_theta1_pmf, ModelSpec};

/// Per-regime a-posteriori probabilities at one time step.
///
/// For regime `u` and time `n`:
/// `pi1[u] = P(θ1 <= n, ε1 = u | F_n)`, `pi2[u] = P(θ2 <= n, ε1 = u | F_n)`,
/// `pi12[u] = P(θ1 = θ2 > n, ε1 = u | F_n)`, `upsilon[u] = P(ε1 = u | F_n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefVector {
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
    pub pi12: Vec<f64>,
    pub upsilon: Vec<f64>,
}

impl BeliefVector {
    pub fn regime_count(&self) -> usize {
        self.upsilon.len()
    }

    /// Checks the ordering constraints `pi2 <= pi1 <= upsilon`,
    /// `pi12 <= upsilon - pi1` and `sum(upsilon) = 1`, up to `tol`.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let ordered = (0..self.regime_count()).all(|u| {
            self.pi2[u] >= -tol
                && self.pi2[u] <= self.pi1[u] + tol
                && self.pi1[u] <= self.upsilon[u] + tol
                && self.upsilon[u] <= 1.0 + tol
                && self.pi12[u] >= -tol
                && self.pi12[u] <= self.upsilon[u] - self.pi1[u] + tol
        });
        ordered && (self.upsilon.iter().sum::<f64>() - 1.0).abs() <= tol
    }

    pub fn total_pi1(&self) -> f64 {
        self.pi1.iter().sum()
    }

    pub fn total_pi2(&self) -> f64 {
        self.pi2.iter().sum()
    }

    pub fn total_pi12(&self) -> f64 {
        self.pi12.iter().sum()
    }
}

/// Log-density of `path` when the first change is at `split1`, the second at
/// `split2` and the middle regime is `u`.
///
/// The transition into `path[r]` uses the pre-change kernel for `r < split1`,
/// regime `u` for `split1 <= r < split2`, and the post-change kernel for
/// `r >= split2`. Splits may lie beyond the end of the path. A path with a
/// single point has log-likelihood 0.
pub fn segment_log_likelihood(spec: &ModelSpec, path: &[usize], split1: usize, split2: usize, u: usize) -> f64 {
    assert!(split1 <= split2, "split1 {split1} after split2 {split2}");
    path.windows(2)
        .enumerate()
        .map(|(i, w)| {
            let r = i + 1;
            let f = if r < split1 {
                spec.f_pre(w[0], w[1])
            } else if r < split2 {
                spec.f_mid(u, w[0], w[1])
            } else {
                spec.f_post(w[0], w[1])
            };
            f.ln()
        })
        .sum()
}

/// Cumulative log-kernel sums along a path, one row per kernel. Zero
/// densities are counted separately so differences never meet `-inf - -inf`.
struct LogPrefix {
    pre: Cumulative,
    mid: Vec<Cumulative>,
    post: Cumulative,
}

struct Cumulative {
    log_sum: Vec<f64>,
    zeros: Vec<usize>,
}

impl Cumulative {
    fn new(path: &[usize], f: impl Fn(usize, usize) -> f64) -> Self {
        let mut log_sum = vec![0.0];
        let mut zeros = vec![0];
        let (mut acc, mut z) = (0.0, 0);
        for w in path.windows(2) {
            let v = f(w[0], w[1]);
            if v > 0.0 {
                acc += v.ln();
            } else {
                z += 1;
            }
            log_sum.push(acc);
            zeros.push(z);
        }
        Cumulative { log_sum, zeros }
    }

    /// Log-product over transitions `lo+1..=hi`.
    fn range(&self, lo: usize, hi: usize) -> f64 {
        if self.zeros[hi] > self.zeros[lo] {
            f64::NEG_INFINITY
        } else {
            self.log_sum[hi] - self.log_sum[lo]
        }
    }
}

impl LogPrefix {
    fn new(spec: &ModelSpec, path: &[usize]) -> Self {
        LogPrefix {
            pre: Cumulative::new(path, |x, y| spec.f_pre(x, y)),
            mid: (0..spec.regime_count)
                .map(|u| Cumulative::new(path, |x, y| spec.f_mid(u, x, y)))
                .collect(),
            post: Cumulative::new(path, |x, y| spec.f_post(x, y)),
        }
    }

    /// Same quantity as [`segment_log_likelihood`], in O(1).
    fn segments(&self, split1: usize, split2: usize, u: usize) -> f64 {
        let n = self.pre.log_sum.len() - 1;
        let c = |s: usize| s.clamp(1, n + 1) - 1;
        let (a, b) = (c(split1), c(split2));
        self.pre.range(0, a) + self.mid[u].range(a, b) + self.post.range(b, n)
    }
}

/// Unnormalized joint densities of a path and each disorder configuration.
/// Stored as natural logarithms; `-inf` marks a configuration that cannot
/// produce the path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfigurationDensities {
    /// `θ1 <= θ2 <= n`
    pub log_both_passed: f64,
    /// `θ1 <= n < θ2`
    pub log_first_passed: f64,
    /// `θ1 = θ2 > n`
    pub log_simultaneous_pending: f64,
    /// `n < θ1 < θ2`
    pub log_both_pending: f64,
}

impl ConfigurationDensities {
    pub fn values(&self) -> [f64; 4] {
        [
            self.log_both_passed.exp(),
            self.log_first_passed.exp(),
            self.log_simultaneous_pending.exp(),
            self.log_both_pending.exp(),
        ]
    }

    /// Log of the joint density `S_n` of the path.
    pub fn log_total(&self) -> f64 {
        log_sum_exp(&[
            self.log_both_passed,
            self.log_first_passed,
            self.log_simultaneous_pending,
            self.log_both_pending,
        ])
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Sums prior weight times path likelihood over every admissible
/// `(θ1, θ2, ε1)` within each configuration. Once a change point lies beyond
/// the path its likelihood no longer depends on the exact position, so the
/// tails collapse to closed-form geometric masses.
pub fn configuration_densities(spec: &ModelSpec, path: &[usize]) -> ConfigurationDensities {
    assert!(!path.is_empty(), "path must contain X_0");
    let n = path.len() - 1;
    let prefix = LogPrefix::new(spec, path);
    let log_regime: Vec<f64> = spec.regime_prior.iter().map(|r| r.ln()).collect();

    let mut both_passed = Vec::new();
    let mut first_passed = Vec::new();
    for j in 0..=n {
        let lp1 = prior_theta1_pmf(spec, j).ln();
        for (u, lr) in log_regime.iter().enumerate() {
            let base = lp1 + lr;
            for k in j..=n {
                both_passed.push(base + gap_pmf(spec, k - j).ln() + prefix.segments(j, k, u));
            }
            // P(θ2 > n | θ1 = j) = (1 - ρ) p2^(n - j)
            let survive = ((1.0 - spec.rho) * powu(spec.p2, n - j)).ln();
            first_passed.push(base + survive + prefix.segments(j, n + 1, u));
        }
    }
    let log_pre_only = prefix.segments(n + 1, n + 1, 0);
    let pending = spec.prior_theta1_survival(n).ln() + log_pre_only;

    ConfigurationDensities {
        log_both_passed: log_sum_exp(&both_passed),
        log_first_passed: log_sum_exp(&first_passed),
        log_simultaneous_pending: spec.rho.ln() + pending,
        log_both_pending: (1.0 - spec.rho).ln() + pending,
    }
}

/// Per-regime share `H^u(x, y, ·)` of the one-step predictive density.
pub fn regime_transition_weight(spec: &ModelSpec, x: usize, y: usize, belief: &BeliefVector, u: usize) -> f64 {
    let (alpha, beta, gamma, upsilon) = (belief.pi1[u], belief.pi2[u], belief.pi12[u], belief.upsilon[u]);
    regime_weight_from_parts(spec, x, y, u, upsilon - alpha, alpha - beta, beta, gamma)
}

/// `H^u` expressed through the disjoint masses
/// `pre = P(θ1 > n, u)`, `between = P(θ1 <= n < θ2, u)`, `post = P(θ2 <= n, u)`
/// and `simultaneous = P(θ1 = θ2 > n, u)`.
#[allow(clippy::too_many_arguments)]
#[inline]
pub(crate) fn regime_weight_from_parts(
    spec: &ModelSpec,
    x: usize,
    y: usize,
    u: usize,
    pre: f64,
    between: f64,
    post: f64,
    simultaneous: f64,
) -> f64 {
    let (p1, q1, p2, q2) = (spec.p1, spec.q1, spec.p2, spec.q2);
    let alpha = between + post;
    pre * p1 * spec.f_pre(x, y)
        + (p2 * between + q1 * (pre - simultaneous)) * spec.f_mid(u, x, y)
        + (q2 * alpha + p2 * post + q1 * simultaneous) * spec.f_post(x, y)
}

/// One-step predictive density `H(x, y, belief) = Σ_u H^u`.
pub fn transition_weight(spec: &ModelSpec, x: usize, y: usize, belief: &BeliefVector) -> f64 {
    (0..spec.regime_count)
        .map(|u| regime_transition_weight(spec, x, y, belief, u))
        .sum()
}

/// The aggregate form of `H`, with the pre-change coefficient written as
/// `(1 − Σ_u Π^{1,u}) p1`. Agrees with [`transition_weight`] whenever the
/// regime posteriors sum to one; kept as a cross-check.
pub fn transition_weight_aggregate(spec: &ModelSpec, x: usize, y: usize, belief: &BeliefVector) -> f64 {
    let alpha = belief.total_pi1();
    let beta = belief.total_pi2();
    let gamma = belief.total_pi12();
    let mid: f64 = (0..spec.regime_count)
        .map(|u| {
            let coef = spec.p2 * (belief.pi1[u] - belief.pi2[u])
                + spec.q1 * (belief.upsilon[u] - belief.pi1[u] - belief.pi12[u]);
            coef * spec.f_mid(u, x, y)
        })
        .sum();
    (1.0 - alpha) * spec.p1 * spec.f_pre(x, y)
        + (spec.q2 * alpha + spec.p2 * beta + spec.q1 * gamma) * spec.f_post(x, y)
        + mid
}
