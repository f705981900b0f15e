//! Optimal double stopping.
//!
//! The second stop is an inner problem started at the first stop `m`: with
//! `w` the normalized pair posterior, stopping at `n` pays
//! `(q2/p2) |Π_{m,n}| ⟨w, f²/f¹⟩` and the optimal value has the form
//! `(q2/p2) |Π_{m,n}| r*(X_{n-1}, X_n, w)`, where `r*` solves
//!
//! ```text
//! r*(t, u, w) = max{ ⟨w, f²_t(u)/f¹_t(u)⟩, p2 Σ_s ⟨w, f¹_u(s)⟩ r*(u, s, w'_s) }
//! ```
//!
//! with `w'_s` the Bayes update of `w` by `f¹_u(s)`. The continuation part is
//! tabulated as `R*(u, w)`. The direction `w` lives on the regime simplex and
//! is gridded when there is more than one regime.
//!
//! Making the first stop at `n` is worth `|P(θ1 > n | F_n)| g(X_{n-1}, X_n)`:
//! the pre-change direction never leaves the regime prior, so the first-stop
//! problem reduces to an exact value iteration over `E × E`.

pub mod simplex;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterState;
use crate::model::ModelSpec;
pub use simplex::SimplexGrid;

pub const POLICY_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_GRID_RESOLUTION: usize = 20;
pub const DEFAULT_TOL: f64 = 1e-9;
const SWEEP_MARGIN: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Subdivisions per simplex edge; ignored for a single regime.
    pub grid_resolution: usize,
    pub tol: f64,
    /// Overrides the sweep budget derived from the contraction factor.
    pub max_sweeps: Option<usize>,
    /// Also solve the problem that must stop by this time.
    pub horizon: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grid_resolution: DEFAULT_GRID_RESOLUTION,
            tol: DEFAULT_TOL,
            max_sweeps: None,
            horizon: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    /// Sup-norm change of `r*` per sweep.
    pub second_stop: Vec<f64>,
    /// Sup-norm change of the first-stop value per sweep.
    pub first_stop: Vec<f64>,
}

/// Solved tables. Flattened row-major: `r_star[(t * E + u) * G + i]`,
/// `R_star[t * G + i]`, `first_payoff[t * E + u]`, with `G` grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingPolicy {
    pub format_version: u32,
    pub model_digest: String,
    pub alphabet_size: usize,
    pub regime_count: usize,
    pub grid: SimplexGrid,
    pub interpolation: String,
    pub tol: f64,
    pub max_sweeps: usize,
    pub r_star: Vec<f64>,
    #[serde(rename = "R_star")]
    pub second_threshold: Vec<f64>,
    #[serde(rename = "R_rho_star")]
    pub spawn_threshold: Vec<f64>,
    /// First-stop payoff per unit of pre-change mass, `g(t, u)`.
    pub first_payoff: Vec<f64>,
    pub v_star: Vec<f64>,
    /// `p1 Σ_s f⁰_u(s) v*(u, s)`, the first-stop continuation per unit of
    /// pre-change mass after observing `u`.
    pub first_continuation: Vec<f64>,
    pub iteration_log: IterationLog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite_horizon: Option<FiniteHorizon>,
}

/// Tables of the problem truncated at `horizon`, indexed by the number of
/// steps left `k = horizon - n`. Stage 0 forces a stop: its continuations
/// are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteHorizon {
    pub horizon: usize,
    #[serde(rename = "R_star")]
    pub second_threshold: Vec<Vec<f64>>,
    pub first_payoff: Vec<Vec<f64>>,
    pub first_continuation: Vec<Vec<f64>>,
}

/// Outcome of a stop rule at one time step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub stop: bool,
    pub statistic: f64,
    pub threshold: f64,
}

fn check_solvable(spec: &ModelSpec) -> Result<()> {
    for (name, p) in [("p1", spec.p1), ("p2", spec.p2)] {
        if p >= 1.0 {
            return Err(Error::NoContraction {
                parameter: name,
                value: p,
            });
        }
        if p <= 0.0 {
            return Err(Error::Domain(format!("solver needs {name} > 0, got {p}")));
        }
    }
    Ok(())
}

fn sweep_budget(cfg: &SolverConfig, factor: f64, scale: f64) -> usize {
    if let Some(n) = cfg.max_sweeps {
        return n;
    }
    let target = cfg.tol / scale.max(1.0);
    let sweeps = (target.ln() / factor.ln()).ceil();
    sweeps.max(0.0) as usize + SWEEP_MARGIN
}

/// `⟨w, f²_t(u)/f¹_t(u)⟩`; regimes whose kernel forbids the move contribute 0.
pub fn likelihood_ratio(spec: &ModelSpec, t: usize, u: usize, w: &[f64]) -> f64 {
    let f2 = spec.f_post(t, u);
    w.iter()
        .enumerate()
        .map(|(k, wk)| {
            let f1 = spec.f_mid(k, t, u);
            if f1 > 0.0 {
                wk * f2 / f1
            } else {
                0.0
            }
        })
        .sum()
}

/// Bayes update of a regime direction by the move `t -> u`. Returns the
/// normalizer `⟨w, f¹_t(u)⟩` and the updated direction.
fn update_direction(spec: &ModelSpec, t: usize, u: usize, w: &[f64]) -> (f64, Vec<f64>) {
    let mut out: Vec<f64> = w.iter().enumerate().map(|(k, wk)| wk * spec.f_mid(k, t, u)).collect();
    let c: f64 = out.iter().sum();
    if c > 0.0 {
        out.iter_mut().for_each(|v| *v /= c);
    }
    (c, out)
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let mass: f64 = v.iter().sum();
    (mass > 0.0).then(|| v.iter().map(|a| a / mass).collect())
}

/// Per grid node: `(s, ⟨w, f¹_u(s)⟩, interpolation of the updated direction)`
/// for every next symbol `s` with positive weight.
type Successors = Vec<(usize, f64, Vec<(usize, f64)>)>;

/// The second-stop Bellman operator on a fixed grid.
struct SecondStopOperator<'a> {
    spec: &'a ModelSpec,
    e: usize,
    g: usize,
    /// `⟨w, f²_t(u)/f¹_t(u)⟩` at `[(t * e + u) * g + i]`.
    payoff: Vec<f64>,
    /// Indexed by `u * g + i`.
    successors: Vec<Successors>,
}

impl<'a> SecondStopOperator<'a> {
    fn new(spec: &'a ModelSpec, grid: &SimplexGrid) -> Self {
        let e = spec.alphabet_size;
        let g = grid.len();
        let points: Vec<Vec<f64>> = (0..g).map(|i| grid.point(i)).collect();
        let mut payoff = vec![0.0; e * e * g];
        for t in 0..e {
            for u in 0..e {
                for (i, w) in points.iter().enumerate() {
                    payoff[(t * e + u) * g + i] = likelihood_ratio(spec, t, u, w);
                }
            }
        }
        let successors = (0..e)
            .flat_map(|u| points.iter().map(move |w| (u, w)))
            .map(|(u, w)| {
                (0..e)
                    .filter_map(|s| {
                        let (c, next) = update_direction(spec, u, s, w);
                        (c > 0.0).then(|| (s, c, grid.interpolate(&next)))
                    })
                    .collect()
            })
            .collect();
        SecondStopOperator {
            spec,
            e,
            g,
            payoff,
            successors,
        }
    }

    /// `p2 Σ_s ⟨w, f¹_u(s)⟩ r(u, s, w'_s)` at `[u * g + i]`.
    fn continuation(&self, r: &[f64]) -> Vec<f64> {
        let (e, g) = (self.e, self.g);
        self.successors
            .iter()
            .enumerate()
            .map(|(slot, succ)| {
                let u = slot / g;
                self.spec.p2
                    * succ
                        .iter()
                        .map(|(s, c, interp)| {
                            let base = (u * e + s) * g;
                            c * interp.iter().map(|&(j, wt)| wt * r[base + j]).sum::<f64>()
                        })
                        .sum::<f64>()
            })
            .collect()
    }

    /// `max{payoff, continuation}`; returns the sup-norm change.
    fn apply(&self, r: &mut [f64], cont: &[f64]) -> f64 {
        let (e, g) = (self.e, self.g);
        let mut delta: f64 = 0.0;
        for (idx, slot) in r.iter_mut().enumerate() {
            let u = (idx / g) % e;
            let next = self.payoff[idx].max(cont[u * g + idx % g]);
            delta = delta.max((next - *slot).abs());
            *slot = next;
        }
        delta
    }
}

struct SecondStopTables {
    r_star: Vec<f64>,
    threshold: Vec<f64>,
    deltas: Vec<f64>,
}

/// Value iteration for `r*` started from the payoff, until the sup-norm
/// change drops to `cfg.tol`.
fn iterate_second_stop(op: &SecondStopOperator, cfg: &SolverConfig) -> Result<SecondStopTables> {
    let scale = op.payoff.iter().copied().fold(0.0, f64::max);
    let budget = sweep_budget(cfg, op.spec.p2, scale);
    let mut r = op.payoff.clone();
    let mut deltas = Vec::new();
    loop {
        let cont = op.continuation(&r);
        let delta = op.apply(&mut r, &cont);
        deltas.push(delta);
        if delta <= cfg.tol {
            break;
        }
        if deltas.len() >= budget {
            return Err(Error::NonConvergence {
                sweeps: deltas.len(),
                last_delta: delta,
            });
        }
    }
    let threshold = op.continuation(&r);
    Ok(SecondStopTables {
        r_star: r,
        threshold,
        deltas,
    })
}

/// Solves the second-stop problem alone and returns `(r*, R*)` as flattened
/// tables together with the per-sweep deltas.
pub fn solve_second_stop(
    spec: &ModelSpec,
    grid: &SimplexGrid,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    check_solvable(spec)?;
    let t = iterate_second_stop(&SecondStopOperator::new(spec, grid), cfg)?;
    Ok((t.r_star, t.threshold, t.deltas))
}

/// Solves both stopping problems. With `cfg.horizon` set, the policy also
/// carries the truncated-horizon tables and its rules become time-dependent.
pub fn solve(spec: &ModelSpec, cfg: &SolverConfig) -> Result<StoppingPolicy> {
    spec.validate()?;
    check_solvable(spec)?;
    let grid = SimplexGrid::new(spec.regime_count, cfg.grid_resolution);
    let op = SecondStopOperator::new(spec, &grid);
    let second = iterate_second_stop(&op, cfg)?;
    let e = spec.alphabet_size;
    let g = grid.len();
    let mut policy = StoppingPolicy {
        format_version: POLICY_FORMAT_VERSION,
        model_digest: spec.digest(),
        alphabet_size: e,
        regime_count: spec.regime_count,
        interpolation: "freudenthal".to_string(),
        tol: cfg.tol,
        max_sweeps: 0,
        r_star: second.r_star,
        second_threshold: second.threshold,
        spawn_threshold: Vec::new(),
        first_payoff: Vec::new(),
        v_star: Vec::new(),
        first_continuation: Vec::new(),
        iteration_log: IterationLog {
            second_stop: second.deltas,
            first_stop: Vec::new(),
        },
        finite_horizon: None,
        grid,
    };

    let mut spawn = vec![0.0; e * e * g];
    for t in 0..e {
        for u in 0..e {
            for i in 0..g {
                let w = policy.grid.point(i);
                spawn[(t * e + u) * g + i] = policy.spawn_value(spec, &policy.second_threshold, t, u, &w);
            }
        }
    }
    policy.spawn_threshold = spawn;
    solve_first_stop(spec, &mut policy, cfg)?;
    if let Some(horizon) = cfg.horizon {
        policy.finite_horizon = Some(solve_finite_horizon(spec, &policy, &op, horizon));
    }
    Ok(policy)
}

/// First-stop payoff per unit of pre-change mass for every move `t -> u`,
/// given the second-stop continuation table `threshold`.
fn first_payoff_table(spec: &ModelSpec, policy: &StoppingPolicy, threshold: &[f64]) -> Vec<f64> {
    let e = spec.alphabet_size;
    let mut payoff = vec![0.0; e * e];
    for t in 0..e {
        for u in 0..e {
            let f0 = spec.f_pre(t, u);
            let (c, w) = update_direction(spec, t, u, &spec.regime_prior);
            if f0 > 0.0 && c > 0.0 {
                payoff[t * e + u] = (spec.q1 / spec.p1) * (c / f0) * policy.spawn_value(spec, threshold, t, u, &w);
            }
        }
    }
    payoff
}

/// `p1 Σ_s f⁰_u(s) v(u, s)` for every `u`.
fn first_continuation_table(spec: &ModelSpec, v: &[f64]) -> Vec<f64> {
    let e = spec.alphabet_size;
    (0..e)
        .map(|u| spec.p1 * (0..e).map(|s| spec.f_pre(u, s) * v[u * e + s]).sum::<f64>())
        .collect()
}

/// Fills the first-stop tables of a policy whose second-stop tables are
/// already solved. Iterates from the payoff floor, so the iterates increase.
pub fn solve_first_stop(spec: &ModelSpec, policy: &mut StoppingPolicy, cfg: &SolverConfig) -> Result<()> {
    check_solvable(spec)?;
    let e = spec.alphabet_size;
    let payoff = first_payoff_table(spec, policy, &policy.second_threshold);

    let scale = payoff.iter().copied().fold(0.0, f64::max);
    let budget = sweep_budget(cfg, spec.p1, scale);
    policy.max_sweeps = budget.max(sweep_budget(cfg, spec.p2, 1.0));
    let mut v = payoff.clone();
    let mut deltas = Vec::new();
    loop {
        let cont = first_continuation_table(spec, &v);
        let mut delta: f64 = 0.0;
        for (idx, slot) in v.iter_mut().enumerate() {
            let next = payoff[idx].max(cont[idx % e]);
            delta = delta.max((next - *slot).abs());
            *slot = next;
        }
        deltas.push(delta);
        if delta <= cfg.tol {
            break;
        }
        if deltas.len() >= budget {
            return Err(Error::NonConvergence {
                sweeps: deltas.len(),
                last_delta: delta,
            });
        }
    }
    policy.first_continuation = first_continuation_table(spec, &v);
    policy.first_payoff = payoff;
    policy.v_star = v;
    policy.iteration_log.first_stop = deltas;
    Ok(())
}

/// Backward induction for a problem that must stop by `horizon`. Stage `k`
/// holds the tables for `k` steps left; both iterations start from the
/// payoff, so stage `k` is the `k`-th value iterate.
fn solve_finite_horizon(
    spec: &ModelSpec,
    policy: &StoppingPolicy,
    op: &SecondStopOperator,
    horizon: usize,
) -> FiniteHorizon {
    let e = spec.alphabet_size;
    let mut r = op.payoff.clone();
    let mut second_threshold = vec![vec![0.0; e * op.g]];
    let mut first_payoff = vec![first_payoff_table(spec, policy, &second_threshold[0])];
    let mut v = first_payoff[0].clone();
    let mut first_continuation = vec![vec![0.0; e]];
    for _ in 0..horizon {
        let cont = op.continuation(&r);
        op.apply(&mut r, &cont);
        let payoff = first_payoff_table(spec, policy, &cont);
        let first_cont = first_continuation_table(spec, &v);
        for (idx, slot) in v.iter_mut().enumerate() {
            *slot = payoff[idx].max(first_cont[idx % e]);
        }
        second_threshold.push(cont);
        first_payoff.push(payoff);
        first_continuation.push(first_cont);
    }
    FiniteHorizon {
        horizon,
        second_threshold,
        first_payoff,
        first_continuation,
    }
}

/// `P(θ1 = m, θ2 = n | F_n)` from a filter state at time `n`.
pub fn payoff_xi(spec: &ModelSpec, m: usize, n: usize, state: &FilterState) -> Result<f64> {
    if n != state.time {
        return Err(Error::Domain(format!(
            "filter state is at time {}, not {n}",
            state.time
        )));
    }
    if m > n {
        return Err(Error::Domain(format!("onset {m} after current time {n}")));
    }
    let (t, u) = (state.prev_obs, state.cur_obs);
    if m == n {
        if n == 0 {
            return Ok(spec.pi * spec.rho);
        }
        let f0 = spec.f_pre(t, u);
        if f0 <= 0.0 {
            return Ok(0.0);
        }
        let pre: f64 = state.pre_change().iter().sum();
        return Ok(spec.rho * (spec.q1 / spec.p1) * (spec.f_post(t, u) / f0) * pre);
    }
    let pair = state
        .pair_beliefs
        .get(&m)
        .ok_or_else(|| Error::Domain(format!("no pair posterior for onset {m} at time {n}")))?;
    Ok((spec.q2 / spec.p2) * likelihood_ratio(spec, t, u, pair))
}

impl StoppingPolicy {
    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("policy serializes");
        out.push('\n');
        out
    }

    pub fn from_json_str(text: &str) -> serde_json::Result<Self> {
        let mut policy: StoppingPolicy = serde_json::from_str(text)?;
        policy.grid = policy.grid.rebuilt();
        Ok(policy)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let policy = Self::from_json_str(&text).map_err(|e| Error::parse(path, e))?;
        policy.check_shape().map_err(|m| Error::parse(path, m))?;
        Ok(policy)
    }

    fn check_shape(&self) -> std::result::Result<(), String> {
        if self.format_version != POLICY_FORMAT_VERSION {
            return Err(format!("unsupported policy format_version {}", self.format_version));
        }
        if self.grid.dim != self.regime_count {
            return Err("grid dimension differs from regime_count".into());
        }
        let (e, g) = (self.alphabet_size, self.grid.len());
        let mut checks = vec![
            ("r_star", self.r_star.len(), e * e * g),
            ("R_star", self.second_threshold.len(), e * g),
            ("R_rho_star", self.spawn_threshold.len(), e * e * g),
            ("first_payoff", self.first_payoff.len(), e * e),
            ("v_star", self.v_star.len(), e * e),
            ("first_continuation", self.first_continuation.len(), e),
        ];
        if let Some(fh) = &self.finite_horizon {
            let stages = fh.horizon + 1;
            checks.push(("finite_horizon.R_star", fh.second_threshold.len(), stages));
            checks.push(("finite_horizon.first_payoff", fh.first_payoff.len(), stages));
            checks.push(("finite_horizon.first_continuation", fh.first_continuation.len(), stages));
            for k in 0..stages.min(fh.second_threshold.len()) {
                checks.push(("finite_horizon.R_star stage", fh.second_threshold[k].len(), e * g));
            }
            for k in 0..stages.min(fh.first_payoff.len()) {
                checks.push(("finite_horizon.first_payoff stage", fh.first_payoff[k].len(), e * e));
            }
            for k in 0..stages.min(fh.first_continuation.len()) {
                checks.push((
                    "finite_horizon.first_continuation stage",
                    fh.first_continuation[k].len(),
                    e,
                ));
            }
        }
        for (name, len, want) in checks {
            if len != want {
                return Err(format!("{name} has {len} entries, expected {want}"));
            }
        }
        Ok(())
    }

    /// Fails unless the policy was solved for exactly this model.
    pub fn check_model(&self, spec: &ModelSpec) -> Result<()> {
        let digest = spec.digest();
        if digest != self.model_digest {
            return Err(Error::PolicyMismatch(format!(
                "policy solved for model {}, got {digest}",
                self.model_digest
            )));
        }
        Ok(())
    }

    /// Steps left at time `n` for a truncated-horizon policy.
    fn stage(&self, n: usize) -> Option<(usize, &FiniteHorizon)> {
        self.finite_horizon
            .as_ref()
            .map(|fh| (fh.horizon.saturating_sub(n), fh))
    }

    fn threshold_table(&self, n: usize) -> &[f64] {
        match self.stage(n) {
            Some((k, fh)) => &fh.second_threshold[k],
            None => &self.second_threshold,
        }
    }

    fn first_tables(&self, n: usize) -> (&[f64], &[f64]) {
        match self.stage(n) {
            Some((k, fh)) => (&fh.first_payoff[k], &fh.first_continuation[k]),
            None => (&self.first_payoff, &self.first_continuation),
        }
    }

    fn eval_threshold(&self, table: &[f64], t: usize, w: &[f64]) -> f64 {
        let g = self.grid.len();
        self.grid.eval(&table[t * g..(t + 1) * g], w)
    }

    /// `r*(t, u, w)` interpolated on the grid.
    pub fn r_star_at(&self, t: usize, u: usize, w: &[f64]) -> f64 {
        let g = self.grid.len();
        let base = (t * self.alphabet_size + u) * g;
        self.grid.eval(&self.r_star[base..base + g], w)
    }

    /// `R*(t, w)`: continuation of the second-stop problem after observing `t`.
    pub fn threshold_at(&self, t: usize, w: &[f64]) -> f64 {
        self.eval_threshold(&self.second_threshold, t, w)
    }

    /// `R*_ρ(t, u, w) = max{ρ⟨w, f²/f¹⟩, (q2/p2)(1-ρ)R(u, w)}` for a given
    /// continuation table `R`: the value per unit of fresh onset mass of
    /// starting the second-stop problem at `u`.
    fn spawn_value(&self, spec: &ModelSpec, threshold: &[f64], t: usize, u: usize, w: &[f64]) -> f64 {
        let stop = spec.rho * likelihood_ratio(spec, t, u, w);
        let wait = (spec.q2 / spec.p2) * (1.0 - spec.rho) * self.eval_threshold(threshold, u, w);
        stop.max(wait)
    }

    /// `R*_ρ(t, u, w)` from the stationary tables.
    pub fn spawn_threshold_at(&self, spec: &ModelSpec, t: usize, u: usize, w: &[f64]) -> f64 {
        self.spawn_value(spec, &self.second_threshold, t, u, w)
    }

    pub fn first_payoff_at(&self, t: usize, u: usize) -> f64 {
        self.first_payoff[t * self.alphabet_size + u]
    }

    pub fn v_star_at(&self, t: usize, u: usize) -> f64 {
        self.v_star[t * self.alphabet_size + u]
    }

    /// Whether the stationary first-stop state after the move `t -> u` lies
    /// in the stopping set: the payoff is at least the continuation.
    pub fn in_b_star(&self, t: usize, u: usize) -> bool {
        self.first_payoff_at(t, u) >= self.first_continuation[u]
    }

    /// First-stop decision at a time `n >= 1`, both sides per unit of
    /// pre-change mass.
    pub fn first_stop_rule(&self, state: &FilterState) -> Decision {
        let (t, u) = (state.prev_obs, state.cur_obs);
        let (payoff, cont) = self.first_tables(state.time);
        let statistic = payoff[t * self.alphabet_size + u];
        let threshold = cont[u];
        Decision {
            stop: statistic >= threshold,
            statistic,
            threshold,
        }
    }

    /// First-stop decision at time 0, in absolute probability units. A zero
    /// payoff never triggers a stop here.
    pub fn first_stop_at_origin(&self, spec: &ModelSpec) -> Decision {
        let spawn = self.spawn_at_origin(spec);
        let statistic = spec.pi * spawn.statistic.max(spawn.threshold);
        let (_, cont) = self.first_tables(0);
        let threshold = (1.0 - spec.pi) * cont[spec.initial_state];
        Decision {
            stop: statistic > 0.0 && statistic >= threshold,
            statistic,
            threshold,
        }
    }

    /// Second-stop decision right after a first stop at time 0, per unit of
    /// `P(θ1 = 0) = π`.
    fn spawn_at_origin(&self, spec: &ModelSpec) -> Decision {
        let statistic = spec.rho;
        let threshold = (spec.q2 / spec.p2)
            * (1.0 - spec.rho)
            * self.eval_threshold(self.threshold_table(0), spec.initial_state, &spec.regime_prior);
        Decision {
            stop: statistic >= threshold,
            statistic,
            threshold,
        }
    }

    /// Second-stop decision at time `state.time` for a first stop made at `m`.
    ///
    /// For `m < n` this compares `⟨w, f²/f¹⟩` with `R*(X_n, w)`, `w` the
    /// normalized pair posterior; a missing or empty pair posterior gives
    /// "continue" with a NaN statistic. For `m = n` both sides are per unit
    /// of fresh onset mass.
    pub fn second_stop_rule(&self, spec: &ModelSpec, state: &FilterState, m: usize) -> Decision {
        let n = state.time;
        let (t, u) = (state.prev_obs, state.cur_obs);
        let table = self.threshold_table(n);
        if m == n {
            if n == 0 {
                return self.spawn_at_origin(spec);
            }
            let (_, w) = update_direction(spec, t, u, &spec.regime_prior);
            let statistic = spec.rho * likelihood_ratio(spec, t, u, &w);
            let threshold = (spec.q2 / spec.p2) * (1.0 - spec.rho) * self.eval_threshold(table, u, &w);
            return Decision {
                stop: statistic >= threshold,
                statistic,
                threshold,
            };
        }
        let Some(w) = state.pair_beliefs.get(&m).and_then(|v| normalized(v)) else {
            return Decision {
                stop: false,
                statistic: f64::NAN,
                threshold: f64::NAN,
            };
        };
        let statistic = likelihood_ratio(spec, t, u, &w);
        let threshold = self.eval_threshold(table, u, &w);
        Decision {
            stop: statistic >= threshold,
            statistic,
            threshold,
        }
    }

    /// Whether stopping twice at time 0 is optimal: `πρ` is positive and
    /// beats both waiting for the second stop and waiting for the first.
    pub fn immediate_stop_test(&self, spec: &ModelSpec) -> bool {
        let both = spec.pi * spec.rho;
        let wait_second = spec.pi * self.spawn_at_origin(spec).threshold;
        let (_, cont) = self.first_tables(0);
        let wait_first = (1.0 - spec.pi) * cont[spec.initial_state];
        both > 0.0 && both >= wait_second && both >= wait_first
    }
}

pub fn immediate_stop_test(spec: &ModelSpec, policy: &StoppingPolicy) -> bool {
    policy.immediate_stop_test(spec)
}
