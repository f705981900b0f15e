//! Recursive a-posteriori filter for the change points and the middle regime.
//!
//! Each step multiplies the disjoint configuration masses by the kernel that
//! would generate the new observation under that configuration, then divides
//! by their sum `H`. The pair posteriors `Π^u_{m,n}` split the mass of
//! `{θ1 <= n < θ2}` by the exact onset time `m`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::likelihood::BeliefVector;
use crate::model::ModelSpec;

/// Pair posteriors whose total mass drops below this are discarded.
pub const DEFAULT_PRUNE_BELOW: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub time: usize,
    pub prev_obs: usize,
    pub cur_obs: usize,
    pub belief: BeliefVector,
    /// `Π^u_{m,n} = P(θ1 = m, θ2 > n, ε1 = u | F_n)` keyed by `m`.
    pub pair_beliefs: BTreeMap<usize, Vec<f64>>,
    /// `P(θ1 > n, ε1 = u | F_n)`, propagated directly rather than as
    /// `upsilon - pi1` to avoid cancellation.
    pre_change: Vec<f64>,
    prune_below: f64,
    pinned: Option<usize>,
}

/// One-step-ahead event probabilities given `F_n`, per regime.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictedEvents {
    /// `P(θ1 = θ2 > n+1, ε1 = u | F_n)`
    pub simultaneous_later: Vec<f64>,
    /// `P(n+1 < θ1 < θ2, ε1 = u | F_n)`
    pub both_later: Vec<f64>,
    /// `P(θ1 <= n+1, ε1 = u | F_n)`
    pub first_by_next: Vec<f64>,
    /// `P(θ1 <= n+1 < θ2, ε1 = u | F_n)`
    pub between_at_next: Vec<f64>,
    /// `P(θ2 <= n+1, ε1 = u | F_n)`
    pub second_by_next: Vec<f64>,
}

pub fn init_filter(spec: &ModelSpec) -> FilterState {
    init_filter_with(spec, DEFAULT_PRUNE_BELOW)
}

/// Prior beliefs at `n = 0`. A pruning threshold of `0.0` keeps every pair
/// posterior.
pub fn init_filter_with(spec: &ModelSpec, prune_below: f64) -> FilterState {
    let r = &spec.regime_prior;
    let (pi, rho) = (spec.pi, spec.rho);
    let belief = BeliefVector {
        pi1: r.iter().map(|ru| pi * ru).collect(),
        pi2: r.iter().map(|ru| pi * ru * rho).collect(),
        pi12: r.iter().map(|ru| (1.0 - pi) * rho * ru).collect(),
        upsilon: r.clone(),
    };
    let mut pair_beliefs = BTreeMap::new();
    let spawn: Vec<f64> = r.iter().map(|ru| pi * (1.0 - rho) * ru).collect();
    if keep(&spawn, prune_below) {
        pair_beliefs.insert(0, spawn);
    }
    FilterState {
        time: 0,
        prev_obs: spec.initial_state,
        cur_obs: spec.initial_state,
        belief,
        pair_beliefs,
        pre_change: r.iter().map(|ru| (1.0 - pi) * ru).collect(),
        prune_below,
        pinned: None,
    }
}

fn keep(v: &[f64], prune_below: f64) -> bool {
    let mass: f64 = v.iter().sum();
    mass > 0.0 && mass >= prune_below
}

pub fn step_filter(spec: &ModelSpec, state: &FilterState, y: usize) -> Result<FilterState> {
    state.step(spec, y)
}

impl FilterState {
    /// `P(θ1 > n, ε1 = u | F_n)` per regime.
    pub fn pre_change(&self) -> &[f64] {
        &self.pre_change
    }

    pub fn pair_mass(&self, m: usize) -> f64 {
        self.pair_beliefs.get(&m).map_or(0.0, |v| v.iter().sum())
    }

    pub fn total_pair_mass(&self) -> f64 {
        // an empty float sum is -0.0; keep traces free of negative zeros
        0.0 + self.pair_beliefs.values().flatten().sum::<f64>()
    }

    /// Exempts the pair posterior spawned at `m` from pruning.
    pub fn pin_pair(&mut self, m: usize) {
        self.pinned = Some(m);
    }

    pub fn step(&self, spec: &ModelSpec, y: usize) -> Result<FilterState> {
        let x = self.cur_obs;
        let k = spec.regime_count;
        let (p1, q1, p2, q2) = (spec.p1, spec.q1, spec.p2, spec.q2);
        let (f0, f2) = (spec.f_pre(x, y), spec.f_post(x, y));
        let b = &self.belief;

        let mut pre = vec![0.0; k];
        let mut between = vec![0.0; k];
        let mut post = vec![0.0; k];
        let mut sim = vec![0.0; k];
        let mut spawn = vec![0.0; k];
        for u in 0..k {
            let f1 = spec.f_mid(u, x, y);
            let fresh = self.pre_change[u] - b.pi12[u];
            let old_between = b.pi1[u] - b.pi2[u];
            pre[u] = p1 * self.pre_change[u] * f0;
            sim[u] = p1 * b.pi12[u] * f0;
            spawn[u] = q1 * fresh * f1;
            between[u] = spawn[u] + p2 * old_between * f1;
            post[u] = (q2 * old_between + b.pi2[u] + q1 * b.pi12[u]) * f2;
        }
        let regime_h: Vec<f64> = (0..k).map(|u| pre[u] + between[u] + post[u]).collect();
        let h: f64 = regime_h.iter().sum();
        if h.is_nan() || h <= 0.0 || h.is_infinite() {
            return Err(Error::ZeroLikelihood {
                from: x,
                to: y,
                time: self.time + 1,
            });
        }

        let scale = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|a| a / h).collect() };
        let belief = BeliefVector {
            pi1: (0..k).map(|u| (between[u] + post[u]) / h).collect(),
            pi2: scale(post),
            pi12: scale(sim),
            upsilon: scale(regime_h),
        };

        let mut pair_beliefs = BTreeMap::new();
        for (&m, v) in &self.pair_beliefs {
            let next: Vec<f64> = (0..k).map(|u| p2 * v[u] * spec.f_mid(u, x, y) / h).collect();
            if self.pinned == Some(m) || keep(&next, self.prune_below) {
                pair_beliefs.insert(m, next);
            }
        }
        let spawn = scale(spawn);
        let n1 = self.time + 1;
        if self.pinned == Some(n1) || keep(&spawn, self.prune_below) {
            pair_beliefs.insert(n1, spawn);
        }

        Ok(FilterState {
            time: n1,
            prev_obs: x,
            cur_obs: y,
            belief,
            pair_beliefs,
            pre_change: scale(pre),
            prune_below: self.prune_below,
            pinned: self.pinned,
        })
    }
}

/// Filters a whole path `x_0..x_n`; `path[0]` must be the model's initial state.
pub fn filter_path(spec: &ModelSpec, path: &[usize], prune_below: f64) -> Result<Vec<FilterState>> {
    check_start(spec, path)?;
    let mut states = Vec::with_capacity(path.len());
    states.push(init_filter_with(spec, prune_below));
    for &y in &path[1..] {
        let next = states.last().expect("non-empty").step(spec, y)?;
        states.push(next);
    }
    Ok(states)
}

pub(crate) fn check_start(spec: &ModelSpec, path: &[usize]) -> Result<()> {
    match path.first() {
        Some(&x0) if x0 == spec.initial_state => {}
        Some(&x0) => {
            return Err(Error::Domain(format!(
                "path starts at {x0}, model initial state is {}",
                spec.initial_state
            )))
        }
        None => return Err(Error::Domain("empty path".into())),
    }
    if let Some(&bad) = path.iter().find(|&&x| x >= spec.alphabet_size) {
        return Err(Error::Domain(format!(
            "observation {bad} outside alphabet of size {}",
            spec.alphabet_size
        )));
    }
    Ok(())
}

pub fn predicted_event_probs(spec: &ModelSpec, state: &FilterState) -> PredictedEvents {
    let b = &state.belief;
    let k = spec.regime_count;
    let (p1, q1, p2, q2) = (spec.p1, spec.q1, spec.p2, spec.q2);
    let simultaneous_later: Vec<f64> = b.pi12.iter().map(|g| p1 * g).collect();
    let both_later = (0..k).map(|u| p1 * (b.upsilon[u] - b.pi1[u] - b.pi12[u])).collect();
    let between_at_next: Vec<f64> = (0..k)
        .map(|u| q1 * (b.upsilon[u] - b.pi1[u] - b.pi12[u]) + p2 * (b.pi1[u] - b.pi2[u]))
        .collect();
    let second_by_next: Vec<f64> = (0..k).map(|u| q2 * b.pi1[u] + p2 * b.pi2[u] + q1 * b.pi12[u]).collect();
    let first_by_next = (0..k).map(|u| between_at_next[u] + second_by_next[u]).collect();
    PredictedEvents {
        simultaneous_later,
        both_later,
        first_by_next,
        between_at_next,
        second_by_next,
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

/// Writes one CSV row per state: time, current observation, the per-regime
/// posteriors (space separated) and the total pair-posterior mass.
pub fn write_filter_trace<W: Write>(out: W, states: &[FilterState]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["n", "x", "pi1", "pi2", "pi12", "upsilon", "pair_mass"])?;
    for s in states {
        w.write_record([
            s.time.to_string(),
            s.cur_obs.to_string(),
            join(&s.belief.pi1),
            join(&s.belief.pi2),
            join(&s.belief.pi12),
            join(&s.belief.upsilon),
            s.total_pair_mass().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn boundary_values() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 0.2;
        spec.rho = 0.5;
        let s = init_filter(&spec);
        assert!(close(s.belief.pi1[0], 0.2, 1e-15));
        assert!(close(s.belief.pi2[0], 0.1, 1e-15));
        assert!(close(s.belief.pi12[0], 0.4, 1e-15));
        assert!(close(s.pair_mass(0), 0.1, 1e-15));

        spec.pi = 0.0;
        let s = init_filter(&spec);
        assert_eq!(s.belief.pi1, vec![0.0]);
        assert_eq!(s.belief.pi2, vec![0.0]);
        assert_eq!(s.belief.upsilon, spec.regime_prior);
        assert!(s.pair_beliefs.is_empty());

        spec.pi = 1.0;
        let s = init_filter(&spec);
        assert_eq!(s.belief.pi1, spec.regime_prior);
    }

    #[test]
    fn uninformative_data_follows_prior() {
        let mut spec = ModelSpec::tiny();
        spec.kernel_mid[0] = spec.kernel_pre.clone();
        spec.kernel_post = spec.kernel_pre.clone();
        spec.pi = 0.1;
        let mut s = init_filter(&spec);
        for (n, &y) in [1usize, 1, 0, 1, 0].iter().enumerate() {
            let before = s.pre_change()[0];
            s = s.step(&spec, y).unwrap();
            assert!(close(s.pre_change()[0], before * spec.p1, 1e-15), "step {n}");
        }
    }

    #[test]
    fn post_change_certainty_is_absorbing() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 1.0;
        spec.rho = 1.0;
        let mut s = init_filter(&spec);
        for &y in &[1usize, 0, 0, 1] {
            let next = s.step(&spec, y).unwrap();
            assert_eq!(next.belief, s.belief);
            s = next;
        }
    }

    #[test]
    fn zero_likelihood_reports_transition() {
        let mut spec = ModelSpec::tiny();
        spec.kernel_pre[0] = vec![1.0, 0.0];
        spec.kernel_mid[0][0] = vec![1.0, 0.0];
        spec.kernel_post[0] = vec![1.0, 0.0];
        let s = init_filter(&spec);
        match s.step(&spec, 1) {
            Err(Error::ZeroLikelihood {
                from: 0,
                to: 1,
                time: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn predicted_items() {
        let mut spec = ModelSpec::tiny();
        spec.p1 = 0.8;
        let mut s = init_filter(&spec);
        s.belief.pi12 = vec![0.5];
        let ev = predicted_event_probs(&spec, &s);
        assert!(close(ev.simultaneous_later[0], 0.4, 1e-15));
        let s = filter_path(&spec, &[0, 1, 1, 0], 0.0).unwrap().pop().unwrap();
        let ev = predicted_event_probs(&spec, &s);
        assert!(close(
            ev.first_by_next[0],
            ev.between_at_next[0] + ev.second_by_next[0],
            1e-15
        ));
    }

    #[test]
    fn spawn_matches_onset_boundary_form() {
        // Π^u_{m,m} = (1-ρ) q1 f¹/(p1 f⁰) (Υ^u_m − Π^{1,u}_m), both at time m
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(11);
        let spec = ModelSpec::random(&mut rng, 3, 2);
        let path = [spec.initial_state, 2, 0, 1, 1];
        let states = filter_path(&spec, &path, 0.0).unwrap();
        for m in 1..path.len() {
            let s = &states[m];
            let (x, y) = (path[m - 1], path[m]);
            for u in 0..2 {
                let boundary = (1.0 - spec.rho) * spec.q1 * spec.f_mid(u, x, y) / (spec.p1 * spec.f_pre(x, y))
                    * (s.belief.upsilon[u] - s.belief.pi1[u]);
                assert!(close(s.pair_beliefs[&m][u], boundary, 1e-12));
            }
        }
    }

    #[test]
    fn trace_has_header_and_rows() {
        let spec = ModelSpec::tiny();
        let states = filter_path(&spec, &[0, 1, 1], DEFAULT_PRUNE_BELOW).unwrap();
        let mut buf = Vec::new();
        write_filter_trace(&mut buf, &states).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "n,x,pi1,pi2,pi12,upsilon,pair_mass");
        assert!(lines[3].starts_with("2,1,"));
    }
}
