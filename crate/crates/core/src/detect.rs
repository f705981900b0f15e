//! Online application of a solved policy: the compound stop `(τ, σ)`.
//!
//! After the first stop at `τ` only the pair posterior spawned at `τ` drives
//! the second stop; it is pinned so pruning never drops it.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::filter::{check_start, init_filter, init_filter_with, FilterState};
use crate::model::ModelSpec;
use crate::oracle::{reachable_prefixes, DecisionTable};
use crate::solver::StoppingPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Continue,
    StopFirst,
    StopSecond,
    StopBoth,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Continue => "continue",
            Action::StopFirst => "stop_first",
            Action::StopSecond => "stop_second",
            Action::StopBoth => "stop_both",
        }
    }
}

/// One row of the decision trace. Statistics that were not evaluated at a
/// step are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub n: usize,
    pub statistic_1: Option<f64>,
    pub in_b_star: Option<bool>,
    pub statistic_2: Option<f64>,
    pub threshold_2: Option<f64>,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionResult {
    /// First stop; `None` if the horizon ran out first.
    pub tau: Option<usize>,
    /// Second stop, never before `tau`.
    pub sigma: Option<usize>,
    pub hit1: Option<bool>,
    pub hit2: Option<bool>,
    pub trace: Vec<TraceRow>,
}

impl DetectionResult {
    /// Scores against the true change points (`NEVER` for one that did not
    /// happen, which then can never be hit).
    pub fn score(&mut self, theta1: usize, theta2: usize) {
        self.hit1 = Some(self.tau == Some(theta1));
        self.hit2 = Some(self.sigma == Some(theta2));
    }

    pub fn hit(&self) -> bool {
        self.hit1 == Some(true) && self.hit2 == Some(true)
    }
}

/// Stateful detector fed one observation at a time.
#[derive(Clone, Debug)]
pub struct Detector<'a> {
    spec: &'a ModelSpec,
    policy: &'a StoppingPolicy,
    state: FilterState,
    tau: Option<usize>,
    sigma: Option<usize>,
    trace: Vec<TraceRow>,
}

impl<'a> Detector<'a> {
    /// Starts at `X_0` and applies the time-0 decisions.
    pub fn new(spec: &'a ModelSpec, policy: &'a StoppingPolicy) -> Self {
        let mut det = Detector {
            spec,
            policy,
            state: init_filter(spec),
            tau: None,
            sigma: None,
            trace: Vec::new(),
        };
        let origin = policy.first_stop_at_origin(spec);
        let mut row = TraceRow {
            n: 0,
            statistic_1: Some(origin.statistic),
            in_b_star: Some(origin.stop),
            statistic_2: None,
            threshold_2: None,
            action: Action::Continue,
        };
        if policy.immediate_stop_test(spec) {
            det.tau = Some(0);
            det.sigma = Some(0);
            row.action = Action::StopBoth;
        } else if origin.stop {
            det.begin_second(&mut row);
        }
        det.trace.push(row);
        det
    }

    fn begin_second(&mut self, row: &mut TraceRow) {
        let n = self.state.time;
        self.tau = Some(n);
        self.state.pin_pair(n);
        let d = self.policy.second_stop_rule(self.spec, &self.state, n);
        row.statistic_2 = Some(d.statistic);
        row.threshold_2 = Some(d.threshold);
        if d.stop {
            self.sigma = Some(n);
            row.action = Action::StopBoth;
        } else {
            row.action = Action::StopFirst;
        }
    }

    /// Feeds `X_{n+1}`. Does nothing once both stops are made.
    pub fn observe(&mut self, y: usize) -> Result<()> {
        if self.is_finished() {
            return Ok(());
        }
        self.state = self.state.step(self.spec, y)?;
        let n = self.state.time;
        let mut row = TraceRow {
            n,
            statistic_1: None,
            in_b_star: None,
            statistic_2: None,
            threshold_2: None,
            action: Action::Continue,
        };
        match self.tau {
            None => {
                let d = self.policy.first_stop_rule(&self.state);
                row.statistic_1 = Some(d.statistic);
                row.in_b_star = Some(d.stop);
                if d.stop {
                    self.begin_second(&mut row);
                }
            }
            Some(m) => {
                let d = self.policy.second_stop_rule(self.spec, &self.state, m);
                row.statistic_2 = Some(d.statistic);
                row.threshold_2 = Some(d.threshold);
                if d.stop {
                    self.sigma = Some(n);
                    row.action = Action::StopSecond;
                }
            }
        }
        self.trace.push(row);
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.sigma.is_some()
    }

    pub fn tau(&self) -> Option<usize> {
        self.tau
    }

    pub fn sigma(&self) -> Option<usize> {
        self.sigma
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn finish(self) -> DetectionResult {
        DetectionResult {
            tau: self.tau,
            sigma: self.sigma,
            hit1: None,
            hit2: None,
            trace: self.trace,
        }
    }
}

/// Runs the detector over `observations[0..=max_horizon]`; stops still open
/// at the horizon are reported as `None`.
pub fn run_detector(
    spec: &ModelSpec,
    policy: &StoppingPolicy,
    observations: &[usize],
    max_horizon: usize,
) -> Result<DetectionResult> {
    check_start(spec, observations)?;
    let mut det = Detector::new(spec, policy);
    for &y in observations.iter().skip(1).take(max_horizon) {
        if det.is_finished() {
            break;
        }
        det.observe(y)?;
    }
    Ok(det.finish())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

const TRACE_HEADER: [&str; 6] = ["n", "statistic_1", "in_B_star", "statistic_2", "threshold_2", "action"];

fn trace_fields(row: &TraceRow) -> [String; 6] {
    [
        row.n.to_string(),
        fmt_opt(row.statistic_1),
        row.in_b_star.map_or_else(String::new, |b| b.to_string()),
        fmt_opt(row.statistic_2),
        fmt_opt(row.threshold_2),
        row.action.as_str().to_string(),
    ]
}

fn trace_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// CSV columns `n,statistic_1,in_B_star,statistic_2,threshold_2,action`;
/// statistics not evaluated at a step are left empty.
pub fn write_decision_trace<W: Write>(out: W, trace: &[TraceRow]) -> csv::Result<()> {
    let mut w = trace_writer(out);
    w.write_record(TRACE_HEADER)?;
    for row in trace {
        w.write_record(trace_fields(row))?;
    }
    w.flush()?;
    Ok(())
}

/// Several traces in one CSV, keyed by a leading `seed` column.
pub fn write_decision_traces<W: Write>(out: W, traces: &[(u64, &[TraceRow])]) -> csv::Result<()> {
    let mut w = trace_writer(out);
    let mut header = vec!["seed"];
    header.extend(TRACE_HEADER);
    w.write_record(&header)?;
    for (seed, trace) in traces {
        for row in trace.iter() {
            let mut record = vec![seed.to_string()];
            record.extend(trace_fields(row));
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The policy's decisions on every reachable prefix up to `horizon`, in the
/// form the exact evaluator consumes.
pub fn tabulate_policy(spec: &ModelSpec, policy: &StoppingPolicy, horizon: usize) -> Result<DecisionTable> {
    let mut table = DecisionTable::default();
    let root = init_filter_with(spec, 0.0);

    let immediate = policy.immediate_stop_test(spec);
    let origin = vec![spec.initial_state];
    table
        .first
        .insert(origin.clone(), immediate || policy.first_stop_at_origin(spec).stop);
    table.second.insert(
        (0, origin.clone()),
        immediate || policy.second_stop_rule(spec, &root, 0).stop,
    );

    // shorter prefixes first, so every parent state is already cached
    let mut cache = HashMap::from([(origin, root)]);
    let mut prefixes = reachable_prefixes(spec, horizon);
    prefixes.sort_by_key(|p| p.len());
    for prefix in prefixes.into_iter().filter(|p| p.len() > 1) {
        let parent = &prefix[..prefix.len() - 1];
        let state = cache[parent].step(spec, *prefix.last().expect("non-empty"))?;
        let n = state.time;
        table.first.insert(prefix.clone(), policy.first_stop_rule(&state).stop);
        for m in 0..=n {
            table
                .second
                .insert((m, prefix.clone()), policy.second_stop_rule(spec, &state, m).stop);
        }
        cache.insert(prefix, state);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{brute_force_policy, evaluate_policy_exact, hit_probability};
    use crate::simulate::Simulator;
    use crate::solver::{solve, SolverConfig};

    fn all_paths(spec: &ModelSpec, len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![spec.initial_state]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..spec.alphabet_size).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn certain_onset_stops_twice_at_zero() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 1.0;
        spec.rho = 1.0;
        let policy = solve(&spec, &SolverConfig::default()).unwrap();
        let sim = Simulator::new(&spec);
        for seed in 0..20 {
            let t = sim.sample_seeded(10, seed);
            let mut res = run_detector(&spec, &policy, &t.observations, 10).unwrap();
            assert_eq!((res.tau, res.sigma), (Some(0), Some(0)));
            res.score(t.theta1, t.theta2);
            assert!(res.hit());
        }
    }

    #[test]
    fn unreachable_thresholds_never_stop() {
        let mut spec = ModelSpec::tiny();
        spec.kernel_mid[0] = spec.kernel_pre.clone();
        spec.kernel_post = spec.kernel_pre.clone();
        let mut policy = solve(&spec, &SolverConfig::default()).unwrap();
        let ceiling = policy.first_payoff.iter().copied().fold(0.0, f64::max);
        policy.first_continuation = vec![ceiling + 1.0; 2];
        let t = Simulator::new(&spec).sample_seeded(30, 3);
        let res = run_detector(&spec, &policy, &t.observations, 30).unwrap();
        assert_eq!((res.tau, res.sigma), (None, None));
        assert_eq!(res.trace.len(), 31);
    }

    #[test]
    fn tiny_seed_42_snapshot() {
        let spec = ModelSpec::tiny();
        let policy = solve(&spec, &SolverConfig::default()).unwrap();
        let t = Simulator::new(&spec).sample_seeded(50, 42);
        let res = run_detector(&spec, &policy, &t.observations, 50).unwrap();
        assert_eq!((res.tau, res.sigma), SNAPSHOT_42);
    }

    const SNAPSHOT_42: (Option<usize>, Option<usize>) = (Some(1), Some(5));

    #[test]
    fn stops_are_ordered_and_replayable() {
        let mut spec = ModelSpec::tiny();
        spec.pi = 0.2;
        spec.rho = 0.3;
        let policy = solve(&spec, &SolverConfig::default()).unwrap();
        let sim = Simulator::new(&spec);
        for seed in 0..200 {
            let t = sim.sample_seeded(60, seed);
            let a = run_detector(&spec, &policy, &t.observations, 60).unwrap();
            let b = run_detector(&spec, &policy, &t.observations, 60).unwrap();
            assert_eq!(a, b);
            if let (Some(tau), Some(sigma)) = (a.tau, a.sigma) {
                assert!(tau <= sigma);
            }
            assert!(a.sigma.is_none() || a.tau.is_some());
        }
    }

    #[test]
    fn path_weighted_detector_matches_exact_evaluation() {
        let mut specs = vec![ModelSpec::tiny()];
        let mut other = ModelSpec::tiny();
        other.pi = 0.15;
        other.rho = 0.25;
        other.regime_count = 2;
        other.kernel_mid.push(vec![vec![0.3, 0.7], vec![0.8, 0.2]]);
        other.regime_prior = vec![0.45, 0.55];
        specs.push(other);
        let horizon = 5;
        for spec in specs {
            for cfg_horizon in [None, Some(horizon)] {
                let cfg = SolverConfig {
                    horizon: cfg_horizon,
                    ..Default::default()
                };
                let policy = solve(&spec, &cfg).unwrap();
                let mut total = 0.0;
                for path in all_paths(&spec, horizon) {
                    let res = run_detector(&spec, &policy, &path, horizon).unwrap();
                    if let (Some(tau), Some(sigma)) = (res.tau, res.sigma) {
                        let tail: f64 = (sigma + 1..=horizon)
                            .map(|i| spec.f_post(path[i - 1], path[i]))
                            .product();
                        total += hit_probability(&spec, &path[..=sigma], tau) * tail;
                    }
                }
                let table = tabulate_policy(&spec, &policy, horizon).unwrap();
                let exact = evaluate_policy_exact(&spec, &table, horizon).unwrap();
                assert!((total - exact).abs() < 1e-10, "{total} vs {exact}");
            }
        }
    }

    #[test]
    fn truncated_policy_reaches_the_optimum_on_tiny() {
        let spec = ModelSpec::tiny();
        let cfg = SolverConfig {
            horizon: Some(5),
            ..Default::default()
        };
        let policy = solve(&spec, &cfg).unwrap();
        let table = tabulate_policy(&spec, &policy, 5).unwrap();
        let value = evaluate_policy_exact(&spec, &table, 5).unwrap();
        let best = brute_force_policy(&spec, 5).unwrap().value;
        assert!((value - best).abs() < 1e-12, "{value} vs {best}");
    }

    #[test]
    fn trace_csv_shape() {
        let spec = ModelSpec::tiny();
        let policy = solve(&spec, &SolverConfig::default()).unwrap();
        let res = run_detector(&spec, &policy, &[0, 1, 1, 0], 3).unwrap();
        let mut buf = Vec::new();
        write_decision_trace(&mut buf, &res.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("n,statistic_1,in_B_star,statistic_2,threshold_2,action")
        );
        assert_eq!(lines.count(), res.trace.len());
    }
}
