//! Command implementations behind the `ddetect` binary. Each returns the
//! bytes the command writes, so outputs can be compared and tested without
//! touching the filesystem.

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detect::{run_detector, tabulate_policy, write_decision_traces, DetectionResult};
use crate::error::{Error, Result};
use crate::filter::{filter_path, write_filter_trace, DEFAULT_PRUNE_BELOW};
use crate::model::ModelSpec;
use crate::oracle::{brute_force_policy, evaluate_policy_exact, oracle_report, MAX_POLICY_HORIZON};
use crate::simulate::{read_trajectories, sample_batch, Simulator, Trajectory, NEVER};
use crate::solver::{solve, SolverConfig, StoppingPolicy};
use crate::verify::verify_model;

/// Smallest run count `cmd_evaluate` accepts.
pub const MIN_RUNS: usize = 100;

const Z_95: f64 = 1.959963984540054;

/// Wilson score interval at 95% for `hits` successes out of `n`.
pub fn wilson_interval(hits: u64, n: u64) -> (f64, f64) {
    assert!(n > 0, "empty sample");
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // clamping only absorbs rounding; the exact interval always contains p
    let lo = (center - half).clamp(0.0, 1.0).min(p);
    let hi = (center + half).clamp(0.0, 1.0).max(p);
    (lo, hi)
}

/// Default run length: ten times the prior mean of the second change point.
pub fn default_horizon(spec: &ModelSpec) -> usize {
    let h = (10.0 * spec.prior_mean_theta2()).ceil();
    if h.is_finite() {
        (h as usize).max(1)
    } else {
        1
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_json(value: &impl Serialize) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("report serializes");
    out.push('\n');
    out
}

fn csv_bytes(result: csv::Result<()>, buf: Vec<u8>) -> Result<String> {
    result.map_err(|e| Error::Domain(format!("csv encoding failed: {e}")))?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectories(file, &path.display().to_string())
}

fn load_pair(model: &Path, policy: &Path) -> Result<(ModelSpec, StoppingPolicy)> {
    let spec = ModelSpec::load(model)?;
    let policy = StoppingPolicy::load(policy)?;
    policy.check_model(&spec)?;
    Ok((spec, policy))
}

/// `count` trajectories of `horizon` steps; trajectory `i` uses seed `seed + i`.
pub fn cmd_simulate(model: &Path, horizon: Option<usize>, count: usize, seed: u64) -> Result<String> {
    let spec = ModelSpec::load(model)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(&spec));
    let batch = sample_batch(&spec, horizon, count, seed);
    let mut buf = Vec::new();
    let res = crate::simulate::write_trajectories(&mut buf, &batch);
    csv_bytes(res, buf)
}

/// Solves the model and returns the policy JSON.
pub fn cmd_solve(model: &Path, cfg: &SolverConfig) -> Result<String> {
    let spec = ModelSpec::load(model)?;
    Ok(solve(&spec, cfg)?.to_json_pretty())
}

#[derive(Serialize)]
struct DetectionRow {
    seed: u64,
    theta1: String,
    theta2: String,
    tau: String,
    sigma: String,
    hit1: bool,
    hit2: bool,
}

fn time_field(t: Option<usize>) -> String {
    match t {
        Some(v) if v != NEVER => v.to_string(),
        _ => "never".to_string(),
    }
}

/// Output of [`cmd_detect`]: the per-trajectory results and, on request,
/// the concatenated decision traces.
pub struct DetectOutput {
    pub results: String,
    pub traces: Option<String>,
}

/// Runs the detector on every trajectory of a CSV file. Each trajectory is
/// processed up to `horizon` steps (default: its full length).
pub fn cmd_detect(
    model: &Path,
    policy: &Path,
    trajectories: &Path,
    horizon: Option<usize>,
    with_traces: bool,
) -> Result<DetectOutput> {
    let (spec, policy) = load_pair(model, policy)?;
    let batch = load_trajectories(trajectories)?;
    let results: Vec<DetectionResult> = batch
        .par_iter()
        .map(|t| {
            let h = horizon.unwrap_or(t.observations.len().saturating_sub(1));
            let mut res = run_detector(&spec, &policy, &t.observations, h)?;
            res.score(t.theta1, t.theta2);
            Ok(res)
        })
        .collect::<Result<_>>()?;

    let mut buf = Vec::new();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(&mut buf);
    let mut res = Ok(());
    for (t, r) in batch.iter().zip(&results) {
        res = w.serialize(DetectionRow {
            seed: t.seed,
            theta1: time_field(Some(t.theta1)),
            theta2: time_field(Some(t.theta2)),
            tau: time_field(r.tau),
            sigma: time_field(r.sigma),
            hit1: r.hit1 == Some(true),
            hit2: r.hit2 == Some(true),
        });
        if res.is_err() {
            break;
        }
    }
    let res = res.and_then(|_| w.flush().map_err(csv::Error::from));
    drop(w);
    let results_csv = csv_bytes(res, buf)?;

    let traces = if with_traces {
        let mut buf = Vec::new();
        let pairs: Vec<_> = batch
            .iter()
            .zip(&results)
            .map(|(t, r)| (t.seed, &r.trace[..]))
            .collect();
        let res = write_decision_traces(&mut buf, &pairs);
        Some(csv_bytes(res, buf)?)
    } else {
        None
    };
    Ok(DetectOutput {
        results: results_csv,
        traces,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_runs: usize,
    pub horizon: usize,
    pub hits: u64,
    pub detection_prob_estimate: f64,
    pub wilson_ci_95: (f64, f64),
    /// Mean of `τ - θ1` over runs where both are finite.
    pub mean_tau_error: Option<f64>,
    /// Mean of `σ - θ2` over runs where both are finite.
    pub mean_sigma_error: Option<f64>,
    pub first_stops: u64,
    pub second_stops: u64,
    /// Optimum over all policies for this horizon, when small enough to
    /// enumerate.
    pub oracle_value: Option<f64>,
    /// Exact success probability of the evaluated policy, same condition.
    pub policy_value_exact: Option<f64>,
    pub model_digest: String,
    pub config_digest: String,
    pub seeds: SeedRange,
}

#[derive(Default)]
struct Tally {
    hits: u64,
    tau_err: i64,
    tau_n: u64,
    sigma_err: i64,
    sigma_n: u64,
    first_stops: u64,
    second_stops: u64,
}

impl Tally {
    fn merge(mut self, o: Tally) -> Tally {
        self.hits += o.hits;
        self.tau_err += o.tau_err;
        self.tau_n += o.tau_n;
        self.sigma_err += o.sigma_err;
        self.sigma_n += o.sigma_n;
        self.first_stops += o.first_stops;
        self.second_stops += o.second_stops;
        self
    }
}

fn signed_error(stop: Option<usize>, truth: usize) -> Option<i64> {
    let stop = stop?;
    (truth != NEVER).then(|| stop as i64 - truth as i64)
}

/// Monte Carlo estimate of `P(τ = θ1, σ = θ2)` over `runs` simulated
/// trajectories with seeds `seed..seed + runs`. Integer tallies make the
/// result independent of scheduling.
pub fn evaluate(
    spec: &ModelSpec,
    policy: &StoppingPolicy,
    runs: usize,
    seed: u64,
    horizon: Option<usize>,
) -> Result<EvaluationReport> {
    if runs < MIN_RUNS {
        return Err(Error::Domain(format!(
            "n_runs = {runs} is below the minimum of {MIN_RUNS}"
        )));
    }
    policy.check_model(spec)?;
    let horizon = horizon.unwrap_or_else(|| default_horizon(spec));
    let sim = Simulator::new(spec);
    let tally = (0..runs as u64)
        .into_par_iter()
        .map(|i| -> Result<Tally> {
            let t = sim.sample_seeded(horizon, seed.wrapping_add(i));
            let mut res = run_detector(spec, policy, &t.observations, horizon)?;
            res.score(t.theta1, t.theta2);
            let tau_err = signed_error(res.tau, t.theta1);
            let sigma_err = signed_error(res.sigma, t.theta2);
            Ok(Tally {
                hits: res.hit() as u64,
                tau_err: tau_err.unwrap_or(0),
                tau_n: tau_err.is_some() as u64,
                sigma_err: sigma_err.unwrap_or(0),
                sigma_n: sigma_err.is_some() as u64,
                first_stops: res.tau.is_some() as u64,
                second_stops: res.sigma.is_some() as u64,
            })
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;

    let (oracle_value, policy_value_exact) = if horizon <= MAX_POLICY_HORIZON {
        let table = tabulate_policy(spec, policy, horizon)?;
        (
            Some(brute_force_policy(spec, horizon)?.value),
            Some(evaluate_policy_exact(spec, &table, horizon)?),
        )
    } else {
        (None, None)
    };

    let policy_digest = sha256_hex(policy.to_json_pretty().as_bytes());
    let config = serde_json::json!({
        "command": "evaluate",
        "model": spec.digest(),
        "policy": policy_digest,
        "runs": runs,
        "seed": seed,
        "horizon": horizon,
    });
    let mean = |sum: i64, n: u64| (n > 0).then(|| sum as f64 / n as f64);
    Ok(EvaluationReport {
        n_runs: runs,
        horizon,
        hits: tally.hits,
        detection_prob_estimate: tally.hits as f64 / runs as f64,
        wilson_ci_95: wilson_interval(tally.hits, runs as u64),
        mean_tau_error: mean(tally.tau_err, tally.tau_n),
        mean_sigma_error: mean(tally.sigma_err, tally.sigma_n),
        first_stops: tally.first_stops,
        second_stops: tally.second_stops,
        oracle_value,
        policy_value_exact,
        model_digest: spec.digest(),
        config_digest: sha256_hex(config.to_string().as_bytes()),
        seeds: SeedRange {
            first: seed,
            last: seed.wrapping_add(runs as u64 - 1),
        },
    })
}

/// [`evaluate`] on files, returning the report JSON.
pub fn cmd_evaluate(model: &Path, policy: &Path, runs: usize, seed: u64, horizon: Option<usize>) -> Result<String> {
    let (spec, policy) = load_pair(model, policy)?;
    Ok(to_json(&evaluate(&spec, &policy, runs, seed, horizon)?))
}

/// Exhaustive verification report; the boolean says whether every check
/// passed.
pub fn cmd_verify(model: &Path, depth: usize) -> Result<(String, bool)> {
    let spec = ModelSpec::load(model)?;
    let report = verify_model(&spec, depth)?;
    Ok((to_json(&report), report.passed))
}

/// Filter trace of one trajectory from a CSV file: the one with seed
/// `seed`, or the first row.
pub fn cmd_filter(model: &Path, trajectories: &Path, seed: Option<u64>) -> Result<String> {
    let spec = ModelSpec::load(model)?;
    let batch = load_trajectories(trajectories)?;
    let t = match seed {
        Some(s) => batch.iter().find(|t| t.seed == s),
        None => batch.first(),
    }
    .ok_or_else(|| Error::Domain("no matching trajectory".into()))?;
    let states = filter_path(&spec, &t.observations, DEFAULT_PRUNE_BELOW)?;
    let mut buf = Vec::new();
    let res = write_filter_trace(&mut buf, &states);
    csv_bytes(res, buf)
}

/// Brute-force optimum, decisions and posteriors up to a small horizon.
pub fn cmd_oracle(model: &Path, horizon: usize) -> Result<String> {
    let spec = ModelSpec::load(model)?;
    Ok(to_json(&oracle_report(&spec, horizon)?))
}
