//! Sampling ground-truth change points and observation paths.
//!
//! Every trajectory is a pure function of `(spec, horizon, seed)`: the seed
//! keys a ChaCha8 stream, so batches can be generated in any order or in
//! parallel and still reproduce bit for bit.

use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Stand-in for a change point that never happens.
pub const NEVER: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub theta1: usize,
    pub theta2: usize,
    pub regime: usize,
    /// `X_0..X_horizon`.
    pub observations: Vec<usize>,
}

pub fn rng_for_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `(θ1, θ2)` from the geometric priors.
pub fn sample_change_points<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> (usize, usize) {
    let theta1 = if rng.random::<f64>() < spec.pi {
        0
    } else {
        1usize.saturating_add(geometric(spec.q1, rng))
    };
    let theta2 = if rng.random::<f64>() < spec.rho {
        theta1
    } else {
        theta1.saturating_add(1).saturating_add(geometric(spec.q2, rng))
    };
    (theta1, theta2)
}

/// Number of failures before the first success.
fn geometric<R: Rng + ?Sized>(success: f64, rng: &mut R) -> usize {
    let g = Geometric::new(success).expect("validated probability").sample(rng);
    usize::try_from(g).unwrap_or(NEVER)
}

/// Pre-built row samplers for the three kernel families.
pub struct Simulator<'a> {
    spec: &'a ModelSpec,
    pre: Vec<Option<WeightedIndex<f64>>>,
    mid: Vec<Vec<Option<WeightedIndex<f64>>>>,
    post: Vec<Option<WeightedIndex<f64>>>,
    regime: WeightedIndex<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(spec: &'a ModelSpec) -> Self {
        let rows = |m: &[Vec<f64>]| -> Vec<Option<WeightedIndex<f64>>> {
            m.iter().map(|row| WeightedIndex::new(row).ok()).collect()
        };
        Simulator {
            spec,
            pre: rows(&spec.kernel_pre),
            mid: spec.kernel_mid.iter().map(|m| rows(m)).collect(),
            post: rows(&spec.kernel_post),
            regime: WeightedIndex::new(&spec.regime_prior).expect("validated regime prior"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, horizon: usize, seed: u64, rng: &mut R) -> Trajectory {
        let (theta1, theta2) = sample_change_points(self.spec, rng);
        let regime = self.regime.sample(rng);
        let mut observations = Vec::with_capacity(horizon + 1);
        let mut x = self.spec.initial_state;
        observations.push(x);
        for n in 1..=horizon {
            let row = if n < theta1 {
                &self.pre[x]
            } else if n < theta2 {
                &self.mid[regime][x]
            } else {
                &self.post[x]
            };
            // rows with no mass are unreachable from the initial state under
            // a valid model; stay put if a caller hands us one anyway
            if let Some(dist) = row {
                x = dist.sample(rng);
            }
            observations.push(x);
        }
        Trajectory {
            seed,
            theta1,
            theta2,
            regime,
            observations,
        }
    }

    pub fn sample_seeded(&self, horizon: usize, seed: u64) -> Trajectory {
        self.sample(horizon, seed, &mut rng_for_seed(seed))
    }
}

/// Samples one trajectory of `horizon` transitions.
pub fn sample_trajectory<R: Rng + ?Sized>(spec: &ModelSpec, horizon: usize, seed: u64, rng: &mut R) -> Trajectory {
    Simulator::new(spec).sample(horizon, seed, rng)
}

/// Trajectory `i` of a batch uses seed `base_seed + i`.
pub fn sample_batch(spec: &ModelSpec, horizon: usize, count: usize, base_seed: u64) -> Vec<Trajectory> {
    let sim = Simulator::new(spec);
    (0..count as u64)
        .map(|i| sim.sample_seeded(horizon, base_seed.wrapping_add(i)))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TrajectoryRow {
    seed: u64,
    theta1: String,
    theta2: String,
    regime: usize,
    observations: String,
}

fn time_to_field(t: usize) -> String {
    if t == NEVER {
        "never".to_string()
    } else {
        t.to_string()
    }
}

fn field_to_time(s: &str) -> std::result::Result<usize, String> {
    if s == "never" {
        Ok(NEVER)
    } else {
        s.parse().map_err(|e| format!("bad time {s:?}: {e}"))
    }
}

/// CSV with header `seed,theta1,theta2,regime,observations`; observations
/// are space separated.
pub fn write_trajectories<W: Write>(out: W, trajectories: &[Trajectory]) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for t in trajectories {
        w.serialize(TrajectoryRow {
            seed: t.seed,
            theta1: time_to_field(t.theta1),
            theta2: time_to_field(t.theta2),
            regime: t.regime,
            observations: t
                .observations
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Parses the CSV produced by [`write_trajectories`]. Errors carry the
/// 1-based line number; `source` is only used in messages.
pub fn read_trajectories<R: Read>(input: R, source: &str) -> Result<Vec<Trajectory>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<TrajectoryRow>().enumerate() {
        let line = i + 2;
        let fail = |m: String| Error::parse(source, format!("line {line}: {m}"));
        let row = row.map_err(|e| fail(e.to_string()))?;
        let observations = row
            .observations
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| format!("observation {s:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(fail)?;
        out.push(Trajectory {
            seed: row.seed,
            theta1: field_to_time(&row.theta1).map_err(fail)?,
            theta2: field_to_time(&row.theta2).map_err(fail)?,
            regime: row.regime,
            observations,
        });
    }
    Ok(out)
}
