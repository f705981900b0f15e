//! The switched Markov model: observation alphabet, the three kernel
//! families, and the geometric priors of the two change points.
//!
//! Transitions into `X_n` follow `kernel_pre` while `n < θ1`, the regime
//! kernel `kernel_mid[ε]` while `θ1 <= n < θ2`, and `kernel_post` once
//! `θ2 <= n`. Regime indices are zero-based throughout the crate.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used when checking that probabilities add up.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub alphabet_size: usize,
    pub regime_count: usize,
    /// `kernel_pre[x][y]`: transition density before the first change.
    pub kernel_pre: Vec<Vec<f64>>,
    /// `kernel_mid[u][x][y]`: transition density of regime `u` between the changes.
    pub kernel_mid: Vec<Vec<Vec<f64>>>,
    /// `kernel_post[x][y]`: transition density after the second change.
    pub kernel_post: Vec<Vec<f64>>,
    pub pi: f64,
    pub rho: f64,
    pub p1: f64,
    pub q1: f64,
    pub p2: f64,
    pub q2: f64,
    pub regime_prior: Vec<f64>,
    pub initial_state: usize,
}

impl ModelSpec {
    /// Two-letter, single-regime model used throughout the tests and examples.
    pub fn tiny() -> Self {
        ModelSpec {
            alphabet_size: 2,
            regime_count: 1,
            kernel_pre: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            kernel_mid: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            kernel_post: vec![vec![0.1, 0.9], vec![0.9, 0.1]],
            pi: 0.0,
            rho: 0.0,
            p1: 0.8,
            q1: 0.2,
            p2: 0.7,
            q2: 0.3,
            regime_prior: vec![1.0],
            initial_state: 0,
        }
    }

    /// Random model with strictly positive kernels. Prior parameters are kept
    /// away from the degenerate corners so every configuration has mass.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, alphabet_size: usize, regime_count: usize) -> Self {
        let kernel = |rng: &mut R| -> Vec<Vec<f64>> {
            (0..alphabet_size)
                .map(|_| {
                    let row: Vec<f64> = (0..alphabet_size).map(|_| rng.random_range(0.05..1.0)).collect();
                    let total: f64 = row.iter().sum();
                    row.into_iter().map(|v| v / total).collect()
                })
                .collect()
        };
        let kernel_pre = kernel(rng);
        let kernel_mid = (0..regime_count).map(|_| kernel(rng)).collect();
        let kernel_post = kernel(rng);
        let p1 = rng.random_range(0.3..0.9);
        let p2 = rng.random_range(0.3..0.9);
        let weights: Vec<f64> = (0..regime_count).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = weights.iter().sum();
        ModelSpec {
            alphabet_size,
            regime_count,
            kernel_pre,
            kernel_mid,
            kernel_post,
            pi: rng.random_range(0.0..0.4),
            rho: rng.random_range(0.0..0.4),
            p1,
            q1: 1.0 - p1,
            p2,
            q2: 1.0 - p2,
            regime_prior: weights.into_iter().map(|w| w / total).collect(),
            initial_state: rng.random_range(0..alphabet_size),
        }
    }

    /// Parses a model; errors name the offending field, e.g.
    /// `kernel_pre[1][0]: invalid type: string "x", expected f64`.
    pub fn from_json_str(text: &str) -> std::result::Result<Self, String> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                inner.to_string()
            } else {
                format!("{path}: {inner}")
            }
        })
    }

    /// Reads and validates a model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec = Self::from_json_str(&text).map_err(|e| Error::parse(path, e))?;
        validate_model(spec)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("model serializes");
        out.push('\n');
        out
    }

    /// SHA-256 of the compact JSON encoding; identifies the model in
    /// policies and reports.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(bytes))
    }

    #[inline]
    pub fn f_pre(&self, x: usize, y: usize) -> f64 {
        self.kernel_pre[x][y]
    }

    #[inline]
    pub fn f_mid(&self, u: usize, x: usize, y: usize) -> f64 {
        self.kernel_mid[u][x][y]
    }

    #[inline]
    pub fn f_post(&self, x: usize, y: usize) -> f64 {
        self.kernel_post[x][y]
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.alphabet_size;
        let k = self.regime_count;
        if e == 0 {
            return Err(invalid("alphabet_size must be positive"));
        }
        if k == 0 {
            return Err(invalid("regime_count must be positive"));
        }
        if self.initial_state >= e {
            return Err(invalid(format!(
                "initial_state {} outside alphabet of size {e}",
                self.initial_state
            )));
        }

        for (name, value) in [
            ("pi", self.pi),
            ("rho", self.rho),
            ("p1", self.p1),
            ("q1", self.q1),
            ("p2", self.p2),
            ("q2", self.q2),
        ] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(invalid(format!("{name} = {value} is not a probability")));
            }
        }
        if (self.p1 + self.q1 - 1.0).abs() > PROB_TOL {
            return Err(invalid("p1 + q1 != 1"));
        }
        if (self.p2 + self.q2 - 1.0).abs() > PROB_TOL {
            return Err(invalid("p2 + q2 != 1"));
        }

        if self.regime_prior.len() != k {
            return Err(invalid(format!(
                "regime_prior has {} entries, expected {k}",
                self.regime_prior.len()
            )));
        }
        if let Some(u) = self.regime_prior.iter().position(|&r| !r.is_finite() || r < 0.0) {
            return Err(invalid(format!("regime_prior[{u}] is negative")));
        }
        if (self.regime_prior.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(invalid("regime_prior does not sum to 1"));
        }

        if self.kernel_mid.len() != k {
            return Err(invalid(format!(
                "kernel_mid has {} matrices, expected {k}",
                self.kernel_mid.len()
            )));
        }
        check_kernel("kernel_pre", &self.kernel_pre, e)?;
        for (u, m) in self.kernel_mid.iter().enumerate() {
            check_kernel(&format!("kernel_mid[{u}]"), m, e)?;
        }
        check_kernel("kernel_post", &self.kernel_post, e)?;

        for x in 0..e {
            for y in 0..e {
                let mut values = vec![self.f_pre(x, y), self.f_post(x, y)];
                values.extend((0..k).map(|u| self.f_mid(u, x, y)));
                let any = values.iter().any(|&v| v > 0.0);
                let all = values.iter().all(|&v| v > 0.0);
                if any && !all {
                    return Err(invalid(format!(
                        "density-ratio assumption broken at transition ({x}, {y})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn prior_theta1_pmf(&self, j: usize) -> f64 {
        prior_theta1_pmf(self, j)
    }

    /// `P(θ1 > n)`.
    pub fn prior_theta1_survival(&self, n: usize) -> f64 {
        (1.0 - self.pi) * powu(self.p1, n)
    }

    /// Prior mean of `θ2`; infinite when either geometric never fires.
    pub fn prior_mean_theta2(&self) -> f64 {
        let mean1 = if self.pi >= 1.0 { 0.0 } else { (1.0 - self.pi) / self.q1 };
        let gap = if self.rho >= 1.0 {
            0.0
        } else {
            (1.0 - self.rho) / self.q2
        };
        mean1 + gap
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidModel(msg.into())
}

fn check_kernel(name: &str, kernel: &[Vec<f64>], e: usize) -> Result<()> {
    if kernel.len() != e {
        return Err(invalid(format!("{name} has {} rows, expected {e}", kernel.len())));
    }
    for (x, row) in kernel.iter().enumerate() {
        if row.len() != e {
            return Err(invalid(format!(
                "{name} row {x} has {} entries, expected {e}",
                row.len()
            )));
        }
        if let Some(y) = row.iter().position(|&v| !v.is_finite() || v < 0.0) {
            return Err(invalid(format!("{name}[{x}][{y}] is negative")));
        }
        if (row.iter().sum::<f64>() - 1.0).abs() > PROB_TOL {
            return Err(invalid(format!("{name} row {x}: row not stochastic")));
        }
    }
    Ok(())
}

pub fn validate_model(spec: ModelSpec) -> Result<ModelSpec> {
    spec.validate()?;
    Ok(spec)
}

/// `P(θ1 = j)`.
pub fn prior_theta1_pmf(spec: &ModelSpec, j: usize) -> f64 {
    if j == 0 {
        spec.pi
    } else {
        (1.0 - spec.pi) * powu(spec.p1, j - 1) * spec.q1
    }
}

/// `P(θ2 = k | θ1 = j)`; requires `k >= j`.
pub fn prior_theta2_given_theta1_pmf(spec: &ModelSpec, j: usize, k: usize) -> Result<f64> {
    if k < j {
        return Err(Error::Domain(format!("theta2 = {k} precedes theta1 = {j}")));
    }
    Ok(gap_pmf(spec, k - j))
}

/// `P(θ2 − θ1 = gap)`.
pub(crate) fn gap_pmf(spec: &ModelSpec, gap: usize) -> f64 {
    if gap == 0 {
        spec.rho
    } else {
        (1.0 - spec.rho) * powu(spec.p2, gap - 1) * spec.q2
    }
}

/// Zero-based regime lookup `P(ε1 = u)`.
pub fn regime_prior_pmf(spec: &ModelSpec, u: usize) -> Result<f64> {
    spec.regime_prior
        .get(u)
        .copied()
        .ok_or_else(|| Error::Domain(format!("regime {u} outside 0..{}", spec.regime_count)))
}

#[inline]
pub(crate) fn powu(base: f64, exp: usize) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}
