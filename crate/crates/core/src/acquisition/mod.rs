//! Acquisition strategies: batch CRC, its class-balanced variant, and the
//! random, entropy, confidence and expected-gradient-length baselines.

mod baselines;
mod crc;

use serde::{Deserialize, Serialize};

use crate::nn::{JacobianScope, NetworkSpec, ParamVector};
use crate::ntk::{Reduction, DEFAULT_POSITIVITY_THRESHOLD};
use crate::par::Execution;
use crate::pool::Pool;
use crate::{Error, Result};

pub use baselines::{confidence_acquire, egl_acquire, egl_score, entropy_acquire, random_acquire, softmax_entropy};
pub use crc::{crc_acquire, crc_acquire_balanced, BalancedCrcOptions, CrcOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub indices: Vec<usize>,
    /// `None` when the group has no eigenvalue above the positivity threshold.
    pub score: Option<f64>,
    /// Eigenvalues at or below the positivity cut-off (0 for a full-rank Gram).
    #[serde(default)]
    pub null_modes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionResult {
    pub strategy: String,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub group_scores: Vec<GroupScore>,
}

impl AcquisitionResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Score of the group ranked first, if any.
    pub fn best_score(&self) -> Option<f64> {
        self.group_scores.iter().filter_map(|g| g.score).fold(None, |m: Option<f64>, s| {
            Some(m.map_or(s, |m| m.max(s)))
        })
    }
}

/// A configured acquisition strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Strategy {
    Random,
    Entropy,
    Confidence,
    Egl {
        scope: JacobianScope,
    },
    Crc {
        group_size: usize,
        scope: JacobianScope,
        reduction: Reduction,
        positivity_threshold: f64,
    },
    CrcBalanced {
        per_class: usize,
        scope: JacobianScope,
        reduction: Reduction,
        positivity_threshold: f64,
    },
}

impl Strategy {
    pub fn crc(group_size: usize) -> Self {
        Strategy::Crc {
            group_size,
            scope: JacobianScope::LastLayer,
            reduction: Reduction::Traced,
            positivity_threshold: DEFAULT_POSITIVITY_THRESHOLD,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Entropy => "entropy",
            Strategy::Confidence => "confidence",
            Strategy::Egl { .. } => "egl",
            Strategy::Crc { .. } => "crc",
            Strategy::CrcBalanced { .. } => "crc_balanced",
        }
    }

    /// Whether the strategy reads hidden labels (only for class balancing).
    pub fn reads_hidden_labels(&self) -> bool {
        matches!(self, Strategy::CrcBalanced { .. })
    }

    pub fn acquire(
        &self,
        pool: &Pool,
        params: &ParamVector,
        spec: &NetworkSpec,
        q: usize,
        seed: u64,
        exec: Execution,
    ) -> Result<AcquisitionResult> {
        let mut result = match *self {
            Strategy::Random => random_acquire(pool, q, seed)?,
            Strategy::Entropy => entropy_acquire(pool, params, spec, q)?,
            Strategy::Confidence => confidence_acquire(pool, params, spec, q)?,
            Strategy::Egl { scope } => egl_acquire(pool, params, spec, q, scope, exec)?,
            Strategy::Crc {
                group_size,
                scope,
                reduction,
                positivity_threshold,
            } => crc_acquire(
                pool,
                params,
                spec,
                &CrcOptions {
                    q,
                    group_size,
                    scope,
                    reduction,
                    positivity_threshold,
                    seed,
                    execution: exec,
                },
            )?,
            Strategy::CrcBalanced {
                per_class,
                scope,
                reduction,
                positivity_threshold,
            } => {
                if q != per_class * pool.num_classes() {
                    return Err(Error::InvalidArgument(format!(
                        "balanced CRC acquires per_class * classes = {} samples, not {q}",
                        per_class * pool.num_classes()
                    )));
                }
                crc_acquire_balanced(
                    pool,
                    params,
                    spec,
                    &BalancedCrcOptions {
                        per_class,
                        scope,
                        reduction,
                        positivity_threshold,
                        seed,
                        execution: exec,
                    },
                )?
            }
        };
        result.seed = seed;
        Ok(result)
    }
}

fn check_budget(pool: &Pool, q: usize) -> Result<()> {
    if q > pool.unlabeled().len() {
        return Err(Error::Insufficient(format!(
            "{q} samples requested from {} unlabeled",
            pool.unlabeled().len()
        )));
    }
    Ok(())
}

/// Indices of the `q` largest scores; ties go to the earlier position.
fn top_q(scores: &[f64], q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(q);
    order
}
