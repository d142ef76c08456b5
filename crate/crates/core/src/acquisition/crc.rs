//! Batch convergence rate control.
//!
//! The unlabeled pool is shuffled and cut into disjoint candidate groups of
//! size `G`. Each group is scored by the smallest positive eigenvalue of the
//! empirical NTK over `labeled ∪ group`, and the `Q / G` best groups are
//! returned. Remainder samples (`|U| mod G`) are not considered that round.
//!
//! Groups whose Gram matrix has null modes (duplicates of each other or of
//! labeled samples) rank below every full-rank group, and the returned batch
//! skips groups that would make the union with already-selected groups
//! singular whenever enough other groups are available.

use rand::seq::SliceRandom;

use super::{check_budget, AcquisitionResult, GroupScore};
use crate::nn::{JacobianScope, Network, NetworkSpec, ParamVector};
use crate::ntk::{min_positive, symmetric_eigenvalues, GradientFeatures, Reduction, DEFAULT_POSITIVITY_THRESHOLD};
use crate::par::{self, Execution};
use crate::pool::Pool;
use crate::{seed, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CrcOptions {
    pub q: usize,
    pub group_size: usize,
    pub scope: JacobianScope,
    pub reduction: Reduction,
    pub positivity_threshold: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl CrcOptions {
    pub fn new(q: usize, group_size: usize, seed: u64) -> Self {
        CrcOptions {
            q,
            group_size,
            scope: JacobianScope::LastLayer,
            reduction: Reduction::Traced,
            positivity_threshold: DEFAULT_POSITIVITY_THRESHOLD,
            seed,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BalancedCrcOptions {
    /// Samples per class in every candidate group (`R`); the group size is `R * C`.
    pub per_class: usize,
    pub scope: JacobianScope,
    pub reduction: Reduction,
    pub positivity_threshold: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl BalancedCrcOptions {
    pub fn new(per_class: usize, seed: u64) -> Self {
        BalancedCrcOptions {
            per_class,
            scope: JacobianScope::LastLayer,
            reduction: Reduction::Traced,
            positivity_threshold: DEFAULT_POSITIVITY_THRESHOLD,
            seed,
            execution: Execution::default(),
        }
    }
}

/// Spectral evaluation of one candidate group.
#[derive(Clone, Copy, Debug, PartialEq)]
struct GroupEval {
    score: Option<f64>,
    /// Eigenvalues at or below the positivity cut-off.
    null_modes: usize,
    /// Smallest eigenvalue, used to break ties between degenerate unions.
    floor: f64,
}

fn evaluate(eigenvalues: &[f64], threshold: f64) -> GroupEval {
    let score = min_positive(eigenvalues, threshold);
    let max = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let null_modes = eigenvalues.iter().filter(|&&v| !(v > threshold * max)).count();
    let floor = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    GroupEval { score, null_modes, floor }
}

/// Gradient features of `labeled ++ groups`, with the labeled block precomputed.
struct GroupScorer {
    features: GradientFeatures,
    base_idx: Vec<usize>,
    base: crate::ntk::GramMatrix,
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    threshold: f64,
}

impl GroupScorer {
    #[allow(clippy::too_many_arguments)]
    fn new(
        pool: &Pool,
        params: &ParamVector,
        spec: &NetworkSpec,
        groups: &[Vec<usize>],
        scope: JacobianScope,
        reduction: Reduction,
        threshold: f64,
        exec: Execution,
    ) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "positivity threshold must be positive, got {threshold}"
            )));
        }
        let net = Network::new(spec, params)?;
        let labeled = pool.labeled();
        let nl = labeled.len();
        let mut rows: Vec<usize> = labeled.to_vec();
        rows.extend(groups.iter().flatten());
        let features = GradientFeatures::compute(&net, &pool.features().select_rows(&rows), scope, reduction, exec)?;
        let base_idx: Vec<usize> = (0..nl).collect();
        let base = features.gram(&base_idx);
        let mut offsets = Vec::with_capacity(groups.len());
        let mut next = nl;
        for g in groups {
            offsets.push(next);
            next += g.len();
        }
        Ok(GroupScorer {
            features,
            base_idx,
            base,
            offsets,
            sizes: groups.iter().map(Vec::len).collect(),
            threshold,
        })
    }

    fn group_rows(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k] + self.sizes[k]
    }

    fn eval_rows(&self, extra: &[usize]) -> Result<GroupEval> {
        let gram = self.features.gram_extend(&self.base, &self.base_idx, extra);
        Ok(evaluate(&symmetric_eigenvalues(&gram.values)?, self.threshold))
    }

    fn score_all(&self, exec: Execution) -> Result<Vec<GroupEval>> {
        par::map_range(exec, self.sizes.len(), |k| {
            let extra: Vec<usize> = self.group_rows(k).collect();
            self.eval_rows(&extra)
        })
        .into_iter()
        .collect()
    }

    /// Walks groups in rank order, keeping those that add no null modes to
    /// the labeled set plus the groups kept so far. Remaining slots go to the
    /// group whose union is least degenerate.
    fn select(&self, order: &[usize], take: usize) -> Result<Vec<usize>> {
        let mut chosen = Vec::with_capacity(take);
        let mut rows: Vec<usize> = Vec::new();
        let nullity = self.eval_rows(&rows)?.null_modes;
        for &k in order {
            if chosen.len() == take {
                break;
            }
            let mut trial = rows.clone();
            trial.extend(self.group_rows(k));
            let eval = self.eval_rows(&trial)?;
            if eval.null_modes == nullity {
                chosen.push(k);
                rows = trial;
            }
        }
        // top-up: least degenerate union first, so exact duplicates lose to
        // merely ill-conditioned alternatives
        while chosen.len() < take {
            let mut best: Option<(usize, GroupEval)> = None;
            for &k in order {
                if chosen.contains(&k) {
                    continue;
                }
                let mut trial = rows.clone();
                trial.extend(self.group_rows(k));
                let eval = self.eval_rows(&trial)?;
                let better = match best {
                    None => true,
                    Some((_, b)) => eval.null_modes < b.null_modes || (eval.null_modes == b.null_modes && eval.floor > b.floor),
                };
                if better {
                    best = Some((k, eval));
                }
            }
            let Some((k, _)) = best else { break };
            chosen.push(k);
            rows.extend(self.group_rows(k));
        }
        Ok(chosen)
    }
}

/// Group order: fewer null modes first, then larger score; ties by group index.
fn rank_groups(evals: &[GroupEval]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..evals.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (evals[a], evals[b]);
        ea.null_modes
            .cmp(&eb.null_modes)
            .then_with(|| match (ea.score, eb.score) {
                (Some(x), Some(y)) => y.total_cmp(&x),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    order
}

#[allow(clippy::too_many_arguments)]
fn run(
    strategy: &str,
    pool: &Pool,
    params: &ParamVector,
    spec: &NetworkSpec,
    groups: Vec<Vec<usize>>,
    take: usize,
    scope: JacobianScope,
    reduction: Reduction,
    threshold: f64,
    seed: u64,
    exec: Execution,
) -> Result<AcquisitionResult> {
    let scorer = GroupScorer::new(pool, params, spec, &groups, scope, reduction, threshold, exec)?;
    let evals = scorer.score_all(exec)?;
    let order = rank_groups(&evals);
    let chosen = scorer.select(&order, take)?;
    let selected = chosen.iter().flat_map(|&k| groups[k].iter().copied()).collect();
    Ok(AcquisitionResult {
        strategy: strategy.into(),
        seed,
        selected,
        group_scores: groups
            .into_iter()
            .zip(evals)
            .map(|(indices, e)| GroupScore {
                indices,
                score: e.score,
                null_modes: e.null_modes,
            })
            .collect(),
    })
}

pub fn crc_acquire(pool: &Pool, params: &ParamVector, spec: &NetworkSpec, opts: &CrcOptions) -> Result<AcquisitionResult> {
    let (q, g) = (opts.q, opts.group_size);
    if q == 0 || g == 0 {
        return Err(Error::InvalidArgument("acquisition size and group size must be positive".into()));
    }
    if q % g != 0 {
        return Err(Error::InvalidArgument(format!("group size {g} does not divide acquisition size {q}")));
    }
    check_budget(pool, q)?;
    let mut perm = pool.unlabeled().to_vec();
    perm.shuffle(&mut seed::rng(opts.seed));
    let groups: Vec<Vec<usize>> = perm.chunks_exact(g).map(<[usize]>::to_vec).collect();
    run(
        "crc",
        pool,
        params,
        spec,
        groups,
        q / g,
        opts.scope,
        opts.reduction,
        opts.positivity_threshold,
        opts.seed,
        opts.execution,
    )
}

/// Class-balanced CRC: every candidate group holds exactly `per_class` samples
/// of each class, and the single best group is returned. Class membership of
/// unlabeled samples is read through the counting oracle.
pub fn crc_acquire_balanced(
    pool: &Pool,
    params: &ParamVector,
    spec: &NetworkSpec,
    opts: &BalancedCrcOptions,
) -> Result<AcquisitionResult> {
    let r = opts.per_class;
    if r == 0 {
        return Ok(AcquisitionResult {
            strategy: "crc_balanced".into(),
            seed: opts.seed,
            selected: Vec::new(),
            group_scores: Vec::new(),
        });
    }
    let c = pool.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for &i in pool.unlabeled() {
        by_class[pool.peek_hidden_label(i)].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < r {
            return Err(Error::ClassExhausted {
                class,
                available: members.len(),
                required: r,
            });
        }
    }
    let mut rng = seed::rng(opts.seed);
    for members in by_class.iter_mut() {
        members.shuffle(&mut rng);
    }
    let n_groups = by_class.iter().map(|m| m.len() / r).min().unwrap_or(0);
    let groups: Vec<Vec<usize>> = (0..n_groups)
        .map(|k| by_class.iter().flat_map(|m| m[k * r..(k + 1) * r].iter().copied()).collect())
        .collect();
    run(
        "crc_balanced",
        pool,
        params,
        spec,
        groups,
        1,
        opts.scope,
        opts.reduction,
        opts.positivity_threshold,
        opts.seed,
        opts.execution,
    )
}
