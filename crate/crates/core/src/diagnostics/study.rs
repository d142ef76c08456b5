//! Score-vs-horizon and last-layer-vs-full experiments.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::stats::horizon_correlation;
use crate::acquisition::Strategy;
use crate::harness::{run_assl, ExperimentConfig};
use crate::nn::{JacobianScope, NetworkSpec, ParamVector};
use crate::ntk::{empirical_ntk_with, Reduction, DEFAULT_POSITIVITY_THRESHOLD};
use crate::par::{self, Execution};
use crate::pool::Pool;
use crate::seed;
use crate::training::{epochs_to_convergence, train, ConvergenceCriterion, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct HorizonOptions {
    pub groups: usize,
    pub group_size: usize,
    pub scope: JacobianScope,
    pub reduction: Reduction,
    pub positivity_threshold: f64,
    pub train: TrainConfig,
    pub criterion: ConvergenceCriterion,
    pub seed: u64,
    pub execution: Execution,
}

impl HorizonOptions {
    pub fn new(groups: usize, group_size: usize, train: TrainConfig, criterion: ConvergenceCriterion, seed: u64) -> Self {
        HorizonOptions {
            groups,
            group_size,
            scope: JacobianScope::LastLayer,
            reduction: Reduction::Traced,
            positivity_threshold: DEFAULT_POSITIVITY_THRESHOLD,
            train,
            criterion,
            seed,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HorizonRow {
    pub group: usize,
    pub score: f64,
    pub epochs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonStudy {
    pub rows: Vec<HorizonRow>,
    /// Groups dropped because their Gram matrix had no positive eigenvalue.
    pub degenerate: usize,
    pub rho: f64,
}

/// Draws disjoint candidate groups from the unlabeled pool, scores each by the
/// smallest positive Gram eigenvalue over labeled plus group at `params`, then
/// trains from `params` on labeled plus group and records the horizon.
pub fn horizon_study(pool: &Pool, params: &ParamVector, spec: &NetworkSpec, opts: &HorizonOptions) -> Result<HorizonStudy> {
    let need = opts.groups * opts.group_size;
    if opts.group_size == 0 || need > pool.unlabeled().len() {
        return Err(Error::Insufficient(format!(
            "{} groups of {} from {} unlabeled samples",
            opts.groups,
            opts.group_size,
            pool.unlabeled().len()
        )));
    }
    let mut order = pool.unlabeled().to_vec();
    order.shuffle(&mut seed::rng(opts.seed));
    let groups: Vec<Vec<usize>> = order[..need].chunks(opts.group_size).map(|c| c.to_vec()).collect();
    let evaluated = par::map_slice(opts.execution, &groups, |g| -> Result<Option<(f64, usize)>> {
        let mut idx = pool.labeled().to_vec();
        idx.extend_from_slice(g);
        let x = pool.features().select_rows(&idx);
        let gram = empirical_ntk_with(params, spec, &x, opts.scope, opts.reduction, Execution::Sequential)?;
        let Some(score) = gram.min_positive(opts.positivity_threshold)? else {
            return Ok(None);
        };
        let mut local = pool.clone();
        local.acquire(g)?;
        let cfg = TrainConfig {
            execution: Execution::Sequential,
            ..opts.train.clone()
        };
        let out = train(params, spec, &local, None, &cfg)?;
        Ok(Some((score, epochs_to_convergence(&out.trace, opts.criterion)?)))
    });
    let mut rows = Vec::new();
    let mut degenerate = 0;
    for (k, e) in evaluated.into_iter().enumerate() {
        match e? {
            Some((score, epochs)) => rows.push(HorizonRow { group: k, score, epochs }),
            None => degenerate += 1,
        }
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.score).collect();
    let epochs: Vec<usize> = rows.iter().map(|r| r.epochs).collect();
    let rho = horizon_correlation(&scores, &epochs)?;
    Ok(HorizonStudy { rows, degenerate, rho })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairedRow {
    pub seed: u64,
    pub round: usize,
    pub labeled_size: usize,
    pub scope: JacobianScope,
    pub test_acc: f64,
    pub test_loss: f64,
}

fn with_scope(strategy: &Strategy, scope: JacobianScope) -> Result<Strategy> {
    let mut s = strategy.clone();
    match &mut s {
        Strategy::Crc { scope: sc, .. } | Strategy::CrcBalanced { scope: sc, .. } | Strategy::Egl { scope: sc } => {
            *sc = scope;
            Ok(s)
        }
        _ => Err(Error::Config(format!(
            "strategy `{}` has no Jacobian scope to compare",
            strategy.name()
        ))),
    }
}

/// Runs the loop with last-layer and full-network Jacobians for every seed,
/// everything else shared. One row per seed, acquisition round and arm.
pub fn last_vs_full_study(cfg: &ExperimentConfig) -> Result<Vec<PairedRow>> {
    let arms = [JacobianScope::LastLayer, JacobianScope::Full];
    let mut rows = Vec::with_capacity(cfg.seeds.len() * cfg.num_acquisitions * 2);
    for &s in &cfg.seeds {
        let mut initial = None;
        for scope in arms {
            let arm_cfg = ExperimentConfig {
                strategy: with_scope(&cfg.strategy, scope)?,
                ..cfg.clone()
            };
            let out = run_assl(&arm_cfg, s)?;
            match &initial {
                None => initial = Some(out.record.initial_labeled.clone()),
                Some(i) if *i != out.record.initial_labeled => {
                    return Err(Error::InvalidArgument("arms started from different initial pools".into()))
                }
                Some(_) => {}
            }
            for r in out.record.rounds.iter().skip(1) {
                rows.push(PairedRow {
                    seed: s,
                    round: r.round,
                    labeled_size: r.labeled_size,
                    scope,
                    test_acc: r.test_acc,
                    test_loss: r.test_loss,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean test accuracy of each arm at its last round: `(last_layer, full)`.
pub fn final_arm_means(rows: &[PairedRow]) -> (f64, f64) {
    let last_round = rows.iter().map(|r| r.round).max().unwrap_or(0);
    let mean = |scope| {
        let v: Vec<f64> = rows
            .iter()
            .filter(|r| r.round == last_round && r.scope == scope)
            .map(|r| r.test_acc)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    (mean(JacobianScope::LastLayer), mean(JacobianScope::Full))
}

/// CSV columns `seed,round,labeled_size,scope,test_acc,test_loss`.
pub fn write_paired_csv<W: Write>(rows: &[PairedRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
