//! The acquisition loop and its persisted records.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, SCHEMA_VERSION};
use super::data::{initial_pool, Dataset};
use crate::acquisition::{GroupScore, Strategy};
use crate::nn::{init_network, JacobianScope, NetworkSpec, ParamVector};
use crate::ntk::{empirical_ntk_with, Reduction, DEFAULT_POSITIVITY_THRESHOLD};
use crate::pool::Pool;
use crate::seed::{self, Stream};
use crate::training::{epochs_to_convergence, train, ConvergenceCriterion, TrainConfig, TrainOutcome, TrainingTrace};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub train_ms: f64,
    pub acquire_ms: f64,
}

/// One round: train on the current labeled set, evaluate, then acquire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub labeled_size: usize,
    pub network_seed: u64,
    pub steps: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub test_loss: f64,
    pub epochs_to_convergence: usize,
    /// Smallest positive eigenvalue of the Gram matrix over the labeled set used for training.
    pub labeled_lambda_min: Option<f64>,
    /// Indices acquired at the end of this round (empty after the last round).
    pub selected: Vec<usize>,
    pub scores: Vec<GroupScore>,
    /// Same quantity over the labeled set plus the newly selected samples.
    pub selected_lambda_min: Option<f64>,
    /// Hidden-label oracle reads made by the acquisition step.
    pub hidden_label_reads: usize,
    pub timing: PhaseTiming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub config_hash: String,
    pub strategy: String,
    pub seed: u64,
    pub transfer_reseed: bool,
    pub initial_labeled: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
}

impl RunRecord {
    pub fn final_round(&self) -> &RoundRecord {
        self.rounds.last().expect("a run has at least one round")
    }

    pub fn hidden_label_reads(&self) -> usize {
        self.rounds.iter().map(|r| r.hidden_label_reads).sum()
    }

    /// Copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        let mut r = self.clone();
        for round in &mut r.rounds {
            round.timing = PhaseTiming::default();
        }
        r
    }

    pub fn file_stem(&self) -> String {
        format!("{}_seed{}", self.strategy, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<RunRecord> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Trained parameters together with their network layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub spec: NetworkSpec,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(spec: &NetworkSpec, params: &ParamVector) -> Self {
        Checkpoint {
            schema_version: SCHEMA_VERSION,
            spec: spec.clone(),
            params: params.values().to_vec(),
        }
    }

    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::from_values(&self.spec, self.params.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Checkpoint> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if ck.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "checkpoint schema_version {} is not supported",
                ck.schema_version
            )));
        }
        ck.params()?;
        Ok(ck)
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub record: RunRecord,
    /// Training trace of every round.
    pub traces: Vec<TrainingTrace>,
    /// Final evaluation model.
    pub checkpoint: Checkpoint,
    /// Pool after the last acquisition.
    pub pool: Pool,
}

fn gram_scope(strategy: &Strategy) -> (JacobianScope, Reduction, f64) {
    match *strategy {
        Strategy::Crc {
            scope,
            reduction,
            positivity_threshold,
            ..
        }
        | Strategy::CrcBalanced {
            scope,
            reduction,
            positivity_threshold,
            ..
        } => (scope, reduction, positivity_threshold),
        _ => (JacobianScope::LastLayer, Reduction::Traced, DEFAULT_POSITIVITY_THRESHOLD),
    }
}

fn set_lambda_min(pool: &Pool, idx: &[usize], params: &ParamVector, spec: &NetworkSpec, strategy: &Strategy) -> Result<Option<f64>> {
    let (scope, reduction, threshold) = gram_scope(strategy);
    let x = pool.features().select_rows(idx);
    empirical_ntk_with(params, spec, &x, scope, reduction, Default::default())?.min_positive(threshold)
}

fn train_round(
    cfg: &ExperimentConfig,
    data_pool: &Pool,
    data: &Dataset,
    network_seed: u64,
    noise_seed: u64,
) -> Result<TrainOutcome> {
    let params = init_network(&cfg.network, network_seed)?;
    let tc = TrainConfig {
        seed: noise_seed,
        ..cfg.train.clone()
    };
    train(&params, &cfg.network, data_pool, Some(&data.test), &tc)
}

/// Runs the full loop for one seed on an already built dataset.
pub fn run_assl_on(cfg: &ExperimentConfig, data: &Dataset, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let spec = &cfg.network;
    if data.pool.input_dim() != spec.input_dim || data.pool.num_classes() != spec.num_classes {
        return Err(Error::Config(format!(
            "dataset has {} features and {} classes, network expects {} and {}",
            data.pool.input_dim(),
            data.pool.num_classes(),
            spec.input_dim,
            spec.num_classes
        )));
    }
    let mut pool = match &cfg.initial_indices {
        Some(ix) => {
            let mut p = data.pool.clone();
            p.acquire(ix).map_err(|e| e.in_phase("initial pool", 0))?;
            p
        }
        None => initial_pool(&data.pool, cfg.initial_per_class, seed::derive(seed, Stream::InitialPool, 0))
            .map_err(|e| e.in_phase("initial pool", 0))?,
    };
    let initial_labeled = pool.labeled().to_vec();
    let mut rounds = Vec::with_capacity(cfg.num_acquisitions + 1);
    let mut traces = Vec::with_capacity(cfg.num_acquisitions + 1);
    let mut checkpoint = None;

    for round in 0..=cfg.num_acquisitions {
        let t0 = Instant::now();
        let network_seed = seed::derive(seed, Stream::Network, round as u64);
        let noise_seed = seed::derive(seed, Stream::TrainingNoise, round as u64);
        let acq_model = train_round(cfg, &pool, data, network_seed, noise_seed).map_err(|e| e.in_phase("train", round))?;
        // with transfer_reseed the reported model is an independently seeded network
        // trained on the same labels; the acquisition model still picks the queries
        let (eval_model, eval_seed) = if cfg.transfer_reseed {
            let s = seed::derive(seed, Stream::TransferNetwork, round as u64);
            let noise = seed::derive(seed, Stream::TrainingNoise, (1 << 32) + round as u64);
            (train_round(cfg, &pool, data, s, noise).map_err(|e| e.in_phase("train", round))?, s)
        } else {
            (acq_model.clone(), network_seed)
        };
        let train_ms = t0.elapsed().as_secs_f64() * 1e3;

        let last = eval_model.trace.last().expect("trainer records a final row").clone();
        let epochs = epochs_to_convergence(&eval_model.trace, ConvergenceCriterion::GlobalMinTestLoss)
            .map_err(|e| e.in_phase("evaluate", round))?;
        let acq_params = acq_model.eval_params();
        let labeled_lambda_min = set_lambda_min(&pool, pool.labeled(), acq_params, spec, &cfg.strategy)
            .map_err(|e| e.in_phase("evaluate", round))?;

        let t1 = Instant::now();
        let (selected, scores, selected_lambda_min, reads) = if round < cfg.num_acquisitions {
            let before = pool.hidden_label_reads();
            let acq_seed = seed::derive(seed, Stream::Acquisition, round as u64);
            let result = cfg
                .strategy
                .acquire(&pool, acq_params, spec, cfg.query_size, acq_seed, cfg.train.execution)
                .map_err(|e| e.in_phase("acquire", round))?;
            let reads = pool.hidden_label_reads() - before;
            let mut union = pool.labeled().to_vec();
            union.extend_from_slice(&result.selected);
            let lam = set_lambda_min(&pool, &union, acq_params, spec, &cfg.strategy)
                .map_err(|e| e.in_phase("acquire", round))?;
            pool.acquire(&result.selected).map_err(|e| e.in_phase("acquire", round))?;
            (result.selected, result.group_scores, lam, reads)
        } else {
            (Vec::new(), Vec::new(), None, 0)
        };
        let acquire_ms = t1.elapsed().as_secs_f64() * 1e3;

        rounds.push(RoundRecord {
            round,
            labeled_size: initial_labeled.len() + round * cfg.query_size,
            network_seed: eval_seed,
            steps: last.step,
            train_loss: last.loss,
            train_acc: last.train_acc,
            test_acc: last.test_acc.unwrap_or(0.0),
            test_loss: last.test_loss.unwrap_or(f64::NAN),
            epochs_to_convergence: epochs,
            labeled_lambda_min,
            selected,
            scores,
            selected_lambda_min,
            hidden_label_reads: reads,
            timing: PhaseTiming { train_ms, acquire_ms },
        });
        checkpoint = Some(Checkpoint::new(spec, eval_model.eval_params()));
        traces.push(eval_model.trace);
    }

    Ok(RunOutput {
        record: RunRecord {
            schema_version: SCHEMA_VERSION,
            config_hash: cfg.hash(),
            strategy: cfg.strategy.name().to_string(),
            seed,
            transfer_reseed: cfg.transfer_reseed,
            initial_labeled,
            rounds,
        },
        traces,
        checkpoint: checkpoint.expect("at least one round"),
        pool,
    })
}

/// Builds the dataset for `seed` and runs the loop.
pub fn run_assl(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let data = cfg.dataset.build(seed).map_err(|e| e.in_phase("dataset", 0))?;
    run_assl_on(cfg, &data, seed)
}

/// Writes `<stem>.json`, `<stem>_model.json` and, if enabled,
/// `<stem>_round<k>.csv` into `dir`. Returns the record path.
pub fn persist_run(out: &RunOutput, dir: &Path, write_traces: bool) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let stem = out.record.file_stem();
    let record_path = dir.join(format!("{stem}.json"));
    std::fs::write(&record_path, out.record.to_json()?)?;
    out.checkpoint.write(&dir.join(format!("{stem}_model.json")))?;
    if write_traces {
        for (k, trace) in out.traces.iter().enumerate() {
            let f = std::fs::File::create(dir.join(format!("{stem}_round{k}.csv")))?;
            trace.write_csv(std::io::BufWriter::new(f))?;
        }
    }
    Ok(record_path)
}

/// Runs every configured seed, persisting each run into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut records = Vec::with_capacity(cfg.seeds.len());
    for &s in &cfg.seeds {
        let out = run_assl(cfg, s)?;
        persist_run(&out, &cfg.output_dir, cfg.write_traces)?;
        records.push(out.record);
    }
    Ok(records)
}

/// Reads every `*.json` run record in `dir` (model checkpoints are skipped).
pub fn read_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && !p.file_stem().is_some_and(|s| s.to_string_lossy().ends_with("_model"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::read(p)).collect()
}
