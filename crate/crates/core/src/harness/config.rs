//! Flat `key = value` experiment configuration.
//!
//! One key per line; `#` starts a comment; blank lines are ignored. Lists are
//! comma separated, blob centres are `;`-separated points with comma
//! separated coordinates. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::DatasetSpec;
use crate::acquisition::Strategy;
use crate::nn::{JacobianScope, NetworkSpec};
use crate::ntk::{Reduction, DEFAULT_POSITIVITY_THRESHOLD};
use crate::training::{SslMode, TrainConfig};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetSpec,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub strategy: Strategy,
    /// Labels acquired per round (Q).
    pub query_size: usize,
    /// Initial labels per class (Q0 / C).
    pub initial_per_class: usize,
    /// Explicit initial labeled indices; overrides `initial_per_class`.
    pub initial_indices: Option<Vec<usize>>,
    pub num_acquisitions: usize,
    pub seeds: Vec<u64>,
    pub transfer_reseed: bool,
    pub output_dir: PathBuf,
    pub write_traces: bool,
}

impl ExperimentConfig {
    pub fn num_classes(&self) -> usize {
        self.network.num_classes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.network.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.query_size == 0 && self.num_acquisitions > 0 {
            return bad("query_size must be positive".into());
        }
        if self.initial_indices.is_none() && self.initial_per_class == 0 {
            return bad("initial_per_class must be positive".into());
        }
        if let Some(ix) = &self.initial_indices {
            if ix.is_empty() {
                return bad("initial_indices must not be empty".into());
            }
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        match self.strategy {
            Strategy::Crc { group_size, .. } => {
                if group_size == 0 || self.query_size % group_size != 0 {
                    return bad(format!(
                        "group_size {group_size} must be positive and divide query_size {}",
                        self.query_size
                    ));
                }
            }
            Strategy::CrcBalanced { per_class, .. } => {
                if per_class * self.num_classes() != self.query_size {
                    return bad(format!(
                        "balanced CRC needs query_size = per_class * classes = {}",
                        per_class * self.num_classes()
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), (n + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", n + 1)));
            }
        }
        let mut kv = Keys { map };
        let cfg = build(&mut kv)?;
        if let Some((k, (line, _))) = kv.map.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key `{k}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Keys {
    map: BTreeMap<String, (usize, String)>,
}

impl Keys {
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}"))),
        }
    }

    fn get<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.take(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some((line, v)) if v.is_empty() => {
                let _ = line;
                Ok(Some(Vec::new()))
            }
            Some((line, v)) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| Error::Config(format!("line {line}: `{key}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }
}

fn build(kv: &mut Keys) -> Result<ExperimentConfig> {
    let schema_version = kv.get("schema_version", SCHEMA_VERSION)?;
    let kind: String = kv.get("dataset", "moons".to_string())?;
    let (dataset, input_dim, classes) = match kind.as_str() {
        "moons" => {
            let arms = kv.get("arms", 4usize)?;
            let binarize = kv.get("binarize", false)?;
            let spec = DatasetSpec::Moons {
                n: kv.get("n", 1000)?,
                noise: kv.get("noise", 0.1)?,
                arms,
                binarize,
            };
            (spec, 2, if binarize { 2 } else { arms })
        }
        "blobs" => {
            let raw: String = kv.required("blob_centers")?;
            let centers = raw
                .split(';')
                .map(|p| {
                    p.split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<f64>, _>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("`blob_centers`: {e}")))?;
            let dim = centers.first().map_or(0, |c| c.len());
            let c = centers.len();
            let spec = DatasetSpec::Blobs {
                n: kv.get("n", 1000)?,
                centers,
                sigma: kv.get("blob_sigma", 1.0)?,
            };
            (spec, dim, c)
        }
        "csv" => {
            let spec = DatasetSpec::Csv {
                path: kv.required("csv_path")?,
                test_path: kv.take("csv_test_path")?,
                label_column: kv.get("label_column", "label".to_string())?,
            };
            // dimensions of CSV data are only known after loading
            (spec, kv.required("input_dim")?, kv.required("num_classes")?)
        }
        other => return Err(Error::Config(format!("unknown dataset `{other}`"))),
    };

    let network = NetworkSpec::new(input_dim, kv.list("hidden_widths")?.unwrap_or_else(|| vec![64]), classes)
        .with_init_scale(kv.get("init_scale", std::f64::consts::SQRT_2)?)
        .with_ntk_parameterization(kv.get("ntk_parameterization", true)?)
        .with_bias(kv.get("bias", false)?);

    let d = TrainConfig::default();
    let train = TrainConfig {
        step_size: kv.get("step_size", d.step_size)?,
        max_steps: kv.get("max_steps", d.max_steps)?,
        early_stop_patience: kv.take("early_stop_patience")?,
        stop_below_loss: kv.take("stop_below_loss")?,
        ssl_mode: kv.get("ssl_mode", SslMode::None)?,
        consistency_weight: kv.get("consistency_weight", d.consistency_weight)?,
        perturbation_sigma: kv.get("perturbation_sigma", d.perturbation_sigma)?,
        ema_decay: kv.get("ema_decay", d.ema_decay)?,
        consistency_batch: kv.take("consistency_batch")?,
        trace_every: kv.get("trace_every", d.trace_every)?,
        instrument: kv.get("instrument", false)?,
        quadrature_points: kv.get("quadrature_points", d.quadrature_points)?,
        seed: 0,
        execution: d.execution,
    };

    let query_size = kv.get("query_size", 4usize)?;
    let scope = kv.get("scope", JacobianScope::LastLayer)?;
    let reduction = kv.get("reduction", Reduction::Traced)?;
    let positivity_threshold = kv.get("positivity_threshold", DEFAULT_POSITIVITY_THRESHOLD)?;
    let name: String = kv.get("strategy", "crc".to_string())?;
    let strategy = match name.as_str() {
        "random" => Strategy::Random,
        "entropy" => Strategy::Entropy,
        "confidence" => Strategy::Confidence,
        "egl" => Strategy::Egl { scope },
        "crc" => Strategy::Crc {
            group_size: kv.get("group_size", 1usize)?,
            scope,
            reduction,
            positivity_threshold,
        },
        "crc_balanced" => Strategy::CrcBalanced {
            per_class: kv.get("per_class", query_size / classes.max(1))?,
            scope,
            reduction,
            positivity_threshold,
        },
        other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
    };

    Ok(ExperimentConfig {
        schema_version,
        dataset,
        network,
        train,
        strategy,
        query_size,
        initial_per_class: kv.get("initial_per_class", 1usize)?,
        initial_indices: kv.list("initial_indices")?,
        num_acquisitions: kv.get("num_acquisitions", 5usize)?,
        seeds: kv.list("seeds")?.unwrap_or_else(|| vec![0]),
        transfer_reseed: kv.get("transfer_reseed", false)?,
        output_dir: PathBuf::from(kv.get("output_dir", "runs".to_string())?),
        write_traces: kv.get("write_traces", true)?,
    })
}
