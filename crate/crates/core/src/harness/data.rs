//! Synthetic generators and CSV datasets.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::pool::{LabeledSet, Pool};
use crate::seed::{self, Stream};
use crate::{Error, Result};

/// Horizontal distance between the centres of neighbouring moon arms.
pub const MOON_SPACING: f64 = 1.25;

/// Centre and orientation of arm `k` out of `arms`: the arc is
/// `centre + sign * (cos t, sin t)` for `t` in `[0, pi]`. The layout is
/// centred on the origin, which keeps the input Gram well conditioned.
pub fn moon_arc(k: usize, arms: usize) -> ([f64; 2], f64) {
    let centre = [
        MOON_SPACING * (k as f64 - (arms as f64 - 1.0) / 2.0),
        0.5 * (k % 2) as f64 - 0.25,
    ];
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (centre, sign)
}

/// Point of arm `k` out of `arms` at arc parameter `t`.
pub fn moon_point(k: usize, arms: usize, t: f64) -> [f64; 2] {
    let (c, s) = moon_arc(k, arms);
    [c[0] + s * t.cos(), c[1] + s * t.sin()]
}

/// Distance from `p` to the arc of arm `k` out of `arms`.
pub fn distance_to_arc(k: usize, arms: usize, p: [f64; 2]) -> f64 {
    let (c, s) = moon_arc(k, arms);
    // in the arm's local frame the arc is the upper unit half circle
    let (u, v) = (s * (p[0] - c[0]), s * (p[1] - c[1]));
    if v >= 0.0 {
        ((u * u + v * v).sqrt() - 1.0).abs()
    } else {
        let d1 = ((u - 1.0).powi(2) + v * v).sqrt();
        let d2 = ((u + 1.0).powi(2) + v * v).sqrt();
        d1.min(d2)
    }
}

/// Interleaved half-circle arms in 2-D. Sample `i` belongs to arm `i % arms`;
/// its class is the arm index, or the arm parity when `binarize` is set.
pub fn generate_moons(n: usize, noise_sigma: f64, arms: usize, binarize: bool, seed: u64) -> Result<Pool> {
    if arms != 2 && arms != 4 {
        return Err(Error::InvalidArgument(format!("moons need 2 or 4 arms, got {arms}")));
    }
    if n < arms {
        return Err(Error::InvalidArgument(format!("{n} samples cannot cover {arms} arms")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise must be non-negative, got {noise_sigma}")));
    }
    let mut rng = seed::rng(seed);
    let arc = Uniform::new_inclusive(0.0, PI);
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % arms;
        let mut p = moon_point(k, arms, arc.sample(&mut rng));
        if noise_sigma > 0.0 {
            let d = Normal::new(0.0, noise_sigma).expect("sigma checked");
            p[0] += d.sample(&mut rng);
            p[1] += d.sample(&mut rng);
        }
        data.extend_from_slice(&p);
        labels.push(if binarize { k % 2 } else { k });
    }
    let classes = if binarize { 2 } else { arms };
    Pool::new(Matrix::from_vec(n, 2, data)?, labels, classes)
}

/// Isotropic Gaussian clusters; sample `i` belongs to class `i % C`.
pub fn generate_blobs(n: usize, num_classes: usize, centers: &[Vec<f64>], sigma: f64, seed: u64) -> Result<Pool> {
    if num_classes == 0 || centers.len() != num_classes {
        return Err(Error::InvalidArgument(format!(
            "{} centres given for {num_classes} classes",
            centers.len()
        )));
    }
    let dim = centers[0].len();
    if dim == 0 || centers.iter().any(|c| c.len() != dim) {
        return Err(Error::Dimension("blob centres must share a non-zero dimension".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be non-negative, got {sigma}")));
    }
    let mut rng = seed::rng(seed);
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        for &m in &centers[c] {
            let z: f64 = if sigma > 0.0 { rng.sample(rand_distr::StandardNormal) } else { 0.0 };
            data.push(m + sigma * z);
        }
        labels.push(c);
    }
    Pool::new(Matrix::from_vec(n, dim, data)?, labels, num_classes)
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a headed numeric CSV. Rows are numbered from 1, excluding the header.
pub fn read_csv_dataset<R: Read>(reader: R, label_column: &str) -> Result<Pool> {
    let mut classes = Vec::new();
    read_with_classes(reader, label_column, &mut classes, true)
}

/// `classes` holds label strings in index order. With `extend` unknown labels
/// get the next index, otherwise they are an error.
fn read_with_classes<R: Read>(reader: R, label_column: &str, classes: &mut Vec<String>, extend: bool) -> Result<Pool> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(0, "header", e.to_string()))?
        .clone();
    let label_at = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| parse_err(0, label_column, "label column not found in header"))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(parse_err(0, "header", "no feature columns"));
    }
    let mut index: HashMap<String, usize> = classes.iter().cloned().zip(0..).collect();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, "record", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                row,
                "record",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_at {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &headers[c], format!("non-numeric value `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &headers[c], format!("non-finite value `{cell}`")));
            }
            data.push(v);
        }
        let key = &record[label_at];
        if key.is_empty() {
            return Err(parse_err(row, label_column, "empty label"));
        }
        let label = match index.get(key) {
            Some(&l) => l,
            None if extend => {
                classes.push(key.to_string());
                index.insert(key.to_string(), classes.len() - 1);
                classes.len() - 1
            }
            None => return Err(parse_err(row, label_column, format!("label `{key}` not seen in training data"))),
        };
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(parse_err(0, "record", "no data rows"));
    }
    let n = labels.len();
    Pool::new(Matrix::from_vec(n, dim, data)?, labels, classes.len())
}

pub fn load_csv_dataset(path: &Path, label_column: &str) -> Result<Pool> {
    let file = std::fs::File::open(path)?;
    read_csv_dataset(file, label_column)
}

/// Writes `x0, x1, ..., label`, one row per sample.
pub fn write_csv_dataset<W: Write>(features: &Matrix, labels: &[usize], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..features.cols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, l) in features.iter_rows().zip(labels) {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        rec.push(l.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Where samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Moons {
        n: usize,
        noise: f64,
        arms: usize,
        binarize: bool,
    },
    Blobs {
        n: usize,
        centers: Vec<Vec<f64>>,
        sigma: f64,
    },
    Csv {
        path: String,
        /// Held-out file; without it the rows are split in half at random.
        test_path: Option<String>,
        label_column: String,
    },
}

/// A training pool and a disjoint held-out test set.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub pool: Pool,
    pub test: LabeledSet,
}

fn to_labeled(pool: Pool) -> LabeledSet {
    LabeledSet {
        features: pool.features().clone(),
        labels: pool.all_labels().to_vec(),
        num_classes: pool.num_classes(),
    }
}

impl DatasetSpec {
    /// Generators draw the pool and an equally sized test set from independent streams.
    pub fn build(&self, seed: u64) -> Result<Dataset> {
        let train = seed::derive(seed, Stream::TrainData, 0);
        let test = seed::derive(seed, Stream::TestData, 0);
        match self {
            DatasetSpec::Moons { n, noise, arms, binarize } => Ok(Dataset {
                pool: generate_moons(*n, *noise, *arms, *binarize, train)?,
                test: to_labeled(generate_moons(*n, *noise, *arms, *binarize, test)?),
            }),
            DatasetSpec::Blobs { n, centers, sigma } => Ok(Dataset {
                pool: generate_blobs(*n, centers.len(), centers, *sigma, train)?,
                test: to_labeled(generate_blobs(*n, centers.len(), centers, *sigma, test)?),
            }),
            DatasetSpec::Csv {
                path,
                test_path,
                label_column,
            } => {
                match test_path {
                    Some(tp) => {
                        let mut classes = Vec::new();
                        let pool = read_with_classes(std::fs::File::open(path)?, label_column, &mut classes, true)?;
                        let test = read_with_classes(std::fs::File::open(tp)?, label_column, &mut classes, false)?;
                        if test.input_dim() != pool.input_dim() {
                            return Err(Error::Dimension(format!(
                                "test file has {} features, training file {}",
                                test.input_dim(),
                                pool.input_dim()
                            )));
                        }
                        Ok(Dataset {
                            test: to_labeled(test),
                            pool,
                        })
                    }
                    None => split_half(&load_csv_dataset(Path::new(path), label_column)?, seed::derive(seed, Stream::TestData, 1)),
                }
            }
        }
    }
}

fn split_half(all: &Pool, seed: u64) -> Result<Dataset> {
    let n = all.len();
    if n < 2 {
        return Err(Error::Insufficient("need at least two rows to split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut seed::rng(seed));
    let (tr, te) = order.split_at(n / 2);
    let mut tr = tr.to_vec();
    let mut te = te.to_vec();
    tr.sort_unstable();
    te.sort_unstable();
    let pick = |idx: &[usize]| -> (Matrix, Vec<usize>) {
        (
            all.features().select_rows(idx),
            idx.iter().map(|&i| all.all_labels()[i]).collect(),
        )
    };
    let (xf, yf) = pick(&tr);
    let (xt, yt) = pick(&te);
    Ok(Dataset {
        pool: Pool::new(xf, yf, all.num_classes())?,
        test: LabeledSet::new(xt, yt, all.num_classes())?,
    })
}

/// Labels `per_class` samples of every class, chosen uniformly at random.
///
/// This is protocol setup rather than an acquisition strategy, so it reads the
/// generator's labels directly instead of going through the counted oracle.
pub fn initial_pool(pool: &Pool, per_class: usize, seed: u64) -> Result<Pool> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); pool.num_classes()];
    for &i in pool.unlabeled() {
        members[pool.all_labels()[i]].push(i);
    }
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::with_capacity(per_class * pool.num_classes());
    for (c, m) in members.iter().enumerate() {
        if m.len() < per_class {
            return Err(Error::ClassExhausted {
                class: c,
                available: m.len(),
                required: per_class,
            });
        }
        let picks = rand::seq::index::sample(&mut rng, m.len(), per_class);
        chosen.extend(picks.iter().map(|k| m[k]));
    }
    let mut out = pool.clone();
    out.acquire(&chosen)?;
    Ok(out)
}

/// For every moon arm, the pool sample closest to the middle of its arc.
pub fn moon_pivots(pool: &Pool, arms: usize) -> Result<Vec<usize>> {
    if pool.input_dim() != 2 {
        return Err(Error::Dimension("moon pivots need 2-D inputs".into()));
    }
    (0..arms)
        .map(|k| {
            let mid = moon_point(k, arms, PI / 2.0);
            (0..pool.len())
                .min_by(|&a, &b| {
                    let da = dist2(pool.features().row(a), &mid);
                    let db = dist2(pool.features().row(b), &mid);
                    da.total_cmp(&db)
                })
                .ok_or_else(|| Error::Insufficient("empty pool".into()))
        })
        .collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
