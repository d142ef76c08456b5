use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::run::RunRecord;
use crate::nn::{argmax, softmax, Network, NetworkSpec, ParamVector};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub labeled_size: usize,
    pub runs: usize,
    pub mean_test_acc: f64,
    /// Population standard deviation over runs.
    pub std_test_acc: f64,
    pub mean_test_loss: f64,
}

/// Mean and population std of test accuracy per `(strategy, labeled size)`.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Insufficient("no run records to report".into()));
    }
    let mut groups: BTreeMap<(String, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for rec in records {
        for r in &rec.rounds {
            groups
                .entry((rec.strategy.clone(), r.labeled_size))
                .or_default()
                .push((r.test_acc, r.test_loss));
        }
    }
    Ok(groups
        .into_iter()
        .map(|((strategy, labeled_size), v)| {
            let n = v.len() as f64;
            let mean = v.iter().map(|a| a.0).sum::<f64>() / n;
            let var = v.iter().map(|a| (a.0 - mean).powi(2)).sum::<f64>() / n;
            SummaryRow {
                strategy,
                labeled_size,
                runs: v.len(),
                mean_test_acc: mean,
                std_test_acc: var.sqrt(),
                mean_test_loss: v.iter().map(|a| a.1).sum::<f64>() / n,
            }
        })
        .collect())
}

/// Writes the summary as CSV:
/// `strategy,labeled_size,runs,mean_test_acc,std_test_acc,mean_test_loss`.
pub fn emit_report<W: Write>(records: &[RunRecord], out: W) -> Result<Vec<SummaryRow>> {
    let rows = summarize(records)?;
    let mut w = csv::Writer::from_writer(out);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl std::str::FromStr for Bounds {
    type Err = Error;

    /// `x_min,x_max,y_min,y_max`
    fn from_str(s: &str) -> Result<Self> {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bounds `{s}`: {e}")))?;
        match v[..] {
            [x_min, x_max, y_min, y_max] if x_min < x_max && y_min < y_max => Ok(Bounds { x_min, x_max, y_min, y_max }),
            _ => Err(Error::InvalidArgument(format!(
                "bounds must be x_min,x_max,y_min,y_max with min < max, got `{s}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    pub class: usize,
    pub max_softmax: f64,
}

/// Predictions on an `r x r` grid, row-major with `y` outer and `x` inner.
pub fn decision_boundary_grid(params: &ParamVector, spec: &NetworkSpec, bounds: Bounds, resolution: usize) -> Result<Vec<GridPoint>> {
    if spec.input_dim != 2 {
        return Err(Error::Dimension(format!(
            "decision boundaries need 2-D inputs, network has {}",
            spec.input_dim
        )));
    }
    if resolution < 2 {
        return Err(Error::InvalidArgument(format!("resolution must be at least 2, got {resolution}")));
    }
    let net = Network::new(spec, params)?;
    let step = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (resolution - 1) as f64;
    let mut ws = net.workspace();
    let mut out = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        let y = step(bounds.y_min, bounds.y_max, j);
        for i in 0..resolution {
            let x = step(bounds.x_min, bounds.x_max, i);
            net.forward_ws(&[x, y], &mut ws)?;
            let p = softmax(ws.output());
            let class = argmax(ws.output());
            out.push(GridPoint {
                x,
                y,
                class,
                max_softmax: p[class],
            });
        }
    }
    Ok(out)
}

/// CSV columns `x,y,class,max_softmax`.
pub fn write_grid_csv<W: Write>(grid: &[GridPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "class", "max_softmax"])?;
    for g in grid {
        w.write_record([g.x.to_string(), g.y.to_string(), g.class.to_string(), g.max_softmax.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
