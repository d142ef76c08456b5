//! Distribution of the smallest positive Gram eigenvalue over random subsets.

use std::io::Write;

use rand::seq::index::sample;
use serde::Serialize;

use super::stats::quantile;
use crate::linalg::Matrix;
use crate::nn::{JacobianScope, Network, NetworkSpec, ParamVector};
use crate::ntk::{GradientFeatures, Reduction};
use crate::par::{self, Execution};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationRow {
    pub size: usize,
    pub subsets: usize,
    /// Subsets whose Gram matrix has no eigenvalue above the positivity cut-off.
    pub degenerate: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct ConcentrationOptions {
    pub subsets: usize,
    pub scope: JacobianScope,
    pub reduction: Reduction,
    pub positivity_threshold: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for ConcentrationOptions {
    fn default() -> Self {
        ConcentrationOptions {
            subsets: 100,
            scope: JacobianScope::LastLayer,
            reduction: Reduction::Traced,
            positivity_threshold: crate::ntk::DEFAULT_POSITIVITY_THRESHOLD,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

/// For each set size, the smallest positive eigenvalue of the Gram matrix over
/// `opts.subsets` uniformly drawn subsets of the rows of `x`.
pub fn eig_concentration_report(
    x: &Matrix,
    params: &ParamVector,
    spec: &NetworkSpec,
    sizes: &[usize],
    opts: &ConcentrationOptions,
) -> Result<Vec<ConcentrationRow>> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument("need at least two set sizes".into()));
    }
    if let Some(&s) = sizes.iter().find(|&&s| s == 0 || s > x.rows()) {
        return Err(Error::InvalidArgument(format!("set size {s} not in 1..={}", x.rows())));
    }
    let net = Network::new(spec, params)?;
    let features = GradientFeatures::compute(&net, x, opts.scope, opts.reduction, opts.execution)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for (k, &size) in sizes.iter().enumerate() {
        let mut rng = seed::rng(seed::derive(opts.seed, seed::Stream::Subsets, k as u64));
        let draws: Vec<Vec<usize>> = (0..opts.subsets).map(|_| sample(&mut rng, x.rows(), size).into_vec()).collect();
        let scores = par::map_slice(opts.execution, &draws, |d| features.gram(d).min_positive(opts.positivity_threshold));
        let scores: Vec<Option<f64>> = scores.into_iter().collect::<Result<_>>()?;
        let values: Vec<f64> = scores.iter().flatten().cloned().collect();
        rows.push(ConcentrationRow {
            size,
            subsets: opts.subsets,
            degenerate: scores.len() - values.len(),
            min: quantile(&values, 0.0),
            q25: quantile(&values, 0.25),
            median: quantile(&values, 0.5),
            q75: quantile(&values, 0.75),
            max: quantile(&values, 1.0),
            values,
        });
    }
    Ok(rows)
}

/// CSV columns `size,subsets,degenerate,min,q25,median,q75,max`.
pub fn write_concentration_csv<W: Write>(rows: &[ConcentrationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    #[test]
    fn singletons_score_their_self_kernel() {
        let spec = NetworkSpec::new(2, vec![16], 3);
        let p = init_network(&spec, 1).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.5], [-0.3, 0.8], [0.2, -1.0]]).unwrap();
        let opts = ConcentrationOptions {
            subsets: 30,
            ..Default::default()
        };
        let rows = eig_concentration_report(&x, &p, &spec, &[1, 2], &opts).unwrap();
        let net = Network::new(&spec, &p).unwrap();
        let selfk: Vec<f64> = (0..3)
            .map(|i| net.jacobian(x.row(i), JacobianScope::LastLayer).unwrap().values.frobenius_norm().powi(2))
            .collect();
        for v in &rows[0].values {
            assert!(selfk.iter().any(|s| (s - v).abs() <= 1e-12 * s));
        }
        assert!(eig_concentration_report(&x, &p, &spec, &[1], &opts).is_err());
    }

    #[test]
    fn duplicated_points_do_not_report_the_zero_mode() {
        let spec = NetworkSpec::new(2, vec![16], 2);
        let p = init_network(&spec, 1).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.5], [1.0, 0.5]]).unwrap();
        let rows = eig_concentration_report(&x, &p, &spec, &[1, 2], &ConcentrationOptions::default()).unwrap();
        // the pair is rank one: its only positive eigenvalue is twice the self kernel
        let selfk = rows[0].values[0];
        for v in &rows[1].values {
            assert!((v - 2.0 * selfk).abs() < 1e-9 * selfk);
        }
    }
}
