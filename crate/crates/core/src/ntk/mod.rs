//! Empirical neural tangent kernel (Gram) matrices.
//!
//! Entry `(i, j)` of the blocked Gram matrix is the `C x C` block
//! `J(x_i) J(x_j)^T`; the traced reduction replaces every block by its trace,
//! giving an `n x n` matrix. Both are Gram matrices of "gradient feature" rows:
//! one row per (sample, class) when blocked, one flattened Jacobian per sample
//! when traced. Jacobians are computed once per sample and reused.

pub mod eigen;

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::nn::{JacobianScope, Network, NetworkSpec, ParamVector};
use crate::par::Execution;
use crate::{Error, Result};

pub use eigen::{
    min_positive, spectrum_of, symmetric_eigen, symmetric_eigenvalues, EigenDecomposition, Spectrum,
    DEFAULT_POSITIVITY_THRESHOLD,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Blocked,
    #[default]
    Traced,
}

impl std::str::FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocked" => Ok(Reduction::Blocked),
            "traced" => Ok(Reduction::Traced),
            other => Err(Error::InvalidArgument(format!("unknown reduction `{other}`"))),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Reduction::Blocked => "blocked",
            Reduction::Traced => "traced",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub n: usize,
    /// `C` when blocked, 1 when traced.
    pub block_dim: usize,
    pub values: Matrix,
    pub scope: JacobianScope,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.values.rows()
    }

    pub fn spectrum(&self, threshold: f64) -> Result<Spectrum> {
        spectrum_of(&self.values, threshold)
    }

    pub fn min_positive(&self, threshold: f64) -> Result<Option<f64>> {
        Ok(self.spectrum(threshold)?.min_positive)
    }
}

/// Gradient feature rows for a fixed set of samples.
#[derive(Clone, Debug)]
pub struct GradientFeatures {
    rows: Matrix,
    block_dim: usize,
    scope: JacobianScope,
}

impl GradientFeatures {
    pub fn compute(
        net: &Network<'_>,
        x: &Matrix,
        scope: JacobianScope,
        reduction: Reduction,
        exec: Execution,
    ) -> Result<Self> {
        let jacobians = net.jacobians(x, scope, exec)?;
        let c = net.spec.num_classes;
        let width = jacobians.first().map_or(0, |j| j.cols());
        let (block_dim, cols) = match reduction {
            Reduction::Blocked => (c, width),
            Reduction::Traced => (1, c * width),
        };
        let mut data = Vec::with_capacity(jacobians.len() * c * width);
        for j in jacobians {
            data.extend(j.values.into_vec());
        }
        Ok(GradientFeatures {
            rows: Matrix::from_vec(x.rows() * block_dim, cols, data)?,
            block_dim,
            scope,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.rows.rows() / self.block_dim.max(1)
    }

    fn sample_rows(&self, s: usize) -> std::ops::Range<usize> {
        s * self.block_dim..(s + 1) * self.block_dim
    }

    /// Gram matrix over `samples` (indices into the computed set, repeats allowed).
    pub fn gram(&self, samples: &[usize]) -> GramMatrix {
        let rows: Vec<usize> = samples.iter().flat_map(|&s| self.sample_rows(s)).collect();
        let m = rows.len();
        let mut values = Matrix::zeros(m, m);
        for a in 0..m {
            let ra = self.rows.row(rows[a]);
            for b in a..m {
                let v = dot(ra, self.rows.row(rows[b]));
                values[(a, b)] = v;
                values[(b, a)] = v;
            }
        }
        GramMatrix {
            n: samples.len(),
            block_dim: self.block_dim,
            values,
            scope: self.scope,
        }
    }

    /// Gram matrix over `base_samples ++ extra`, reusing `base` (the Gram over
    /// `base_samples`) for the leading block.
    pub fn gram_extend(&self, base: &GramMatrix, base_samples: &[usize], extra: &[usize]) -> GramMatrix {
        debug_assert_eq!(base.n, base_samples.len());
        let base_rows: Vec<usize> = base_samples.iter().flat_map(|&s| self.sample_rows(s)).collect();
        let extra_rows: Vec<usize> = extra.iter().flat_map(|&s| self.sample_rows(s)).collect();
        let nb = base_rows.len();
        let m = nb + extra_rows.len();
        let mut values = Matrix::zeros(m, m);
        for a in 0..nb {
            values.row_mut(a)[..nb].copy_from_slice(&base.values.row(a)[..nb]);
        }
        for (e, &re) in extra_rows.iter().enumerate() {
            let a = nb + e;
            let row = self.rows.row(re);
            for (b, &rb) in base_rows.iter().chain(extra_rows[..=e].iter()).enumerate() {
                let v = dot(row, self.rows.row(rb));
                values[(a, b)] = v;
                values[(b, a)] = v;
            }
        }
        GramMatrix {
            n: base_samples.len() + extra.len(),
            block_dim: self.block_dim,
            values,
            scope: self.scope,
        }
    }
}

pub fn empirical_ntk_with(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &Matrix,
    scope: JacobianScope,
    reduction: Reduction,
    exec: Execution,
) -> Result<GramMatrix> {
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("empirical NTK needs at least one sample".into()));
    }
    let net = Network::new(spec, params)?;
    let features = GradientFeatures::compute(&net, x, scope, reduction, exec)?;
    let all: Vec<usize> = (0..x.rows()).collect();
    let gram = features.gram(&all);
    if !gram.values.all_finite() {
        return Err(Error::NonFinite("gram matrix".into()));
    }
    Ok(gram)
}

pub fn empirical_ntk(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &Matrix,
    scope: JacobianScope,
    reduction: Reduction,
) -> Result<GramMatrix> {
    empirical_ntk_with(params, spec, x, scope, reduction, Execution::default())
}

pub fn eigen_spectrum(g: &GramMatrix) -> Result<Spectrum> {
    g.spectrum(DEFAULT_POSITIVITY_THRESHOLD)
}

pub fn min_positive_eigenvalue(g: &GramMatrix, threshold: f64) -> Result<Option<f64>> {
    g.min_positive(threshold)
}
