//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Relative asymmetry accepted before an input is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Default cut-off for "positive" eigenvalues, relative to the largest one.
pub const DEFAULT_POSITIVITY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Nonincreasing.
    pub eigenvalues: Vec<f64>,
    pub min_positive: Option<f64>,
    /// Relative positivity threshold used to compute `min_positive`.
    pub tolerance_used: f64,
}

impl Spectrum {
    pub fn max(&self) -> Option<f64> {
        self.eigenvalues.first().copied()
    }

    pub fn min(&self) -> Option<f64> {
        self.eigenvalues.last().copied()
    }

    /// Writes `index,eigenvalue` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "eigenvalue"])?;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.write_record([i.to_string(), format!("{v:e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eigenvalues (nonincreasing) with unit eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.eigenvectors.rows()).map(|i| self.eigenvectors[(i, k)]).collect()
    }
}

fn check_symmetric(a: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::NonFinite("matrix passed to eigensolver".into()));
    }
    let asym = a.max_asymmetry();
    if asym > SYMMETRY_TOLERANCE * a.max_abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// In-place cyclic Jacobi on a symmetric `n x n` row-major buffer. On return
/// the diagonal holds the eigenvalues; `v` (if given) accumulates the rotations.
fn jacobi(a: &mut [f64], n: usize, mut v: Option<&mut [f64]>) -> Result<()> {
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if fro == 0.0 {
        return Ok(());
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * fro {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // skip entries already negligible relative to both diagonals
                if apq.abs() < 1e-300 || (apq.abs() * 1e18 < app.abs() && apq.abs() * 1e18 < aqq.abs()) {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let nrp = c * arp - s * arq;
                    let nrq = s * arp + c * arq;
                    a[r * n + p] = nrp;
                    a[p * n + r] = nrp;
                    a[r * n + q] = nrq;
                    a[q * n + r] = nrq;
                }
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if let Some(v) = v.as_deref_mut() {
                    for r in 0..n {
                        let vrp = v[r * n + p];
                        let vrq = v[r * n + q];
                        v[r * n + p] = c * vrp - s * vrq;
                        v[r * n + q] = s * vrp + c * vrq;
                    }
                }
            }
        }
    }
    Err(Error::NoConvergence(MAX_SWEEPS))
}

/// All eigenvalues of a symmetric matrix, nonincreasing.
pub fn symmetric_eigenvalues(a: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut work = a.as_slice().to_vec();
    jacobi(&mut work, n, None)?;
    let mut vals: Vec<f64> = (0..n).map(|i| work[i * n + i]).collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// Full eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut work = a.as_slice().to_vec();
    let mut v = Matrix::identity(n);
    jacobi(&mut work, n, Some(v.as_mut_slice()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| work[j * n + j].total_cmp(&work[i * n + i]));
    let eigenvalues = order.iter().map(|&i| work[i * n + i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, k)] = v[(r, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest eigenvalue strictly above `threshold * lambda_max`.
pub fn min_positive(eigenvalues: &[f64], threshold: f64) -> Option<f64> {
    let max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return None;
    }
    let cut = threshold * max;
    eigenvalues
        .iter()
        .cloned()
        .filter(|&v| v > cut)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
}

pub fn spectrum_of(a: &Matrix, threshold: f64) -> Result<Spectrum> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "positivity threshold must be positive, got {threshold}"
        )));
    }
    let eigenvalues = symmetric_eigenvalues(a)?;
    Ok(Spectrum {
        min_positive: min_positive(&eigenvalues, threshold),
        eigenvalues,
        tolerance_used: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fixtures_match_characteristic_polynomials() {
        let id = Matrix::identity(3);
        assert_eq!(symmetric_eigenvalues(&id).unwrap(), vec![1.0, 1.0, 1.0]);
        // l^2 - 4l + 3
        let a = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let v = symmetric_eigenvalues(&a).unwrap();
        assert_abs_diff_eq!(v[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 1.0, epsilon = 1e-12);
        // l^2 - 2l
        let b = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let v = symmetric_eigenvalues(&b).unwrap();
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn min_positive_excludes_null_modes() {
        assert_eq!(min_positive(&[1.0, 1.0, 1.0], 1e-8), Some(1.0));
        assert_eq!(min_positive(&[2.0, 1e-17], 1e-8), Some(2.0));
        assert_eq!(min_positive(&[0.0, 0.0], 1e-8), None);
        assert!(spectrum_of(&Matrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(symmetric_eigenvalues(&a), Err(Error::NotSymmetric(_))));
        assert!(symmetric_eigenvalues(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, -1.0], [0.5, -1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        let vtv = e.eigenvectors.transpose().matmul(&e.eigenvectors).unwrap();
        assert!(vtv.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-13);
        for k in 0..3 {
            let v = e.vector(k);
            let av = a.matvec(&v).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(av[i], e.eigenvalues[k] * v[i], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_csv_has_one_row_per_eigenvalue() {
        let s = spectrum_of(&Matrix::identity(4), 1e-8).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("index,eigenvalue"));
    }
}
