use super::{TraceRow, TrainingTrace};
use crate::linalg::{dot, Matrix};
use crate::nn::{Network, NetworkSpec, ParamVector};
use crate::par::Execution;
use crate::{Error, Result};

/// `xi = int_0^eta g^T (g - grad L(theta - gamma g)) d gamma` with `g = grad L(theta)`,
/// by composite Simpson quadrature on `quadrature_points` nodes.
pub fn compute_xi(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &Matrix,
    y: &Matrix,
    eta: f64,
    quadrature_points: usize,
) -> Result<f64> {
    let exec = Execution::default();
    let g = Network::new(spec, params)?.grad_mse(x, y, exec)?;
    xi_with_grad(params, spec, x, y, &g, eta, quadrature_points, exec)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn xi_with_grad(
    params: &ParamVector,
    spec: &NetworkSpec,
    x: &Matrix,
    y: &Matrix,
    g: &[f64],
    eta: f64,
    quadrature_points: usize,
    exec: Execution,
) -> Result<f64> {
    if quadrature_points < 3 || quadrature_points % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "quadrature_points must be odd and at least 3, got {quadrature_points}"
        )));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let gg = dot(g, g);
    let h = eta / (quadrature_points - 1) as f64;
    let mut theta = params.values().to_vec();
    let mut sum = 0.0;
    // the integrand vanishes at gamma = 0
    for j in 1..quadrature_points {
        let gamma = j as f64 * h;
        for ((t, p), gi) in theta.iter_mut().zip(params.values()).zip(g) {
            *t = p - gamma * gi;
        }
        let shifted = Network::from_slice(spec, &theta)?.grad_mse(x, y, exec)?;
        let value = gg - dot(g, &shifted);
        if !value.is_finite() {
            return Err(Error::NonFinite("xi integrand".into()));
        }
        let weight = if j == quadrature_points - 1 {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += weight * value;
    }
    Ok(sum * h / 3.0)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RecursionReport {
    /// `(step, r_t)` with `r_t = L_{t+1} - [(1 - 2 eta lambda_min) L_t + xi_t + eps_t]`.
    pub residuals: Vec<(usize, f64)>,
    /// `(step, L_{t+1} - [L_t - e_t^T df_t + eps_t])`.
    pub identity_residuals: Vec<(usize, f64)>,
    /// Largest `r_t`.
    pub max_residual: f64,
    /// Largest `r_t / L_t`.
    pub max_relative_residual: f64,
    /// Largest `|identity residual| / L_t`.
    pub max_relative_identity: f64,
}

/// Recomputes the one-step recursion residuals from consecutive traced rows.
///
/// Every instrumented row must be followed by the row of the very next step.
pub fn verify_recursion(trace: &TrainingTrace) -> Result<RecursionReport> {
    let eta = trace.step_size;
    let mut report = RecursionReport {
        max_residual: f64::NEG_INFINITY,
        max_relative_residual: f64::NEG_INFINITY,
        max_relative_identity: 0.0,
        ..Default::default()
    };
    for pair in trace.rows.windows(2) {
        let (cur, next): (&TraceRow, &TraceRow) = (&pair[0], &pair[1]);
        let (Some(lambda), Some(xi), Some(eps), Some(cross)) = (cur.lambda_min, cur.xi, cur.eps, cur.cross) else {
            continue;
        };
        if next.step != cur.step + 1 {
            return Err(Error::InvalidArgument(format!(
                "cadence mismatch: step {} is followed by step {}, recursion needs consecutive steps",
                cur.step, next.step
            )));
        }
        let r = next.loss - ((1.0 - 2.0 * eta * lambda) * cur.loss + xi + eps);
        let id = next.loss - (cur.loss - cross + eps);
        let scale = cur.loss.max(f64::MIN_POSITIVE);
        report.max_residual = report.max_residual.max(r);
        report.max_relative_residual = report.max_relative_residual.max(r / scale);
        report.max_relative_identity = report.max_relative_identity.max(id.abs() / scale);
        report.residuals.push((cur.step, r));
        report.identity_residuals.push((cur.step, id));
    }
    if report.residuals.is_empty() {
        return Err(Error::Insufficient("no instrumented consecutive steps in trace".into()));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConvergenceCriterion {
    /// First traced step at which the test loss (or the training loss when no
    /// test loss was recorded) attains its minimum over the run.
    GlobalMinTestLoss,
    /// First traced step with training loss below the threshold; the last
    /// traced step when it is never reached.
    TrainLossBelow(f64),
}

pub fn epochs_to_convergence(trace: &TrainingTrace, criterion: ConvergenceCriterion) -> Result<usize> {
    let last = trace
        .rows
        .last()
        .ok_or_else(|| Error::Insufficient("empty trace".into()))?;
    match criterion {
        ConvergenceCriterion::GlobalMinTestLoss => {
            let value = |r: &TraceRow| r.test_loss.unwrap_or(r.loss);
            let mut best = &trace.rows[0];
            for r in &trace.rows[1..] {
                if value(r) < value(best) {
                    best = r;
                }
            }
            Ok(best.step)
        }
        ConvergenceCriterion::TrainLossBelow(thr) => Ok(trace
            .rows
            .iter()
            .find(|r| r.loss < thr)
            .map_or(last.step, |r| r.step)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;

    fn trace_of(losses: &[f64]) -> TrainingTrace {
        TrainingTrace {
            step_size: 0.1,
            rows: losses
                .iter()
                .enumerate()
                .map(|(i, &l)| TraceRow {
                    step: i,
                    loss: l,
                    ..Default::default()
                })
                .collect(),
        }
    }

    #[test]
    fn convergence_step_examples() {
        let dec: Vec<f64> = (0..10).map(|i| 10.0 - i as f64).collect();
        assert_eq!(epochs_to_convergence(&trace_of(&dec), ConvergenceCriterion::GlobalMinTestLoss).unwrap(), 9);
        assert_eq!(epochs_to_convergence(&trace_of(&[2.0; 6]), ConvergenceCriterion::GlobalMinTestLoss).unwrap(), 0);
        let mut bowl: Vec<f64> = (0..30).map(|i| (i as f64 - 17.0).powi(2) + 1.0).collect();
        bowl[29] = 5.0;
        let mut t = trace_of(&vec![1.0; 30]);
        for (r, v) in t.rows.iter_mut().zip(&bowl) {
            r.test_loss = Some(*v);
        }
        assert_eq!(epochs_to_convergence(&t, ConvergenceCriterion::GlobalMinTestLoss).unwrap(), 17);
        assert_eq!(epochs_to_convergence(&trace_of(&dec), ConvergenceCriterion::TrainLossBelow(4.5)).unwrap(), 6);
        assert_eq!(epochs_to_convergence(&trace_of(&dec), ConvergenceCriterion::TrainLossBelow(0.0)).unwrap(), 9);
        assert!(epochs_to_convergence(&trace_of(&[]), ConvergenceCriterion::GlobalMinTestLoss).is_err());
    }

    #[test]
    fn xi_is_exact_for_a_quadratic_loss() {
        // linear model: grad L(theta - gamma g) = g - gamma J^T J g, so xi = eta^2/2 ||J g||^2
        let spec = NetworkSpec::linear(3, 2);
        let p = init_network(&spec, 4).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.5, -0.2], [0.3, -1.0, 0.8], [-0.6, 0.1, 0.4]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]).unwrap();
        let net = Network::new(&spec, &p).unwrap();
        let g = net.grad_mse(&x, &y, Execution::Sequential).unwrap();
        let mut jg_sq = 0.0;
        for i in 0..x.rows() {
            let j = net.jacobian(x.row(i), crate::nn::JacobianScope::Full).unwrap();
            for row in j.values.iter_rows() {
                jg_sq += dot(row, &g).powi(2);
            }
        }
        let eta = 0.07;
        let expected = 0.5 * eta * eta * jg_sq;
        for n in [3, 5, 11] {
            let xi = compute_xi(&p, &spec, &x, &y, eta, n).unwrap();
            assert!((xi - expected).abs() < 1e-10 * expected.max(1.0), "{xi} vs {expected}");
        }
        assert_eq!(compute_xi(&p, &spec, &x, &y, 0.0, 5).unwrap(), 0.0);
        assert!(compute_xi(&p, &spec, &x, &y, eta, 4).is_err());
    }

    #[test]
    fn xi_quadrature_refinement_is_stable() {
        let spec = NetworkSpec::new(2, vec![64], 1).with_init_scale(std::f64::consts::SQRT_2);
        let p = init_network(&spec, 4).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.5], [0.3, -1.0], [-0.6, 0.1]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [-1.0], [0.5]]).unwrap();
        let a = compute_xi(&p, &spec, &x, &y, 0.01, 9).unwrap();
        let b = compute_xi(&p, &spec, &x, &y, 0.01, 17).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn cadence_mismatch_is_reported() {
        let mut t = trace_of(&[1.0, 0.9, 0.8]);
        t.rows[1].step = 5;
        for r in &mut t.rows {
            r.lambda_min = Some(0.1);
            r.xi = Some(0.0);
            r.eps = Some(0.0);
            r.cross = Some(0.0);
        }
        assert!(verify_recursion(&t).is_err());
        assert!(verify_recursion(&trace_of(&[1.0, 0.5])).is_err());
    }
}
