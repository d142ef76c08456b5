//! Fixed-kernel gradient-flow dynamics and the network-vs-kernel gap.

use serde::Serialize;

use crate::linalg::{dot, norm, Matrix};
use crate::nn::{init_network, JacobianScope, Network, NetworkSpec, ParamVector};
use crate::ntk::eigen::{symmetric_eigen, EigenDecomposition};
use crate::ntk::{empirical_ntk_with, Reduction};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// `df/dt = -K (f - y)` from `f(0) = f0`, solved in the eigenbasis of `K`.
#[derive(Clone, Debug)]
pub struct KernelFlow {
    pub kernel: Matrix,
    pub targets: Vec<f64>,
    pub initial: Vec<f64>,
    pub eigen: EigenDecomposition,
    /// Error coordinates `v_i^T (f0 - y)`.
    coords: Vec<f64>,
}

impl KernelFlow {
    pub fn new(kernel: Matrix, targets: Vec<f64>, initial: Vec<f64>) -> Result<Self> {
        let n = kernel.rows();
        if !kernel.is_square() || targets.len() != n || initial.len() != n {
            return Err(Error::Dimension(format!(
                "kernel {}x{}, targets {}, initial outputs {}",
                kernel.rows(),
                kernel.cols(),
                targets.len(),
                initial.len()
            )));
        }
        let eigen = symmetric_eigen(&kernel)?;
        let scale = kernel.frobenius_norm().max(f64::MIN_POSITIVE);
        if let Some(&low) = eigen.eigenvalues.last() {
            if low < -1e-10 * scale {
                return Err(Error::InvalidArgument(format!(
                    "kernel is not positive semidefinite (eigenvalue {low:e})"
                )));
            }
        }
        for k in 0..n {
            let v = eigen.vector(k);
            let kv = kernel.matvec(&v)?;
            let r: f64 = kv
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - eigen.eigenvalues[k] * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if r > 1e-10 * scale {
                return Err(Error::NoConvergence(0));
            }
        }
        let err: Vec<f64> = initial.iter().zip(&targets).map(|(f, y)| f - y).collect();
        let coords = (0..n).map(|k| dot(&eigen.vector(k), &err)).collect();
        Ok(KernelFlow {
            kernel,
            targets,
            initial,
            eigen,
            coords,
        })
    }

    pub fn dim(&self) -> usize {
        self.targets.len()
    }

    /// Error coordinate along eigenvector `k` at time `t`.
    pub fn mode(&self, k: usize, t: f64) -> f64 {
        self.coords[k] * (-self.eigen.eigenvalues[k].max(0.0) * t).exp()
    }

    pub fn solution(&self, t: f64) -> Result<Vec<f64>> {
        kernel_flow_solution(self, t)
    }
}

/// `f(t) = y + sum_i v_i v_i^T (f0 - y) exp(-lambda_i t)`.
pub fn kernel_flow_solution(flow: &KernelFlow, t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")));
    }
    let n = flow.dim();
    let mut f = flow.targets.clone();
    for k in 0..n {
        let c = flow.mode(k, t);
        if c != 0.0 {
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += c * flow.eigen.eigenvectors[(i, k)];
            }
        }
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WidthGap {
    pub width: usize,
    /// `max_t ||f_net(t) - f_flow(eta t)||` over steps `0..=steps`.
    pub gap: f64,
    /// Gap at every step.
    pub trajectory: Vec<f64>,
}

/// Trains networks of each hidden width by full-batch GD and compares their
/// outputs with the flow under the empirical NTK frozen at initialisation.
///
/// `template` fixes depth, initialisation and parameterisation; every hidden
/// layer takes the width under study.
#[allow(clippy::too_many_arguments)]
pub fn linearization_gap(
    template: &NetworkSpec,
    widths: &[usize],
    x: &Matrix,
    y: &Matrix,
    eta: f64,
    steps: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<WidthGap>> {
    if widths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("widths must be strictly ascending".into()));
    }
    let depth = template.hidden_widths.len().max(1);
    widths
        .iter()
        .map(|&w| {
            let spec = NetworkSpec {
                hidden_widths: vec![w; depth],
                ..template.clone()
            };
            let params = init_network(&spec, seed)?;
            width_gap(&spec, params, x, y, eta, steps, exec).map(|(gap, trajectory)| WidthGap { width: w, gap, trajectory })
        })
        .collect()
}

fn width_gap(
    spec: &NetworkSpec,
    mut params: ParamVector,
    x: &Matrix,
    y: &Matrix,
    eta: f64,
    steps: usize,
    exec: Execution,
) -> Result<(f64, Vec<f64>)> {
    let k0 = empirical_ntk_with(&params, spec, x, JacobianScope::Full, Reduction::Blocked, exec)?;
    let f0 = Network::new(spec, &params)?.forward_batch(x)?;
    let flow = KernelFlow::new(k0.values, y.as_slice().to_vec(), f0.as_slice().to_vec())?;
    let mut trajectory = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let net = Network::new(spec, &params)?;
        let f = net.forward_batch(x)?;
        let reference = flow.solution(eta * step as f64)?;
        let diff: Vec<f64> = f.as_slice().iter().zip(&reference).map(|(a, b)| a - b).collect();
        let g = norm(&diff);
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("network outputs diverged at step {step} with step size {eta}")));
        }
        trajectory.push(g);
        if step == steps {
            break;
        }
        let grad = net.grad_mse(x, y, exec)?;
        for (p, g) in params.values_mut().iter_mut().zip(&grad) {
            *p -= eta * g;
        }
    }
    let gap = trajectory.iter().cloned().fold(0.0, f64::max);
    Ok((gap, trajectory))
}

/// `||(f_{t+1} - f_t) + eta K_t (f_t - y)||` for one GD step, with `K_t` the
/// blocked full-scope empirical NTK at `params`.
pub fn first_order_defect(params: &ParamVector, spec: &NetworkSpec, x: &Matrix, y: &Matrix, eta: f64) -> Result<f64> {
    let exec = Execution::default();
    let net = Network::new(spec, params)?;
    let f = net.forward_batch(x)?;
    let grad = net.grad_mse(x, y, exec)?;
    let mut next = params.clone();
    for (p, g) in next.values_mut().iter_mut().zip(&grad) {
        *p -= eta * g;
    }
    let f1 = Network::new(spec, &next)?.forward_batch(x)?;
    let k = empirical_ntk_with(params, spec, x, JacobianScope::Full, Reduction::Blocked, exec)?;
    let e: Vec<f64> = f.as_slice().iter().zip(y.as_slice()).map(|(a, b)| a - b).collect();
    let ke = k.values.matvec(&e)?;
    let d: Vec<f64> = f1
        .as_slice()
        .iter()
        .zip(f.as_slice())
        .zip(&ke)
        .map(|((a, b), k)| a - b + eta * k)
        .collect();
    Ok(norm(&d))
}

/// Mean of `||f(x+d) + f(x-d) - 2 f(x)|| / ||d||^2` over the rows of `x`,
/// with `d ~ N(0, sigma^2 I)`: a finite-difference curvature proxy.
pub fn curvature_proxy(params: &ParamVector, spec: &NetworkSpec, x: &Matrix, sigma: f64, seed: u64) -> Result<f64> {
    use rand_distr::{Distribution, Normal};
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let net = Network::new(spec, params)?;
    let normal = Normal::new(0.0, sigma).expect("sigma checked");
    let mut rng = crate::seed::rng(seed);
    let d = x.cols();
    let deltas: Vec<f64> = (0..x.rows() * d).map(|_| normal.sample(&mut rng)).collect();
    let vals = par::map_range(Execution::default(), x.rows(), |i| -> Result<f64> {
        let xi = x.row(i);
        let di = &deltas[i * d..(i + 1) * d];
        let plus: Vec<f64> = xi.iter().zip(di).map(|(a, b)| a + b).collect();
        let minus: Vec<f64> = xi.iter().zip(di).map(|(a, b)| a - b).collect();
        let (fp, fm, f0) = (net.forward(&plus)?, net.forward(&minus)?, net.forward(xi)?);
        let second: Vec<f64> = fp.iter().zip(&fm).zip(&f0).map(|((p, m), c)| p + m - 2.0 * c).collect();
        Ok(norm(&second) / dot(di, di))
    });
    let vals: Vec<f64> = vals.into_iter().collect::<Result<_>>()?;
    Ok(vals.iter().sum::<f64>() / vals.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_psd(n: usize, seed: u64) -> Matrix {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed);
        let a = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        a.matmul(&a.transpose()).unwrap()
    }

    fn flow(n: usize, seed: u64) -> KernelFlow {
        use rand::Rng;
        let mut rng = crate::seed::rng(seed + 100);
        let y = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f0 = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        KernelFlow::new(random_psd(n, seed), y, f0).unwrap()
    }

    #[test]
    fn starts_at_initial_outputs() {
        let fl = flow(5, 1);
        let f = fl.solution(0.0).unwrap();
        for (a, b) in f.iter().zip(&fl.initial) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fl.solution(-1.0).is_err());
    }

    #[test]
    fn converges_to_targets_for_positive_definite_kernels() {
        let fl = flow(4, 2);
        let lmin = *fl.eigen.eigenvalues.last().unwrap();
        assert!(lmin > 0.0);
        let t = 30.0 / lmin;
        let f = fl.solution(t).unwrap();
        let err0 = norm(&fl.initial.iter().zip(&fl.targets).map(|(a, b)| a - b).collect::<Vec<_>>());
        let err: Vec<f64> = f.iter().zip(&fl.targets).map(|(a, b)| a - b).collect();
        assert!(norm(&err) <= err0 * (-lmin * t).exp() * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn rejects_indefinite_kernels() {
        let k = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]]).unwrap();
        assert!(KernelFlow::new(k, vec![0.0; 2], vec![1.0; 2]).is_err());
    }

    #[test]
    fn zero_steps_give_zero_gap() {
        let template = NetworkSpec::new(2, vec![16], 1).with_init_scale(std::f64::consts::SQRT_2);
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, -0.8]]).unwrap();
        let y = Matrix::from_rows(&[[1.0], [-1.0], [0.5]]).unwrap();
        let gaps = linearization_gap(&template, &[8, 16], &x, &y, 0.1, 0, 3, Execution::Sequential).unwrap();
        assert!(gaps.iter().all(|g| g.gap.abs() < 1e-12));
        assert!(linearization_gap(&template, &[16, 8], &x, &y, 0.1, 0, 3, Execution::Sequential).is_err());
    }
}
