//! Fast self-checks of the numerical core, run by `crc verify`.

use rand::Rng;

use super::flow::KernelFlow;
use super::stats::spearman;
use crate::acquisition::{Strategy, AcquisitionResult};
use crate::harness::{generate_moons, initial_pool};
use crate::linalg::{norm, Matrix};
use crate::nn::{finite_diff_jacobian, init_network, jacobian, JacobianScope, NetworkSpec};
use crate::ntk::eigen::symmetric_eigen;
use crate::ntk::{empirical_ntk_with, Reduction};
use crate::par::Execution;
use crate::seed;
use crate::training::{train_supervised, verify_recursion, TrainConfig};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random_psd(n: usize, rng: &mut seed::Rng) -> Matrix {
    let a = Matrix::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("square");
    a.matmul(&a.transpose()).expect("square")
}

fn jacobian_check() -> Result<(bool, String)> {
    let mut rng = seed::rng(1);
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let d = rng.gen_range(1..5);
        let c = rng.gen_range(1..4);
        let spec = NetworkSpec::new(d, vec![rng.gen_range(2..12); rng.gen_range(1..3)], c).with_bias(k % 2 == 0);
        let p = init_network(&spec, k)?;
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = jacobian(&p, &spec, &x, JacobianScope::Full)?.values;
        let fd = finite_diff_jacobian(&p, &spec, &x, 1e-5, JacobianScope::Full)?.values;
        worst = worst.max(a.sub(&fd)?.max_abs() / a.max_abs().max(1e-12));
    }
    Ok((worst <= 1e-4, format!("max relative deviation {worst:.2e}")))
}

fn eigen_check() -> Result<(bool, String)> {
    let mut rng = seed::rng(2);
    let mut worst: f64 = 0.0;
    for n in [1, 2, 3, 5, 8, 16, 32] {
        let g = random_psd(n, &mut rng);
        let e = symmetric_eigen(&g)?;
        let scale = g.frobenius_norm();
        for k in 0..n {
            let v = e.vector(k);
            let gv = g.matvec(&v)?;
            let r: Vec<f64> = gv.iter().zip(&v).map(|(a, b)| a - e.eigenvalues[k] * b).collect();
            worst = worst.max(norm(&r) / scale);
        }
    }
    // 2x2 closed form
    let (a, b, c) = (2.0, 0.7, -1.0);
    let m = Matrix::from_rows(&[[a, b], [b, c]])?;
    let e = symmetric_eigen(&m)?;
    let disc = (((a - c) / 2.0f64).powi(2) + b * b).sqrt();
    let closed = [(a + c) / 2.0 + disc, (a + c) / 2.0 - disc];
    let dev = (e.eigenvalues[0] - closed[0]).abs().max((e.eigenvalues[1] - closed[1]).abs());
    Ok((
        worst <= 1e-8 && dev <= 1e-10,
        format!("max residual {worst:.2e} x ||G||, 2x2 deviation {dev:.2e}"),
    ))
}

fn random_flow(seed_value: u64) -> Result<KernelFlow> {
    let mut rng = seed::rng(seed_value);
    let k = random_psd(5, &mut rng);
    let y = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f0 = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    KernelFlow::new(k, y, f0)
}

/// Explicit Euler for `df/dt = -K (f - y)` from 0 to `t`.
pub(crate) fn euler(flow: &KernelFlow, t: f64, h: f64) -> Result<Vec<f64>> {
    let steps = (t / h).round() as usize;
    let mut f = flow.initial.clone();
    for _ in 0..steps {
        let e: Vec<f64> = f.iter().zip(&flow.targets).map(|(a, b)| a - b).collect();
        let ke = flow.kernel.matvec(&e)?;
        for (fi, k) in f.iter_mut().zip(&ke) {
            *fi -= h * k;
        }
    }
    Ok(f)
}

fn flow_euler_check() -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for s in 0..3 {
        let flow = random_flow(10 + s)?;
        let exact = flow.solution(1.0)?;
        // Richardson extrapolation of Euler at h and h/2 removes the O(h) term
        let coarse = euler(&flow, 1.0, 1e-4)?;
        let fine = euler(&flow, 1.0, 5e-5)?;
        for i in 0..5 {
            worst = worst.max((2.0 * fine[i] - coarse[i] - exact[i]).abs());
        }
    }
    Ok((worst <= 1e-6, format!("max deviation {worst:.2e}")))
}

fn flow_ode_check() -> Result<(bool, String)> {
    let flow = random_flow(20)?;
    let t = 0.3;
    let f = flow.solution(t)?;
    let e: Vec<f64> = f.iter().zip(&flow.targets).map(|(a, b)| a - b).collect();
    let rhs: Vec<f64> = flow.kernel.matvec(&e)?.iter().map(|v| -v).collect();
    let err = |h: f64| -> Result<f64> {
        let fh = flow.solution(t + h)?;
        let d: Vec<f64> = fh.iter().zip(&f).zip(&rhs).map(|((a, b), r)| (a - b) / h - r).collect();
        Ok(norm(&d))
    };
    let ratio = err(1e-3)? / err(5e-4)?;
    let mut decoupling: f64 = 0.0;
    for k in 0..flow.dim() {
        let v = flow.eigen.vector(k);
        let proj: f64 = v.iter().zip(&e).map(|(a, b)| a * b).sum();
        let expected = flow.mode(k, t);
        decoupling = decoupling.max((proj - expected).abs() / expected.abs().max(1e-300).max(1e-12));
    }
    Ok((
        (ratio - 2.0).abs() <= 0.6 && decoupling <= 1e-8,
        format!("error ratio on halving h {ratio:.3}, mode deviation {decoupling:.2e}"),
    ))
}

/// Rank by counting: `#less + (#equal + 1) / 2`.
fn brute_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let saa: f64 = a.iter().map(|x| x * x).sum();
    let sbb: f64 = b.iter().map(|x| x * x).sum();
    let cov = sab - sa * sb / n;
    let va = saa - sa * sa / n;
    let vb = sbb - sb * sb / n;
    if va.abs() < 1e-12 || vb.abs() < 1e-12 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

pub(crate) fn spearman_bruteforce(a: &[f64], b: &[f64]) -> f64 {
    brute_pearson(&brute_ranks(a), &brute_ranks(b))
}

fn spearman_check() -> Result<(bool, String)> {
    let mut rng = seed::rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(5..30);
        // integer-valued draws produce ties
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max((spearman(&a, &b)? - spearman_bruteforce(&a, &b)).abs());
    }
    Ok((worst <= 1e-12, format!("max deviation {worst:.2e}")))
}

fn recursion_check() -> Result<(bool, String)> {
    let pool = generate_moons(64, 0.1, 2, false, 4)?;
    let pool = initial_pool(&pool, 4, 5)?;
    let spec = NetworkSpec::new(2, vec![64], 2).with_init_scale(std::f64::consts::SQRT_2);
    let p = init_network(&spec, 6)?;
    let cfg = TrainConfig {
        step_size: 0.05,
        max_steps: 40,
        trace_every: 1,
        instrument: true,
        ..Default::default()
    };
    let (_, trace) = train_supervised(&p, &spec, &pool, None, &cfg)?;
    let rep = verify_recursion(&trace)?;
    Ok((
        rep.max_relative_identity <= 1e-9 && rep.max_relative_residual <= 1e-9,
        format!(
            "identity {:.2e} x L_t, inequality {:.2e} x L_t",
            rep.max_relative_identity, rep.max_relative_residual
        ),
    ))
}

fn hygiene_check() -> Result<(bool, String)> {
    let pool = generate_moons(80, 0.1, 4, false, 7)?;
    let spec = NetworkSpec::new(2, vec![16], 4);
    let p = init_network(&spec, 1)?;
    let strategies = [
        Strategy::Random,
        Strategy::Entropy,
        Strategy::Confidence,
        Strategy::Egl {
            scope: JacobianScope::LastLayer,
        },
        Strategy::crc(2),
    ];
    let mut reads = Vec::new();
    for s in &strategies {
        let base = initial_pool(&pool, 1, 2)?;
        let _: AcquisitionResult = s.acquire(&base, &p, &spec, 4, 3, Execution::default())?;
        reads.push((s.name(), base.hidden_label_reads()));
    }
    let clean = reads.iter().all(|r| r.1 == 0);
    let base = initial_pool(&pool, 1, 2)?;
    let balanced = Strategy::CrcBalanced {
        per_class: 1,
        scope: JacobianScope::LastLayer,
        reduction: Reduction::Traced,
        positivity_threshold: crate::ntk::DEFAULT_POSITIVITY_THRESHOLD,
    };
    balanced.acquire(&base, &p, &spec, 4, 3, Execution::default())?;
    Ok((
        clean && base.hidden_label_reads() > 0,
        format!("reads {reads:?}, balanced {}", base.hidden_label_reads()),
    ))
}

fn parallel_check() -> Result<(bool, String)> {
    let pool = generate_moons(60, 0.1, 2, false, 8)?;
    let spec = NetworkSpec::new(2, vec![32, 32], 2);
    let p = init_network(&spec, 2)?;
    let a = empirical_ntk_with(&p, &spec, pool.features(), JacobianScope::Full, Reduction::Blocked, Execution::Sequential)?;
    let b = empirical_ntk_with(&p, &spec, pool.features(), JacobianScope::Full, Reduction::Blocked, Execution::Parallel)?;
    let same = a.values.as_slice().iter().zip(b.values.as_slice()).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((same, format!("parallel execution compiled in: {}", Execution::Parallel.is_parallel())))
}

/// Runs every check and returns one result per invariant.
pub fn run_verify_suite() -> Vec<CheckResult> {
    vec![
        check("jacobian_vs_finite_differences", jacobian_check),
        check("eigenpair_residuals", eigen_check),
        check("kernel_flow_vs_euler", flow_euler_check),
        check("kernel_flow_ode_and_modes", flow_ode_check),
        check("spearman_vs_bruteforce", spearman_check),
        check("loss_recursion", recursion_check),
        check("oracle_hygiene", hygiene_check),
        check("sequential_parallel_agreement", parallel_check),
    ]
}
