use rand::seq::index;

use super::{check_budget, top_q, AcquisitionResult, GroupScore};
use crate::linalg::dot;
use crate::nn::{softmax, JacobianScope, Network, NetworkSpec, ParamVector};
use crate::par::{self, Execution};
use crate::pool::Pool;
use crate::{seed, Result};

fn result(strategy: &str, seed: u64, candidates: &[usize], scores: &[f64], picks: Vec<usize>) -> AcquisitionResult {
    AcquisitionResult {
        strategy: strategy.into(),
        seed,
        selected: picks.iter().map(|&k| candidates[k]).collect(),
        group_scores: picks
            .iter()
            .map(|&k| GroupScore {
                indices: vec![candidates[k]],
                score: Some(scores[k]),
                null_modes: 0,
            })
            .collect(),
    }
}

/// Uniform sample without replacement.
pub fn random_acquire(pool: &Pool, q: usize, seed: u64) -> Result<AcquisitionResult> {
    check_budget(pool, q)?;
    let unlabeled = pool.unlabeled();
    let picks = index::sample(&mut seed::rng(seed), unlabeled.len(), q).into_vec();
    Ok(AcquisitionResult {
        strategy: "random".into(),
        seed,
        selected: picks.iter().map(|&k| unlabeled[k]).collect(),
        group_scores: Vec::new(),
    })
}

/// Shannon entropy of `softmax(logits)` via log-sum-exp.
pub fn softmax_entropy(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    -logits
        .iter()
        .map(|z| {
            let logp = z - lse;
            logp.exp() * logp
        })
        .sum::<f64>()
}

fn unlabeled_logits(pool: &Pool, params: &ParamVector, spec: &NetworkSpec) -> Result<Vec<Vec<f64>>> {
    let net = Network::new(spec, params)?;
    let x = pool.features().select_rows(pool.unlabeled());
    let out = net.forward_batch(&x)?;
    Ok(out.iter_rows().map(<[f64]>::to_vec).collect())
}

/// Highest predictive entropy first.
pub fn entropy_acquire(pool: &Pool, params: &ParamVector, spec: &NetworkSpec, q: usize) -> Result<AcquisitionResult> {
    check_budget(pool, q)?;
    let scores: Vec<f64> = unlabeled_logits(pool, params, spec)?
        .iter()
        .map(|z| softmax_entropy(z))
        .collect();
    let picks = top_q(&scores, q);
    Ok(result("entropy", 0, pool.unlabeled(), &scores, picks))
}

/// Lowest maximum softmax probability first. The recorded score is that probability.
pub fn confidence_acquire(pool: &Pool, params: &ParamVector, spec: &NetworkSpec, q: usize) -> Result<AcquisitionResult> {
    check_budget(pool, q)?;
    let confidence: Vec<f64> = unlabeled_logits(pool, params, spec)?
        .iter()
        .map(|z| softmax(z).into_iter().fold(0.0, f64::max))
        .collect();
    let neg: Vec<f64> = confidence.iter().map(|c| -c).collect();
    let picks = top_q(&neg, q);
    Ok(result("confidence", 0, pool.unlabeled(), &confidence, picks))
}

/// `E_{y ~ p} ||grad_theta CE(y, f(x))||^2` with `p = softmax(f(x))`.
///
/// The cross-entropy gradient for label `y` is `J^T (p - e_y)`, so each term
/// is a quadratic form in the `C x C` kernel `J J^T`.
pub fn egl_score(net: &Network<'_>, x: &[f64], scope: JacobianScope) -> Result<f64> {
    let jac = net.jacobian(x, scope)?;
    let logits = net.forward(x)?;
    let p = softmax(&logits);
    let c = p.len();
    let mut k = vec![0.0; c * c];
    for a in 0..c {
        for b in a..c {
            let v = dot(jac.values.row(a), jac.values.row(b));
            k[a * c + b] = v;
            k[b * c + a] = v;
        }
    }
    let mut score = 0.0;
    let mut r = vec![0.0; c];
    for y in 0..c {
        r.copy_from_slice(&p);
        r[y] -= 1.0;
        let mut quad = 0.0;
        for a in 0..c {
            for b in 0..c {
                quad += r[a] * k[a * c + b] * r[b];
            }
        }
        score += p[y] * quad;
    }
    Ok(score)
}

pub fn egl_acquire(
    pool: &Pool,
    params: &ParamVector,
    spec: &NetworkSpec,
    q: usize,
    scope: JacobianScope,
    exec: Execution,
) -> Result<AcquisitionResult> {
    check_budget(pool, q)?;
    let net = Network::new(spec, params)?;
    let unlabeled = pool.unlabeled();
    let scores: Vec<f64> = par::map_slice(exec, unlabeled, |&i| egl_score(&net, pool.features().row(i), scope))
        .into_iter()
        .collect::<Result<_>>()?;
    let picks = top_q(&scores, q);
    Ok(result("egl", 0, unlabeled, &scores, picks))
}
