use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};

use super::{recursion, SslMode, TraceRow, TrainConfig, TrainingTrace};
use crate::linalg::{axpy, dot, norm_sq, Matrix};
use crate::nn::{argmax, mse_loss, one_hot, JacobianScope, Network, NetworkSpec, ParamVector};
use crate::ntk::{empirical_ntk_with, Reduction};
use crate::ntk::eigen::symmetric_eigenvalues;
use crate::par::{self, Execution};
use crate::pool::{LabeledSet, Pool};
use crate::seed;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamVector,
    /// EMA teacher, present in mean-teacher mode.
    pub teacher: Option<ParamVector>,
    pub trace: TrainingTrace,
}

impl TrainOutcome {
    /// The model used for evaluation: the teacher when there is one.
    pub fn eval_params(&self) -> &ParamVector {
        self.teacher.as_ref().unwrap_or(&self.params)
    }
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(outputs: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = outputs
        .iter_rows()
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    hits as f64 / labels.len() as f64
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// One full-batch step `theta - eta * grad L(theta)` on the half-MSE loss.
pub fn gd_step(params: &ParamVector, spec: &NetworkSpec, x: &Matrix, y: &Matrix, eta: f64) -> Result<ParamVector> {
    let grad = Network::new(spec, params)?.grad_mse(x, y, Execution::default())?;
    let mut next = params.clone();
    axpy(-eta, &grad, next.values_mut());
    check_finite(next.values(), "parameters")?;
    Ok(next)
}

/// Supervised training on the labeled part of `pool`. `test` drives early
/// stopping and the test columns of the trace.
pub fn train_supervised(
    params: &ParamVector,
    spec: &NetworkSpec,
    pool: &Pool,
    test: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(ParamVector, TrainingTrace)> {
    let cfg = TrainConfig {
        ssl_mode: SslMode::None,
        ..cfg.clone()
    };
    let out = train(params, spec, pool, test, &cfg)?;
    Ok((out.params, out.trace))
}

pub fn train_pi_model(
    params: &ParamVector,
    spec: &NetworkSpec,
    pool: &Pool,
    test: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(ParamVector, TrainingTrace)> {
    let cfg = TrainConfig {
        ssl_mode: SslMode::PiModel,
        ..cfg.clone()
    };
    let out = train(params, spec, pool, test, &cfg)?;
    Ok((out.params, out.trace))
}

/// Returns `(student, teacher, trace)`.
pub fn train_mean_teacher(
    params: &ParamVector,
    spec: &NetworkSpec,
    pool: &Pool,
    test: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<(ParamVector, ParamVector, TrainingTrace)> {
    let cfg = TrainConfig {
        ssl_mode: SslMode::MeanTeacher,
        ..cfg.clone()
    };
    let out = train(params, spec, pool, test, &cfg)?;
    let teacher = out.teacher.expect("mean teacher keeps a teacher");
    Ok((out.params, teacher, out.trace))
}

struct Consistency<'a> {
    x: &'a Matrix,
    normal: Option<Normal<f64>>,
    batch: Option<usize>,
    rng: seed::Rng,
}

impl Consistency<'_> {
    /// Draws this step's sample indices and the two noise vectors per sample.
    fn draw(&mut self) -> (Vec<usize>, Vec<f64>) {
        let n = self.x.rows();
        let idx: Vec<usize> = match self.batch {
            Some(b) if b < n => {
                let mut v = sample(&mut self.rng, n, b).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let len = idx.len() * 2 * self.x.cols();
        let noise = match &self.normal {
            Some(d) => (0..len).map(|_| d.sample(&mut self.rng)).collect(),
            None => vec![0.0; len],
        };
        (idx, noise)
    }
}

/// Value and gradient of the consistency penalty for one step. The value is
/// returned in the extra trailing slot of the accumulated vector.
fn consistency_grad(
    student: &Network<'_>,
    teacher: Option<&Network<'_>>,
    x: &Matrix,
    idx: &[usize],
    noise: &[f64],
    weight: f64,
    exec: Execution,
) -> (f64, Vec<f64>) {
    let p = student.num_params();
    let d = x.cols();
    let m = idx.len() as f64;
    let mut acc = par::chunked_sum(exec, idx.len(), p + 1, |k, acc| {
        let base = x.row(idx[k]);
        let na = &noise[2 * k * d..(2 * k + 1) * d];
        let nb = &noise[(2 * k + 1) * d..(2 * k + 2) * d];
        let xa: Vec<f64> = base.iter().zip(na).map(|(a, b)| a + b).collect();
        let xb: Vec<f64> = base.iter().zip(nb).map(|(a, b)| a + b).collect();
        let mut wa = student.workspace();
        let mut wb = student.workspace();
        student.forward_ws(&xa, &mut wa).expect("input checked");
        teacher.unwrap_or(student).forward_ws(&xb, &mut wb).expect("input checked");
        let diff: Vec<f64> = wa.output().iter().zip(wb.output()).map(|(a, b)| a - b).collect();
        let (grad, value) = acc.split_at_mut(p);
        value[0] += weight / m * norm_sq(&diff);
        student.backward_add(&mut wa, &diff, 2.0 * weight / m, grad);
        if teacher.is_none() {
            student.backward_add(&mut wb, &diff, -2.0 * weight / m, grad);
        }
    });
    let value = acc.pop().unwrap_or(0.0);
    (value, acc)
}

struct Evaluation {
    outputs: Matrix,
    loss: f64,
}

fn evaluate(net: &Network<'_>, x: &Matrix, y: &Matrix) -> Result<Evaluation> {
    let outputs = net.forward_batch(x)?;
    let loss = mse_loss(&outputs, y)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok(Evaluation { outputs, loss })
}

/// Smallest eigenvalue of the blocked, full-scope Gram matrix at `params`.
fn gram_lambda_min(params: &ParamVector, spec: &NetworkSpec, x: &Matrix, exec: Execution) -> Result<f64> {
    let gram = empirical_ntk_with(params, spec, x, JacobianScope::Full, Reduction::Blocked, exec)?;
    let eigs = symmetric_eigenvalues(&gram.values)?;
    Ok(eigs.last().copied().unwrap_or(0.0))
}

/// Trains according to `cfg.ssl_mode`.
pub fn train(
    params: &ParamVector,
    spec: &NetworkSpec,
    pool: &Pool,
    test: Option<&LabeledSet>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if pool.labeled().is_empty() {
        return Err(Error::Insufficient("training needs a non-empty labeled set".into()));
    }
    if pool.input_dim() != spec.input_dim || pool.num_classes() != spec.num_classes {
        return Err(Error::Dimension(format!(
            "pool has {} features and {} classes, network expects {} and {}",
            pool.input_dim(),
            pool.num_classes(),
            spec.input_dim,
            spec.num_classes
        )));
    }
    let exec = cfg.execution;
    let eta = cfg.step_size;
    let x = pool.labeled_features();
    let labels = pool.labeled_labels();
    let y = one_hot(&labels, spec.num_classes)?;
    let test_targets = test.map(|t| t.targets());

    let ssl_active = cfg.ssl_mode != SslMode::None && cfg.consistency_weight > 0.0;
    let mut consistency = Consistency {
        x: pool.features(),
        normal: if cfg.perturbation_sigma > 0.0 {
            Some(Normal::new(0.0, cfg.perturbation_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?)
        } else {
            None
        },
        batch: cfg.consistency_batch,
        rng: seed::rng(cfg.seed),
    };

    let mut theta = params.clone();
    let mut teacher = (cfg.ssl_mode == SslMode::MeanTeacher).then(|| params.clone());
    let mut rows = Vec::new();
    let mut best_test = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for step in 0..=cfg.max_steps {
        let net = Network::new(spec, &theta)?;
        let cur = evaluate(&net, &x, &y)?;
        let grad_sup = net.grad_mse(&x, &y, exec)?;
        let traced = step % cfg.trace_every == 0 || step == cfg.max_steps;
        let stop_loss = cfg.stop_below_loss.is_some_and(|thr| cur.loss < thr);

        let mut stop = step == cfg.max_steps || stop_loss;
        if traced {
            let eval_params = teacher.as_ref().unwrap_or(&theta);
            let eval_net = Network::new(spec, eval_params)?;
            let train_acc = if teacher.is_some() {
                accuracy(&eval_net.forward_batch(&x)?, &labels)
            } else {
                accuracy(&cur.outputs, &labels)
            };
            let (test_acc, test_loss) = match (test, &test_targets) {
                (Some(t), Some(ty)) => {
                    let out = eval_net.forward_batch(&t.features)?;
                    (Some(accuracy(&out, &t.labels)), Some(mse_loss(&out, ty)?))
                }
                _ => (None, None),
            };
            rows.push(TraceRow {
                step,
                loss: cur.loss,
                train_acc,
                test_acc,
                test_loss,
                grad_sq: norm_sq(&grad_sup),
                ..Default::default()
            });
            if let (Some(patience), Some(acc)) = (cfg.early_stop_patience, test_acc) {
                if acc > best_test {
                    best_test = acc;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best >= patience {
                        stop = true;
                    }
                }
            }
        }
        if stop {
            break;
        }

        let mut grad = grad_sup.clone();
        if ssl_active {
            let (idx, noise) = consistency.draw();
            let teacher_net = match &teacher {
                Some(t) => Some(Network::new(spec, t)?),
                None => None,
            };
            let (_, g) = consistency_grad(
                &net,
                teacher_net.as_ref(),
                pool.features(),
                &idx,
                &noise,
                cfg.consistency_weight,
                exec,
            );
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        check_finite(&grad, "gradient")?;

        let instrument = cfg.instrument && traced;
        let (lambda_min, xi) = if instrument {
            (
                gram_lambda_min(&theta, spec, &x, exec)?,
                recursion::xi_with_grad(&theta, spec, &x, &y, &grad_sup, eta, cfg.quadrature_points, exec)?,
            )
        } else {
            (0.0, 0.0)
        };

        let mut next = theta.clone();
        axpy(-eta, &grad, next.values_mut());
        check_finite(next.values(), "parameters")?;

        if instrument {
            let after = evaluate(&Network::new(spec, &next)?, &x, &y)?;
            let df: Vec<f64> = after
                .outputs
                .as_slice()
                .iter()
                .zip(cur.outputs.as_slice())
                .map(|(a, b)| a - b)
                .collect();
            let e: Vec<f64> = y.as_slice().iter().zip(cur.outputs.as_slice()).map(|(t, f)| t - f).collect();
            let eps = 0.5 * norm_sq(&df);
            let cross = dot(&e, &df);
            let row = rows.last_mut().expect("traced row pushed");
            row.lambda_min = Some(lambda_min);
            row.xi = Some(xi);
            row.eps = Some(eps);
            row.cross = Some(cross);
            row.identity_residual = Some(after.loss - (cur.loss - cross + eps));
            row.residual = Some(after.loss - ((1.0 - 2.0 * eta * lambda_min) * cur.loss + xi + eps));
        }

        if let Some(t) = teacher.as_mut() {
            let a = cfg.ema_decay;
            for (tv, sv) in t.values_mut().iter_mut().zip(next.values()) {
                *tv = a * *tv + (1.0 - a) * sv;
            }
        }
        theta = next;
    }

    Ok(TrainOutcome {
        params: theta,
        teacher,
        trace: TrainingTrace { step_size: eta, rows },
    })
}
