//! Full-batch gradient-descent trainers and their instrumented traces.
//!
//! The supervised loss is `L = 0.5 * sum_i ||f(x_i) - y_i||^2` over the labeled
//! set with one-hot targets. Semi-supervised modes add a consistency penalty
//! over pool inputs under Gaussian input noise:
//!
//! - Π-model: `w * mean ||f(x + d) - f(x + d')||^2`, differentiated through both branches.
//! - Mean teacher: `w * mean ||student(x + d) - teacher(x + d')||^2`, with the
//!   teacher an exponential moving average of the student weights.

mod recursion;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::par::Execution;
use crate::{Error, Result};

pub use recursion::{compute_xi, epochs_to_convergence, verify_recursion, ConvergenceCriterion, RecursionReport};
pub use trainer::{accuracy, gd_step, train, train_mean_teacher, train_pi_model, train_supervised, TrainOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMode {
    #[default]
    None,
    PiModel,
    MeanTeacher,
}

impl std::str::FromStr for SslMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SslMode::None),
            "pi_model" | "pi" => Ok(SslMode::PiModel),
            "mean_teacher" | "mt" => Ok(SslMode::MeanTeacher),
            other => Err(Error::InvalidArgument(format!("unknown ssl mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for SslMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SslMode::None => "none",
            SslMode::PiModel => "pi_model",
            SslMode::MeanTeacher => "mean_teacher",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub step_size: f64,
    pub max_steps: usize,
    /// Stop after this many traced evaluations without a test-accuracy improvement.
    pub early_stop_patience: Option<usize>,
    /// Stop once the supervised loss drops below this value.
    pub stop_below_loss: Option<f64>,
    pub ssl_mode: SslMode,
    pub consistency_weight: f64,
    pub perturbation_sigma: f64,
    pub ema_decay: f64,
    /// Pool samples drawn per step for the consistency term; `None` uses the whole pool.
    pub consistency_batch: Option<usize>,
    pub trace_every: usize,
    /// Record `lambda_min`, `xi`, `eps` and the recursion residuals at traced steps.
    pub instrument: bool,
    pub quadrature_points: usize,
    /// Seed of the input-noise stream.
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            step_size: 0.1,
            max_steps: 1000,
            early_stop_patience: None,
            stop_below_loss: None,
            ssl_mode: SslMode::None,
            consistency_weight: 0.0,
            perturbation_sigma: 0.0,
            ema_decay: 0.99,
            consistency_batch: None,
            trace_every: 10,
            instrument: false,
            quadrature_points: 9,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1".into());
        }
        if self.quadrature_points < 3 || self.quadrature_points % 2 == 0 {
            return bad(format!(
                "quadrature_points must be odd and at least 3, got {}",
                self.quadrature_points
            ));
        }
        if !(self.consistency_weight >= 0.0) {
            return bad(format!("consistency weight must be non-negative, got {}", self.consistency_weight));
        }
        if !(self.perturbation_sigma >= 0.0) {
            return bad(format!("perturbation sigma must be non-negative, got {}", self.perturbation_sigma));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay));
        }
        if self.consistency_batch == Some(0) {
            return bad("consistency_batch must be positive".into());
        }
        Ok(())
    }
}

/// One traced step. Optional fields are present only when instrumentation is on
/// (and, for the residuals, when the step was actually taken).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Supervised loss `L_t`.
    pub loss: f64,
    /// Smallest eigenvalue of the blocked full-scope Gram matrix over the labeled set.
    pub lambda_min: Option<f64>,
    pub xi: Option<f64>,
    pub eps: Option<f64>,
    /// `L_{t+1} - [(1 - 2 eta lambda_min) L_t + xi_t + eps_t]`.
    pub residual: Option<f64>,
    /// `L_{t+1} - [L_t - e_t^T (f_{t+1} - f_t) + eps_t]`, zero up to rounding.
    pub identity_residual: Option<f64>,
    /// `e_t^T (f_{t+1} - f_t)` with `e_t = y - f_t`.
    pub cross: Option<f64>,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub test_loss: Option<f64>,
    /// `||grad L_t||^2` of the supervised loss.
    pub grad_sq: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub step_size: f64,
    pub rows: Vec<TraceRow>,
}

/// Column order of [`TrainingTrace::write_csv`].
pub const TRACE_COLUMNS: [&str; 11] = [
    "step",
    "loss",
    "lambda_min",
    "xi",
    "eps",
    "residual",
    "train_acc",
    "test_acc",
    "grad_sq",
    "test_loss",
    "identity_residual",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:e}")).unwrap_or_default()
}

impl TrainingTrace {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// One row per traced step; absent values are empty cells.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                format!("{:e}", r.loss),
                opt(r.lambda_min),
                opt(r.xi),
                opt(r.eps),
                opt(r.residual),
                r.train_acc.to_string(),
                r.test_acc.map(|v| v.to_string()).unwrap_or_default(),
                format!("{:e}", r.grad_sq),
                opt(r.test_loss),
                opt(r.identity_residual),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
