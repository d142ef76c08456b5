//! Kernel-flow dynamics, spectrum studies, rank correlation and the
//! self-check suite behind `crc verify`.

mod flow;
mod spectrum;
mod stats;
mod study;
mod verify;

pub use flow::{curvature_proxy, first_order_defect, kernel_flow_solution, linearization_gap, KernelFlow, WidthGap};
pub use spectrum::{eig_concentration_report, write_concentration_csv, ConcentrationOptions, ConcentrationRow};
pub use stats::{average_ranks, horizon_correlation, linear_fit, median, pearson, quantile, spearman};
pub use study::{
    final_arm_means, horizon_study, last_vs_full_study, write_paired_csv, HorizonOptions, HorizonRow, HorizonStudy,
    PairedRow,
};
pub use verify::{run_verify_suite, CheckResult};

use crate::training::TrainingTrace;

/// `(min, max)` of `||grad L_t||^2 / L_t` over traced steps with positive loss.
pub fn gradient_scale_band(trace: &TrainingTrace) -> Option<(f64, f64)> {
    trace
        .rows
        .iter()
        .filter(|r| r.loss > 0.0)
        .map(|r| r.grad_sq / r.loss)
        .fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
}
