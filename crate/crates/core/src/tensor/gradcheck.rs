use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

const DENOMINATOR_FLOOR: f64 = 1e-8;

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(DENOMINATOR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (parameter index, coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub coordinates: usize,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("non-finite {what}: {v}")))
    }
}

/// Compares the analytic gradients of the scalar `f` with respect to
/// `params` against central finite differences, coordinate by coordinate.
///
/// `f` must be deterministic: it is re-evaluated twice per coordinate.
pub fn gradient_check<F>(mut f: F, params: &[Tensor]) -> Result<GradCheckReport>
where
    F: FnMut() -> Result<Tensor>,
{
    params.iter().for_each(Tensor::zero_grad);
    let loss = f()?;
    finite(loss.item(), "loss")?;
    loss.backward()?;
    drop(loss);
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    params.iter().for_each(Tensor::zero_grad);

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        coordinates: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let original = p.data()[j];
            p.data_mut()[j] = original + FD_STEP;
            let plus = f().map(|l| l.item());
            p.data_mut()[j] = original - FD_STEP;
            let minus = f().map(|l| l.item());
            p.data_mut()[j] = original;
            let plus = finite(plus?, "loss")?;
            let minus = finite(minus?, "loss")?;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = finite(analytic[pi][j], "gradient")?;
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((pi, j));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    params.iter().for_each(Tensor::zero_grad);
    Ok(report)
}
