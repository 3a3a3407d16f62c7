//! Central finite-difference oracle for tape gradients. Always runs in
//! double precision.

mod suite;

pub use suite::{run_suite, OpCheck, SuiteReport};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-4;
const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
    pub max_rel_error: f64,
    /// Coordinate where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    /// Coordinates excluded by the caller (kinks).
    pub skipped: usize,
}

/// Compare the tape gradient of `f` at `point` against central differences.
///
/// `f` records a scalar-valued computation of its input leaf on the tape it
/// is given and returns the output variable.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_excluding(f, point, epsilon, |_| false)
}

/// As [`grad_check`], skipping coordinates for which `exclude` returns true
/// (points where `f` is not differentiable).
pub fn grad_check_excluding<F, E>(
    f: F,
    point: &Tensor<f64>,
    epsilon: f64,
    exclude: E,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
    E: Fn(usize) -> bool,
{
    let eval = |p: Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p, false);
        let y = f(&mut tape, x)?;
        let v = tape.try_value(y)?.item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("grad_check: objective".into()))
        }
    };

    let mut tape = Tape::new();
    let x = tape.leaf(point.clone(), true);
    let y = f(&mut tape, x)?;
    tape.try_value(y)?.validate_finite("grad_check: objective")?;
    let grads = tape.backward(y)?;
    let analytic = grads
        .get(x)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.dims()));
    analytic.validate_finite("grad_check: analytic gradient")?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        skipped: 0,
    };
    for i in 0..point.numel() {
        if exclude(i) {
            report.skipped += 1;
            continue;
        }
        let mut plus = point.clone();
        plus.data_mut()[i] += epsilon;
        let mut minus = point.clone();
        minus.data_mut()[i] -= epsilon;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * epsilon);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
        let rel = (a - numeric).abs() / denom;
        report.checked += 1;
        if rel > report.max_rel_error || report.checked == 1 {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
