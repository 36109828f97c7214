use crate::error::{Error, Result};

use super::matrix::Matrix;

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest scaled relative error over all parameter entries.
    pub max_rel_error: f64,
    /// Coordinate of the worst entry, when the parameter is non-empty.
    pub worst_coord: Option<(usize, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare an analytic gradient against central finite differences.
///
/// `value` evaluates the scalar objective at a parameter matrix; `gradient`
/// returns the analytic gradient at the same point (normally a tape backward
/// pass). The relative error per entry is |a - n| / max(1, |a|, |n|), so tiny
/// gradients are compared absolutely instead of amplifying rounding noise.
pub fn grad_check<V, G>(
    mut value: V,
    mut gradient: G,
    at: &Matrix,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    V: FnMut(&Matrix) -> Result<f64>,
    G: FnMut(&Matrix) -> Result<Matrix>,
{
    if step <= 0.0 {
        return Err(Error::Config(format!("grad_check step must be > 0, got {step}")));
    }
    let analytic = gradient(at)?;
    if analytic.shape() != at.shape() {
        return Err(Error::Dimension(format!(
            "analytic gradient shape {:?} does not match parameter shape {:?}",
            analytic.shape(),
            at.shape()
        )));
    }

    let mut max_rel_error = 0.0;
    let mut worst_coord = None;
    let cols = at.cols();
    for idx in 0..at.len() {
        let coord = (idx / cols.max(1), idx % cols.max(1));
        let mut plus = at.clone();
        plus.data_mut()[idx] += step;
        let f_plus = value(&plus)?;
        let mut minus = at.clone();
        minus.data_mut()[idx] -= step;
        let f_minus = value(&minus)?;
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(Error::NonFinite {
                op: "grad_check",
                row: coord.0,
                col: coord.1,
            });
        }
        let numeric = (f_plus - f_minus) / (2.0 * step);
        let a = analytic.data()[idx];
        let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        if rel > max_rel_error {
            max_rel_error = rel;
            worst_coord = Some(coord);
        }
    }

    Ok(GradCheckReport {
        max_rel_error,
        worst_coord,
        tolerance,
        passed: max_rel_error <= tolerance,
    })
}
