use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// max over points of `|analytic - numeric| / max(1, |analytic|)`
    pub max_rel_error: f64,
    /// `(input index, element index)` where the maximum occurred.
    pub worst_point: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub points: usize,
}

/// Compares reverse-mode gradients of a scalar computation with central
/// differences at the given `(input, element)` coordinates.
///
/// `f` receives a fresh 64-bit tape with every input registered as a
/// gradient-tracking leaf (in order) and must return a scalar.
pub fn grad_check<F>(inputs: &[Tensor<f64>], points: &[(usize, usize)], mut f: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut eval = |values: &[Tensor<f64>], with_grad: bool| -> Result<(f64, Vec<Option<Tensor<f64>>>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t.clone(), with_grad)).collect();
        let loss = f(&mut tape, &vars)?;
        let value = tape.value(loss).item();
        if !with_grad {
            return Ok((value, Vec::new()));
        }
        tape.backward(loss)?;
        Ok((value, vars.iter().map(|&v| tape.grad(v).cloned()).collect()))
    };

    let (_, grads) = eval(inputs, true)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_point: None,
        analytic: 0.0,
        numeric: 0.0,
        points: points.len(),
    };
    let mut work = inputs.to_vec();
    for &(ti, ei) in points {
        let analytic = grads[ti].as_ref().map_or(0.0, |g| g.data()[ei]);
        let orig = work[ti].data()[ei];
        work[ti].data_mut()[ei] = orig + GRAD_CHECK_STEP;
        let (plus, _) = eval(&work, false)?;
        work[ti].data_mut()[ei] = orig - GRAD_CHECK_STEP;
        let (minus, _) = eval(&work, false)?;
        work[ti].data_mut()[ei] = orig;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_STEP);
        let err = (analytic - numeric).abs() / analytic.abs().max(1.0);
        if report.worst_point.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_point = Some((ti, ei));
            report.analytic = analytic;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// Every coordinate of every input.
pub fn all_points(inputs: &[Tensor<f64>]) -> Vec<(usize, usize)> {
    inputs
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| (0..t.len()).map(move |ei| (ti, ei)))
        .collect()
}
