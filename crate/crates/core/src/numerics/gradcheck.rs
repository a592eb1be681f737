//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;

pub const STEP_SHRINK: f64 = 4.0;
pub const MAX_SHRINKS: usize = 5;

/// Magnitude below which errors are measured absolutely rather than relatively.
pub const REL_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error per input, in input order.
    pub max_rel_error: Vec<f64>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|&e| e <= self.tolerance)
    }

    /// Indices of inputs whose error exceeds the tolerance.
    pub fn failures(&self) -> Vec<usize> {
        (0..self.max_rel_error.len()).filter(|&i| self.max_rel_error[i] > self.tolerance).collect()
    }
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Value of `f` and the [`Graph::piece_signature`] it was computed on.
fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), false)).collect();
    let out = f(&mut g, &vars)?;
    Ok((g.value(out).item()?, g.piece_signature()))
}

/// Central difference for element `j` of input `k`. LeakyReLU and max-pool
/// make `f` piecewise smooth; a secant across a kink is not the derivative,
/// so the step is divided by [`STEP_SHRINK`] until both probes are on the
/// same piece as the unperturbed point (at most [`MAX_SHRINKS`] times).
fn central_difference<F>(f: &F, work: &mut [Tensor], k: usize, j: usize, piece: u64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let orig = work[k].data()[j];
    let mut step = FD_STEP;
    let mut numeric = f64::NAN;
    for _ in 0..=MAX_SHRINKS {
        work[k].data_mut()[j] = orig + step;
        let plus = evaluate(f, work);
        work[k].data_mut()[j] = orig - step;
        let minus = evaluate(f, work);
        work[k].data_mut()[j] = orig;
        let ((p, sp), (m, sm)) = (plus?, minus?);
        numeric = (p - m) / (2.0 * step);
        if sp == piece && sm == piece {
            break;
        }
        step /= STEP_SHRINK;
    }
    if !numeric.is_finite() {
        return Err(Error::Numeric(format!("non-finite difference at input {k}, element {j}")));
    }
    Ok(numeric)
}

/// Compares the gradient of the scalar `f(inputs)` from [`Graph::backward`]
/// against central differences with step [`FD_STEP`].
///
/// Near a kink the step shrinks (see [`central_difference`]); that choice
/// never looks at the analytic gradient, so a wrong gradient still fails.
pub fn grad_check<F>(f: F, inputs: &[Tensor], tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();
    drop(g);

    let mut work = inputs.to_vec();
    let (_, piece) = evaluate(&f, &work)?;
    let mut max_rel_error = Vec::with_capacity(inputs.len());
    for (k, grad) in analytic.iter().enumerate() {
        let mut worst = 0.0f64;
        for j in 0..work[k].numel() {
            let numeric = central_difference(&f, &mut work, k, j, piece)?;
            worst = worst.max(relative_error(grad.data()[j], numeric));
        }
        max_rel_error.push(worst);
    }
    Ok(GradCheckReport { max_rel_error, tolerance })
}
