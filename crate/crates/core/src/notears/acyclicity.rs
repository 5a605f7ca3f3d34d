//! Trace-exponential acyclicity measure and its augmented-Lagrangian
//! penalty.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const TAYLOR_TERMS: usize = 18;

/// Matrix exponential by scaling and squaring around a truncated Taylor
/// series. The argument is scaled so its 1-norm is at most 1/2 before the
/// series is summed.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=TAYLOR_TERMS {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

fn check_square(w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != w.ncols() {
        return Err(Error::Shape(format!(
            "acyclicity needs a square matrix, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(())
}

/// `h(W) = tr(exp(W o W)) - N`; zero exactly when the support of `W` is
/// acyclic.
pub fn acyclicity(w: &DMatrix<f64>) -> Result<f64> {
    check_square(w)?;
    let e = expm(&w.component_mul(w));
    Ok(e.trace() - w.nrows() as f64)
}

/// `dh/dW = exp(W o W)^T o 2W`.
pub fn acyclicity_gradient(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(w)?;
    let e = expm(&w.component_mul(w));
    Ok(e.transpose().component_mul(w) * 2.0)
}

/// `alpha h + (rho / 2) h^2`.
pub fn dag_penalty(w: &DMatrix<f64>, alpha: f64, rho: f64) -> Result<f64> {
    let h = acyclicity(w)?;
    Ok(penalty_from_h(h, alpha, rho))
}

pub(crate) fn penalty_from_h(h: f64, alpha: f64, rho: f64) -> f64 {
    alpha * h + 0.5 * rho * h * h
}
