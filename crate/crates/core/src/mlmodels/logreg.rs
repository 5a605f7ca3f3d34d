use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::sigmoid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogregConfig {
    /// Strength of the `0.5 * penalty * ||coef||^2` term; the intercept is
    /// not penalized.
    pub penalty: f64,
    pub max_iter: usize,
    pub gtol: f64,
}

impl Default for LogregConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            max_iter: 100,
            gtol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogregModel {
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Training rows are perfectly separated; coefficients are finite only
    /// because of the penalty.
    pub separated: bool,
    /// Objective after every accepted Newton step, starting point first.
    pub loss_trace: Vec<f64>,
}

impl LogregModel {
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let z: f64 = self.intercept
                    + self.coef.iter().enumerate().map(|(j, c)| c * x[(i, j)]).sum::<f64>();
                sigmoid(z)
            })
            .collect()
    }

    pub fn importance(&self) -> Vec<f64> {
        self.coef.iter().map(|c| c.abs()).collect()
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Penalized negative log-likelihood over the augmented parameters
/// `beta = [intercept, coef...]`.
fn objective(xa: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, penalty: f64) -> f64 {
    let z = xa * beta;
    let nll: f64 = z.iter().zip(y.iter()).map(|(z, y)| softplus(*z) - y * z).sum();
    let reg: f64 = beta.iter().skip(1).map(|b| b * b).sum();
    nll + 0.5 * penalty * reg
}

/// L2-penalized logistic regression by damped Newton iterations.
pub fn fit_logreg(x: &DMatrix<f64>, y: &[u8], cfg: &LogregConfig) -> Result<LogregModel> {
    let (b, n) = x.shape();
    if y.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} rows", y.len())));
    }
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::DegenerateLabels);
    }
    let xa = DMatrix::from_fn(b, n + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let yv = DVector::from_iterator(b, y.iter().map(|&v| v as f64));
    let mut beta = DVector::zeros(n + 1);
    let mut reg_diag = DVector::from_element(n + 1, cfg.penalty);
    reg_diag[0] = 0.0;
    let mut f = objective(&xa, &yv, &beta, cfg.penalty);
    let mut trace = vec![f];

    for _ in 0..cfg.max_iter {
        let p = (&xa * &beta).map(sigmoid);
        let grad = xa.tr_mul(&(&p - &yv)) + reg_diag.component_mul(&beta);
        if grad.norm() < cfg.gtol {
            break;
        }
        let w = p.map(|v| (v * (1.0 - v)).max(1e-12));
        let mut hess = xa.tr_mul(&DMatrix::from_fn(b, n + 1, |i, j| w[i] * xa[(i, j)]));
        for j in 0..=n {
            hess[(j, j)] += reg_diag[j];
        }
        // tiny jitter keeps the unpenalized intercept solvable under separation
        hess[(0, 0)] += 1e-10;
        let step = hess
            .cholesky()
            .ok_or_else(|| Error::Degenerate("logistic Hessian not positive definite".into()))?
            .solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &beta - &step * t;
            let fc = objective(&xa, &yv, &cand, cfg.penalty);
            if fc <= f {
                beta = cand;
                accepted = fc < f || t == 1.0;
                f = fc;
                break;
            }
            t *= 0.5;
        }
        trace.push(f);
        if !accepted {
            break;
        }
    }

    let coef: Vec<f64> = beta.iter().skip(1).copied().collect();
    let model = LogregModel {
        coef,
        intercept: beta[0],
        separated: false,
        loss_trace: trace,
    };
    let separated = model
        .predict_proba(x)
        .iter()
        .zip(y)
        .all(|(p, &t)| (*p >= 0.5) == (t == 1));
    Ok(LogregModel { separated, ..model })
}
