//! DirectLiNGAM: causal ordering by iterated least-squares residuals and
//! pairwise mutual information, then OLS adjacency along the order.
//!
//! Mutual information is estimated without kernels. Marginal entropies use
//! the maximum-entropy approximation with `log cosh` and `u exp(-u^2/2)`
//! contrasts; the joint entropy of a whitened pair is taken as the smallest
//! sum of marginal entropies over planar rotations, which is exact when some
//! rotation makes the pair independent.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::mean_std;
use crate::error::{Error, Result};
use crate::graph::{matrix_from_rows, matrix_rows, CausalGraph};

/// Contrast constants of the maximum-entropy approximation.
const K1: f64 = 79.047;
const K2: f64 = 7.4129;
const GAMMA: f64 = 0.37457;

const ROTATION_GRID: usize = 24;
const GOLDEN_STEPS: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalOrder(pub Vec<usize>);

impl CausalOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || seen[i] {
                return Err(Error::Precondition(format!(
                    "{order:?} is not a permutation"
                )));
            }
            seen[i] = true;
        }
        Ok(Self(order))
    }

    pub fn position(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (p, &v) in self.0.iter().enumerate() {
            pos[v] = p;
        }
        pos
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LingamResult {
    pub names: Vec<String>,
    pub order: CausalOrder,
    /// `adjacency[(i, j)]` is the linear effect of `i` on `j`.
    pub adjacency: DMatrix<f64>,
    pub tau: f64,
    /// Set when some predecessor block needed the ridge fallback.
    pub rank_deficient: bool,
}

#[derive(Serialize, Deserialize)]
struct LingamJson {
    names: Vec<String>,
    order: Vec<usize>,
    adjacency: Vec<Vec<f64>>,
    tau: f64,
}

impl LingamResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LingamJson {
            names: self.names.clone(),
            order: self.order.0.clone(),
            adjacency: matrix_rows(&self.adjacency),
            tau: self.tau,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: LingamJson = serde_json::from_str(text)?;
        let adjacency = matrix_from_rows(&j.adjacency)?;
        if adjacency.nrows() != j.names.len() {
            return Err(Error::Shape("names and adjacency disagree".into()));
        }
        Ok(Self {
            names: j.names,
            order: CausalOrder::new(j.order)?,
            adjacency,
            tau: j.tau,
            rank_deficient: false,
        })
    }
}

impl CausalGraph for LingamResult {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn edge(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.adjacency[(from, to)]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LingamConfig {
    /// Coefficients with magnitude below this are pruned.
    pub tau: f64,
}

impl Default for LingamConfig {
    fn default() -> Self {
        Self { tau: 0.05 }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// `xi - (cov(xi, xj) / var(xj)) xj`, uncorrelated with `xj`.
pub fn residual(xi: &[f64], xj: &[f64]) -> Result<Vec<f64>> {
    if xi.len() != xj.len() {
        return Err(Error::Shape(format!("{} vs {} samples", xi.len(), xj.len())));
    }
    if xi.len() < 3 {
        return Err(Error::Precondition("residual needs at least 3 samples".into()));
    }
    let (mi, mj) = (mean(xi), mean(xj));
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, b) in xi.iter().zip(xj) {
        cov += (a - mi) * (b - mj);
        var += (b - mj) * (b - mj);
    }
    if var <= 0.0 {
        return Err(Error::Degenerate("regressor has zero variance".into()));
    }
    let coef = cov / var;
    Ok(xi.iter().zip(xj).map(|(a, b)| a - coef * b).collect())
}

fn standardized(x: &[f64]) -> Result<Vec<f64>> {
    let (m, s) = mean_std(x.iter().copied());
    if !(s > 1e-12 * m.abs().max(1.0)) {
        return Err(Error::Degenerate("constant input to mutual information".into()));
    }
    Ok(x.iter().map(|v| (v - m) / s).collect())
}

fn log_cosh(u: f64) -> f64 {
    let a = u.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Maximum-entropy approximation of the differential entropy of a
/// unit-variance sample.
pub fn entropy(u: &[f64]) -> f64 {
    let n = u.len() as f64;
    let (mut g1, mut g2) = (0.0, 0.0);
    for &v in u {
        g1 += log_cosh(v);
        g2 += v * (-0.5 * v * v).exp();
    }
    let (g1, g2) = (g1 / n, g2 / n);
    (1.0 + (2.0 * std::f64::consts::PI).ln()) / 2.0 - K1 * (g1 - GAMMA).powi(2) - K2 * g2 * g2
}

fn rotated_entropy(u: &[f64], w: &[f64], theta: f64, buf: &mut (Vec<f64>, Vec<f64>)) -> f64 {
    let (s, c) = theta.sin_cos();
    buf.0.clear();
    buf.1.clear();
    for (a, b) in u.iter().zip(w) {
        buf.0.push(c * a + s * b);
        buf.1.push(-s * a + c * b);
    }
    entropy(&buf.0) + entropy(&buf.1)
}

/// Upper-bound estimate of `H(u, w)` for a whitened pair.
fn joint_entropy(u: &[f64], w: &[f64]) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_2;
    let step = quarter / ROTATION_GRID as f64;
    let mut buf = (Vec::with_capacity(u.len()), Vec::with_capacity(u.len()));
    let mut best = (0.0, f64::INFINITY);
    for k in 0..ROTATION_GRID {
        let theta = k as f64 * step;
        let h = rotated_entropy(u, w, theta, &mut buf);
        if h < best.1 {
            best = (theta, h);
        }
    }
    // golden-section refinement around the best grid angle
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = rotated_entropy(u, w, c, &mut buf);
    let mut fd = rotated_entropy(u, w, d, &mut buf);
    for _ in 0..GOLDEN_STEPS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = rotated_entropy(u, w, c, &mut buf);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = rotated_entropy(u, w, d, &mut buf);
        }
    }
    best.1.min(fc).min(fd)
}

fn mi_one_way(u: &[f64], v: &[f64]) -> f64 {
    let n = u.len() as f64;
    let r = (u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / n).clamp(-1.0, 1.0);
    let s = (1.0 - r * r).max(1e-12);
    let root = s.sqrt();
    let w: Vec<f64> = u.iter().zip(v).map(|(a, b)| (b - r * a) / root).collect();
    let estimate = entropy(u) + entropy(v) - 0.5 * s.ln() - joint_entropy(u, &w);
    estimate.max(0.0)
}

/// Nonnegative, symmetric mutual-information estimate between two samples.
/// Both inputs are standardized internally.
pub fn mi_estimate(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("{} vs {} samples", u.len(), v.len())));
    }
    let u = standardized(u)?;
    let v = standardized(v)?;
    Ok(0.5 * (mi_one_way(&u, &v) + mi_one_way(&v, &u)))
}

fn column(x: &DMatrix<f64>, j: usize) -> Vec<f64> {
    x.column(j).iter().copied().collect()
}

/// The active variable whose regression residuals are least dependent on
/// it: `argmin_j sum_{i != j} MI(residual(x_i, x_j), x_j)`, lowest index on
/// ties.
pub fn select_exogenous(x: &DMatrix<f64>, active: &[usize]) -> Result<usize> {
    if active.len() < 2 {
        return Err(Error::Precondition(
            "select_exogenous needs at least two active variables".into(),
        ));
    }
    let scores: Vec<Result<f64>> = active
        .par_iter()
        .map(|&j| {
            let xj = column(x, j);
            let mut total = 0.0;
            for &i in active {
                if i != j {
                    let r = residual(&column(x, i), &xj)?;
                    total += mi_estimate(&r, &xj)?;
                }
            }
            Ok(total)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (&j, s) in active.iter().zip(scores) {
        let s = s?;
        match best {
            Some((bj, bs)) if s > bs || (s == bs && j > bj) => {}
            _ => best = Some((j, s)),
        }
    }
    Ok(best.unwrap().0)
}

/// Full causal order: repeatedly pick the exogenous variable, then replace
/// every remaining variable by its residual on the chosen one.
pub fn causal_order(x: &DMatrix<f64>) -> Result<CausalOrder> {
    let (b, n) = x.shape();
    if n < 2 {
        return Err(Error::Precondition("need at least two variables".into()));
    }
    if b <= n {
        return Err(Error::Precondition(format!(
            "need more samples ({b}) than variables ({n})"
        )));
    }
    let mut work = x.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut order = Vec::with_capacity(n);
    while active.len() > 1 {
        let k = select_exogenous(&work, &active)?;
        order.push(k);
        active.retain(|&i| i != k);
        let xk = column(&work, k);
        for &i in &active {
            let r = residual(&column(&work, i), &xk)?;
            work.set_column(i, &DVector::from_vec(r));
        }
    }
    order.push(active[0]);
    CausalOrder::new(order)
}

/// OLS of every variable on its predecessors in `order`; coefficients with
/// magnitude below `tau` are zeroed.
pub fn estimate_adjacency(
    x: &DMatrix<f64>,
    names: &[String],
    order: &CausalOrder,
    tau: f64,
) -> Result<LingamResult> {
    let (b, n) = x.shape();
    if order.0.len() != n || names.len() != n {
        return Err(Error::Shape(format!(
            "order of {} and {} names for {n} variables",
            order.0.len(),
            names.len()
        )));
    }
    let means: Vec<f64> = (0..n).map(|j| x.column(j).mean()).collect();
    let centered = DMatrix::from_fn(b, n, |i, j| x[(i, j)] - means[j]);
    let mut adjacency = DMatrix::zeros(n, n);
    let mut rank_deficient = false;
    for p in 1..n {
        let target = order.0[p];
        let preds = &order.0[..p];
        let a = centered.select_columns(preds);
        let y = centered.column(target).clone_owned();
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * y;
        let beta = match gram.clone().cholesky() {
            Some(ch) if well_conditioned(&gram) => ch.solve(&rhs),
            _ => {
                rank_deficient = true;
                log::warn!("rank-deficient predecessors for `{}`; using ridge", names[target]);
                let ridge = gram + DMatrix::identity(p, p) * 1e-8;
                ridge
                    .cholesky()
                    .ok_or_else(|| Error::Degenerate("ridge system not positive definite".into()))?
                    .solve(&rhs)
            }
        };
        for (k, &src) in preds.iter().enumerate() {
            if beta[k].abs() >= tau {
                adjacency[(src, target)] = beta[k];
            }
        }
    }
    Ok(LingamResult {
        names: names.to_vec(),
        order: order.clone(),
        adjacency,
        tau,
        rank_deficient,
    })
}

fn well_conditioned(gram: &DMatrix<f64>) -> bool {
    let diag_max = gram.diagonal().max();
    let eig = gram.clone().symmetric_eigenvalues();
    eig.min() > 1e-12 * diag_max.max(f64::MIN_POSITIVE)
}

/// Order plus adjacency in one call.
pub fn fit_lingam(x: &DMatrix<f64>, names: &[String], cfg: &LingamConfig) -> Result<LingamResult> {
    let order = causal_order(x)?;
    estimate_adjacency(x, names, &order, cfg.tau)
}
