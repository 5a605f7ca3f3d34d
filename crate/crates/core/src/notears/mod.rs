//! NOTEARS-MLP: one MLP regressor per variable, adjacency from first-layer
//! weight norms, and a trace-exponential acyclicity constraint enforced by
//! an augmented Lagrangian.

pub mod acyclicity;
pub mod optim;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use acyclicity::{acyclicity, acyclicity_gradient, dag_penalty, expm};

use crate::error::{Error, Result};
use crate::graph::{is_acyclic, WeightedDigraph};
use crate::mlp::{Activation, LayerGrad, MlpParams};
use crate::rng::{stream_rng, Stream};
use optim::{minimize_box, LbfgsOptions, Minimum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotearsConfig {
    /// Hidden widths of every regressor; `[10]` is one hidden layer of 10.
    pub hidden: Vec<usize>,
    /// L1 weight on the first-layer parameters.
    pub lambda: f64,
    /// Weight of `0.5 * ||weights||^2` over every layer's weight matrix.
    /// Without it a regressor can shrink its first layer and inflate the
    /// next one, so small cycles never reach exact zero.
    pub weight_decay: f64,
    pub max_inner_iter: usize,
    pub max_outer_iter: usize,
    pub alpha_init: f64,
    pub rho_init: f64,
    pub rho_growth: f64,
    /// `rho` grows unless `h` falls to this fraction of its previous value.
    pub progress: f64,
    pub h_tol: f64,
    pub rho_max: f64,
    /// Edge threshold on the learned adjacency.
    pub omega: f64,
}

impl Default for NotearsConfig {
    fn default() -> Self {
        Self {
            hidden: vec![10],
            lambda: 0.003,
            weight_decay: 0.01,
            max_inner_iter: 100,
            max_outer_iter: 100,
            alpha_init: 0.0,
            rho_init: 1.0,
            rho_growth: 10.0,
            progress: 0.25,
            h_tol: 1e-8,
            rho_max: 1e16,
            omega: 0.3,
        }
    }
}

/// `N` regressors, model `j` predicting variable `j` from all `N` inputs with
/// its own input row `j` held at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorBank {
    pub models: Vec<MlpParams>,
}

impl RegressorBank {
    pub fn init<R: Rng + ?Sized>(n: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![n];
        sizes.extend(hidden);
        sizes.push(1);
        let models = (0..n)
            .map(|j| {
                let mut m = MlpParams::init(&sizes, Activation::Sigmoid, Activation::Identity, rng);
                // a zero first layer is a saddle the L1 term can pin in place
                m.layers[0].weight.row_mut(j).fill(0.0);
                m
            })
            .collect();
        Self { models }
    }

    pub fn n_vars(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        for (j, m) in self.models.iter().enumerate() {
            if m.input_dim() != n || m.output_dim() != 1 {
                return Err(Error::Shape(format!(
                    "regressor {j} maps {} -> {}, expected {n} -> 1",
                    m.input_dim(),
                    m.output_dim()
                )));
            }
            if m.layers[0].weight.row(j).iter().any(|&v| v != 0.0) {
                return Err(Error::Precondition(format!(
                    "regressor {j} has nonzero weights on its own variable"
                )));
            }
        }
        Ok(())
    }

    /// `A[(k, j)] = ||theta_j^1[k, :]||^2`, the Hadamard square of the
    /// adjacency.
    fn squared_adjacency(&self) -> DMatrix<f64> {
        let n = self.n_vars();
        DMatrix::from_fn(n, n, |k, j| self.models[j].layers[0].weight.row(k).norm_squared())
    }

    fn weight_energy(&self) -> f64 {
        self.models
            .iter()
            .flat_map(|m| m.layers.iter())
            .map(|l| l.weight.norm_squared())
            .sum()
    }

    fn first_layer_l1(&self) -> f64 {
        self.models
            .iter()
            .map(|m| m.layers[0].weight.iter().map(|v| v.abs()).sum::<f64>())
            .sum()
    }
}

/// Predictions of one regressor for every row of `x`.
pub fn mlp_forward(model: &MlpParams, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let out = model.forward(x)?;
    Ok(out.column(0).into_owned())
}

/// `W[(k, j)] = ||theta_j^1[k, :]||_2`.
pub fn aggregate_adjacency(bank: &RegressorBank) -> DMatrix<f64> {
    bank.squared_adjacency().map(f64::sqrt)
}

/// Reconstruction plus acyclicity penalty, with gradients per model.
/// The L1 term is left to the caller.
fn smooth_loss(
    bank: &RegressorBank,
    x: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    weight_decay: f64,
) -> Result<(f64, f64, Vec<Vec<LayerGrad>>)> {
    let n = bank.n_vars();
    if x.ncols() != n {
        return Err(Error::Shape(format!(
            "data has {} columns for {n} regressors",
            x.ncols()
        )));
    }
    let denom = (n * x.nrows()) as f64;
    let scale = 2.0 / denom;
    let parts: Vec<Result<(f64, Vec<LayerGrad>)>> = bank
        .models
        .par_iter()
        .enumerate()
        .map(|(j, m)| {
            let cache = m.forward_cached(x)?;
            let resid = cache.output().column(0) - x.column(j);
            let loss = resid.norm_squared() / denom;
            let grad_out = DMatrix::from_column_slice(x.nrows(), 1, (resid * scale).as_slice());
            Ok((loss, m.backward(&cache, &grad_out)))
        })
        .collect();
    let mut recon = 0.0;
    let mut grads = Vec::with_capacity(n);
    for p in parts {
        let (l, g) = p?;
        recon += l;
        grads.push(g);
    }

    if weight_decay != 0.0 {
        for (g, m) in grads.iter_mut().zip(&bank.models) {
            for (lg, layer) in g.iter_mut().zip(&m.layers) {
                lg.weight += &layer.weight * weight_decay;
            }
        }
    }

    let a = bank.squared_adjacency();
    let e = expm(&a);
    let h = e.trace() - n as f64;
    let coeff = alpha + rho * h;
    for (j, g) in grads.iter_mut().enumerate() {
        let theta = &bank.models[j].layers[0].weight;
        let gw = &mut g[0].weight;
        for k in 0..n {
            // d tr(exp(A)) / dA = exp(A)^T
            let factor = coeff * e[(j, k)] * 2.0;
            for d in 0..theta.ncols() {
                gw[(k, d)] += factor * theta[(k, d)];
            }
        }
        gw.row_mut(j).fill(0.0);
    }
    let decay = 0.5 * weight_decay * bank.weight_energy();
    Ok((recon + decay + acyclicity::penalty_from_h(h, alpha, rho), h, grads))
}

/// `(1/N) sum_j mean_i (X_ij - M_j(X)_i)^2 + lambda ||theta^1||_1
/// + (weight_decay/2) ||weights||^2 + alpha h + (rho/2) h^2`.
pub fn total_loss(
    bank: &RegressorBank,
    x: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    lambda: f64,
    weight_decay: f64,
) -> Result<f64> {
    let n = bank.n_vars();
    if x.ncols() != n {
        return Err(Error::Shape(format!(
            "data has {} columns for {n} regressors",
            x.ncols()
        )));
    }
    let mut recon = 0.0;
    for (j, m) in bank.models.iter().enumerate() {
        let pred = mlp_forward(m, x)?;
        recon += (pred - x.column(j)).norm_squared();
    }
    recon /= (n * x.nrows()) as f64;
    let h = current_h(bank);
    Ok(recon
        + lambda * bank.first_layer_l1()
        + 0.5 * weight_decay * bank.weight_energy()
        + acyclicity::penalty_from_h(h, alpha, rho))
}

/// [`total_loss`] and its gradient, model by model and layer by layer. The
/// L1 term contributes `lambda * sign(theta)`.
pub fn total_loss_grad(
    bank: &RegressorBank,
    x: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    lambda: f64,
    weight_decay: f64,
) -> Result<(f64, Vec<Vec<LayerGrad>>)> {
    let (smooth, _, mut grads) = smooth_loss(bank, x, alpha, rho, weight_decay)?;
    for (j, g) in grads.iter_mut().enumerate() {
        let theta = &bank.models[j].layers[0].weight;
        for (gv, tv) in g[0].weight.iter_mut().zip(theta.iter()) {
            if *tv != 0.0 {
                *gv += lambda * tv.signum();
            }
        }
        g[0].weight.row_mut(j).fill(0.0);
    }
    Ok((smooth + lambda * bank.first_layer_l1(), grads))
}

/// Flat optimizer layout. The first-layer weights are split into
/// nonnegative positive and negative parts so the L1 term is smooth.
struct Packing {
    n: usize,
    first: usize,
    rest: usize,
}

impl Packing {
    fn new(bank: &RegressorBank) -> Self {
        let m = &bank.models[0];
        let first = m.layers[0].weight.len();
        let rest = m.num_params() - first;
        Self {
            n: bank.n_vars(),
            first,
            rest,
        }
    }

    fn per_model(&self) -> usize {
        2 * self.first + self.rest
    }

    fn pack(&self, bank: &RegressorBank) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.per_model());
        for m in &bank.models {
            let w = &m.layers[0].weight;
            out.extend(w.iter().map(|v| v.max(0.0)));
            out.extend(w.iter().map(|v| (-v).max(0.0)));
            out.extend(m.to_flat().into_iter().skip(self.first));
        }
        out
    }

    fn unpack_into(&self, x: &[f64], bank: &mut RegressorBank) {
        for (j, m) in bank.models.iter_mut().enumerate() {
            let base = j * self.per_model();
            let pos = &x[base..base + self.first];
            let neg = &x[base + self.first..base + 2 * self.first];
            let mut flat: Vec<f64> = pos.iter().zip(neg).map(|(p, q)| p - q).collect();
            flat.extend_from_slice(&x[base + 2 * self.first..base + self.per_model()]);
            m.set_flat(&flat);
        }
    }

    fn bounds(&self, bank: &RegressorBank) -> (Vec<f64>, Vec<f64>) {
        let mut lower = Vec::with_capacity(self.n * self.per_model());
        let mut upper = Vec::with_capacity(self.n * self.per_model());
        for (j, m) in bank.models.iter().enumerate() {
            let rows = m.layers[0].weight.nrows();
            for _ in 0..2 {
                for idx in 0..self.first {
                    // column-major: row index is idx % rows
                    lower.push(0.0);
                    upper.push(if idx % rows == j { 0.0 } else { f64::INFINITY });
                }
            }
            for _ in 0..self.rest {
                lower.push(f64::NEG_INFINITY);
                upper.push(f64::INFINITY);
            }
        }
        (lower, upper)
    }

    fn gradient(&self, grads: &[Vec<LayerGrad>], lambda: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.per_model());
        for g in grads {
            out.extend(g[0].weight.iter().map(|v| v + lambda));
            out.extend(g[0].weight.iter().map(|v| -v + lambda));
            out.extend(g[0].bias.iter());
            for lg in &g[1..] {
                out.extend(lg.weight.iter());
                out.extend(lg.bias.iter());
            }
        }
        out
    }
}

/// Minimizes [`total_loss`] at fixed `(alpha, rho)` starting from `bank`.
pub fn minimize_fixed(
    bank: &mut RegressorBank,
    x: &DMatrix<f64>,
    alpha: f64,
    rho: f64,
    lambda: f64,
    weight_decay: f64,
    max_iter: usize,
) -> Result<Minimum> {
    bank.validate()?;
    let packing = Packing::new(bank);
    let (lower, upper) = packing.bounds(bank);
    let x0 = packing.pack(bank);
    let mut scratch = bank.clone();
    let mut failure = None;
    let objective = |p: &[f64]| {
        packing.unpack_into(p, &mut scratch);
        match smooth_loss(&scratch, x, alpha, rho, weight_decay) {
            Ok((smooth, _, grads)) => {
                let l1: f64 = (0..packing.n)
                    .map(|j| {
                        let base = j * packing.per_model();
                        p[base..base + 2 * packing.first].iter().sum::<f64>()
                    })
                    .sum();
                (smooth + lambda * l1, packing.gradient(&grads, lambda))
            }
            Err(e) => {
                failure = Some(e);
                (f64::INFINITY, vec![0.0; p.len()])
            }
        }
    };
    let opts = LbfgsOptions {
        max_iter,
        ..Default::default()
    };
    let result = minimize_box(objective, &x0, &lower, &upper, &opts);
    if let Some(e) = failure {
        return Err(e);
    }
    packing.unpack_into(&result.x, bank);
    Ok(result)
}

/// Diagnostics from the dual ascent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotearsReport {
    pub h: f64,
    pub alpha: f64,
    pub rho: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub omega: f64,
}

fn current_h(bank: &RegressorBank) -> f64 {
    expm(&bank.squared_adjacency()).trace() - bank.n_vars() as f64
}

/// Learns a weighted DAG from standardized data.
pub fn fit_notears_mlp(
    x: &DMatrix<f64>,
    names: &[String],
    cfg: &NotearsConfig,
    seed: u64,
) -> Result<(WeightedDigraph, RegressorBank, NotearsReport)> {
    let (b, n) = x.shape();
    if names.len() != n {
        return Err(Error::Shape(format!("{} names for {n} columns", names.len())));
    }
    if b <= n {
        return Err(Error::Precondition(format!(
            "need more samples ({b}) than variables ({n})"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Notears);
    let mut bank = RegressorBank::init(n, &cfg.hidden, &mut rng);
    let mut alpha = cfg.alpha_init;
    let mut rho = cfg.rho_init;
    let mut h = f64::INFINITY;
    let mut outer = 0;
    let mut inner = 0;

    while outer < cfg.max_outer_iter {
        outer += 1;
        let mut h_new = h;
        while rho < cfg.rho_max {
            let m = minimize_fixed(
                &mut bank,
                x,
                alpha,
                rho,
                cfg.lambda,
                cfg.weight_decay,
                cfg.max_inner_iter,
            )?;
            inner += m.iterations;
            h_new = current_h(&bank);
            if h_new > cfg.progress * h {
                rho *= cfg.rho_growth;
            } else {
                break;
            }
        }
        h = h_new;
        alpha += rho * h;
        log::debug!("dual step {outer}: h = {h:.3e}, rho = {rho:.1e}, alpha = {alpha:.3e}");
        if h <= cfg.h_tol || rho >= cfg.rho_max {
            break;
        }
    }
    if !(h <= cfg.h_tol) {
        return Err(Error::NotearsConvergence { h });
    }

    let weights = aggregate_adjacency(&bank);
    let mut omega = cfg.omega;
    let mut step = 0;
    loop {
        let graph = WeightedDigraph {
            names: names.to_vec(),
            weights: weights.clone(),
            omega,
        };
        if is_acyclic(&crate::graph::CausalGraph::support(&graph)) {
            let report = NotearsReport {
                h,
                alpha,
                rho,
                outer_iterations: outer,
                inner_iterations: inner,
                omega,
            };
            return Ok((graph, bank, report));
        }
        step += 1;
        omega = cfg.omega + 0.01 * step as f64;
    }
}
