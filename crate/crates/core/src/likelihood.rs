//! Binary outcome to continuous likelihood score.
//!
//! A ReLU classifier (64-32-16-8-1 by default) is trained with class-weighted
//! cross-entropy until its training accuracy first reaches the target; its
//! sigmoid outputs replace the discrete label, and samples it misclassifies
//! are dropped before structure discovery.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Column, ColumnKind, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::mlp::{flatten_grads, sigmoid, Activation, Adam, MlpParams};
use crate::rng::{stream_rng, Stream};

pub const LIKELIHOOD_COLUMN: &str = "OUTCOME_LIKELIHOOD";

/// Scores are clamped into `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub accuracy_target: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32, 16, 8],
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 500,
            accuracy_target: 0.90,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodResult {
    pub scores: Vec<f64>,
    pub kept_indices: Vec<usize>,
    pub w0: f64,
    pub w1: f64,
    pub train_accuracy: f64,
    pub epochs: usize,
}

/// Balanced weights `B / (2 B_c)`, so that `w0 * B0 == w1 * B1`.
pub fn class_weights(labels: &[u8]) -> Result<(f64, f64)> {
    let b = labels.len() as f64;
    let b1 = labels.iter().filter(|&&l| l == 1).count() as f64;
    let b0 = b - b1;
    if b0 == 0.0 || b1 == 0.0 {
        return Err(Error::DegenerateLabels);
    }
    Ok((b / (2.0 * b0), b / (2.0 * b1)))
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// `-mean[w1 y log(p) + w0 (1 - y) log(1 - p)]` with `p` clamped.
pub fn weighted_bce(y: &[u8], yhat: &[f64], w0: f64, w1: f64) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            y.len(),
            yhat.len()
        )));
    }
    let total: f64 = y
        .iter()
        .zip(yhat)
        .map(|(&t, &p)| {
            let p = clamp(p);
            if t == 1 {
                -w1 * p.ln()
            } else {
                -w0 * (1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Weighted cross-entropy of `sigmoid(net(x))` and its gradient with respect
/// to every network parameter (flattened as [`MlpParams::to_flat`]).
pub fn loss_and_grad(
    net: &MlpParams,
    x: &DMatrix<f64>,
    y: &[u8],
    w0: f64,
    w1: f64,
) -> Result<(f64, Vec<f64>)> {
    let cache = net.forward_cached(x)?;
    let logits = cache.output();
    let b = y.len() as f64;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    let loss = weighted_bce(y, &probs, w0, w1)?;
    let grad_out = DMatrix::from_fn(y.len(), 1, |i, _| {
        let p = probs[i];
        if y[i] == 1 {
            -w1 * (1.0 - p) / b
        } else {
            w0 * p / b
        }
    });
    Ok((loss, flatten_grads(&net.backward(&cache, &grad_out))))
}

pub fn predict_scores(net: &MlpParams, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(net
        .forward(x)?
        .iter()
        .map(|&z| clamp(sigmoid(z)))
        .collect())
}

fn accuracy(scores: &[f64], labels: &[u8]) -> f64 {
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= 0.5) == (l == 1))
        .count();
    hits as f64 / labels.len() as f64
}

/// Trains the classifier on a standardized dataset. Training accuracy is
/// checked after every epoch and training halts at the first epoch that
/// reaches `cfg.accuracy_target`.
pub fn train_likelihood_mlp(
    ds: &Dataset,
    cfg: &LikelihoodConfig,
    seed: u64,
) -> Result<(MlpParams, LikelihoodResult)> {
    let (w0, w1) = class_weights(&ds.target)?;
    let mut rng = stream_rng(seed, Stream::Likelihood);
    let mut sizes = vec![ds.vars()];
    sizes.extend(&cfg.hidden);
    sizes.push(1);
    let mut net = MlpParams::init(&sizes, Activation::Relu, Activation::Identity, &mut rng);
    let mut params = net.to_flat();
    let mut opt = Adam::new(params.len(), cfg.learning_rate);

    let x = &ds.values;
    let n = ds.rows();
    let batch = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = 0.0f64;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let xb = DMatrix::from_fn(chunk.len(), x.ncols(), |i, j| x[(chunk[i], j)]);
            let yb: Vec<u8> = chunk.iter().map(|&i| ds.target[i]).collect();
            let (_, grad) = loss_and_grad(&net, &xb, &yb, w0, w1)?;
            opt.step(&mut params, &grad);
            net.set_flat(&params);
        }
        let scores = predict_scores(&net, x)?;
        let acc = accuracy(&scores, &ds.target);
        best = best.max(acc);
        if acc >= cfg.accuracy_target {
            log::info!("likelihood classifier reached {acc:.4} accuracy after {epoch} epochs");
            let kept_indices = filter_correct(&scores, &ds.target)?;
            return Ok((
                net,
                LikelihoodResult {
                    scores,
                    kept_indices,
                    w0,
                    w1,
                    train_accuracy: acc,
                    epochs: epoch,
                },
            ));
        }
    }
    Err(Error::LikelihoodConvergence {
        best_accuracy: best,
        target: cfg.accuracy_target,
    })
}

/// Indices whose score agrees with the label at the 0.5 cut
/// (`score >= 0.5` predicts class 1).
pub fn filter_correct(scores: &[f64], labels: &[u8]) -> Result<Vec<usize>> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(scores
        .iter()
        .zip(labels)
        .enumerate()
        .filter(|(_, (&s, &l))| (s >= 0.5) == (l == 1))
        .map(|(i, _)| i)
        .collect())
}

/// Restricts `ds` to the kept samples and appends the likelihood score as
/// the last column. The binary target stays attached for the importance
/// models but is not part of the value matrix.
pub fn augment_with_likelihood(ds: &Dataset, res: &LikelihoodResult) -> Result<Dataset> {
    if res.kept_indices.is_empty() {
        return Err(Error::EmptyCohort);
    }
    if res.scores.len() != ds.rows() {
        return Err(Error::Shape(format!(
            "{} scores for {} rows",
            res.scores.len(),
            ds.rows()
        )));
    }
    if ds.column_index(LIKELIHOOD_COLUMN).is_some() {
        return Err(Error::Schema(format!("`{LIKELIHOOD_COLUMN}` already present")));
    }
    let mut out = ds.select_rows(&res.kept_indices);
    let n = out.vars();
    let mut values = out.values.clone().insert_column(n, 0.0);
    for (r, &i) in res.kept_indices.iter().enumerate() {
        values[(r, n)] = res.scores[i];
    }
    out.values = values;
    out.columns.push(Column {
        name: LIKELIHOOD_COLUMN.to_string(),
        kind: ColumnKind::Continuous,
        source: LIKELIHOOD_COLUMN.to_string(),
    });
    out.schema
        .push(ColumnSchema::new(LIKELIHOOD_COLUMN, ColumnKind::Continuous));
    Ok(out)
}
