//! Synthetic structural equation models with known ground truth, plus
//! structure-recovery metrics.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::topological_order;
use crate::mlp::sigmoid;
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Uniform,
    Laplace,
    Gaussian,
}

/// Zero-mean noise with standard deviation `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub kind: NoiseKind,
    pub scale: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Uniform,
            scale: 1.0,
        }
    }
}

impl Noise {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::Uniform => {
                let half = 3f64.sqrt() * self.scale;
                rng.random_range(-half..half)
            }
            NoiseKind::Laplace => {
                let b = self.scale / std::f64::consts::SQRT_2;
                let u: f64 = rng.random::<f64>() - 0.5;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
            }
            NoiseKind::Gaussian => self.scale * rng.sample::<f64, _>(StandardNormal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenActivation {
    Sigmoid,
    Tanh,
}

impl HiddenActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            HiddenActivation::Sigmoid => sigmoid(z),
            HiddenActivation::Tanh => z.tanh(),
        }
    }
}

/// Random one-hidden-layer function of a node's parents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeNet {
    pub parents: Vec<usize>,
    /// `hidden[p][k]`: weight from parent `p` to hidden unit `k`.
    pub hidden: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl NodeNet {
    pub fn eval(&self, activation: HiddenActivation, parent_values: &[f64]) -> f64 {
        self.output
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let z: f64 = parent_values
                    .iter()
                    .zip(&self.hidden)
                    .map(|(x, row)| x * row[k])
                    .sum();
                w * activation.apply(z)
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Mechanism {
    /// `weights[i][j]` is the coefficient of `x_i` in `x_j`.
    Linear { weights: Vec<Vec<f64>> },
    /// One net per node; `None` for root nodes.
    Nonlinear {
        activation: HiddenActivation,
        nets: Vec<Option<NodeNet>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub name: String,
    pub parents: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Ground-truth SEM. `dag[i][j] == 1` means `i -> j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub names: Vec<String>,
    pub dag: Vec<Vec<u8>>,
    pub mechanism: Mechanism,
    pub noise: Noise,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSpec>,
}

fn bool_rows(m: &DMatrix<bool>) -> Vec<Vec<u8>> {
    m.row_iter().map(|r| r.iter().map(|&b| b as u8).collect()).collect()
}

impl SemSpec {
    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn adjacency(&self) -> DMatrix<bool> {
        let n = self.n_vars();
        DMatrix::from_fn(n, n, |i, j| self.dag[i][j] != 0)
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.n_vars()).filter(|&i| self.dag[i][j] != 0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.dag.len() != n || self.dag.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("dag must be {n}x{n}")));
        }
        if topological_order(&self.adjacency()).is_none() {
            return Err(Error::Validation("dag has a directed cycle".into()));
        }
        match &self.mechanism {
            Mechanism::Linear { weights } => {
                for i in 0..n {
                    for j in 0..n {
                        let w = weights[i][j];
                        let edge = self.dag[i][j] != 0;
                        if edge && !(0.5..=2.0).contains(&w.abs()) {
                            return Err(Error::Validation(format!(
                                "edge weight {w} outside 0.5 <= |w| <= 2"
                            )));
                        }
                        if !edge && w != 0.0 {
                            return Err(Error::Validation("weight on a non-edge".into()));
                        }
                    }
                }
            }
            Mechanism::Nonlinear { nets, .. } => {
                if nets.len() != n {
                    return Err(Error::Shape("one net per node required".into()));
                }
                for (j, net) in nets.iter().enumerate() {
                    let parents = self.parents(j);
                    match net {
                        Some(net) if net.parents == parents => {}
                        None if parents.is_empty() => {}
                        _ => {
                            return Err(Error::Validation(format!(
                                "mechanism of node {j} does not match its parents"
                            )))
                        }
                    }
                }
            }
        }
        if let Some(o) = &self.outcome {
            if o.parents.len() != o.weights.len() || o.parents.iter().any(|&p| p >= n) {
                return Err(Error::Validation("outcome parents invalid".into()));
            }
        }
        Ok(())
    }

    /// Linear SEMs with Gaussian noise are not identifiable by LiNGAM.
    pub fn gaussian_warning(&self) -> bool {
        matches!(self.mechanism, Mechanism::Linear { .. }) && self.noise.kind == NoiseKind::Gaussian
    }

    /// Names and adjacency including the outcome node, when attached.
    pub fn truth_graph(&self) -> (Vec<String>, DMatrix<bool>) {
        let n = self.n_vars();
        let Some(o) = &self.outcome else {
            return (self.names.clone(), self.adjacency());
        };
        let mut names = self.names.clone();
        names.push(o.name.clone());
        let adj = DMatrix::from_fn(n + 1, n + 1, |i, j| {
            if i < n && j < n {
                self.dag[i][j] != 0
            } else {
                j == n && i < n && o.parents.contains(&i)
            }
        });
        (names, adj)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: SemSpec = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Random DAG with linear weights `|w|` uniform in `[0.5, 2]`, random sign.
    pub fn random_linear(n: usize, edge_prob: f64, noise: Noise, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::SynthGraph);
        let dag = random_dag_with(n, edge_prob, &mut rng)?;
        let weights = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if dag[(i, j)] {
                            let m: f64 = rng.random_range(0.5..=2.0);
                            if rng.random_bool(0.5) {
                                m
                            } else {
                                -m
                            }
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            names: default_names(n),
            dag: bool_rows(&dag),
            mechanism: Mechanism::Linear { weights },
            noise,
            outcome: None,
        })
    }

    /// Random DAG with a width-10 one-hidden-layer net per non-root node,
    /// weights drawn from a standard normal.
    pub fn random_nonlinear(
        n: usize,
        edge_prob: f64,
        noise: Noise,
        activation: HiddenActivation,
        seed: u64,
    ) -> Result<Self> {
        const WIDTH: usize = 10;
        let mut rng = stream_rng(seed, Stream::SynthGraph);
        let dag = random_dag_with(n, edge_prob, &mut rng)?;
        let nets = (0..n)
            .map(|j| {
                let parents: Vec<usize> = (0..n).filter(|&i| dag[(i, j)]).collect();
                if parents.is_empty() {
                    return None;
                }
                let hidden = parents
                    .iter()
                    .map(|_| (0..WIDTH).map(|_| rng.sample(StandardNormal)).collect())
                    .collect();
                let output = (0..WIDTH).map(|_| rng.sample(StandardNormal)).collect();
                Some(NodeNet {
                    parents,
                    hidden,
                    output,
                })
            })
            .collect();
        Ok(Self {
            names: default_names(n),
            dag: bool_rows(&dag),
            mechanism: Mechanism::Nonlinear { activation, nets },
            noise,
            outcome: None,
        })
    }
}

pub fn default_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("X{i}")).collect()
}

fn random_dag_with<R: Rng + ?Sized>(n: usize, edge_prob: f64, rng: &mut R) -> Result<DMatrix<bool>> {
    if n < 2 {
        return Err(Error::Precondition("random_dag needs n >= 2".into()));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Precondition("edge_prob must lie in [0, 1]".into()));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut adj = DMatrix::from_element(n, n, false);
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(edge_prob) {
                adj[(perm[a], perm[b])] = true;
            }
        }
    }
    Ok(adj)
}

/// Random DAG: edges only go forward along a random permutation.
pub fn random_dag(n: usize, edge_prob: f64, seed: u64) -> Result<DMatrix<bool>> {
    random_dag_with(n, edge_prob, &mut stream_rng(seed, Stream::SynthGraph))
}

fn ancestral_sample(
    spec: &SemSpec,
    b: usize,
    seed: u64,
    mut mechanism: impl FnMut(usize, &[f64]) -> f64,
) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n_vars();
    let order = topological_order(&spec.adjacency()).expect("validated acyclic");
    let parents: Vec<Vec<usize>> = (0..n).map(|j| spec.parents(j)).collect();
    let mut rng = stream_rng(seed, Stream::SynthSample);
    let mut x = DMatrix::zeros(b, n);
    let mut buf = Vec::new();
    for i in 0..b {
        for &j in &order {
            buf.clear();
            buf.extend(parents[j].iter().map(|&p| x[(i, p)]));
            let signal = if buf.is_empty() { 0.0 } else { mechanism(j, &buf) };
            x[(i, j)] = signal + spec.noise.sample(&mut rng);
        }
    }
    Ok(x)
}

/// `x_j = sum_parents w x_parent + noise_j`, sampled in topological order.
pub fn sample_linear_sem(spec: &SemSpec, b: usize, seed: u64) -> Result<DMatrix<f64>> {
    let Mechanism::Linear { weights } = &spec.mechanism else {
        return Err(Error::Precondition("spec is not linear".into()));
    };
    if spec.gaussian_warning() {
        log::warn!("linear SEM with gaussian noise: causal direction is not identifiable");
    }
    let parents: Vec<Vec<usize>> = (0..spec.n_vars()).map(|j| spec.parents(j)).collect();
    ancestral_sample(spec, b, seed, |j, vals| {
        parents[j].iter().zip(vals).map(|(&p, v)| weights[p][j] * v).sum()
    })
}

/// `x_j = f_j(parents) + noise_j` with each `f_j` the node's random net.
pub fn sample_nonlinear_sem(spec: &SemSpec, b: usize, seed: u64) -> Result<DMatrix<f64>> {
    let Mechanism::Nonlinear { activation, nets } = &spec.mechanism else {
        return Err(Error::Precondition("spec is not nonlinear".into()));
    };
    ancestral_sample(spec, b, seed, |j, vals| {
        nets[j].as_ref().map_or(0.0, |net| net.eval(*activation, vals))
    })
}

pub fn sample_sem(spec: &SemSpec, b: usize, seed: u64) -> Result<DMatrix<f64>> {
    match spec.mechanism {
        Mechanism::Linear { .. } => sample_linear_sem(spec, b, seed),
        Mechanism::Nonlinear { .. } => sample_nonlinear_sem(spec, b, seed),
    }
}

/// Draws `y ~ Bernoulli(sigmoid(sum w x_parent + bias))`, with the bias set
/// by bisection so the expected positive rate is one half. Returns the
/// labels and the bias.
pub fn attach_binary_outcome(
    x: &DMatrix<f64>,
    parents: &[usize],
    weights: &[f64],
    seed: u64,
) -> Result<(Vec<u8>, f64)> {
    if parents.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} parents with {} weights",
            parents.len(),
            weights.len()
        )));
    }
    if let Some(&p) = parents.iter().find(|&&p| p >= x.ncols()) {
        return Err(Error::Precondition(format!("outcome parent {p} out of range")));
    }
    let b = x.nrows();
    if b == 0 {
        return Err(Error::EmptyCohort);
    }
    let eta: Vec<f64> = (0..b)
        .map(|i| parents.iter().zip(weights).map(|(&p, w)| w * x[(i, p)]).sum())
        .collect();
    let rate = |bias: f64| eta.iter().map(|e| sigmoid(e + bias)).sum::<f64>() / b as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    if rate(lo) > 0.5 || rate(hi) < 0.5 {
        return Err(Error::Balance { rate: rate(0.0) });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bias = if weights.iter().all(|&w| w == 0.0) {
        0.0
    } else {
        0.5 * (lo + hi)
    };
    let mut rng = stream_rng(seed, Stream::SynthOutcome);
    let y: Vec<u8> = eta
        .iter()
        .map(|e| (rng.random::<f64>() < sigmoid(e + bias)) as u8)
        .collect();
    let realized = y.iter().filter(|&&v| v == 1).count() as f64 / b as f64;
    if !(0.35..=0.65).contains(&realized) {
        return Err(Error::Balance { rate: realized });
    }
    Ok((y, bias))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryMetrics {
    pub shd: usize,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub edge_f1: f64,
}

/// SHD counts each node pair whose edge state differs once, so a reversed
/// edge costs 1. Precision and recall are over directed edges.
pub fn structural_metrics(est: &DMatrix<bool>, truth: &DMatrix<bool>) -> Result<RecoveryMetrics> {
    if est.shape() != truth.shape() || est.nrows() != est.ncols() {
        return Err(Error::Shape(format!(
            "estimate {:?} vs truth {:?}",
            est.shape(),
            truth.shape()
        )));
    }
    let n = est.nrows();
    let mut shd = 0;
    for i in 0..n {
        for j in i + 1..n {
            if (est[(i, j)], est[(j, i)]) != (truth[(i, j)], truth[(j, i)]) {
                shd += 1;
            }
        }
    }
    let off = |m: &DMatrix<bool>| {
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && m[(i, j)])
            .count()
    };
    let n_est = off(est);
    let n_true = off(truth);
    let tp = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && est[(i, j)] && truth[(i, j)])
        .count();
    let precision = match (n_est, n_true) {
        (0, 0) => 1.0,
        (0, _) => 0.0,
        _ => tp as f64 / n_est as f64,
    };
    let recall = if n_true == 0 { 1.0 } else { tp as f64 / n_true as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(RecoveryMetrics {
        shd,
        edge_precision: precision,
        edge_recall: recall,
        edge_f1: f1,
    })
}
