//! Weighted digraphs, acyclicity checks and DOT rendering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Read-only view shared by the LiNGAM and NOTEARS outputs.
pub trait CausalGraph {
    fn names(&self) -> &[String];

    /// Signed strength of `from -> to` after thresholding; 0 when absent.
    fn edge(&self, from: usize, to: usize) -> f64;

    fn node(&self, name: &str) -> Option<usize> {
        self.names().iter().position(|n| n == name)
    }

    fn support(&self) -> DMatrix<bool> {
        let n = self.names().len();
        DMatrix::from_fn(n, n, |i, j| i != j && self.edge(i, j) != 0.0)
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.names().len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.edge(i, j);
                if i != j && w != 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }
}

/// Nonnegative adjacency learned by NOTEARS-MLP. `weights[(k, j)]` is the
/// strength of `k -> j`; edges are the entries `>= omega`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDigraph {
    pub names: Vec<String>,
    pub weights: DMatrix<f64>,
    pub omega: f64,
}

#[derive(Serialize, Deserialize)]
struct DigraphJson {
    names: Vec<String>,
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    omega: f64,
}

impl WeightedDigraph {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&DigraphJson {
            names: self.names.clone(),
            w: matrix_rows(&self.weights),
            omega: self.omega,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: DigraphJson = serde_json::from_str(text)?;
        let weights = matrix_from_rows(&j.w)?;
        if weights.nrows() != j.names.len() {
            return Err(Error::Shape(format!(
                "{} names for a {}x{} matrix",
                j.names.len(),
                weights.nrows(),
                weights.ncols()
            )));
        }
        Ok(Self {
            names: j.names,
            weights,
            omega: j.omega,
        })
    }
}

impl CausalGraph for WeightedDigraph {
    fn names(&self) -> &[String] {
        &self.names
    }

    fn edge(&self, from: usize, to: usize) -> f64 {
        let w = self.weights[(from, to)];
        if from != to && w.abs() >= self.omega {
            w
        } else {
            0.0
        }
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("adjacency must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Kahn's algorithm; `None` when the support has a directed cycle.
pub fn topological_order(support: &DMatrix<bool>) -> Option<Vec<usize>> {
    let n = support.nrows();
    let mut indeg: Vec<usize> = (0..n)
        .map(|j| (0..n).filter(|&i| support[(i, j)]).count())
        .collect();
    let mut ready: Vec<usize> = (0..n).filter(|&j| indeg[j] == 0).collect();
    ready.reverse();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for j in 0..n {
            if support[(i, j)] {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

pub fn is_acyclic(support: &DMatrix<bool>) -> bool {
    topological_order(support).is_some()
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT digraph with every node listed and edges labelled by strength
/// rounded to two decimals.
pub fn to_dot(graph: &dyn CausalGraph, title: &str) -> String {
    let mut out = format!("digraph {} {{\n", dot_id(title));
    out.push_str("  rankdir=LR;\n");
    for name in graph.names() {
        out.push_str(&format!("  {};\n", dot_id(name)));
    }
    for (i, j, w) in graph.edges() {
        out.push_str(&format!(
            "  {} -> {} [label=\"{:.2}\"];\n",
            dot_id(&graph.names()[i]),
            dot_id(&graph.names()[j]),
            w
        ));
    }
    out.push_str("}\n");
    out
}
