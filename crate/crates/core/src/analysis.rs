//! Correlation, ranking and rank-concordance machinery.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::CausalGraph;

fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxy, sxx, syy)
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    let (sxy, sxx, syy) = moments(x, y);
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("correlation of a constant vector".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Precondition("pearson needs at least 3 pairs".into()));
    }
    correlation(x, y)
}

/// Two-sided p-value of a correlation `r` over `n` pairs via the Student-t
/// statistic `r sqrt((n - 2) / (1 - r^2))` with `n - 2` degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Average ranks (1-based); tied values share the mean of their positions.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 4 {
        return Err(Error::Precondition("spearman needs at least 4 pairs".into()));
    }
    correlation(&fractional_ranks(x), &fractional_ranks(y))
        .map_err(|_| Error::Degenerate("all values tied".into()))
}

/// Spearman rank correlation and its two-sided t-approximation p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let rho = spearman_rho(x, y)?;
    Ok((rho, correlation_p_value(rho, x.len())))
}

/// Exact permutation p-value (mid-p) for Spearman's rho, enumerating all
/// `n!` orderings of `y`. Orderings exactly as extreme as the observed one
/// count half. Limited to `n <= 10`.
pub fn spearman_exact_p(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n > 10 {
        return Err(Error::Precondition("exact permutation p limited to n <= 10".into()));
    }
    let observed = spearman_rho(x, y)?.abs();
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    let mut perm: Vec<usize> = (0..n).collect();
    let (mut more, mut equal, mut total) = (0u64, 0u64, 0u64);
    let mut permuted = vec![0.0; n];
    loop {
        for (k, &p) in perm.iter().enumerate() {
            permuted[k] = ry[p];
        }
        let r = correlation(&rx, &permuted)?.abs();
        if (r - observed).abs() <= 1e-12 {
            equal += 1;
        } else if r > observed {
            more += 1;
        }
        total += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok((more as f64 + 0.5 * equal as f64) / total as f64)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Causal,
    Effect,
    GbtImp,
    LrImp,
    FCorr,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::Causal, Case::Effect, Case::GbtImp, Case::LrImp, Case::FCorr];

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Causal => "causal",
            Case::Effect => "effect",
            Case::GbtImp => "gbt_imp",
            Case::LrImp => "lr_imp",
            Case::FCorr => "f_corr",
        }
    }
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub variable: String,
    pub score: f64,
    pub rank: usize,
}

/// Variables ordered by descending `|score|` with competition ranks.
/// `method` names the structure learner for causal/effect tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub case: Case,
    pub method: Option<String>,
    pub entries: Vec<RankEntry>,
}

impl RankTable {
    pub fn score_of(&self, variable: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.variable == variable)
            .map(|e| e.score)
    }

    pub fn rank_of(&self, variable: &str) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.variable == variable)
            .map(|e| e.rank)
    }

    pub fn label(&self) -> String {
        match &self.method {
            Some(m) => format!("{}.{}", self.case, m),
            None => self.case.to_string(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable,score,rank\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", csv_field(&e.variable), e.score, e.rank));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Competition ranking by descending magnitude: ties share the smallest
/// rank and the next distinct score skips past the tie group. Equal
/// magnitudes are listed by variable name so insertion order never matters.
pub fn rank_by_score<S: AsRef<str>>(
    case: Case,
    method: Option<String>,
    scores: &[(S, f64)],
) -> RankTable {
    let mut items: Vec<(String, f64)> = scores
        .iter()
        .map(|(v, s)| (v.as_ref().to_string(), *s))
        .collect();
    items.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut entries = Vec::with_capacity(items.len());
    for (pos, (variable, score)) in items.into_iter().enumerate() {
        let rank = match entries.last() {
            Some(RankEntry { score: prev, rank, .. }) if f64::abs(*prev) == score.abs() => *rank,
            _ => pos + 1,
        };
        entries.push(RankEntry {
            variable,
            score,
            rank,
        });
    }
    RankTable {
        case,
        method,
        entries,
    }
}

/// Signed causal (`v -> target`) and effect (`target -> v`) strengths.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CauseEffect {
    pub causal: Vec<(String, f64)>,
    pub effect: Vec<(String, f64)>,
}

pub fn extract_cause_effect(graph: &dyn CausalGraph, target: &str) -> Result<CauseEffect> {
    let t = graph
        .node(target)
        .ok_or_else(|| Error::UnknownNode(target.to_string()))?;
    let mut out = CauseEffect::default();
    for (v, name) in graph.names().iter().enumerate() {
        if v == t {
            continue;
        }
        let c = graph.edge(v, t);
        let e = graph.edge(t, v);
        if c != 0.0 {
            out.causal.push((name.clone(), c));
        }
        if e != 0.0 {
            out.effect.push((name.clone(), e));
        }
    }
    Ok(out)
}

/// Spearman concordance of two tables over their shared variables, using
/// score magnitudes. Returns `(rho, p, shared)`.
pub fn table_concordance(a: &RankTable, b: &RankTable) -> Result<(f64, f64, usize)> {
    let shared: Vec<(f64, f64)> = a
        .entries
        .iter()
        .filter_map(|e| b.score_of(&e.variable).map(|s| (e.score.abs(), s.abs())))
        .collect();
    if shared.len() < 4 {
        return Err(Error::InsufficientOverlap {
            x: a.label(),
            y: b.label(),
            shared: shared.len(),
        });
    }
    let (x, y): (Vec<f64>, Vec<f64>) = shared.into_iter().unzip();
    let (rho, p) = spearman(&x, &y)?;
    Ok((rho, p, x.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordancePair {
    pub x: Case,
    pub y: Case,
    pub method: String,
    pub shared: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcordanceReport {
    pub alpha: f64,
    pub pairs: Vec<ConcordancePair>,
}

impl ConcordanceReport {
    pub fn find(&self, x: Case, y: Case, method: &str) -> Option<&ConcordancePair> {
        self.pairs
            .iter()
            .find(|p| p.x == x && p.y == y && p.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("X,Y,method,rho,p_value,significant\n");
        for p in &self.pairs {
            let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.x,
                p.y,
                csv_field(&p.method),
                fmt(p.rho),
                fmt(p.p_value),
                p.significant
            ));
        }
        out
    }
}

/// For every structure learner present, pairs its causal and effect tables
/// with each of the f_corr, gbt_imp and lr_imp tables present. A pair with
/// fewer than four shared variables is reported with no rho.
pub fn concordance(tables: &[RankTable], alpha: f64) -> ConcordanceReport {
    let mut methods: BTreeMap<String, ()> = BTreeMap::new();
    for t in tables {
        if let Some(m) = &t.method {
            methods.insert(m.clone(), ());
        }
    }
    let find = |case: Case, method: Option<&str>| {
        tables
            .iter()
            .find(|t| t.case == case && t.method.as_deref() == method)
    };
    let mut pairs = Vec::new();
    for method in methods.keys() {
        for x in [Case::Causal, Case::Effect] {
            let Some(tx) = find(x, Some(method)) else { continue };
            for y in [Case::FCorr, Case::GbtImp, Case::LrImp] {
                let Some(ty) = find(y, None) else { continue };
                let pair = match table_concordance(tx, ty) {
                    Ok((rho, p, shared)) => ConcordancePair {
                        x,
                        y,
                        method: method.clone(),
                        shared,
                        rho: Some(rho),
                        p_value: Some(p),
                        significant: p < alpha,
                        note: None,
                    },
                    Err(e) => ConcordancePair {
                        x,
                        y,
                        method: method.clone(),
                        shared: match e {
                            Error::InsufficientOverlap { shared, .. } => shared,
                            _ => 0,
                        },
                        rho: None,
                        p_value: None,
                        significant: false,
                        note: Some(e.to_string()),
                    },
                };
                pairs.push(pair);
            }
        }
    }
    ConcordanceReport { alpha, pairs }
}
