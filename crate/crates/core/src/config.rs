//! Flat `key=value` run configuration with dotted section prefixes.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.input = cohort.csv
//! data.schema = cohort.schema
//! data.target = HF
//! notears.omega = 0.3
//! ```
//!
//! Relative paths in a file resolve against the file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::LikelihoodConfig;
use crate::lingam::LingamConfig;
use crate::mlmodels::{CvConfig, ModelKind};
use crate::notears::NotearsConfig;
use crate::synth::{HiddenActivation, NoiseKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lingam,
    Notears,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lingam => "lingam",
            Method::Notears => "notears",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMechanism {
    Linear,
    Nonlinear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub nodes: usize,
    pub samples: usize,
    pub edge_prob: f64,
    pub mechanism: SynthMechanism,
    pub noise: NoiseKind,
    pub noise_scale: f64,
    pub activation: HiddenActivation,
    /// Outcome parents by variable name; empty picks `outcome_k` at random.
    pub outcome_parents: Vec<String>,
    pub outcome_k: usize,
    pub outcome_weight: f64,
    pub target: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            samples: 1000,
            edge_prob: 0.5,
            mechanism: SynthMechanism::Linear,
            noise: NoiseKind::Uniform,
            noise_scale: 1.0,
            activation: HiddenActivation::Tanh,
            outcome_parents: Vec::new(),
            outcome_k: 2,
            outcome_weight: 2.0,
            target: "Y".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub target: Option<String>,
    pub out: PathBuf,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub importance: Vec<ModelKind>,
    pub alpha: f64,
    pub likelihood: LikelihoodConfig,
    /// Z-score the appended likelihood column like the other predictors.
    pub standardize_score: bool,
    pub lingam: LingamConfig,
    pub notears: NotearsConfig,
    pub cv: CvConfig,
    pub synth: SynthConfig,
    /// Ground-truth SEM JSON for `eval`.
    pub truth: Option<PathBuf>,
    /// Directory holding `discover` artifacts for `eval`.
    pub results: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: None,
            target: None,
            out: PathBuf::from("out"),
            seed: 0,
            methods: vec![Method::Lingam, Method::Notears],
            importance: vec![ModelKind::Gbt, ModelKind::Logreg],
            alpha: 0.05,
            likelihood: LikelihoodConfig::default(),
            standardize_score: false,
            lingam: LingamConfig::default(),
            notears: NotearsConfig::default(),
            cv: CvConfig::default(),
            synth: SynthConfig::default(),
            truth: None,
            results: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

/// `lingam`, `notears`, `both` or a comma list.
pub fn parse_methods(value: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        match item {
            "lingam" => out.push(Method::Lingam),
            "notears" | "notears_mlp" => out.push(Method::Notears),
            "both" => out.extend([Method::Lingam, Method::Notears]),
            "" => {}
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// `gbt`, `logreg`, `both` or a comma list.
pub fn parse_importance(value: &str) -> Result<Vec<ModelKind>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        match item {
            "gbt" => out.push(ModelKind::Gbt),
            "logreg" | "lr" => out.push(ModelKind::Logreg),
            "both" => out.extend([ModelKind::Gbt, ModelKind::Logreg]),
            "" => {}
            other => return Err(Error::Config(format!("unknown importance model `{other}`"))),
        }
    }
    let mut dedup = Vec::new();
    for kind in [ModelKind::Gbt, ModelKind::Logreg] {
        if out.contains(&kind) {
            dedup.push(kind);
        }
    }
    Ok(dedup)
}

fn parse_kind<T: for<'de> Deserialize<'de>>(key: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.trim().to_lowercase()))
        .map_err(|_| Error::Config(format!("`{key}`: unknown value `{value}`")))
}

impl PipelineConfig {
    /// Applies one setting. `base` resolves relative paths.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v.trim());
            if v.trim().is_empty() {
                return None;
            }
            Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            })
        };
        let v = value;
        match key {
            "data.input" => self.input = path(v),
            "data.schema" => self.schema = path(v),
            "data.target" => {
                self.target = Some(v.trim().to_string()).filter(|t| !t.is_empty())
            }
            "run.out" => self.out = path(v).unwrap_or_else(|| PathBuf::from("out")),
            "run.seed" => self.seed = parse(key, v)?,
            "run.methods" => self.methods = parse_methods(v)?,
            "run.importance" => self.importance = parse_importance(v)?,
            "run.alpha" => self.alpha = parse(key, v)?,
            "likelihood.hidden" => self.likelihood.hidden = parse_list(key, v)?,
            "likelihood.learning_rate" => self.likelihood.learning_rate = parse(key, v)?,
            "likelihood.batch_size" => self.likelihood.batch_size = parse(key, v)?,
            "likelihood.max_epochs" => self.likelihood.max_epochs = parse(key, v)?,
            "likelihood.accuracy_target" => self.likelihood.accuracy_target = parse(key, v)?,
            "likelihood.standardize_score" => self.standardize_score = parse_bool(key, v)?,
            "lingam.tau" => self.lingam.tau = parse(key, v)?,
            "notears.hidden" => self.notears.hidden = parse_list(key, v)?,
            "notears.lambda" => self.notears.lambda = parse(key, v)?,
            "notears.weight_decay" => self.notears.weight_decay = parse(key, v)?,
            "notears.max_inner_iter" => self.notears.max_inner_iter = parse(key, v)?,
            "notears.max_outer_iter" => self.notears.max_outer_iter = parse(key, v)?,
            "notears.alpha_init" => self.notears.alpha_init = parse(key, v)?,
            "notears.rho_init" => self.notears.rho_init = parse(key, v)?,
            "notears.rho_growth" => self.notears.rho_growth = parse(key, v)?,
            "notears.progress" => self.notears.progress = parse(key, v)?,
            "notears.h_tol" => self.notears.h_tol = parse(key, v)?,
            "notears.rho_max" => self.notears.rho_max = parse(key, v)?,
            "notears.omega" => self.notears.omega = parse(key, v)?,
            "gbt.n_trees" => self.cv.gbt.n_trees = parse(key, v)?,
            "gbt.max_depth" => self.cv.gbt.max_depth = parse(key, v)?,
            "gbt.learning_rate" => self.cv.gbt.learning_rate = parse(key, v)?,
            "gbt.min_leaf" => self.cv.gbt.min_leaf = parse(key, v)?,
            "gbt.leaf_l2" => self.cv.gbt.leaf_l2 = parse(key, v)?,
            "logreg.penalty" => self.cv.logreg.penalty = parse(key, v)?,
            "logreg.max_iter" => self.cv.logreg.max_iter = parse(key, v)?,
            "cv.repetitions" => self.cv.repetitions = parse(key, v)?,
            "synth.nodes" => self.synth.nodes = parse(key, v)?,
            "synth.samples" => self.synth.samples = parse(key, v)?,
            "synth.edge_prob" => self.synth.edge_prob = parse(key, v)?,
            "synth.mechanism" => self.synth.mechanism = parse_kind(key, v)?,
            "synth.noise" => self.synth.noise = parse_kind(key, v)?,
            "synth.noise_scale" => self.synth.noise_scale = parse(key, v)?,
            "synth.activation" => self.synth.activation = parse_kind(key, v)?,
            "synth.outcome_parents" => self.synth.outcome_parents = parse_list(key, v)?,
            "synth.outcome_k" => self.synth.outcome_k = parse(key, v)?,
            "synth.outcome_weight" => self.synth.outcome_weight = parse(key, v)?,
            "synth.target" => self.synth.target = v.trim().to_string(),
            "eval.truth" => self.truth = path(v),
            "eval.results" => self.results = path(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text`.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected key=value, got `{line}`",
                    lineno + 1
                )));
            };
            self.set(key.trim(), value, base)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path.parent())?;
        Ok(cfg)
    }

    /// Checks the settings `discover` depends on.
    pub fn validate_discover(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("select at least one structure learner".into()));
        }
        if self.importance.is_empty() {
            return Err(Error::Config("select at least one importance model".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.input.is_none() || self.schema.is_none() || self.target.is_none() {
            return Err(Error::Config(
                "data.input, data.schema and data.target are required".into(),
            ));
        }
        if !(self.notears.omega >= 0.0) || !(self.lingam.tau >= 0.0) {
            return Err(Error::Config("thresholds must be nonnegative".into()));
        }
        if self.likelihood.batch_size == 0 || self.cv.repetitions == 0 {
            return Err(Error::Config("batch size and repetitions must be positive".into()));
        }
        Ok(())
    }

    /// Every setting as `key=value` lines, in the same dotted vocabulary
    /// accepted by [`PipelineConfig::set`].
    pub fn to_text(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let opt = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let kind = |v: serde_json::Value| v.as_str().unwrap_or_default().to_string();
        let mut lines = vec![
            format!("data.input={}", opt(&self.input)),
            format!("data.schema={}", opt(&self.schema)),
            format!("data.target={}", self.target.clone().unwrap_or_default()),
            format!("run.seed={}", self.seed),
            format!(
                "run.methods={}",
                self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
            ),
            format!(
                "run.importance={}",
                self.importance.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",")
            ),
            format!("run.alpha={}", self.alpha),
            format!("likelihood.hidden={}", join(&self.likelihood.hidden)),
            format!("likelihood.learning_rate={}", self.likelihood.learning_rate),
            format!("likelihood.batch_size={}", self.likelihood.batch_size),
            format!("likelihood.max_epochs={}", self.likelihood.max_epochs),
            format!("likelihood.accuracy_target={}", self.likelihood.accuracy_target),
            format!("likelihood.standardize_score={}", self.standardize_score),
            format!("lingam.tau={}", self.lingam.tau),
            format!("notears.hidden={}", join(&self.notears.hidden)),
            format!("notears.lambda={}", self.notears.lambda),
            format!("notears.weight_decay={}", self.notears.weight_decay),
            format!("notears.max_inner_iter={}", self.notears.max_inner_iter),
            format!("notears.max_outer_iter={}", self.notears.max_outer_iter),
            format!("notears.alpha_init={}", self.notears.alpha_init),
            format!("notears.rho_init={}", self.notears.rho_init),
            format!("notears.rho_growth={}", self.notears.rho_growth),
            format!("notears.progress={}", self.notears.progress),
            format!("notears.h_tol={}", self.notears.h_tol),
            format!("notears.rho_max={}", self.notears.rho_max),
            format!("notears.omega={}", self.notears.omega),
            format!("gbt.n_trees={}", self.cv.gbt.n_trees),
            format!("gbt.max_depth={}", self.cv.gbt.max_depth),
            format!("gbt.learning_rate={}", self.cv.gbt.learning_rate),
            format!("gbt.min_leaf={}", self.cv.gbt.min_leaf),
            format!("gbt.leaf_l2={}", self.cv.gbt.leaf_l2),
            format!("logreg.penalty={}", self.cv.logreg.penalty),
            format!("logreg.max_iter={}", self.cv.logreg.max_iter),
            format!("cv.repetitions={}", self.cv.repetitions),
            format!("synth.nodes={}", self.synth.nodes),
            format!("synth.samples={}", self.synth.samples),
            format!("synth.edge_prob={}", self.synth.edge_prob),
            format!("synth.mechanism={}", kind(serde_json::to_value(self.synth.mechanism).unwrap_or_default())),
            format!("synth.noise={}", kind(serde_json::to_value(self.synth.noise).unwrap_or_default())),
            format!("synth.noise_scale={}", self.synth.noise_scale),
            format!("synth.activation={}", kind(serde_json::to_value(self.synth.activation).unwrap_or_default())),
            format!("synth.outcome_parents={}", self.synth.outcome_parents.join(",")),
            format!("synth.outcome_k={}", self.synth.outcome_k),
            format!("synth.outcome_weight={}", self.synth.outcome_weight),
            format!("synth.target={}", self.synth.target),
        ];
        lines.push(format!("eval.truth={}", opt(&self.truth)));
        lines.push(format!("eval.results={}", opt(&self.results)));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
