//! Causal structure discovery between predictors and a binary outcome.
//!
//! The outcome label is first turned into a continuous likelihood score by
//! an MLP classifier; the score column then takes part in linear
//! (DirectLiNGAM) and nonlinear (NOTEARS-MLP) structure learning. Edges into
//! and out of the score node rank causal and effect variables, which are
//! compared against classifier feature importances and plain correlations
//! by Spearman rank concordance.

pub mod analysis;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod likelihood;
pub mod lingam;
pub mod mlmodels;
pub mod mlp;
pub mod notears;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use analysis::{ConcordanceReport, RankTable};
pub use data::{ColumnKind, ColumnSchema, Dataset};
pub use error::{Error, Result};
pub use graph::{CausalGraph, WeightedDigraph};
pub use likelihood::{LikelihoodResult, LIKELIHOOD_COLUMN};
pub use lingam::{CausalOrder, LingamResult};
pub use mlmodels::{GbtModel, ImportanceResult, ModelKind};
pub use mlp::MlpParams;
pub use notears::RegressorBank;
pub use synth::{RecoveryMetrics, SemSpec};
