//! End-to-end commands: `discover`, `synth` and `eval`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::index::sample;

use crate::analysis::{
    concordance, correlation_p_value, extract_cause_effect, pearson, rank_by_score, Case,
    ConcordanceReport, RankTable,
};
use crate::config::{Method, PipelineConfig, SynthMechanism};
use crate::data::{
    impute_median, load_csv, mean_std, read_schema, standardize, write_csv, write_schema,
    write_text, Dataset,
};
use crate::error::{Error, Result};
use crate::graph::{to_dot, CausalGraph, WeightedDigraph};
use crate::likelihood::{augment_with_likelihood, train_likelihood_mlp, LIKELIHOOD_COLUMN};
use crate::lingam::{fit_lingam, LingamResult};
use crate::mlmodels::{cross_validated_importance, ImportanceResult, ModelKind};
use crate::notears::fit_notears_mlp;
use crate::rng::{stream_rng, Stream};
use crate::synth::{
    attach_binary_outcome, default_names, sample_sem, structural_metrics, Noise, OutcomeSpec,
    RecoveryMetrics, SemSpec,
};

/// Tracks written files and records the run state in `MANIFEST`.
struct Manifest {
    dir: PathBuf,
    files: Vec<String>,
    stage: &'static str,
}

impl Manifest {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(&self, error: Option<&Error>) -> Result<()> {
        let mut out = String::new();
        match error {
            None => out.push_str("status=complete\n"),
            Some(e) => {
                let _ = writeln!(out, "status=failed");
                let _ = writeln!(out, "stage={}", self.stage);
                let _ = writeln!(out, "error={}", e.to_string().replace('\n', " "));
            }
        }
        for f in &self.files {
            let _ = writeln!(out, "file={f}");
        }
        write_text(&self.dir.join("MANIFEST"), &out)
    }
}

/// Everything `discover` computed, also written to the output directory.
#[derive(Clone, Debug)]
pub struct DiscoverOutput {
    pub cohort_rows: usize,
    pub kept_rows: usize,
    pub train_accuracy: f64,
    pub lingam: Option<LingamResult>,
    pub notears: Option<WeightedDigraph>,
    pub importances: Vec<ImportanceResult>,
    pub pearson: Vec<(String, Option<f64>, Option<f64>)>,
    pub tables: Vec<RankTable>,
    pub concordance: ConcordanceReport,
    pub files: Vec<String>,
}

impl DiscoverOutput {
    pub fn table(&self, case: Case, method: Option<&str>) -> Option<&RankTable> {
        self.tables
            .iter()
            .find(|t| t.case == case && t.method.as_deref() == method)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn importance_case(kind: ModelKind) -> Case {
    match kind {
        ModelKind::Gbt => Case::GbtImp,
        ModelKind::Logreg => Case::LrImp,
    }
}

/// Loads the cohort, failing before any output exists.
fn load_input(cfg: &PipelineConfig) -> Result<Dataset> {
    cfg.validate_discover()?;
    let schema = read_schema(cfg.schema.as_ref().expect("validated"))?;
    let ds = load_csv(cfg.input.as_ref().expect("validated"), &schema)?;
    let target = cfg.target.as_deref().expect("validated");
    if ds.target_name != target {
        return Err(Error::Config(format!(
            "data.target is `{target}` but the schema's target column is `{}`",
            ds.target_name
        )));
    }
    Ok(ds)
}

/// load, impute, standardize, likelihood transform, structure learning,
/// importance, correlation, ranking and concordance.
pub fn cmd_discover(cfg: &PipelineConfig) -> Result<DiscoverOutput> {
    let raw = load_input(cfg)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut manifest = Manifest {
        dir: cfg.out.clone(),
        files: Vec::new(),
        stage: "preprocess",
    };
    let result = discover_stages(cfg, &raw, &mut manifest);
    manifest.finish(result.as_ref().err())?;
    result.map(|mut out| {
        out.files = manifest.files.clone();
        out.files.push("MANIFEST".into());
        out
    })
}

fn discover_stages(
    cfg: &PipelineConfig,
    raw: &Dataset,
    manifest: &mut Manifest,
) -> Result<DiscoverOutput> {
    let imputed = impute_median(raw)?;
    let (std_ds, _) = standardize(&imputed)?;

    manifest.stage = "likelihood";
    let (_, lik) = train_likelihood_mlp(&std_ds, &cfg.likelihood, cfg.seed)?;
    let mut aug = augment_with_likelihood(&std_ds, &lik)?;
    let score_col = aug.vars() - 1;
    if cfg.standardize_score {
        let col = aug.column(score_col);
        let (m, s) = mean_std(col.iter().copied());
        if !(s > 0.0) {
            return Err(Error::Degenerate("likelihood scores are constant".into()));
        }
        for v in aug.values.column_mut(score_col).iter_mut() {
            *v = (*v - m) / s;
        }
    }
    log::info!(
        "likelihood: accuracy {:.3} after {} epochs, kept {}/{} rows",
        lik.train_accuracy,
        lik.epochs,
        aug.rows(),
        std_ds.rows()
    );

    manifest.stage = "discovery";
    let names = aug.names();
    let run_lingam = cfg.methods.contains(&Method::Lingam);
    let run_notears = cfg.methods.contains(&Method::Notears);
    let ((lingam, notears), importances) = rayon::join(
        || {
            rayon::join(
                || run_lingam.then(|| fit_lingam(&aug.values, &names, &cfg.lingam)).transpose(),
                || {
                    run_notears
                        .then(|| fit_notears_mlp(&aug.values, &names, &cfg.notears, cfg.seed))
                        .transpose()
                },
            )
        },
        || {
            cfg.importance
                .iter()
                .map(|&k| cross_validated_importance(&aug, k, &cfg.cv, cfg.seed))
                .collect::<Result<Vec<_>>>()
        },
    );
    let lingam = lingam?;
    let notears = notears?.map(|(g, _, report)| {
        log::info!(
            "notears: h = {:.2e} after {} dual steps, omega = {}",
            report.h,
            report.outer_iterations,
            report.omega
        );
        g
    });
    let importances = importances?;

    manifest.stage = "analysis";
    let score: Vec<f64> = aug.column(score_col);
    let pearson_rows: Vec<(String, Option<f64>, Option<f64>)> = (0..score_col)
        .map(|j| match pearson(&aug.column(j), &score) {
            Ok(r) => (names[j].clone(), Some(r), Some(correlation_p_value(r, score.len()))),
            Err(_) => (names[j].clone(), None, None),
        })
        .collect();

    let mut graphs: Vec<(Method, &dyn CausalGraph)> = Vec::new();
    if let Some(g) = &lingam {
        graphs.push((Method::Lingam, g));
    }
    if let Some(g) = &notears {
        graphs.push((Method::Notears, g));
    }
    let mut tables = Vec::new();
    for (method, g) in &graphs {
        let ce = extract_cause_effect(*g, LIKELIHOOD_COLUMN)?;
        let m = Some(method.as_str().to_string());
        tables.push(rank_by_score(Case::Causal, m.clone(), &ce.causal));
        tables.push(rank_by_score(Case::Effect, m, &ce.effect));
    }
    for imp in &importances {
        tables.push(rank_by_score(
            importance_case(imp.model_kind),
            None,
            &imp.named_scores(),
        ));
    }
    let fcorr: Vec<(String, f64)> = pearson_rows
        .iter()
        .filter_map(|(n, r, _)| r.map(|r| (n.clone(), r)))
        .collect();
    tables.push(rank_by_score(Case::FCorr, None, &fcorr));
    let report = concordance(&tables, cfg.alpha);

    manifest.stage = "write";
    if let Some(g) = &lingam {
        manifest.write("adjacency.lingam.json", &g.to_json()?)?;
        manifest.write("graph.lingam.dot", &to_dot(g, "lingam"))?;
    }
    if let Some(g) = &notears {
        manifest.write("adjacency.notears.json", &g.to_json()?)?;
        manifest.write("graph.notears.dot", &to_dot(g, "notears"))?;
    }
    for t in &tables {
        manifest.write(&format!("ranks.{}.csv", t.label()), &t.to_csv())?;
    }
    let mut pcsv = String::from("variable,r,p_value\n");
    for (n, r, p) in &pearson_rows {
        let _ = writeln!(pcsv, "{},{},{}", crate::analysis::csv_field(n), fmt_opt(*r), fmt_opt(*p));
    }
    manifest.write("pearson.csv", &pcsv)?;
    manifest.write("concordance.csv", &report.to_csv())?;

    let mut out = DiscoverOutput {
        cohort_rows: std_ds.rows(),
        kept_rows: aug.rows(),
        train_accuracy: lik.train_accuracy,
        lingam,
        notears,
        importances,
        pearson: pearson_rows,
        tables,
        concordance: report,
        files: Vec::new(),
    };
    manifest.write("report.md", &render_report(cfg, &out))?;
    out.files = manifest.files.clone();
    Ok(out)
}

fn render_table(out: &mut String, t: &RankTable) {
    if t.entries.is_empty() {
        out.push_str("_no variables_\n\n");
        return;
    }
    out.push_str("| rank | variable | score |\n|---:|---|---:|\n");
    for e in &t.entries {
        let _ = writeln!(out, "| {} | {} | {:.4} |", e.rank, e.variable, e.score);
    }
    out.push('\n');
}

fn render_report(cfg: &PipelineConfig, d: &DiscoverOutput) -> String {
    let mut out = String::from("# Causal structure discovery report\n\n");
    let _ = writeln!(
        out,
        "Cohort: {} rows, {} kept after the likelihood filter (training accuracy {:.3}). Seed {}.\n",
        d.cohort_rows, d.kept_rows, d.train_accuracy, cfg.seed
    );
    for case in Case::ALL {
        let tables: Vec<&RankTable> = d.tables.iter().filter(|t| t.case == case).collect();
        if tables.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {case}\n");
        for t in tables {
            if let Some(m) = &t.method {
                let _ = writeln!(out, "### {m}\n");
            }
            render_table(&mut out, t);
        }
    }
    out.push_str("## concordance\n\n");
    let _ = writeln!(out, "Spearman rank correlation over shared variables, alpha = {}.\n", d.concordance.alpha);
    out.push_str("| X | Y | method | shared | rho | p | significant |\n|---|---|---|---:|---:|---:|---|\n");
    for p in &d.concordance.pairs {
        let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            p.x,
            p.y,
            p.method,
            p.shared,
            f(p.rho),
            f(p.p_value),
            if p.significant { "yes" } else { "no" }
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub spec: SemSpec,
    pub data: PathBuf,
    pub schema: PathBuf,
    pub truth: PathBuf,
    pub positive_rate: f64,
}

/// Samples a SEM with an attached binary outcome and writes `data.csv`,
/// `schema.csv` and `truth.json` to the output directory.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthOutput> {
    let s = &cfg.synth;
    if s.nodes < 2 || s.samples == 0 || !(0.0..=1.0).contains(&s.edge_prob) || !(s.noise_scale > 0.0) {
        return Err(Error::Config("invalid synth parameters".into()));
    }
    let noise = Noise {
        kind: s.noise,
        scale: s.noise_scale,
    };
    let mut spec = match s.mechanism {
        SynthMechanism::Linear => SemSpec::random_linear(s.nodes, s.edge_prob, noise, cfg.seed)?,
        SynthMechanism::Nonlinear => {
            SemSpec::random_nonlinear(s.nodes, s.edge_prob, noise, s.activation, cfg.seed)?
        }
    };
    let names = default_names(s.nodes);
    if names.contains(&s.target) {
        return Err(Error::Config(format!("target name `{}` clashes with a variable", s.target)));
    }
    let parents: Vec<usize> = if s.outcome_parents.is_empty() {
        if s.outcome_k == 0 || s.outcome_k > s.nodes {
            return Err(Error::Config("synth.outcome_k must lie in 1..=nodes".into()));
        }
        let mut p = sample(&mut stream_rng(cfg.seed, Stream::Custom(1)), s.nodes, s.outcome_k).into_vec();
        p.sort_unstable();
        p
    } else {
        s.outcome_parents
            .iter()
            .map(|n| {
                names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| Error::Config(format!("unknown outcome parent `{n}`")))
            })
            .collect::<Result<_>>()?
    };
    let weights = vec![s.outcome_weight; parents.len()];

    let x = sample_sem(&spec, s.samples, cfg.seed)?;
    let z = zscore(&x);
    let (y, bias) = attach_binary_outcome(&z, &parents, &weights, cfg.seed)?;
    spec.outcome = Some(OutcomeSpec {
        name: s.target.clone(),
        parents,
        weights,
        bias,
    });

    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ds = Dataset::from_matrix(&names, x, y.clone(), s.target.clone())?;
    let data = cfg.out.join("data.csv");
    let schema_path = cfg.out.join("schema.csv");
    let truth = cfg.out.join("truth.json");
    let schema = write_csv(&ds, &data)?;
    write_schema(&schema_path, &schema)?;
    write_text(&truth, &spec.to_json()?)?;
    Ok(SynthOutput {
        spec,
        data,
        schema: schema_path,
        truth,
        positive_rate: y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64,
    })
}

/// Column-wise z-scores; constant columns are only centred.
pub fn zscore(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = x.clone();
    for mut c in z.column_iter_mut() {
        let col: Vec<f64> = c.iter().copied().collect();
        let (m, s) = mean_std(col.iter().copied());
        let s = if s > 0.0 { s } else { 1.0 };
        for v in c.iter_mut() {
            *v = (*v - m) / s;
        }
    }
    z
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub metrics: RecoveryMetrics,
}

/// Binary support and node names of one adjacency artifact.
fn load_estimate(path: &Path, method: Method) -> Result<(Vec<String>, DMatrix<bool>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(match method {
        Method::Lingam => {
            let g = LingamResult::from_json(&text)?;
            (g.names.clone(), g.support())
        }
        Method::Notears => {
            let g = WeightedDigraph::from_json(&text)?;
            (g.names.clone(), g.support())
        }
    })
}

/// Aligns `est` to the node order of `truth_names`; the likelihood column
/// stands in for the outcome node.
pub fn align_estimate(
    est_names: &[String],
    est: &DMatrix<bool>,
    truth_names: &[String],
    outcome: Option<&str>,
) -> Result<DMatrix<bool>> {
    let mapped: Vec<&str> = est_names
        .iter()
        .map(|n| match outcome {
            Some(o) if n == LIKELIHOOD_COLUMN => o,
            _ => n.as_str(),
        })
        .collect();
    if mapped.len() != truth_names.len() {
        return Err(Error::EvalMismatch(format!(
            "estimate has {} nodes, truth has {}",
            mapped.len(),
            truth_names.len()
        )));
    }
    let index: Vec<usize> = truth_names
        .iter()
        .map(|t| {
            mapped
                .iter()
                .position(|m| m == t)
                .ok_or_else(|| Error::EvalMismatch(format!("truth node `{t}` missing from estimate")))
        })
        .collect::<Result<_>>()?;
    let n = truth_names.len();
    Ok(DMatrix::from_fn(n, n, |i, j| est[(index[i], index[j])]))
}

/// Scores every adjacency artifact in the results directory against the
/// ground-truth SEM and writes `metrics.csv`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Vec<EvalRow>> {
    let truth_path = cfg
        .truth
        .as_ref()
        .ok_or_else(|| Error::Config("eval.truth is required".into()))?;
    let results = cfg.results.clone().unwrap_or_else(|| cfg.out.clone());
    let text = std::fs::read_to_string(truth_path).map_err(|e| Error::io(truth_path, e))?;
    let spec = SemSpec::from_json(&text)?;
    let (truth_names, truth) = spec.truth_graph();
    let outcome = spec.outcome.as_ref().map(|o| o.name.as_str());

    let mut rows = Vec::new();
    for method in [Method::Lingam, Method::Notears] {
        let path = results.join(format!("adjacency.{}.json", method.as_str()));
        if !path.exists() {
            continue;
        }
        let (names, est) = load_estimate(&path, method)?;
        let aligned = align_estimate(&names, &est, &truth_names, outcome)?;
        rows.push(EvalRow {
            method: method.as_str().to_string(),
            metrics: structural_metrics(&aligned, &truth)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::EvalMismatch(format!(
            "no adjacency files in {}",
            results.display()
        )));
    }
    let mut csv = String::from("method,shd,precision,recall,f1\n");
    for r in &rows {
        let m = &r.metrics;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.method, m.shd, m.edge_precision, m.edge_recall, m.edge_f1
        );
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_text(&cfg.out.join("metrics.csv"), &csv)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_maps_likelihood_to_outcome() {
        let est_names: Vec<String> = ["X2", LIKELIHOOD_COLUMN, "X1"].iter().map(|s| s.to_string()).collect();
        // X1 -> X2, X2 -> score
        let mut est = DMatrix::from_element(3, 3, false);
        est[(2, 0)] = true;
        est[(0, 1)] = true;
        let truth: Vec<String> = ["X1", "X2", "Y"].iter().map(|s| s.to_string()).collect();
        let a = align_estimate(&est_names, &est, &truth, Some("Y")).unwrap();
        assert!(a[(0, 1)] && a[(1, 2)]);
        assert_eq!(a.iter().filter(|&&b| b).count(), 2);
        assert!(matches!(
            align_estimate(&est_names, &est, &truth, None),
            Err(Error::EvalMismatch(_))
        ));
    }
}
