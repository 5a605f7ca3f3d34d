use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use causalrank_core::config::PipelineConfig;
use causalrank_core::pipeline::{cmd_discover, cmd_eval, cmd_synth, EvalRow};
use causalrank_core::Error;

/// Causal structure discovery against a binary outcome.
///
/// Any config key can be overridden on the command line as `--section.key=value`
/// (or `--section.key value`), e.g. `--notears.omega=0.4`.
#[derive(Parser, Debug)]
#[command(name = "causalrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline on a cohort CSV.
    Discover {
        #[command(flatten)]
        common: Common,
        /// lingam, notears or both.
        #[arg(long)]
        method: Option<String>,
        /// gbt, logreg or both.
        #[arg(long)]
        importance: Option<String>,
    },
    /// Sample a synthetic cohort with a known causal graph.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Score discovered graphs against a synthetic ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Ground-truth JSON written by `synth`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory holding `discover` output; defaults to --out.
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

/// Splits dotted `--a.b=v` / `--a.b v` overrides out of the argument list.
fn extract_overrides(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>), Error> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("`--{key}` needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn build_config(common: &Common, overrides: &[(String, String)]) -> Result<PipelineConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v, None)?;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn comparison_line(rows: &[EvalRow]) -> String {
    let parts: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{}: shd={} f1={:.3}",
                r.method, r.metrics.shd, r.metrics.edge_f1
            )
        })
        .collect();
    let best = rows
        .iter()
        .max_by(|a, b| a.metrics.edge_f1.total_cmp(&b.metrics.edge_f1));
    match (rows.len(), best) {
        (n, Some(b)) if n > 1 => format!("{} | best f1: {}", parts.join(" | "), b.method),
        _ => parts.join(" | "),
    }
}

fn run(cli: Cli, overrides: &[(String, String)]) -> Result<(), Error> {
    match cli.command {
        Command::Discover {
            common,
            method,
            importance,
        } => {
            let mut cfg = build_config(&common, overrides)?;
            if let Some(m) = method {
                cfg.set("run.methods", &m, None)?;
            }
            if let Some(i) = importance {
                cfg.set("run.importance", &i, None)?;
            }
            let out = cmd_discover(&cfg)?;
            println!(
                "cohort {} rows, kept {} after likelihood filter (train accuracy {:.3})",
                out.cohort_rows, out.kept_rows, out.train_accuracy
            );
            for f in &out.files {
                println!("wrote {}", cfg.out.join(f).display());
            }
        }
        Command::Synth { common } => {
            let cfg = build_config(&common, overrides)?;
            let out = cmd_synth(&cfg)?;
            println!("positive rate {:.3}", out.positive_rate);
            for f in [&out.data, &out.schema, &out.truth] {
                println!("wrote {}", f.display());
            }
        }
        Command::Eval {
            common,
            truth,
            results,
        } => {
            let mut cfg = build_config(&common, overrides)?;
            if truth.is_some() {
                cfg.truth = truth;
            }
            if results.is_some() {
                cfg.results = results;
            }
            let rows = cmd_eval(&cfg)?;
            println!("{}", comparison_line(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (args, overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
