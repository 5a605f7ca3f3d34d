use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_causalrank");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn causalrank")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, nodes: usize, samples: usize, seed: u64) -> Output {
    run(&[
        "synth",
        "--out",
        s(dir),
        "--seed",
        &seed.to_string(),
        &format!("--synth.nodes={nodes}"),
        &format!("--synth.samples={samples}"),
    ])
}

fn discover(syn: &Path, out: &Path) -> Output {
    run(&[
        "discover",
        "--out",
        s(out),
        "--seed",
        "5",
        "--method",
        "lingam,notears",
        "--importance",
        "gbt,logreg",
        &format!("--data.input={}", s(&syn.join("data.csv"))),
        &format!("--data.schema={}", s(&syn.join("schema.csv"))),
        "--data.target=Y",
        "--cv.repetitions=2",
        "--gbt.n_trees=20",
    ])
}

fn manifest_files(dir: &Path) -> (String, BTreeSet<String>) {
    let text = fs::read_to_string(dir.join("MANIFEST")).unwrap();
    let mut status = String::new();
    let mut files = BTreeSet::new();
    for line in text.lines() {
        if let Some(v) = line.strip_prefix("status=") {
            status = v.to_string();
        } else if let Some(v) = line.strip_prefix("file=") {
            files.insert(v.to_string());
        }
    }
    (status, files)
}

fn names_of(json: &serde_json::Value) -> Vec<String> {
    json["names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect()
}

fn matrix_of(v: &serde_json::Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

fn dot_edges(text: &str) -> BTreeSet<(String, String)> {
    text.lines()
        .filter_map(|l| {
            let (a, rest) = l.trim().split_once(" -> ")?;
            let b = rest.split_whitespace().next()?.trim_end_matches(';');
            Some((a.trim_matches('"').to_string(), b.trim_matches('"').to_string()))
        })
        .collect()
}

#[test]
fn synth_writes_requested_rows() {
    let dir = TempDir::new().unwrap();
    let out = synth(dir.path(), 5, 1000, 3);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("data.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1001);
    assert_eq!(csv.lines().next().unwrap(), "X1,X2,X3,X4,X5,Y");
    for f in ["schema.csv", "truth.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let again = TempDir::new().unwrap();
    assert!(synth(again.path(), 5, 1000, 3).status.success());
    assert_eq!(csv, fs::read_to_string(again.path().join("data.csv")).unwrap());
}

#[test]
fn missing_schema_exits_with_config_code() {
    let syn = TempDir::new().unwrap();
    assert!(synth(syn.path(), 4, 200, 1).status.success());
    let out_dir = syn.path().join("res");
    let out = run(&[
        "discover",
        "--out",
        s(&out_dir),
        &format!("--data.input={}", s(&syn.path().join("data.csv"))),
        &format!("--data.schema={}", s(&syn.path().join("absent.csv"))),
        "--data.target=Y",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let written: Vec<PathBuf> = fs::read_dir(&out_dir)
        .map(|it| it.map(|e| e.unwrap().path()).collect())
        .unwrap_or_default();
    assert!(
        written.iter().all(|p| !p.ends_with("report.md") && !p.to_str().unwrap().contains("adjacency")),
        "{written:?}"
    );
}

#[test]
fn unknown_override_key_exits_with_config_code() {
    let out = run(&["synth", "--synth.bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_subcommand_exits_with_config_code() {
    assert_eq!(run(&["transmogrify"]).status.code(), Some(2));
}

#[test]
fn discover_eval_roundtrip() {
    let root = TempDir::new().unwrap();
    let syn = root.path().join("syn");
    let res = root.path().join("res");
    assert!(synth(&syn, 5, 500, 11).status.success());

    let out = discover(&syn, &res);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let (status, files) = manifest_files(&res);
    assert_eq!(status, "complete");
    let expected: BTreeSet<String> = [
        "adjacency.lingam.json",
        "graph.lingam.dot",
        "adjacency.notears.json",
        "graph.notears.dot",
        "ranks.causal.lingam.csv",
        "ranks.effect.lingam.csv",
        "ranks.causal.notears.csv",
        "ranks.effect.notears.csv",
        "ranks.gbt_imp.csv",
        "ranks.lr_imp.csv",
        "ranks.f_corr.csv",
        "pearson.csv",
        "concordance.csv",
        "report.md",
    ]
    .iter()
    .map(|f| f.to_string())
    .collect();
    assert_eq!(files, expected);
    for f in &files {
        assert!(res.join(f).exists(), "{f}");
    }

    let report = fs::read_to_string(res.join("report.md")).unwrap();
    let sections: Vec<&str> = report
        .lines()
        .filter_map(|l| l.strip_prefix("## "))
        .filter(|h| *h != "concordance")
        .collect();
    assert_eq!(sections, ["causal", "effect", "gbt_imp", "lr_imp", "f_corr"]);

    // NOTEARS: DOT edges are exactly the JSON entries at or above omega
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("adjacency.notears.json")).unwrap()).unwrap();
    let names = names_of(&json);
    let w = matrix_of(&json["W"]);
    let omega = json["omega"].as_f64().unwrap();
    let mut from_json = BTreeSet::new();
    for (i, row) in w.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v.abs() >= omega {
                from_json.insert((names[i].clone(), names[j].clone()));
            }
        }
    }
    let dot = fs::read_to_string(res.join("graph.notears.dot")).unwrap();
    assert_eq!(dot_edges(&dot), from_json);

    // LiNGAM: DOT edges are the nonzero entries
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(res.join("adjacency.lingam.json")).unwrap()).unwrap();
    let names = names_of(&json);
    let b = matrix_of(&json["adjacency"]);
    let mut from_json = BTreeSet::new();
    for (i, row) in b.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j && v != 0.0 {
                from_json.insert((names[i].clone(), names[j].clone()));
            }
        }
    }
    let dot = fs::read_to_string(res.join("graph.lingam.dot")).unwrap();
    assert_eq!(dot_edges(&dot), from_json);

    let ev = root.path().join("ev");
    let out = run(&[
        "eval",
        "--out",
        s(&ev),
        "--truth",
        s(&syn.join("truth.json")),
        "--results",
        s(&res),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("lingam: shd=") && stdout.contains("notears: shd="), "{stdout}");
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = metrics.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), 5);
        for c in &cols[1..] {
            let v: f64 = c.parse().unwrap();
            assert!(v.is_finite(), "{r}");
        }
    }
}

#[test]
fn discover_is_byte_identical_across_reruns() {
    let root = TempDir::new().unwrap();
    let syn = root.path().join("syn");
    assert!(synth(&syn, 4, 300, 2).status.success());
    let a = root.path().join("a");
    let b = root.path().join("b");
    assert!(discover(&syn, &a).status.success());
    assert!(discover(&syn, &b).status.success());
    let (_, files) = manifest_files(&a);
    for f in files.iter().filter(|f| !f.ends_with(".md")) {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs between reruns"
        );
    }
}

/// Writes a NOTEARS-format estimate over the truth's nodes, with the outcome
/// renamed to the likelihood column the pipeline emits.
fn write_estimate(dir: &Path, truth: &serde_json::Value, edges: &[(usize, usize)]) {
    let mut names: Vec<String> = truth["names"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    names.push("OUTCOME_LIKELIHOOD".to_string());
    let n = names.len();
    let mut w = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        w[i][j] = 1.0;
    }
    let json = serde_json::json!({ "names": names, "W": w, "omega": 0.5 });
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("adjacency.notears.json"), json.to_string()).unwrap();
}

fn truth_edges(truth: &serde_json::Value) -> Vec<(usize, usize)> {
    let dag = matrix_of(&truth["dag"]);
    let n = dag.len();
    let mut edges = Vec::new();
    for (i, row) in dag.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                edges.push((i, j));
            }
        }
    }
    for p in truth["outcome"]["parents"].as_array().unwrap() {
        edges.push((p.as_u64().unwrap() as usize, n));
    }
    edges
}

fn eval_notears(root: &Path, syn: &Path, res: &Path) -> Vec<f64> {
    let ev = root.join(format!("ev_{}", res.file_name().unwrap().to_str().unwrap()));
    let out = run(&[
        "eval",
        "--out",
        s(&ev),
        "--truth",
        s(&syn.join("truth.json")),
        "--results",
        s(res),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let row = metrics.lines().nth(1).unwrap();
    assert!(row.starts_with("notears,"));
    row.split(',').skip(1).map(|c| c.parse().unwrap()).collect()
}

#[test]
fn eval_scores_perfect_and_empty_estimates() {
    let root = TempDir::new().unwrap();
    let syn = root.path().join("syn");
    assert!(synth(&syn, 5, 100, 7).status.success());
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(syn.join("truth.json")).unwrap()).unwrap();
    let edges = truth_edges(&truth);
    assert!(!edges.is_empty());

    let perfect = root.path().join("perfect");
    write_estimate(&perfect, &truth, &edges);
    let m = eval_notears(root.path(), &syn, &perfect);
    assert_eq!(m, vec![0.0, 1.0, 1.0, 1.0]);

    let empty = root.path().join("empty");
    write_estimate(&empty, &truth, &[]);
    let m = eval_notears(root.path(), &syn, &empty);
    assert_eq!(m[0], edges.len() as f64);
    assert_eq!(m[2], 0.0);
}

#[test]
fn eval_without_results_is_a_mismatch() {
    let root = TempDir::new().unwrap();
    let syn = root.path().join("syn");
    assert!(synth(&syn, 4, 100, 1).status.success());
    let out = run(&[
        "eval",
        "--out",
        s(&root.path().join("ev")),
        "--truth",
        s(&syn.join("truth.json")),
        "--results",
        s(&root.path().join("nothing")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}
