//! Property tests over the public API, one block per module.

use std::fs;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use causalrank_core::analysis::{fractional_ranks, pearson, rank_by_score, table_concordance, Case};
use causalrank_core::data::{load_csv, write_csv, ColumnKind, ColumnSchema};
use causalrank_core::graph::{to_dot, CausalGraph, WeightedDigraph};
use causalrank_core::likelihood::{class_weights, filter_correct, predict_scores};
use causalrank_core::lingam::{fit_lingam, residual, LingamConfig};
use causalrank_core::mlmodels::gbt::{fit_gbt, gbt_importance, GbtConfig, Node};
use causalrank_core::mlmodels::logreg::{fit_logreg, LogregConfig};
use causalrank_core::mlp::{Activation, MlpParams};
use causalrank_core::notears::{acyclicity, aggregate_adjacency, expm, minimize_fixed, RegressorBank};
use causalrank_core::pipeline::zscore;
use causalrank_core::synth::{default_names, sample_linear_sem, Mechanism, Noise, NoiseKind, SemSpec};

fn seeded_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

// ---- data

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn one_hot_rows_sum_to_one(
        rows in prop::collection::vec((0usize..4, -50.0f64..50.0, 0u8..2), 2..40),
    ) {
        let levels = ["red", "green", "blue", "grey"];
        let mut text = String::from("c,x,y\n");
        for (l, x, y) in &rows {
            text.push_str(&format!("{},{},{}\n", levels[*l], x, y));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "d.csv", &text);
        let schema = vec![
            ColumnSchema::new("c", ColumnKind::Categorical),
            ColumnSchema::new("x", ColumnKind::Continuous),
            ColumnSchema::new("y", ColumnKind::Target),
        ];
        let ds = load_csv(&path, &schema).unwrap();
        let ind: Vec<usize> = (0..ds.columns.len())
            .filter(|&j| ds.columns[j].source == "c" && ds.columns[j].is_indicator())
            .collect();
        prop_assert!(!ind.is_empty());
        for i in 0..ds.rows() {
            let sum: f64 = ind.iter().map(|&j| ds.values[(i, j)]).sum();
            prop_assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn load_write_load_is_bit_exact(
        rows in prop::collection::vec((-1e6f64..1e6, -1e-3f64..1e-3, 0u8..2), 1..30),
    ) {
        let mut text = String::from("a,b,y\n");
        for (a, b, y) in &rows {
            text.push_str(&format!("{a},{b},{y}\n"));
        }
        let dir = tempfile::tempdir().unwrap();
        let path = write_tmp(&dir, "d.csv", &text);
        let schema = vec![
            ColumnSchema::new("a", ColumnKind::Continuous),
            ColumnSchema::new("b", ColumnKind::Continuous),
            ColumnSchema::new("y", ColumnKind::Target),
        ];
        let first = load_csv(&path, &schema).unwrap();
        let out = dir.path().join("again.csv");
        let written = write_csv(&first, &out).unwrap();
        let second = load_csv(&out, &written).unwrap();
        prop_assert_eq!(
            first.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            second.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        prop_assert_eq!(first.target, second.target);
    }
}

// ---- likelihood

proptest! {
    #[test]
    fn class_weights_balance_the_classes(labels in prop::collection::vec(0u8..2, 2..200)) {
        let b1 = labels.iter().filter(|&&l| l == 1).count() as f64;
        let b0 = labels.len() as f64 - b1;
        prop_assume!(b0 > 0.0 && b1 > 0.0);
        let (w0, w1) = class_weights(&labels).unwrap();
        prop_assert!((w0 * b0 - w1 * b1).abs() <= 1e-12 * (w0 * b0));
    }

    #[test]
    fn filter_keeps_only_agreeing_rows(
        pairs in prop::collection::vec((0.0f64..=1.0, 0u8..2), 0..100),
    ) {
        let (scores, labels): (Vec<f64>, Vec<u8>) = pairs.into_iter().unzip();
        let kept = filter_correct(&scores, &labels).unwrap();
        for &i in &kept {
            prop_assert_eq!(scores[i] >= 0.5, labels[i] == 1);
        }
        let dropped = scores.len() - kept.len();
        let disagree = scores.iter().zip(&labels).filter(|(&s, &l)| (s >= 0.5) != (l == 1)).count();
        prop_assert_eq!(dropped, disagree);
    }

    #[test]
    fn scores_stay_strictly_inside_unit_interval(seed in any::<u64>(), gain in 1.0f64..1e4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = MlpParams::init(&[3, 4, 1], Activation::Relu, Activation::Identity, &mut rng);
        for l in &mut net.layers {
            l.weight *= gain;
        }
        let x = seeded_matrix(20, 3, -5.0, 5.0, seed ^ 1);
        for s in predict_scores(&net, &x).unwrap() {
            prop_assert!(s > 0.0 && s < 1.0, "{}", s);
        }
    }
}

// ---- lingam

proptest! {
    #[test]
    fn residual_scales_exactly_with_powers_of_two(seed in any::<u64>(), k in -8i32..8) {
        let c = 2f64.powi(k);
        let x = seeded_matrix(30, 2, -3.0, 3.0, seed);
        let xi: Vec<f64> = x.column(0).iter().copied().collect();
        let xj: Vec<f64> = x.column(1).iter().copied().collect();
        let scaled: Vec<f64> = xi.iter().map(|v| c * v).collect();
        let r = residual(&xi, &xj).unwrap();
        let rc = residual(&scaled, &xj).unwrap();
        for (a, b) in r.iter().zip(&rc) {
            prop_assert_eq!((c * a).to_bits(), b.to_bits());
        }
    }
}

/// Uniform-noise linear SEMs at B = 5000: recovered edge signs agree with
/// the generating weights on at least 90% of edges present in both.
#[test]
fn lingam_recovers_edge_signs() {
    let (mut agree, mut total) = (0usize, 0usize);
    for seed in 0..20u64 {
        let noise = Noise {
            kind: NoiseKind::Uniform,
            scale: 1.0,
        };
        let spec = SemSpec::random_linear(5, 0.5, noise, seed).unwrap();
        let Mechanism::Linear { weights } = &spec.mechanism else {
            unreachable!()
        };
        let x = zscore(&sample_linear_sem(&spec, 5000, seed).unwrap());
        let res = fit_lingam(&x, &default_names(5), &LingamConfig::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let est = res.adjacency[(i, j)];
                if weights[i][j] != 0.0 && est != 0.0 {
                    total += 1;
                    agree += (est.signum() == weights[i][j].signum()) as usize;
                }
            }
        }
    }
    assert!(total > 0);
    assert!(agree as f64 >= 0.9 * total as f64, "{agree}/{total} signs agree");
}

// ---- notears

fn taylor_expm(a: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..terms {
        term = &term * a / k as f64;
        sum += &term;
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn two_cycles_are_penalized(
        n in 2usize..6,
        seed in any::<u64>(),
        a in 0.5f64..2.0,
        b in 0.5f64..2.0,
    ) {
        let mut w = seeded_matrix(n, n, -1.0, 1.0, seed);
        for i in 0..n {
            w[(i, i)] = 0.0;
        }
        w[(0, 1)] = a;
        w[(1, 0)] = -b;
        prop_assert!(acyclicity(&w).unwrap() > 1e-3);
    }

    #[test]
    fn expm_matches_taylor_series(n in 1usize..6, seed in any::<u64>()) {
        // entries of W∘W are at most 2/n, so ||W∘W||_F <= 2
        let bound = (2.0 / n as f64).sqrt().min(0.7);
        let w = seeded_matrix(n, n, -bound, bound, seed);
        let a = w.component_mul(&w);
        prop_assert!(a.norm() <= 2.0);
        let diff = (expm(&a) - taylor_expm(&a, 30)).abs().max();
        prop_assert!(diff < 1e-9, "{}", diff);
    }

    #[test]
    fn adjacency_ignores_non_first_layers(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = RegressorBank::init(n, &[4, 3], &mut rng);
        let mut other = bank.clone();
        for m in &mut other.models {
            for l in m.layers.iter_mut().skip(1) {
                l.weight.iter_mut().for_each(|v| *v = rng.random_range(-5.0..5.0));
                l.bias.iter_mut().for_each(|v| *v = rng.random_range(-5.0..5.0));
            }
        }
        prop_assert_eq!(aggregate_adjacency(&bank), aggregate_adjacency(&other));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn optimizer_keeps_diagonal_masked(seed in any::<u64>(), rho in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bank = RegressorBank::init(3, &[4], &mut rng);
        prop_assert!(aggregate_adjacency(&bank).diagonal().iter().all(|&d| d == 0.0));
        let x = seeded_matrix(40, 3, -1.0, 1.0, seed ^ 7);
        minimize_fixed(&mut bank, &x, 0.3, rho, 0.01, 0.01, 20).unwrap();
        prop_assert!(aggregate_adjacency(&bank).diagonal().iter().all(|&d| d == 0.0));
    }
}

// ---- mlmodels

fn labelled(seed: u64, rows: usize, cols: usize) -> (DMatrix<f64>, Vec<u8>) {
    let x = seeded_matrix(rows, cols, -2.0, 2.0, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let mut y: Vec<u8> = (0..rows)
        .map(|i| (x[(i, 0)] + rng.random_range(-1.0..1.0) > 0.0) as u8)
        .collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gbt_importance_is_zero_exactly_for_unsplit_variables(seed in any::<u64>()) {
        let (x, y) = labelled(seed, 80, 4);
        let cfg = GbtConfig { n_trees: 10, ..GbtConfig::default() };
        let model = fit_gbt(&x, &y, &cfg).unwrap();
        let imp = gbt_importance(&model);
        let mut used = [false; 4];
        for t in &model.trees {
            for node in &t.nodes {
                if let Node::Split { var, .. } = node {
                    used[*var] = true;
                }
            }
        }
        for (v, &s) in imp.iter().enumerate() {
            prop_assert!(s >= 0.0);
            prop_assert_eq!(s == 0.0, !used[v], "variable {} importance {}", v, s);
        }
    }

    #[test]
    fn logreg_loss_trace_never_increases(seed in any::<u64>(), penalty in 0.01f64..10.0) {
        let (x, y) = labelled(seed, 60, 3);
        let cfg = LogregConfig { penalty, ..LogregConfig::default() };
        let model = fit_logreg(&x, &y, &cfg).unwrap();
        prop_assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]), "{:?}", model.loss_trace);
    }
}

// ---- analysis

proptest! {
    #[test]
    fn pearson_is_affine_equivariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 5..60),
        a in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        b in -100.0f64..100.0,
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread(&x) > 1.0 && spread(&y) > 1.0);
        let ax: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r = pearson(&x, &y).unwrap();
        let r2 = pearson(&ax, &y).unwrap();
        prop_assert!((r2 - a.signum() * r).abs() < 1e-12, "{} vs {}", r2, r);
    }

    #[test]
    fn competition_and_fractional_ranks_agree_without_ties(
        scores in prop::collection::btree_set(1u32..100_000, 1..30),
        flips in prop::collection::vec(any::<bool>(), 30),
    ) {
        // distinct magnitudes with arbitrary signs
        let scores: Vec<f64> = scores
            .iter()
            .zip(&flips)
            .map(|(&s, &f)| if f { -(s as f64) } else { s as f64 })
            .collect();
        let named: Vec<(String, f64)> =
            scores.iter().enumerate().map(|(i, &s)| (format!("v{i}"), s)).collect();
        let table = rank_by_score(Case::GbtImp, None, &named);
        let mags: Vec<f64> = scores.iter().map(|s| s.abs()).collect();
        let frac = fractional_ranks(&mags);
        let n = scores.len() as f64;
        for (i, (name, _)) in named.iter().enumerate() {
            // fractional ranks ascend, competition ranks descend by magnitude
            prop_assert_eq!(table.rank_of(name).unwrap() as f64, n + 1.0 - frac[i]);
        }
    }

    #[test]
    fn concordance_ignores_unshared_variables(
        a in prop::collection::vec(-10.0f64..10.0, 4..12),
        b in prop::collection::vec(-10.0f64..10.0, 4..12),
        extra in -10.0f64..10.0,
    ) {
        let n = a.len().min(b.len());
        let ta: Vec<(String, f64)> = a[..n].iter().enumerate().map(|(i, &s)| (format!("v{i}"), s)).collect();
        let tb: Vec<(String, f64)> = b[..n].iter().enumerate().map(|(i, &s)| (format!("v{i}"), s)).collect();
        let base = table_concordance(
            &rank_by_score(Case::Causal, None, &ta),
            &rank_by_score(Case::GbtImp, None, &tb),
        );
        let mut ta2 = ta.clone();
        ta2.push(("only_here".to_string(), extra));
        let more = table_concordance(
            &rank_by_score(Case::Causal, None, &ta2),
            &rank_by_score(Case::GbtImp, None, &tb),
        );
        match (base, more) {
            (Ok(x), Ok(y)) => {
                prop_assert_eq!(x.0.to_bits(), y.0.to_bits());
                prop_assert_eq!(x.2, y.2);
            }
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{:?} vs {:?}", x, y),
        }
    }
}

// ---- cli artifacts

#[derive(Debug, PartialEq)]
enum Tok {
    Id(String),
    Arrow,
    Sym(char),
}

/// Tokenizer for the DOT subset: quoted ids with `\"` and `\\` escapes,
/// bare ids, `->` and punctuation.
fn dot_tokens(s: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let mut it = s.chars().peekable();
    while let Some(c) = it.next() {
        match c {
            c if c.is_whitespace() => {}
            '"' => {
                let mut id = String::new();
                loop {
                    match it.next() {
                        Some('\\') => id.push(it.next().ok_or("dangling escape")?),
                        Some('"') => break,
                        Some(ch) => id.push(ch),
                        None => return Err("unterminated string".into()),
                    }
                }
                out.push(Tok::Id(id));
            }
            '-' if it.peek() == Some(&'>') => {
                it.next();
                out.push(Tok::Arrow);
            }
            '{' | '}' | '[' | ']' | '=' | ';' | ',' => out.push(Tok::Sym(c)),
            c if c.is_alphanumeric() || c == '_' || c == '.' || c == '-' => {
                let mut id = c.to_string();
                while let Some(&n) = it.peek() {
                    if n.is_alphanumeric() || n == '_' || n == '.' {
                        id.push(n);
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Id(id));
            }
            other => return Err(format!("unexpected `{other}`")),
        }
    }
    Ok(out)
}

/// Parses `digraph ID { stmt* }` where a statement is a node, an edge
/// `ID -> ID`, or `ID = ID`, each with an optional attribute list and `;`.
/// Returns the edge list.
fn parse_dot(s: &str) -> Result<Vec<(String, String)>, String> {
    let toks = dot_tokens(s)?;
    let mut p = 0;
    let id = |p: &mut usize| match toks.get(*p) {
        Some(Tok::Id(v)) => {
            *p += 1;
            Ok(v.clone())
        }
        t => Err(format!("expected id, got {t:?}")),
    };
    let sym = |p: &mut usize, c: char| match toks.get(*p) {
        Some(Tok::Sym(x)) if *x == c => {
            *p += 1;
            Ok(())
        }
        t => Err(format!("expected `{c}`, got {t:?}")),
    };
    if id(&mut p)? != "digraph" {
        return Err("not a digraph".into());
    }
    id(&mut p)?;
    sym(&mut p, '{')?;
    let mut edges = Vec::new();
    while toks.get(p) != Some(&Tok::Sym('}')) {
        let a = id(&mut p)?;
        match toks.get(p) {
            Some(Tok::Arrow) => {
                p += 1;
                let b = id(&mut p)?;
                edges.push((a, b));
            }
            Some(Tok::Sym('=')) => {
                p += 1;
                id(&mut p)?;
            }
            _ => {}
        }
        if toks.get(p) == Some(&Tok::Sym('[')) {
            p += 1;
            while toks.get(p) != Some(&Tok::Sym(']')) {
                id(&mut p)?;
                sym(&mut p, '=')?;
                id(&mut p)?;
                if toks.get(p) == Some(&Tok::Sym(',')) {
                    p += 1;
                }
            }
            p += 1;
        }
        sym(&mut p, ';')?;
    }
    p += 1;
    if p != toks.len() {
        return Err("trailing tokens".into());
    }
    Ok(edges)
}

proptest! {
    #[test]
    fn dot_is_valid_and_matches_thresholded_json(
        n in 1usize..7,
        seed in any::<u64>(),
        omega in 0.0f64..1.0,
        names in prop::collection::vec("[a-zA-Z0-9 _\"\\\\-]{1,8}", 7),
    ) {
        let mut names: Vec<String> = names[..n].to_vec();
        for (i, s) in names.iter_mut().enumerate() {
            s.push_str(&i.to_string());
        }
        let mut weights = seeded_matrix(n, n, -1.5, 1.5, seed);
        for i in 0..n {
            weights[(i, i)] = 0.0;
        }
        let g = WeightedDigraph { names: names.clone(), weights, omega };
        let reloaded = WeightedDigraph::from_json(&g.to_json().unwrap()).unwrap();
        let mut from_json: Vec<(String, String)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && reloaded.weights[(i, j)].abs() >= reloaded.omega {
                    from_json.push((names[i].clone(), names[j].clone()));
                }
            }
        }
        let mut from_dot = parse_dot(&to_dot(&g, "notears")).map_err(TestCaseError::fail)?;
        from_dot.sort();
        from_json.sort();
        prop_assert_eq!(&from_dot, &from_json);
        prop_assert_eq!(from_dot.len(), g.edges().len());
    }
}
