//! Tabular ingest: schema sidecars, CSV parsing with one-hot expansion,
//! median imputation and standardization.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Binary,
    Categorical,
    Target,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Binary => "binary",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Target => "target",
        }
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "continuous" => Ok(ColumnKind::Continuous),
            "binary" => Ok(ColumnKind::Binary),
            "categorical" => Ok(ColumnKind::Categorical),
            "target" => Ok(ColumnKind::Target),
            other => Err(Error::Schema(format!("unknown column kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Checks the schema invariants: unique names and exactly one target.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for col in schema {
        if !seen.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
        }
    }
    let targets = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Target)
        .count();
    if targets != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one target column, found {targets}"
        )));
    }
    Ok(())
}

/// Reads a `name,kind` sidecar, one column per line. Blank lines and lines
/// starting with `#` are skipped.
pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSchema>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut schema = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, kind) = line.rsplit_once(',').ok_or_else(|| {
            Error::Schema(format!("line {}: expected `name,kind`, got `{line}`", i + 1))
        })?;
        schema.push(ColumnSchema::new(name.trim(), kind.parse()?));
    }
    validate_schema(&schema)?;
    Ok(schema)
}

pub fn write_schema(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for col in schema {
        out.push_str(&format!("{},{}\n", col.name, col.kind.as_str()));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One column of the encoded matrix. Indicator columns produced by one-hot
/// expansion have kind `Binary` and carry their categorical source name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
}

impl Column {
    pub fn is_indicator(&self) -> bool {
        self.source != self.name
    }
}

/// Encoded B x N predictor matrix plus a binary target. `NaN` cells mark
/// missing values until [`impute_median`] has run.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: Vec<ColumnSchema>,
    pub columns: Vec<Column>,
    pub values: DMatrix<f64>,
    pub target: Vec<u8>,
    pub target_name: String,
}

impl Dataset {
    pub fn from_matrix(
        names: &[String],
        values: DMatrix<f64>,
        target: Vec<u8>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if target.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "target length {} for {} rows",
                target.len(),
                values.nrows()
            )));
        }
        if target.iter().any(|&t| t > 1) {
            return Err(Error::Validation("target entries must be 0 or 1".into()));
        }
        let target_name = target_name.into();
        let columns: Vec<Column> = names
            .iter()
            .map(|n| Column {
                name: n.clone(),
                kind: ColumnKind::Continuous,
                source: n.clone(),
            })
            .collect();
        let mut schema: Vec<ColumnSchema> = names
            .iter()
            .map(|n| ColumnSchema::new(n.clone(), ColumnKind::Continuous))
            .collect();
        schema.push(ColumnSchema::new(target_name.clone(), ColumnKind::Target));
        validate_schema(&schema)?;
        Ok(Self {
            schema,
            columns,
            values,
            target,
            target_name,
        })
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    /// Rows restricted to `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let values = DMatrix::from_fn(indices.len(), self.vars(), |i, j| {
            self.values[(indices[i], j)]
        });
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.clone(),
            values,
            target: indices.iter().map(|&i| self.target[i]).collect(),
            target_name: self.target_name.clone(),
        }
    }

    /// Drops the named column; the schema entry goes with it.
    pub fn without_column(&self, name: &str) -> Result<Dataset> {
        let j = self
            .column_index(name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
        let mut columns = self.columns.clone();
        columns.remove(j);
        let values = self.values.clone().remove_column(j);
        let schema = self
            .schema
            .iter()
            .filter(|c| c.name != name)
            .cloned()
            .collect();
        Ok(Dataset {
            schema,
            columns,
            values,
            target: self.target.clone(),
            target_name: self.target_name.clone(),
        })
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

enum Raw {
    Number(f64),
    Level(String),
    Missing,
}

/// Parses a CSV whose header must match `schema` (any column order).
/// Categorical columns are one-hot expanded into `name=level` indicators
/// with levels sorted lexicographically; rows with a missing target are
/// dropped.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<Dataset> {
    let path = path.as_ref();
    validate_schema(schema)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader
        .headers()
        .map_err(|e| csv_error(&e))?
        .iter()
        .map(str::to_string)
        .collect::<Vec<_>>();
    let by_name: HashMap<&str, &ColumnSchema> =
        schema.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut header_seen = BTreeSet::new();
    for h in &header {
        if !by_name.contains_key(h.as_str()) {
            return Err(Error::Schema(format!("unknown column `{h}` in {}", path.display())));
        }
        if !header_seen.insert(h.as_str()) {
            return Err(Error::Schema(format!("duplicate header `{h}`")));
        }
    }
    if let Some(missing) = schema.iter().find(|c| !header_seen.contains(c.name.as_str())) {
        return Err(Error::Schema(format!(
            "schema column `{}` absent from {}",
            missing.name,
            path.display()
        )));
    }

    // raw[schema column][row]
    let mut raw: Vec<Vec<Raw>> = schema.iter().map(|_| Vec::new()).collect();
    let schema_pos: Vec<usize> = header
        .iter()
        .map(|h| schema.iter().position(|c| &c.name == h).unwrap())
        .collect();
    let mut target: Vec<u8> = Vec::new();
    let target_idx = schema
        .iter()
        .position(|c| c.kind == ColumnKind::Target)
        .unwrap();

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let mut row: Vec<Raw> = schema.iter().map(|_| Raw::Missing).collect();
        let mut label = None;
        for (field, &s) in record.iter().zip(&schema_pos) {
            let col = &schema[s];
            if is_missing(field) {
                continue;
            }
            match col.kind {
                ColumnKind::Target => {
                    label = Some(match field {
                        "0" | "0.0" => 0u8,
                        "1" | "1.0" => 1u8,
                        other => {
                            return Err(Error::Validation(format!(
                                "line {line}: target `{}` has non-binary value `{other}`",
                                col.name
                            )))
                        }
                    });
                }
                ColumnKind::Continuous | ColumnKind::Binary => {
                    let v: f64 = field.parse().map_err(|_| Error::Parse {
                        line,
                        message: format!("column `{}`: `{field}` is not a number", col.name),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            line,
                            message: format!("column `{}`: non-finite value", col.name),
                        });
                    }
                    if col.kind == ColumnKind::Binary && v != 0.0 && v != 1.0 {
                        return Err(Error::Validation(format!(
                            "line {line}: binary column `{}` has value `{field}`",
                            col.name
                        )));
                    }
                    row[s] = Raw::Number(v);
                }
                ColumnKind::Categorical => row[s] = Raw::Level(field.to_string()),
            }
        }
        let Some(label) = label else { continue };
        target.push(label);
        for (s, cell) in row.into_iter().enumerate() {
            if s != target_idx {
                raw[s].push(cell);
            }
        }
    }

    let rows = target.len();
    let mut columns = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (s, col) in schema.iter().enumerate() {
        match col.kind {
            ColumnKind::Target => {}
            ColumnKind::Continuous | ColumnKind::Binary => {
                columns.push(Column {
                    name: col.name.clone(),
                    kind: col.kind,
                    source: col.name.clone(),
                });
                data.push(
                    raw[s]
                        .iter()
                        .map(|r| match r {
                            Raw::Number(v) => *v,
                            _ => f64::NAN,
                        })
                        .collect(),
                );
            }
            ColumnKind::Categorical => {
                let levels: BTreeSet<&str> = raw[s]
                    .iter()
                    .filter_map(|r| match r {
                        Raw::Level(l) => Some(l.as_str()),
                        _ => None,
                    })
                    .collect();
                for level in levels {
                    columns.push(Column {
                        name: format!("{}={}", col.name, level),
                        kind: ColumnKind::Binary,
                        source: col.name.clone(),
                    });
                    data.push(
                        raw[s]
                            .iter()
                            .map(|r| match r {
                                Raw::Level(l) if l == level => 1.0,
                                Raw::Level(_) => 0.0,
                                _ => f64::NAN,
                            })
                            .collect(),
                    );
                }
            }
        }
    }
    let values = DMatrix::from_fn(rows, columns.len(), |i, j| data[j][i]);
    Ok(Dataset {
        schema: schema.to_vec(),
        columns,
        values,
        target,
        target_name: schema[target_idx].name.clone(),
    })
}

fn csv_error(e: &csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Writes the encoded matrix (indicator columns included) and target.
/// Returns the flat schema under which [`load_csv`] reproduces the values
/// bit-exactly.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<Vec<ColumnSchema>> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut header: Vec<String> = ds.names();
    header.push(ds.target_name.clone());
    w.write_record(&header).map_err(|e| csv_error(&e))?;
    for i in 0..ds.rows() {
        let mut rec: Vec<String> = (0..ds.vars())
            .map(|j| format_cell(ds.values[(i, j)]))
            .collect();
        rec.push(ds.target[i].to_string());
        w.write_record(&rec).map_err(|e| csv_error(&e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut schema: Vec<ColumnSchema> = ds
        .columns
        .iter()
        .map(|c| {
            let kind = if c.kind == ColumnKind::Binary {
                ColumnKind::Binary
            } else {
                ColumnKind::Continuous
            };
            ColumnSchema::new(c.name.clone(), kind)
        })
        .collect();
    schema.push(ColumnSchema::new(ds.target_name.clone(), ColumnKind::Target));
    Ok(schema)
}

fn format_cell(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

/// Median of a non-empty slice; even counts average the two central values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Replaces missing cells with the column median. One-hot groups are
/// imputed as a unit with the most frequent level so every row keeps
/// exactly one active indicator.
pub fn impute_median(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (j, c) in ds.columns.iter().enumerate() {
        if c.is_indicator() {
            groups.entry(c.source.as_str()).or_default().push(j);
        }
    }

    for (j, c) in ds.columns.iter().enumerate() {
        if c.is_indicator() {
            continue;
        }
        let col = ds.values.column(j);
        if !col.iter().any(|v| v.is_nan()) {
            continue;
        }
        let observed: Vec<f64> = col.iter().copied().filter(|v| !v.is_nan()).collect();
        let m = median(&observed).ok_or_else(|| Error::Unimputable(c.name.clone()))?;
        for i in 0..ds.rows() {
            if out.values[(i, j)].is_nan() {
                out.values[(i, j)] = m;
            }
        }
    }

    for (source, members) in groups {
        let missing_rows: Vec<usize> = (0..ds.rows())
            .filter(|&i| ds.values[(i, members[0])].is_nan())
            .collect();
        if missing_rows.is_empty() {
            continue;
        }
        // counts per level; ties go to the first level in sorted order
        let counts: Vec<usize> = members
            .iter()
            .map(|&j| ds.values.column(j).iter().filter(|&&v| v == 1.0).count())
            .collect();
        let max = *counts.iter().max().unwrap_or(&0);
        if max == 0 {
            return Err(Error::Unimputable(source.to_string()));
        }
        let mode = members[counts.iter().position(|&c| c == max).unwrap()];
        for i in missing_rows {
            for &j in &members {
                out.values[(i, j)] = if j == mode { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(out)
}

/// Per-column affine transform applied by [`standardize`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardization {
    pub fn inverse(&self, j: usize, z: f64) -> f64 {
        z * self.stds[j] + self.means[j]
    }
}

/// Population mean and standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Zero mean, unit population standard deviation for every predictor
/// column. The target is untouched.
pub fn standardize(ds: &Dataset) -> Result<(Dataset, Standardization)> {
    if ds.missing_count() > 0 {
        return Err(Error::Validation(
            "dataset still has missing values; impute before standardizing".into(),
        ));
    }
    let mut out = ds.clone();
    let mut means = Vec::with_capacity(ds.vars());
    let mut stds = Vec::with_capacity(ds.vars());
    for (j, c) in ds.columns.iter().enumerate() {
        let (mean, std) = mean_std(ds.values.column(j).iter().copied());
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::Degenerate(format!("column `{}` has zero variance", c.name)));
        }
        for v in out.values.column_mut(j).iter_mut() {
            *v = (*v - mean) / std;
        }
        means.push(mean);
        stds.push(std);
    }
    Ok((
        out,
        Standardization {
            names: ds.names(),
            means,
            stds,
        },
    ))
}

/// Writes `text` to `path`, mapping failures to [`Error::Io`].
pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn schema(cols: &[(&str, ColumnKind)]) -> Vec<ColumnSchema> {
        cols.iter().map(|(n, k)| ColumnSchema::new(*n, *k)).collect()
    }

    #[test]
    fn loads_plain_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "age,smoker,hf\n50,1,0\n61,0,1\n70,1,1\n");
        let s = schema(&[
            ("age", ColumnKind::Continuous),
            ("smoker", ColumnKind::Binary),
            ("hf", ColumnKind::Target),
        ]);
        let ds = load_csv(&p, &s).unwrap();
        assert_eq!(ds.rows(), 3);
        assert_eq!(ds.vars(), 2);
        assert_eq!(ds.target, vec![0, 1, 1]);
        assert_eq!(ds.values[(1, 0)], 61.0);
    }

    #[test]
    fn categorical_expands_to_indicators() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "grp,y\nB,0\nA,1\nC,1\nA,0\n");
        let s = schema(&[("grp", ColumnKind::Categorical), ("y", ColumnKind::Target)]);
        let ds = load_csv(&p, &s).unwrap();
        assert_eq!(ds.names(), vec!["grp=A", "grp=B", "grp=C"]);
        for i in 0..ds.rows() {
            let sum: f64 = (0..3).map(|j| ds.values[(i, j)]).sum();
            assert_eq!(sum, 1.0);
        }
    }

    #[test]
    fn non_binary_target_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "x,y\n1,0\n2,2\n");
        let s = schema(&[("x", ColumnKind::Continuous), ("y", ColumnKind::Target)]);
        assert!(matches!(load_csv(&p, &s), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_target_rows_are_dropped_and_missing_cells_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "x,y\n1,0\nNA,1\n3,\n4,1\n");
        let s = schema(&[("x", ColumnKind::Continuous), ("y", ColumnKind::Target)]);
        let ds = load_csv(&p, &s).unwrap();
        assert_eq!(ds.rows(), 3);
        assert!(ds.values[(1, 0)].is_nan());
        assert_eq!(ds.missing_count(), 1);
    }

    #[test]
    fn unknown_column_and_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema(&[("x", ColumnKind::Continuous), ("y", ColumnKind::Target)]);
        let p = write_tmp(&dir, "a.csv", "x,z,y\n1,2,0\n");
        assert!(matches!(load_csv(&p, &s), Err(Error::Schema(_))));
        let p = write_tmp(&dir, "b.csv", "x,y\n1,0\nabc,1\n");
        match load_csv(&p, &s) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_sidecar_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "s.txt", "age,continuous\n# comment\n\nhf,target\n");
        let s = read_schema(&p).unwrap();
        assert_eq!(s.len(), 2);
        let p = write_tmp(&dir, "bad.txt", "age,continuous\n");
        assert!(read_schema(&p).is_err());
        let p = write_tmp(&dir, "dup.txt", "a,continuous\na,binary\nt,target\n");
        assert!(read_schema(&p).is_err());
    }

    fn one_col(values: Vec<f64>) -> Dataset {
        let n = values.len();
        Dataset::from_matrix(
            &["x".to_string()],
            DMatrix::from_vec(n, 1, values),
            vec![0; n],
            "y",
        )
        .unwrap()
    }

    #[test]
    fn median_imputation_examples() {
        let ds = impute_median(&one_col(vec![1.0, f64::NAN, 3.0])).unwrap();
        assert_eq!(ds.column(0), vec![1.0, 2.0, 3.0]);

        // sort-and-pick oracle over the observed multiset
        let observed = [4.0, 1.0, 2.0];
        let mut sorted = observed.to_vec();
        sorted.sort_by(f64::total_cmp);
        let oracle = sorted[1];
        let ds = impute_median(&one_col(vec![1.0, 2.0, f64::NAN, 4.0])).unwrap();
        assert_eq!(ds.column(0), vec![1.0, 2.0, oracle, 4.0]);
        assert_eq!(oracle, 2.0);

        let clean = one_col(vec![5.0, 1.0, 2.0]);
        assert_eq!(impute_median(&clean).unwrap(), clean);

        let empty = one_col(vec![f64::NAN, f64::NAN]);
        assert!(matches!(impute_median(&empty), Err(Error::Unimputable(n)) if n == "x"));
    }

    #[test]
    fn categorical_missing_takes_mode() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.csv", "g,y\nA,0\nB,1\nB,1\n,0\n");
        let s = schema(&[("g", ColumnKind::Categorical), ("y", ColumnKind::Target)]);
        let ds = impute_median(&load_csv(&p, &s).unwrap()).unwrap();
        assert_eq!(ds.values[(3, 0)], 0.0);
        assert_eq!(ds.values[(3, 1)], 1.0);
    }

    #[test]
    fn standardize_examples() {
        let (ds, t) = standardize(&one_col(vec![2.0, 4.0, 6.0])).unwrap();
        let s = (8.0f64 / 3.0).sqrt();
        let expect = [(2.0 - 4.0) / s, 0.0, (6.0 - 4.0) / s];
        for (a, b) in ds.column(0).iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((ds.values[(0, 0)] + 1.224745).abs() < 1e-6);
        assert_eq!(t.means[0], 4.0);
        assert!((t.inverse(0, ds.values[(2, 0)]) - 6.0).abs() < 1e-12);

        let (again, _) = standardize(&ds).unwrap();
        for (a, b) in again.values.iter().zip(ds.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }

        assert!(matches!(
            standardize(&one_col(vec![5.0, 5.0, 5.0])),
            Err(Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn impute_is_idempotent(cells in prop::collection::vec(prop::option::of(-1e3f64..1e3), 1..30)) {
            prop_assume!(cells.iter().any(Option::is_some));
            let ds = one_col(cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect());
            let once = impute_median(&ds).unwrap();
            prop_assert_eq!(impute_median(&once).unwrap(), once.clone());
            prop_assert_eq!(once.missing_count(), 0);
        }

        #[test]
        fn standardized_moments(values in prop::collection::vec(-1e3f64..1e3, 3..50)) {
            let ds = one_col(values);
            if let Ok((z, _)) = standardize(&ds) {
                let (m, s) = mean_std(z.values.column(0).iter().copied());
                prop_assert!(m.abs() < 1e-10);
                prop_assert!((s - 1.0).abs() < 1e-10);
            }
        }

        #[test]
        fn csv_roundtrip_is_bit_exact(
            rows in prop::collection::vec((any::<f64>(), prop::option::of(-1e6f64..1e6), 0u8..2), 1..20)
        ) {
            let xs: Vec<f64> = rows.iter().map(|r| if r.0.is_finite() { r.0 } else { 0.5 }).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.1.unwrap_or(f64::NAN)).collect();
            let n = rows.len();
            let mut values = xs.clone();
            values.extend(&ys);
            let ds = Dataset::from_matrix(
                &["a".to_string(), "b".to_string()],
                DMatrix::from_vec(n, 2, values),
                rows.iter().map(|r| r.2).collect(),
                "t",
            ).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.csv");
            let schema = write_csv(&ds, &p).unwrap();
            let back = load_csv(&p, &schema).unwrap();
            prop_assert_eq!(back.target, ds.target);
            for (a, b) in back.values.iter().zip(ds.values.iter()) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
