//! Dataset ingestion and the preprocessing pipeline: unit-variance scaling
//! followed by an optional projection onto leading principal components.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CnsError, Result};

/// Default cap on the number of principal components kept by [`pca_reduce`].
pub const DEFAULT_MAX_PCS: usize = 100;

/// An `n × d` matrix of finite observations, one row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: Array2<f64>,
    column_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        Self::with_names(values, None)
    }

    pub fn with_names(values: Array2<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        let (n, d) = values.dim();
        if n < 2 {
            return Err(CnsError::InvalidData(format!("need at least 2 rows, got {n}")));
        }
        if d < 1 {
            return Err(CnsError::InvalidData("need at least 1 column".into()));
        }
        if let Some(((row, col), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(CnsError::InvalidData(format!(
                "non-finite value {v} at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        if let Some(names) = &column_names {
            if names.len() != d {
                return Err(CnsError::InvalidData(format!(
                    "{} column names for {d} columns",
                    names.len()
                )));
            }
        }
        // Row-major contiguous storage lets rows be borrowed as slices.
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().to_owned()
        };
        Ok(DataMatrix { values, column_names })
    }

    /// Builds a matrix from row-major values.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(CnsError::InvalidData("rows have unequal lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| CnsError::InvalidData(e.to_string()))?;
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.as_slice()[i * d..(i + 1) * d]
    }

    /// All values, row-major.
    pub fn as_slice(&self) -> &[f64] {
        self.values
            .as_slice()
            .expect("DataMatrix is always stored in standard layout")
    }

    /// Returns a copy with rows reordered so that row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let values = self.values.select(Axis(0), order);
        Self::with_names(values, self.column_names.clone())
    }
}

/// Ground-truth (or predicted) group labels coded densely as `0..groups`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    labels: Vec<usize>,
    groups: usize,
}

impl LabelVector {
    /// `groups` is taken as one more than the largest label.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        if groups == 0 {
            return Err(CnsError::InvalidData("label vector is empty".into()));
        }
        Ok(LabelVector { labels, groups })
    }

    pub fn with_groups(labels: Vec<usize>, groups: usize) -> Result<Self> {
        if groups == 0 {
            return Err(CnsError::InvalidData("need at least one group".into()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= groups) {
            return Err(CnsError::InvalidData(format!(
                "label {bad} out of range for {groups} groups"
            )));
        }
        Ok(LabelVector { labels, groups })
    }

    /// Codes arbitrary label strings by order of first appearance.
    pub fn from_strings<S: AsRef<str>>(raw: &[S]) -> Result<Self> {
        let mut codes: HashMap<&str, usize> = HashMap::new();
        let labels = raw
            .iter()
            .map(|s| {
                let next = codes.len();
                *codes.entry(s.as_ref().trim()).or_insert(next)
            })
            .collect();
        let groups = codes.len();
        Self::with_groups(labels, groups.max(1))
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which column of a CSV file holds labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// Header name.
    Name(String),
    /// Zero-based column index.
    Index(usize),
    Last,
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// `"last"` selects the final column, `"#3"` the third (one-based)
    /// column; anything else is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        if let Some(idx) = s.strip_prefix('#').and_then(|r| r.parse::<usize>().ok()) {
            if idx >= 1 {
                return Ok(LabelColumn::Index(idx - 1));
            }
        }
        Ok(LabelColumn::Name(s.to_string()))
    }
}

impl LabelColumn {
    fn resolve(&self, header: Option<&[String]>, width: usize) -> Result<usize> {
        let found = match self {
            LabelColumn::Last => width.checked_sub(1),
            LabelColumn::Index(i) => (*i < width).then_some(*i),
            LabelColumn::Name(name) => header
                .and_then(|h| h.iter().position(|c| c.trim() == name))
                // Without a header, a bare number is a one-based position.
                .or_else(|| {
                    name.parse::<usize>()
                        .ok()
                        .filter(|&i| header.is_none() && i >= 1 && i <= width)
                        .map(|i| i - 1)
                }),
        };
        found.ok_or_else(|| CnsError::MissingLabelColumn(self.describe()))
    }

    fn describe(&self) -> String {
        match self {
            LabelColumn::Name(n) => format!("'{n}'"),
            other => other.to_string(),
        }
    }
}

/// Formats in the syntax accepted by `from_str`.
impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Name(n) => f.write_str(n),
            LabelColumn::Index(i) => write!(f, "#{}", i + 1),
            LabelColumn::Last => f.write_str("last"),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CnsError {
    CnsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a comma-delimited numeric file.
///
/// The label column, when given, is removed from the features and coded by
/// order of first appearance. Rows and columns in parse errors are one-based
/// positions in the file (the header, if any, is row 1).
pub fn load_csv(
    path: &Path,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| io_err(path, e))?;
    parse_csv(path, &text, label_column, has_header)
}

pub(crate) fn parse_csv(
    path: &Path,
    text: &str,
    label_column: Option<&LabelColumn>,
    has_header: bool,
) -> Result<(DataMatrix, Option<LabelVector>)> {
    if text.trim().is_empty() {
        return Err(CnsError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let parse_err = |row: u64, column: usize, message: String| CnsError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut header: Option<Vec<String>> = None;
    let mut width: Option<usize> = None;
    let mut label_idx: Option<usize> = None;
    let mut features: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut rows = 0usize;

    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            parse_err(row, 0, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if has_header && header.is_none() {
            header = Some(record.iter().map(str::to_string).collect());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(parse_err(
                line,
                record.len().min(w) + 1,
                format!("expected {w} fields, found {}", record.len()),
            ));
        }
        if label_idx.is_none() {
            if let Some(sel) = label_column {
                label_idx = Some(sel.resolve(header.as_deref(), w)?);
            }
        }
        for (c, field) in record.iter().enumerate() {
            if Some(c) == label_idx {
                raw_labels.push(field.to_string());
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                parse_err(line, c + 1, format!("'{field}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line, c + 1, format!("'{field}' is not finite")));
            }
            features.push(v);
        }
        rows += 1;
    }

    if rows == 0 {
        return Err(CnsError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let w = width.unwrap_or(0);
    if let (Some(sel), None) = (label_column, label_idx) {
        // Only reachable when the header names no such column.
        sel.resolve(header.as_deref(), w)?;
    }
    let d = w - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(CnsError::InvalidData("no feature columns".into()));
    }
    let names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, s)| s)
            .collect()
    });
    let values = Array2::from_shape_vec((rows, d), features)
        .map_err(|e| CnsError::InvalidData(e.to_string()))?;
    let data = DataMatrix::with_names(values, names)?;
    let labels = if label_idx.is_some() {
        Some(LabelVector::from_strings(&raw_labels)?)
    } else {
        None
    };
    Ok((data, labels))
}

/// Writes `data` as CSV with a header row. Values use the shortest decimal
/// representation that parses back to the same `f64`.
pub fn write_csv<W: Write>(data: &DataMatrix, mut out: W) -> std::io::Result<()> {
    let names: Vec<String> = match data.column_names() {
        Some(n) => n.to_vec(),
        None => (1..=data.d()).map(|i| format!("x{i}")).collect(),
    };
    writeln!(out, "{}", names.join(","))?;
    for i in 0..data.n() {
        let row: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a label file: either `index,label` pairs or a single label column,
/// with a header row.
pub fn load_label_file(path: &Path) -> Result<LabelVector> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| io_err(path, e))?;
    if text.trim().is_empty() {
        return Err(CnsError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut raw = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CnsError::Parse {
            path: path.to_path_buf(),
            row: e.position().map_or(0, |p| p.line()),
            column: 0,
            message: e.to_string(),
        })?;
        let field = match record.len() {
            1 => &record[0],
            2 => &record[1],
            n => {
                return Err(CnsError::Parse {
                    path: path.to_path_buf(),
                    row: record.position().map_or(0, |p| p.line()),
                    column: n,
                    message: "expected 1 or 2 columns".into(),
                })
            }
        };
        raw.push(field.to_string());
    }
    if raw.is_empty() {
        return Err(CnsError::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    // Integer labels keep their values so files round-trip; anything else is
    // coded by first appearance.
    match raw.iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>() {
        Ok(ints) => LabelVector::new(ints),
        Err(_) => LabelVector::from_strings(&raw),
    }
}

/// Output of [`standardize`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub data: DataMatrix,
    /// Zero-based indices (in the input) of dropped constant columns.
    pub dropped: Vec<usize>,
    pub warnings: Vec<String>,
}

fn sample_sd(col: ArrayView1<f64>) -> f64 {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Scales every column to unit sample variance (denominator `n - 1`).
///
/// Columns are not centred. Constant columns are dropped and reported.
pub fn standardize(data: &DataMatrix) -> Result<Standardized> {
    let values = data.values();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut warnings = Vec::new();
    let mut scales = Vec::new();
    for (j, col) in values.axis_iter(Axis(1)).enumerate() {
        let sd = sample_sd(col);
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sd <= 16.0 * f64::EPSILON * scale || sd == 0.0 {
            let name = data
                .column_names()
                .map_or_else(|| format!("#{}", j + 1), |n| n[j].clone());
            warnings.push(format!("dropped zero-variance column {name}"));
            dropped.push(j);
        } else {
            kept.push(j);
            scales.push(sd);
        }
    }
    if kept.is_empty() {
        return Err(CnsError::AllColumnsConstant);
    }
    let mut out = values.select(Axis(1), &kept);
    for (mut col, sd) in out.axis_iter_mut(Axis(1)).zip(&scales) {
        col.mapv_inplace(|v| v / sd);
    }
    let names = data
        .column_names()
        .map(|n| kept.iter().map(|&j| n[j].clone()).collect());
    Ok(Standardized {
        data: DataMatrix::with_names(out, names)?,
        dropped,
        warnings,
    })
}

/// Projects onto the leading `max_dim` principal components when the data
/// has more than `max_dim` columns; otherwise returns the input unchanged.
///
/// Components come from the SVD of the column-centred matrix, ordered by
/// descending singular value (stable on ties) and signed so that each
/// component's largest-magnitude coordinate is positive. At most `n - 1`
/// components are kept since the centred matrix has no higher rank.
pub fn pca_reduce(data: &DataMatrix, max_dim: usize) -> Result<DataMatrix> {
    if max_dim == 0 {
        return Err(CnsError::InvalidData("max_dim must be positive".into()));
    }
    let (n, d) = (data.n(), data.d());
    if d <= max_dim {
        return Ok(data.clone());
    }
    let means = data.values().mean_axis(Axis(0)).expect("n >= 2");
    let centred = DMatrix::from_fn(n, d, |i, j| data.values()[[i, j]] - means[j]);
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let m = max_dim.min(n - 1).min(sv.len());

    let mut components = DMatrix::<f64>::zeros(d, m);
    for (c, &r) in order.iter().take(m).enumerate() {
        let row = v_t.row(r);
        let mut pivot = 0;
        for j in 1..d {
            if row[j].abs() > row[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if row[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            components[(j, c)] = sign * row[j];
        }
    }
    let scores = centred * components;
    let values = Array2::from_shape_fn((n, m), |(i, j)| scores[(i, j)]);
    let names = (1..=m).map(|i| format!("PC{i}")).collect();
    DataMatrix::with_names(values, Some(names))
}

/// Subtracts each column's mean.
///
/// Euclidean neighbourhoods do not change, but cosine distances measure
/// angles about the origin and do.
pub fn center(data: &DataMatrix) -> Result<DataMatrix> {
    let means = data.values().mean_axis(Axis(0)).expect("n >= 2");
    let centred = data.values() - &means;
    DataMatrix::with_names(centred, data.column_names().map(<[String]>::to_vec))
}

/// Preprocessing switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessOptions {
    /// Cap on principal components; `None` disables the projection.
    pub max_pcs: Option<usize>,
    /// Centre columns after scaling.
    pub center: bool,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            max_pcs: Some(DEFAULT_MAX_PCS),
            center: true,
        }
    }
}

/// Result of the full preprocessing pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub data: DataMatrix,
    pub input_dims: usize,
    pub standardized_dims: usize,
    pub pca_applied: bool,
    pub warnings: Vec<String>,
}

/// Standardises, optionally centres, then projects onto at most
/// `max_pcs` principal components.
pub fn preprocess(data: &DataMatrix, options: PreprocessOptions) -> Result<Preprocessed> {
    let std = standardize(data)?;
    let standardized_dims = std.data.d();
    let scaled = if options.center { center(&std.data)? } else { std.data };
    let (out, pca_applied) = match options.max_pcs {
        Some(m) if standardized_dims > m => (pca_reduce(&scaled, m)?, true),
        _ => (scaled, false),
    };
    Ok(Preprocessed {
        data: out,
        input_dims: data.d(),
        standardized_dims,
        pca_applied,
        warnings: std.warnings,
    })
}
