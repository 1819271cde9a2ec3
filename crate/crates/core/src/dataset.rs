//! Tabular ingestion: CSV loading, cleaning, encoding, and the class and
//! train/test partitions consumed by the samplers.
//!
//! The flow is `load_csv` → [`preprocess`] → [`split_by_class`] /
//! [`train_test_split`]. After preprocessing, class ids are assigned by
//! descending frequency, so class `0` is always the majority class.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Tokens treated as missing when no other list is configured.
pub const DEFAULT_MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "null"];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Text(String),
    Missing,
}

impl Cell {
    fn parse(raw: &str, missing_tokens: &[String]) -> Cell {
        if missing_tokens.iter().any(|t| t == raw) {
            return Cell::Missing;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Number(v),
            // "inf" and friends cannot enter a feature matrix
            Ok(_) => Cell::Missing,
            Err(_) => Cell::Text(raw.to_string()),
        }
    }

    fn as_text(&self) -> Option<String> {
        match self {
            Cell::Number(v) => Some(v.to_string()),
            Cell::Text(s) => Some(s.clone()),
            Cell::Missing => None,
        }
    }
}

/// Column-oriented table straight out of the CSV reader.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    column_names: Vec<String>,
    columns: Vec<Vec<Cell>>,
    n_rows: usize,
    label_column: usize,
}

impl RawTable {
    pub fn new(
        column_names: Vec<String>,
        columns: Vec<Vec<Cell>>,
        label_column: &str,
    ) -> Result<Self> {
        if column_names.len() != columns.len() {
            return Err(Error::data(format!(
                "{} column names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::data(format!("duplicate column name {name:?}")));
            }
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        if let Some((i, _)) = columns.iter().enumerate().find(|(_, c)| c.len() != n_rows) {
            return Err(Error::data(format!(
                "column {:?} has {} cells, expected {n_rows}",
                column_names[i],
                columns[i].len()
            )));
        }
        let label_column = column_names
            .iter()
            .position(|c| c == label_column)
            .ok_or_else(|| Error::data(format!("label column {label_column:?} not found")))?;
        Ok(Self {
            column_names,
            columns,
            n_rows,
            label_column,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn columns(&self) -> &[Vec<Cell>] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn label_column(&self) -> &str {
        &self.column_names[self.label_column]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadOptions {
    pub missing_tokens: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            missing_tokens: DEFAULT_MISSING_TOKENS
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawTable> {
    load_csv_with(path, label_column, &LoadOptions::default())
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    label_column: &str,
    options: &LoadOptions,
) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, label_column, options)
}

/// Parses CSV text with a header row. Fields are trimmed; rows whose field
/// count differs from the header are rejected.
pub fn read_csv<R: Read>(input: R, label_column: &str, options: &LoadOptions) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut columns: Vec<Vec<Cell>> = vec![Vec::new(); headers.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::data(format!(
                "ragged row {}: {} fields under {} headers",
                row_idx + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            col.push(Cell::parse(field, &options.missing_tokens));
        }
    }
    RawTable::new(headers, columns, label_column)
}

/// Numeric features with integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<usize>,
    class_counts: BTreeMap<usize, usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    /// Class names default to the decimal class ids.
    pub fn new(features: Matrix, labels: Vec<usize>, feature_names: Vec<String>) -> Result<Self> {
        let n_classes = labels.iter().max().map_or(0, |m| m + 1);
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        Self::with_class_names(features, labels, feature_names, class_names)
    }

    pub fn with_class_names(
        features: Matrix,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.rows(),
                actual: labels.len(),
            });
        }
        if features.cols() != feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        if features.cols() == 0 {
            return Err(Error::data("dataset has no feature columns"));
        }
        if !features.all_finite() {
            return Err(Error::data("features contain non-finite values"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::data(format!("label {bad} has no class name")));
        }
        let mut class_counts = BTreeMap::new();
        for &l in &labels {
            *class_counts.entry(l).or_insert(0) += 1;
        }
        Ok(Self {
            features,
            labels,
            class_counts,
            feature_names,
            class_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &BTreeMap<usize, usize> {
        &self.class_counts
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of distinct labels present.
    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let features = self.features.select_rows(indices);
        let labels: Vec<usize> = indices.iter().map(|&i| self.labels[i]).collect();
        let mut class_counts = BTreeMap::new();
        for &l in &labels {
            *class_counts.entry(l).or_insert(0) += 1;
        }
        LabeledDataset {
            features,
            labels,
            class_counts,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::data(
                "cannot concatenate datasets with different schemas",
            ));
        }
        let features = self.features.vstack(&other.features)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let class_names = if self.class_names.len() >= other.class_names.len() {
            self.class_names.clone()
        } else {
            other.class_names.clone()
        };
        LabeledDataset::with_class_names(features, labels, self.feature_names.clone(), class_names)
    }

    /// Seeded permutation of the rows.
    pub fn shuffled(&self, seed: u64) -> LabeledDataset {
        let mut order: Vec<usize> = (0..self.n_rows()).collect();
        order.shuffle(&mut rng::seeded(seed));
        self.select(&order)
    }

    /// Indices of rows carrying `class`, in row order.
    pub fn rows_of_class(&self, class: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect()
    }

    /// Most frequent class; ties go to the lower class id.
    pub fn majority_class(&self) -> Option<usize> {
        self.class_counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&c, _)| c)
    }

    /// Round-trips the dataset into a raw table with class names as labels.
    pub fn to_raw_table(&self, label_column: &str) -> Result<RawTable> {
        let mut names = self.feature_names.clone();
        names.push(label_column.to_string());
        let mut columns: Vec<Vec<Cell>> = (0..self.n_features())
            .map(|j| {
                self.features
                    .column(j)
                    .into_iter()
                    .map(Cell::Number)
                    .collect()
            })
            .collect();
        columns.push(
            self.labels
                .iter()
                .map(|&l| Cell::parse(&self.class_names[l], &[]))
                .collect(),
        );
        RawTable::new(names, columns, label_column)
    }

    /// Writes features plus a trailing label column holding class names.
    pub fn write_csv<W: Write>(&self, out: W, label_column: &str) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(label_column);
        writer.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for (i, row) in self.features.iter_rows().enumerate() {
            record.clear();
            record.extend(row.iter().map(|v| v.to_string()));
            record.push(self.class_names[self.labels[i]].clone());
            writer.write_record(&record)?;
        }
        writer.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    pub drop_duplicates: bool,
    /// Impute missing feature cells; when false, rows with any missing
    /// feature are dropped instead.
    pub impute: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        Self {
            drop_duplicates: true,
            impute: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Mean,
    Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FillValue {
    Number(f64),
    Category(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub strategy: ImputeStrategy,
    pub fill_value: FillValue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_dropped_null: usize,
    pub rows_dropped_duplicate: usize,
    pub imputations: BTreeMap<String, Imputation>,
    /// Category text → integer code, per categorical feature.
    pub encodings: BTreeMap<String, BTreeMap<String, usize>>,
    /// Original label text → class id.
    pub label_encoding: BTreeMap<String, usize>,
}

enum ColumnKind {
    Numeric,
    Categorical,
}

/// Cleans a raw table into a [`LabeledDataset`].
///
/// Rows with a missing label are always dropped. Numeric gaps are filled
/// with the column mean and categorical gaps with the column mode (ties to
/// the lexicographically smallest category). Categorical columns get codes
/// in lexicographic order. Labels become class ids by descending frequency.
pub fn preprocess(
    table: &RawTable,
    policy: PreprocessPolicy,
) -> Result<(LabeledDataset, PreprocessReport)> {
    let mut report = PreprocessReport::default();
    if table.n_rows == 0 {
        return Err(Error::data("table has zero rows"));
    }
    let feature_cols: Vec<usize> = (0..table.columns.len())
        .filter(|&c| c != table.label_column)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::data("table has no feature columns"));
    }

    let mut kinds = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let col = &table.columns[c];
        if col.iter().all(|cell| matches!(cell, Cell::Missing)) {
            return Err(Error::data(format!(
                "column {:?} is entirely missing",
                table.column_names[c]
            )));
        }
        let numeric = col.iter().all(|cell| !matches!(cell, Cell::Text(_)));
        kinds.push(if numeric {
            ColumnKind::Numeric
        } else {
            ColumnKind::Categorical
        });
    }

    // Row filtering: null labels always, null features unless imputing.
    let label_col = &table.columns[table.label_column];
    let mut keep: Vec<usize> = Vec::with_capacity(table.n_rows);
    for (r, label) in label_col.iter().enumerate() {
        let label_missing = matches!(label, Cell::Missing);
        let feature_missing = feature_cols
            .iter()
            .any(|&c| matches!(table.columns[c][r], Cell::Missing));
        if label_missing || (!policy.impute && feature_missing) {
            report.rows_dropped_null += 1;
        } else {
            keep.push(r);
        }
    }

    if policy.drop_duplicates {
        let mut seen: HashSet<Vec<RowKey>> = HashSet::with_capacity(keep.len());
        let before = keep.len();
        keep.retain(|&r| {
            let key: Vec<RowKey> = table
                .columns
                .iter()
                .map(|col| RowKey::of(&col[r]))
                .collect();
            seen.insert(key)
        });
        report.rows_dropped_duplicate = before - keep.len();
    }

    if keep.is_empty() {
        return Err(Error::data("zero rows left after cleaning"));
    }
    if keep.len() < 2 {
        return Err(Error::data("fewer than 2 rows left after cleaning"));
    }

    let n = keep.len();
    let d = feature_cols.len();
    let mut features = Matrix::zeros(n, d);
    let mut feature_names = Vec::with_capacity(d);
    for (j, (&c, kind)) in feature_cols.iter().zip(&kinds).enumerate() {
        let name = table.column_names[c].clone();
        let cells: Vec<&Cell> = keep.iter().map(|&r| &table.columns[c][r]).collect();
        let has_missing = cells.iter().any(|cell| matches!(cell, Cell::Missing));
        match kind {
            ColumnKind::Numeric => {
                let present: Vec<f64> = cells
                    .iter()
                    .filter_map(|cell| match cell {
                        Cell::Number(v) => Some(*v),
                        _ => None,
                    })
                    .collect();
                if present.is_empty() {
                    return Err(Error::data(format!("column {name:?} is entirely missing")));
                }
                let mean = present.iter().sum::<f64>() / present.len() as f64;
                if has_missing {
                    report.imputations.insert(
                        name.clone(),
                        Imputation {
                            strategy: ImputeStrategy::Mean,
                            fill_value: FillValue::Number(mean),
                        },
                    );
                }
                for (i, cell) in cells.iter().enumerate() {
                    let v = match cell {
                        Cell::Number(v) => *v,
                        _ => mean,
                    };
                    features.set(i, j, v);
                }
            }
            ColumnKind::Categorical => {
                let mut counts: BTreeMap<String, usize> = BTreeMap::new();
                for cell in &cells {
                    if let Some(t) = cell.as_text() {
                        *counts.entry(t).or_insert(0) += 1;
                    }
                }
                if counts.is_empty() {
                    return Err(Error::data(format!("column {name:?} is entirely missing")));
                }
                // BTreeMap iterates lexicographically, so the first maximum wins ties.
                let mode = counts
                    .iter()
                    .fold(None::<(&String, usize)>, |best, (k, &v)| match best {
                        Some((_, bv)) if bv >= v => best,
                        _ => Some((k, v)),
                    })
                    .map(|(k, _)| k.clone())
                    .expect("nonempty counts");
                if has_missing {
                    report.imputations.insert(
                        name.clone(),
                        Imputation {
                            strategy: ImputeStrategy::Mode,
                            fill_value: FillValue::Category(mode.clone()),
                        },
                    );
                }
                let codes: BTreeMap<String, usize> = counts
                    .keys()
                    .enumerate()
                    .map(|(code, k)| (k.clone(), code))
                    .collect();
                for (i, cell) in cells.iter().enumerate() {
                    let text = cell.as_text().unwrap_or_else(|| mode.clone());
                    features.set(i, j, codes[&text] as f64);
                }
                report.encodings.insert(name.clone(), codes);
            }
        }
        feature_names.push(name);
    }

    // Labels: descending frequency, ties by natural label order.
    let label_texts: Vec<String> = keep
        .iter()
        .map(|&r| label_col[r].as_text().expect("missing labels were dropped"))
        .collect();
    let mut label_counts: HashMap<&str, usize> = HashMap::new();
    for t in &label_texts {
        *label_counts.entry(t.as_str()).or_insert(0) += 1;
    }
    if label_counts.len() < 2 {
        return Err(Error::data(
            "label column has fewer than 2 distinct classes",
        ));
    }
    let all_numeric = label_counts.keys().all(|k| k.parse::<f64>().is_ok());
    let mut order: Vec<(&str, usize)> = label_counts.into_iter().collect();
    order.sort_by(|a, b| {
        b.1.cmp(&a.1).then_with(|| {
            if all_numeric {
                let x: f64 = a.0.parse().unwrap();
                let y: f64 = b.0.parse().unwrap();
                x.total_cmp(&y)
            } else {
                a.0.cmp(b.0)
            }
        })
    });
    let class_of: HashMap<&str, usize> = order
        .iter()
        .enumerate()
        .map(|(id, (t, _))| (*t, id))
        .collect();
    let labels: Vec<usize> = label_texts.iter().map(|t| class_of[t.as_str()]).collect();
    let class_names: Vec<String> = order.iter().map(|(t, _)| t.to_string()).collect();
    report.label_encoding = class_names
        .iter()
        .enumerate()
        .map(|(id, t)| (t.clone(), id))
        .collect();

    let data = LabeledDataset::with_class_names(features, labels, feature_names, class_names)?;
    Ok((data, report))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum RowKey {
    Number(u64),
    Text(String),
    Missing,
}

impl RowKey {
    fn of(cell: &Cell) -> RowKey {
        match cell {
            // normalize -0.0 so it matches 0.0
            Cell::Number(v) => RowKey::Number((v + 0.0).to_bits()),
            Cell::Text(s) => RowKey::Text(s.clone()),
            Cell::Missing => RowKey::Missing,
        }
    }
}

/// Splits a binary dataset into its majority and minority parts, preserving
/// row order within each. The majority is the most frequent class, with ties
/// going to the lower class id.
pub fn split_by_class(data: &LabeledDataset) -> Result<(LabeledDataset, LabeledDataset)> {
    match data.n_classes() {
        2 => {}
        k if k < 2 => return Err(Error::data("split_by_class needs two classes, found one")),
        k => {
            return Err(Error::data(format!(
                "split_by_class supports binary data only, found {k} classes"
            )))
        }
    }
    let majority = data.majority_class().expect("two classes present");
    let minority = *data
        .class_counts()
        .keys()
        .find(|&&c| c != majority)
        .expect("two classes present");
    Ok((
        data.select(&data.rows_of_class(majority)),
        data.select(&data.rows_of_class(minority)),
    ))
}

/// Number of rows of a class of size `count` that go to the test part:
/// `round(fraction * count)`, raised to at least one.
pub fn test_quota(count: usize, test_fraction: f64) -> usize {
    ((test_fraction * count as f64).round() as usize).max(1)
}

/// Stratified seeded split. Each class contributes [`test_quota`] rows to
/// the test part; both parts keep the original row order.
pub fn train_test_split(
    data: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut in_test = vec![false; data.n_rows()];
    for (&class, &count) in data.class_counts() {
        let quota = test_quota(count, test_fraction);
        if count < 2 || quota >= count {
            return Err(Error::data(format!(
                "class {class} has {count} rows, too few for both train and test parts"
            )));
        }
        let rows = data.rows_of_class(class);
        for pos in index::sample(&mut rng, count, quota) {
            in_test[rows[pos]] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..data.n_rows()).partition(|&i| in_test[i]);
    Ok((data.select(&train), data.select(&test)))
}
