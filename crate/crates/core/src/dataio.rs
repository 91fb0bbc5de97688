//! Tabular CSV ingestion, deterministic splitting and feature scaling.
//!
//! CSV files are comma separated UTF-8 with a header row and `.` as decimal
//! separator. Categorical columns are one-hot encoded with levels in
//! lexicographic order; their indicator blocks are appended after all
//! continuous and boolean features.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{Dataset, Sample};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Boolean,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TabularSchema {
    pub features: Vec<FeatureColumn>,
    pub label: String,
}

impl TabularSchema {
    pub fn new(features: Vec<FeatureColumn>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if features.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        if features.iter().any(|f| f.name == label) {
            return Err(Error::Schema(format!("label column {label:?} is also listed as a feature")));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = features.iter().find(|f| !seen.insert(f.name.as_str())) {
            return Err(Error::Schema(format!("duplicate feature column {:?}", dup.name)));
        }
        Ok(Self { features, label })
    }

    /// All named columns continuous.
    pub fn continuous<S: AsRef<str>>(features: &[S], label: &str) -> Result<Self> {
        let cols = features
            .iter()
            .map(|n| FeatureColumn { name: n.as_ref().to_string(), kind: ColumnKind::Continuous })
            .collect();
        Self::new(cols, label)
    }

    /// Every header column except `label` as a continuous feature.
    pub fn from_header(path: impl AsRef<Path>, label: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_path(path)?;
        let headers = reader.headers()?.clone();
        if !headers.iter().any(|h| h.trim() == label) {
            return Err(Error::Schema(format!("missing label column {label:?}")));
        }
        let features: Vec<&str> = headers.iter().map(str::trim).filter(|h| *h != label).collect();
        Self::continuous(&features, label)
    }
}

fn parse_number(raw: &str, column: &str, line: u64) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::Row { line, message: format!("column {column:?}: cannot parse {raw:?} as a number") })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Row { line, message: format!("column {column:?}: non-finite value {raw:?}") })
    }
}

fn parse_bool(raw: &str, column: &str, line: u64) -> Result<f64> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "t" | "y" => Ok(1.0),
        "0" | "false" | "no" | "f" | "n" => Ok(0.0),
        _ => Err(Error::Row { line, message: format!("column {column:?}: {raw:?} is not a boolean") }),
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &TabularSchema) -> Result<Dataset> {
    load_csv_from_reader(File::open(path)?, schema)
}

pub fn load_csv_from_reader<R: Read>(input: R, schema: &TabularSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.trim().is_empty()) {
        return Err(invalid("CSV input is empty"));
    }
    let position = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let label_idx = position(&schema.label)?;
    let feature_idx = schema.features.iter().map(|f| position(&f.name)).collect::<Result<Vec<_>>>()?;

    struct Row {
        dense: Vec<f64>,
        cats: Vec<String>,
        y: f64,
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field =
            |i: usize| record.get(i).ok_or_else(|| Error::Row { line, message: format!("missing field {}", i + 1) });
        let mut dense = Vec::new();
        let mut cats = Vec::new();
        for (col, &i) in schema.features.iter().zip(&feature_idx) {
            let raw = field(i)?;
            match col.kind {
                ColumnKind::Continuous => dense.push(parse_number(raw, &col.name, line)?),
                ColumnKind::Boolean => dense.push(parse_bool(raw, &col.name, line)?),
                ColumnKind::Categorical => cats.push(raw.trim().to_string()),
            }
        }
        let y = parse_number(field(label_idx)?, &schema.label, line)?;
        rows.push(Row { dense, cats, y });
    }
    if rows.is_empty() {
        return Err(invalid("CSV input has no data rows"));
    }

    let cat_count = schema.features.iter().filter(|f| f.kind == ColumnKind::Categorical).count();
    let levels: Vec<Vec<String>> = (0..cat_count)
        .map(|c| {
            let set: BTreeSet<&str> = rows.iter().map(|r| r.cats[c].as_str()).collect();
            set.into_iter().map(String::from).collect()
        })
        .collect();

    let samples = rows
        .into_iter()
        .map(|row| {
            let mut x = row.dense;
            for (value, lv) in row.cats.iter().zip(&levels) {
                x.extend(lv.iter().map(|l| if l == value { 1.0 } else { 0.0 }));
            }
            Sample { x, y: row.y }
        })
        .collect();
    Dataset::new(samples)
}

/// Writes `x0, …, x{d-1}, y` with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut file = File::create(path)?;
    write_csv_to(&mut file, data)?;
    file.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for s in data {
        let mut rec: Vec<String> = s.x.iter().map(f64::to_string).collect();
        rec.push(s.y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Split sizes `(train, cal, test)` for `total` rows.
///
/// Test and calibration get `⌊f·N⌋`; the unused tail gets
/// `⌊(1 − f_test − f_train − f_cal)·N⌋` and whatever is left goes to train.
pub fn split_sizes(total: usize, fractions: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (f_test, f_train, f_cal) = fractions;
    if [f_test, f_train, f_cal].iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(invalid("split fractions must be positive"));
    }
    let sum = f_test + f_train + f_cal;
    if sum > 1.0 + 1e-12 {
        return Err(invalid(format!("split fractions sum to {sum} > 1")));
    }
    let n = total as f64;
    let test = (f_test * n).floor() as usize;
    let cal = (f_cal * n).floor() as usize;
    let unused = ((1.0 - sum).max(0.0) * n).floor() as usize;
    let train = total.saturating_sub(test + cal + unused);
    Ok((train, cal, test))
}

/// Seeded shuffle followed by contiguous slicing into `(train, cal, test)`.
pub fn split(data: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (train, cal, test) = split_sizes(data.len(), fractions)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let (test_idx, rest) = order.split_at(test);
    let (train_idx, rest) = rest.split_at(train);
    let cal_idx = &rest[..cal];
    Ok((data.select(train_idx), data.select(cal_idx), data.select(test_idx)))
}

/// Per-feature affine map `x ↦ (x − mean)·scale` fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    /// `1/σ`, or 0 for constant features.
    pub scale: Vec<f64>,
}

impl Scaler {
    pub fn fit(train: &Dataset) -> Result<Self> {
        train.require_nonempty("training")?;
        let n = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for s in train {
            mean.iter_mut().zip(&s.x).for_each(|(m, v)| *m += v / n);
        }
        let mut var = vec![0.0; d];
        for s in train {
            var.iter_mut().zip(s.x.iter().zip(&mean)).for_each(|(acc, (v, m))| *acc += (v - m).powi(2) / n);
        }
        let scale = var
            .iter()
            .zip(&mean)
            .map(|(&v, m)| if v > 1e-24 * m.abs().max(1.0).powi(2) { 1.0 / v.sqrt() } else { 0.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        crate::model::check_dims(self.mean.len(), data.dim())?;
        let samples = data
            .iter()
            .map(|s| Sample {
                x: s.x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, k))| (v - m) * k).collect(),
                y: s.y,
            })
            .collect();
        Dataset::with_dim(data.dim(), samples)
    }

    /// Maps scaled data back; constant features return their training mean.
    pub fn inverse(&self, data: &Dataset) -> Result<Dataset> {
        crate::model::check_dims(self.mean.len(), data.dim())?;
        let samples = data
            .iter()
            .map(|s| Sample {
                x: s.x
                    .iter()
                    .zip(self.mean.iter().zip(&self.scale))
                    .map(|(v, (m, k))| if *k == 0.0 { *m } else { v / k + m })
                    .collect(),
                y: s.y,
            })
            .collect();
        Dataset::with_dim(data.dim(), samples)
    }
}

/// Fits a [`Scaler`] on `train` and applies it to `train` and every `other`.
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>, Scaler)> {
    let scaler = Scaler::fit(train)?;
    let scaled_train = scaler.transform(train)?;
    let scaled = others.iter().map(|d| scaler.transform(d)).collect::<Result<Vec<_>>>()?;
    Ok((scaled_train, scaled, scaler))
}
