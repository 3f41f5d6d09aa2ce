//! Plot-ready CSV tables for features and scores.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub sample_ids: Vec<usize>,
    pub labels: Vec<i8>,
    pub features: Matrix,
}

/// `sample_index,label,f0,...,f{d-1}`.
pub fn write_features_csv(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["sample_index".to_string(), "label".to_string()];
    header.extend((0..table.features.cols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (i, row) in table.features.iter_rows().enumerate() {
        let mut rec = vec![table.sample_ids[i].to_string(), table.labels[i].to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr>(field: &str, path: &Path, row: usize, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(path, 0, format!("row {row}: bad {what} {field:?}")))
}

fn label(field: &str, path: &Path, row: usize) -> Result<i8> {
    match parse::<i8>(field, path, row, "label")? {
        l @ (1 | -1) => Ok(l),
        l => Err(Error::format(path, 0, format!("row {row}: label {l} is not ±1"))),
    }
}

pub fn read_features_csv(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::format(
                path,
                0,
                format!("row {i}: need an id, a label and features"),
            ));
        }
        ids.push(parse(&rec[0], path, i, "sample index")?);
        labels.push(label(&rec[1], path, i)?);
        let row = rec
            .iter()
            .skip(2)
            .map(|f| parse(f, path, i, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::data(format!("{} has no rows", path.display())));
    }
    Ok(FeatureTable {
        sample_ids: ids,
        labels,
        features: Matrix::from_rows(&rows)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub sample_ids: Vec<usize>,
    pub scores: Vec<f64>,
    pub true_labels: Vec<i8>,
    pub predicted: Vec<i8>,
}

/// `sample_index,score,true_label,predicted_label`.
pub fn write_scores_csv(path: &Path, table: &ScoreTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sample_index", "score", "true_label", "predicted_label"])?;
    for i in 0..table.scores.len() {
        w.write_record([
            table.sample_ids[i].to_string(),
            table.scores[i].to_string(),
            table.true_labels[i].to_string(),
            table.predicted[i].to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<ScoreTable> {
    let mut r = csv::Reader::from_path(path)?;
    let mut t = ScoreTable {
        sample_ids: Vec::new(),
        scores: Vec::new(),
        true_labels: Vec::new(),
        predicted: Vec::new(),
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::format(
                path,
                0,
                format!("row {i}: expected 4 columns, found {}", rec.len()),
            ));
        }
        t.sample_ids.push(parse(&rec[0], path, i, "sample index")?);
        t.scores.push(parse(&rec[1], path, i, "score")?);
        t.true_labels.push(label(&rec[2], path, i)?);
        t.predicted.push(label(&rec[3], path, i)?);
    }
    Ok(t)
}
