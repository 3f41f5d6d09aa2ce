//! Builds a QKDS1 container from a directory of per-sample flat dumps.
//!
//! The directory holds `labels.csv` with `file,label` rows (header optional)
//! and one file per row with `c*h*w` values, either bytes (scaled by 1/255)
//! or little-endian f32.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, IoContext, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DumpType {
    U8,
    F32,
}

impl std::str::FromStr for DumpType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(DumpType::U8),
            "f32" => Ok(DumpType::F32),
            other => Err(Error::config(format!("unknown dump type {other:?}; use u8 or f32"))),
        }
    }
}

pub fn convert_dumps(dir: &Path, sample_shape: [usize; 3], dtype: DumpType) -> Result<Dataset> {
    let index = dir.join("labels.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(&index)?;
    let len: usize = sample_shape.iter().product();
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte());
        if record.len() != 2 {
            return Err(Error::format(&index, offset, "expected `file,label`"));
        }
        let label: i32 = match record[1].parse() {
            Ok(l) => l,
            Err(_) if row == 0 => continue,
            Err(_) => return Err(Error::format(&index, offset, format!("bad label {:?}", &record[1]))),
        };
        let file = dir.join(&record[0]);
        let bytes = fs::read(&file).at(&file)?;
        let expected = len * if dtype == DumpType::U8 { 1 } else { 4 };
        if bytes.len() != expected {
            return Err(Error::format(
                &file,
                bytes.len().min(expected) as u64,
                format!(
                    "expected {expected} bytes for shape {sample_shape:?}, found {}",
                    bytes.len()
                ),
            ));
        }
        match dtype {
            DumpType::U8 => data.extend(bytes.iter().map(|&b| f64::from(b) / 255.0)),
            DumpType::F32 => data.extend(
                bytes
                    .chunks_exact(4)
                    .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))),
            ),
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::data(format!("{} lists no samples", index.display())));
    }
    let [c, h, w] = sample_shape;
    Dataset::new(
        Tensor::from_vec([labels.len(), c, h, w], data)?,
        labels,
        Provenance::Raw,
    )
}
