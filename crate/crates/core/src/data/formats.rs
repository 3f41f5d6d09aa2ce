//! Readers for IDX, CIFAR-10 binary batches, numeric CSV and the QKDS1
//! container, plus the QKDS1 writer.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, IoContext, Result};
use crate::nn::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 1 + 3 * 32 * 32;
pub const QKDS_MAGIC: &[u8; 5] = b"QKDS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataFormat {
    Idx,
    CifarBinary,
    Csv,
    RawContainer,
}

impl std::str::FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idx" => Ok(DataFormat::Idx),
            "cifar-binary" | "cifar" => Ok(DataFormat::CifarBinary),
            "csv" => Ok(DataFormat::Csv),
            "raw-container" | "raw" | "qkds" => Ok(DataFormat::RawContainer),
            other => Err(Error::config(format!("unknown data format {other:?}"))),
        }
    }
}

fn read_u32_be(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(path, at as u64, "truncated header"))
}

/// Image tensor and raw labels from an IDX pair; pixels scaled by 1/255.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = fs::read(images).at(images)?;
    let magic = read_u32_be(&img, 0, images)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(images, 0, format!("bad IDX image magic {magic:#010x}")));
    }
    let n = read_u32_be(&img, 4, images)? as usize;
    let h = read_u32_be(&img, 8, images)? as usize;
    let w = read_u32_be(&img, 12, images)? as usize;
    let need = 16 + n * h * w;
    if img.len() != need {
        return Err(Error::format(
            images,
            img.len().min(need) as u64,
            format!("expected {need} bytes for {n} images of {h}x{w}, found {}", img.len()),
        ));
    }
    let lab = fs::read(labels).at(labels)?;
    let magic = read_u32_be(&lab, 0, labels)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(labels, 0, format!("bad IDX label magic {magic:#010x}")));
    }
    let nl = read_u32_be(&lab, 4, labels)? as usize;
    if nl != n {
        return Err(Error::format(labels, 4, format!("{nl} labels for {n} images")));
    }
    if lab.len() != 8 + n {
        return Err(Error::format(
            labels,
            lab.len().min(8 + n) as u64,
            format!("expected {} bytes, found {}", 8 + n, lab.len()),
        ));
    }
    let data = img[16..].iter().map(|&b| f64::from(b) / 255.0).collect();
    Dataset::new(
        Tensor::from_vec([n, 1, h, w], data)?,
        lab[8..].iter().map(|&b| i32::from(b)).collect(),
        Provenance::Mnist,
    )
}

/// Finds the image and label files of an IDX directory, preferring the
/// training partition (`train-*`), then un-prefixed names.
pub fn idx_pair_in(dir: &Path, prefix: &str) -> Result<(PathBuf, PathBuf)> {
    for (img, lab) in [
        (
            format!("{prefix}images-idx3-ubyte"),
            format!("{prefix}labels-idx1-ubyte"),
        ),
        (
            format!("{prefix}images.idx3-ubyte"),
            format!("{prefix}labels.idx1-ubyte"),
        ),
    ] {
        let (i, l) = (dir.join(&img), dir.join(&lab));
        if i.is_file() && l.is_file() {
            return Ok((i, l));
        }
    }
    Err(Error::data(format!(
        "no {prefix}images-idx3-ubyte / {prefix}labels-idx1-ubyte pair in {}",
        dir.display()
    )))
}

/// One or more CIFAR-10 binary batches: records of 1 label byte and 3072
/// pixel bytes (R, G, B planes of 32x32).
pub fn load_cifar(files: &[PathBuf]) -> Result<Dataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for path in files {
        let bytes = fs::read(path).at(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            let whole = bytes.len() / CIFAR_RECORD * CIFAR_RECORD;
            return Err(Error::format(
                path,
                whole as u64,
                format!(
                    "{} bytes is not a whole number of {CIFAR_RECORD}-byte records",
                    bytes.len()
                ),
            ));
        }
        for rec in bytes.chunks(CIFAR_RECORD) {
            labels.push(i32::from(rec[0]));
            data.extend(rec[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let n = labels.len();
    Dataset::new(Tensor::from_vec([n, 3, 32, 32], data)?, labels, Provenance::Cifar10)
}

/// `data_batch_*.bin` in a directory, sorted by name.
pub fn cifar_batches_in(dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .at(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(stem) && n.ends_with(".bin"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::data(format!("no {stem}*.bin files in {}", dir.display())));
    }
    Ok(files)
}

/// Numeric CSV with the class in the last column. A first row that does not
/// parse as numbers is taken as a header. Rows become `(N, 1, 1, d)`.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let offset = record.position().map_or(0, |p| p.byte());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if row == 0 => continue,
            Err(_) => {
                return Err(Error::format(
                    path,
                    offset,
                    format!("row {row} has a non-numeric field"),
                ))
            }
        };
        if values.len() < 2 {
            return Err(Error::format(
                path,
                offset,
                "need at least one feature and a class column",
            ));
        }
        let d = values.len() - 1;
        if *width.get_or_insert(d) != d {
            return Err(Error::format(
                path,
                offset,
                format!("row {row} has {d} features, expected {}", width.unwrap_or(d)),
            ));
        }
        let class = values[d];
        if class.fract() != 0.0 {
            return Err(Error::format(path, offset, format!("class {class} is not an integer")));
        }
        labels.push(class as i32);
        data.extend_from_slice(&values[..d]);
    }
    let d = width.ok_or_else(|| Error::format(path, 0, "no data rows"))?;
    let n = labels.len();
    Dataset::new(Tensor::from_vec([n, 1, 1, d], data)?, labels, Provenance::Htru2)
}

/// QKDS1: magic, little-endian u32 `n, c, h, w`, `n*c*h*w` f32 values, `n`
/// i8 labels.
pub fn encode_qkds(dataset: &Dataset) -> Result<Vec<u8>> {
    let [n, c, h, w] = dataset.samples.shape();
    let mut out = Vec::with_capacity(21 + dataset.samples.len() * 4 + n);
    out.extend_from_slice(QKDS_MAGIC);
    for v in [n, c, h, w] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &v in dataset.samples.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &l in &dataset.labels {
        let b = i8::try_from(l).map_err(|_| Error::data(format!("label {l} does not fit in i8")))?;
        out.push(b as u8);
    }
    Ok(out)
}

pub fn decode_qkds(bytes: &[u8], path: &Path) -> Result<Dataset> {
    if bytes.len() < 21 || &bytes[..5] != QKDS_MAGIC {
        return Err(Error::format(path, 0, "not a QKDS1 container"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (n, c, h, w) = (dim(0), dim(1), dim(2), dim(3));
    let payload = n * c * h * w;
    let need = 21 + payload * 4 + n;
    if bytes.len() != need {
        return Err(Error::format(
            path,
            bytes.len().min(need) as u64,
            format!("header ({n}, {c}, {h}, {w}) needs {need} bytes, found {}", bytes.len()),
        ));
    }
    let data = bytes[21..21 + payload * 4]
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    let labels = bytes[21 + payload * 4..].iter().map(|&b| i32::from(b as i8)).collect();
    Dataset::new(Tensor::from_vec([n, c, h, w], data)?, labels, Provenance::Raw)
}

pub fn write_qkds(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_qkds(dataset)?).at(path)
}

pub fn read_qkds(path: &Path) -> Result<Dataset> {
    decode_qkds(&fs::read(path).at(path)?, path)
}

/// Loads one partition. `path` is an IDX directory (training pair) or image
/// file, a CIFAR directory (`data_batch_*`) or `.bin` file, a CSV file, or a
/// QKDS1 file.
pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Idx => {
            let (images, labels) = if path.is_dir() {
                idx_pair_in(path, "train-").or_else(|_| idx_pair_in(path, ""))?
            } else {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                let label_name = name.replace("images", "labels").replace("idx3", "idx1");
                (path.to_path_buf(), path.with_file_name(label_name))
            };
            load_idx(&images, &labels)
        }
        DataFormat::CifarBinary => {
            let files = if path.is_dir() {
                cifar_batches_in(path, "data_batch")?
            } else {
                vec![path.to_path_buf()]
            };
            load_cifar(&files)
        }
        DataFormat::Csv => load_csv(path),
        DataFormat::RawContainer => read_qkds(path),
    }
}
