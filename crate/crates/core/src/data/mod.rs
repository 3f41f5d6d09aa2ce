//! Dataset loading, binary relabeling, min-max scaling and subsampling.
//!
//! Label convention after relabeling: +1 normal (first selected class or
//! majority), -1 anomaly (second selected class or minority).

mod convert;
mod formats;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Tensor;

pub use convert::{convert_dumps, DumpType};
pub use formats::{
    cifar_batches_in, decode_qkds, encode_qkds, idx_pair_in, load_cifar, load_csv, load_dataset, load_idx, read_qkds,
    write_qkds, DataFormat, CIFAR_RECORD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC, QKDS_MAGIC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Htru1,
    Htru2,
    Mnist,
    Cifar10,
    Raw,
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "htru1" => Ok(Provenance::Htru1),
            "htru2" => Ok(Provenance::Htru2),
            "mnist" => Ok(Provenance::Mnist),
            "cifar10" => Ok(Provenance::Cifar10),
            "raw" => Ok(Provenance::Raw),
            other => Err(Error::config(format!("unknown dataset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Images `(N, C, H, W)`, or feature rows stored as `(N, 1, 1, d)`.
    pub samples: Tensor,
    pub labels: Vec<i32>,
    /// Row of each sample in the originally loaded file.
    pub source_indices: Vec<usize>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(samples: Tensor, labels: Vec<i32>, provenance: Provenance) -> Result<Self> {
        if samples.batch() != labels.len() {
            return Err(Error::shape(format!(
                "{} samples but {} labels",
                samples.batch(),
                labels.len()
            )));
        }
        Ok(Self {
            source_indices: (0..labels.len()).collect(),
            samples,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_tabular(&self) -> bool {
        let [_, c, h, _] = self.samples.shape();
        c == 1 && h == 1
    }

    /// Subset by position, keeping provenance and source indices.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select(positions),
            labels: positions.iter().map(|&i| self.labels[i]).collect(),
            source_indices: positions.iter().map(|&i| self.source_indices[i]).collect(),
            provenance: self.provenance,
        }
    }

    /// Sample counts per label.
    pub fn class_counts(&self) -> BTreeMap<i32, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Fraction of anomalies (-1).
    pub fn anomaly_ratio(&self) -> f64 {
        self.labels.iter().filter(|&&l| l == -1).count() as f64 / self.len().max(1) as f64
    }

    /// Labels as `i8`, failing unless every one is +1 or -1.
    pub fn binary_labels(&self) -> Result<Vec<i8>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, &l)| match l {
                1 => Ok(1),
                -1 => Ok(-1),
                other => Err(Error::data(format!(
                    "label {other} at row {i} is not +1/-1; relabel first"
                ))),
            })
            .collect()
    }

    /// Feature rows `N x (C*H*W)`.
    pub fn features(&self) -> Matrix {
        self.samples.flatten()
    }
}

/// Keeps only `classes.0` and `classes.1`, relabeled +1 and -1.
pub fn select_binary(dataset: &Dataset, classes: (i32, i32)) -> Result<Dataset> {
    let counts = dataset.class_counts();
    for c in [classes.0, classes.1] {
        if !counts.contains_key(&c) {
            return Err(Error::data(format!(
                "class {c} is absent; available classes {:?}",
                counts.keys().collect::<Vec<_>>()
            )));
        }
    }
    let keep: Vec<usize> = (0..dataset.len())
        .filter(|&i| dataset.labels[i] == classes.0 || dataset.labels[i] == classes.1)
        .collect();
    let mut out = dataset.select(&keep);
    for l in &mut out.labels {
        *l = if *l == classes.0 { 1 } else { -1 };
    }
    Ok(out)
}

/// Per-feature min-max statistics. Feature rows are scaled per column;
/// images are scaled per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub per_channel: bool,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    fn group_of(per_channel: bool, shape: [usize; 4]) -> impl Fn(usize) -> usize {
        let plane = shape[2] * shape[3];
        move |offset_in_sample| {
            if per_channel {
                offset_in_sample / plane
            } else {
                offset_in_sample
            }
        }
    }

    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::data("cannot fit min-max statistics on an empty dataset"));
        }
        let per_channel = !dataset.is_tabular();
        let shape = dataset.samples.shape();
        let groups = if per_channel {
            shape[1]
        } else {
            dataset.samples.sample_len()
        };
        let group = Self::group_of(per_channel, shape);
        let mut min = vec![f64::INFINITY; groups];
        let mut max = vec![f64::NEG_INFINITY; groups];
        for s in 0..dataset.len() {
            for (k, &v) in dataset.samples.sample(s).iter().enumerate() {
                let g = group(k);
                min[g] = min[g].min(v);
                max[g] = max[g].max(v);
            }
        }
        Ok(Self { per_channel, min, max })
    }

    /// Maps `[min, max]` to `[0, 1]`; constant features become 0. Values
    /// outside the fitted range are not clipped.
    pub fn transform(&self, dataset: &Dataset) -> Result<Dataset> {
        let shape = dataset.samples.shape();
        let groups = if self.per_channel {
            shape[1]
        } else {
            dataset.samples.sample_len()
        };
        if groups != self.min.len() {
            return Err(Error::shape(format!(
                "scaler fitted on {} features, dataset has {groups}",
                self.min.len()
            )));
        }
        let group = Self::group_of(self.per_channel, shape);
        let mut out = dataset.clone();
        let len = out.samples.sample_len();
        for (k, v) in out.samples.data_mut().iter_mut().enumerate() {
            let g = group(k % len);
            let range = self.max[g] - self.min[g];
            *v = if range > 0.0 { (*v - self.min[g]) / range } else { 0.0 };
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessOptions {
    pub minmax: bool,
    /// `(normal class, anomaly class)` in the source labels.
    pub binary_classes: Option<(i32, i32)>,
}

/// Relabels and, if requested, min-max scales `train` with its own
/// statistics; the fitted scaler is returned for use on the test split.
pub fn preprocess(train: &Dataset, options: &PreprocessOptions) -> Result<(Dataset, Option<MinMaxScaler>)> {
    let relabeled = match options.binary_classes {
        Some(classes) => select_binary(train, classes)?,
        None => train.clone(),
    };
    if !options.minmax {
        return Ok((relabeled, None));
    }
    let scaler = MinMaxScaler::fit(&relabeled)?;
    Ok((scaler.transform(&relabeled)?, Some(scaler)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    pub train_size: usize,
    pub test_size: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            train_size: 500,
            test_size: 500,
            stratified: true,
            seed: 0,
        }
    }
}

/// Per-class quotas proportional to `counts`, rounded by largest remainder
/// (ties go to the smaller label).
pub fn stratified_counts(counts: &BTreeMap<i32, usize>, size: usize) -> BTreeMap<i32, usize> {
    let total: usize = counts.values().sum();
    if total == 0 {
        return counts.keys().map(|&k| (k, 0)).collect();
    }
    let mut out = BTreeMap::new();
    let mut rema: Vec<(i32, f64)> = Vec::new();
    let mut assigned = 0;
    for (&label, &n) in counts {
        let exact = size as f64 * n as f64 / total as f64;
        let base = exact.floor() as usize;
        out.insert(label, base);
        assigned += base;
        rema.push((label, exact - base as f64));
    }
    rema.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (label, _) in rema.into_iter().take(size - assigned) {
        *out.get_mut(&label).expect("label present") += 1;
    }
    out
}

fn shuffled_by_class(dataset: &Dataset, rng: &mut ChaCha8Rng) -> BTreeMap<i32, Vec<usize>> {
    let mut by_class: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in dataset.labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    for v in by_class.values_mut() {
        v.shuffle(rng);
    }
    by_class
}

fn draw(pools: &mut BTreeMap<i32, Vec<usize>>, quotas: &BTreeMap<i32, usize>, what: &str) -> Result<Vec<usize>> {
    let mut picked = Vec::new();
    for (label, &k) in quotas {
        let pool = pools.get_mut(label).expect("quota for a present class");
        if pool.len() < k {
            return Err(Error::data(format!(
                "{what} needs {k} samples of class {label}, only {} available (quotas {quotas:?})",
                pool.len()
            )));
        }
        picked.extend(pool.drain(..k));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Draws train and test subsets. Without `test_source`, both come from
/// `dataset` and are disjoint; otherwise the test subset is drawn from
/// `test_source` with its own class ratio. Non-stratified plans sample
/// uniformly without replacement.
pub fn stratified_subsample(
    dataset: &Dataset,
    test_source: Option<&Dataset>,
    plan: &SamplingPlan,
) -> Result<(Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let quotas_for = |d: &Dataset, size: usize| {
        if plan.stratified {
            stratified_counts(&d.class_counts(), size)
        } else {
            // a single pseudo-class holding everything
            BTreeMap::from([(i32::MIN, size)])
        }
    };
    let pools_for = |d: &Dataset, rng: &mut ChaCha8Rng| {
        if plan.stratified {
            shuffled_by_class(d, rng)
        } else {
            let mut all: Vec<usize> = (0..d.len()).collect();
            all.shuffle(rng);
            BTreeMap::from([(i32::MIN, all)])
        }
    };
    let mut pools = pools_for(dataset, &mut rng);
    let train_idx = draw(&mut pools, &quotas_for(dataset, plan.train_size), "training subset")?;
    let test = match test_source {
        None => {
            let idx = draw(&mut pools, &quotas_for(dataset, plan.test_size), "test subset")?;
            dataset.select(&idx)
        }
        Some(src) => {
            let mut test_pools = pools_for(src, &mut rng);
            let idx = draw(&mut test_pools, &quotas_for(src, plan.test_size), "test subset")?;
            src.select(&idx)
        }
    };
    Ok((dataset.select(&train_idx), test))
}

/// Drops every anomaly; returns the normal-only set and the number removed.
pub fn anomaly_train_filter(dataset: &Dataset) -> Result<(Dataset, usize)> {
    let keep: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == 1).collect();
    if keep.is_empty() {
        return Err(Error::data("no normal (+1) samples left after removing anomalies"));
    }
    let removed = dataset.len() - keep.len();
    log::info!(
        "one-class training set: kept {} normal samples, removed {removed}",
        keep.len()
    );
    Ok((dataset.select(&keep), removed))
}

#[cfg(test)]
mod tests;
