use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cae::{Architecture, TrainConfig};
use crate::data::{DataFormat, Provenance, SamplingPlan};
use crate::error::{Error, Result};
use crate::qkernel::KernelMode;
use crate::svm::{ClassWeights, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Qsvm,
    Qocsvm,
    Svm,
    Ocsvm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Qsvm, Method::Qocsvm, Method::Svm, Method::Ocsvm];

    pub fn is_quantum(self) -> bool {
        matches!(self, Method::Qsvm | Method::Qocsvm)
    }

    pub fn is_one_class(self) -> bool {
        matches!(self, Method::Qocsvm | Method::Ocsvm)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Qsvm => "qsvm",
            Method::Qocsvm => "qocsvm",
            Method::Svm => "svm",
            Method::Ocsvm => "ocsvm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}; use qsvm, qocsvm, svm or ocsvm")))
    }
}

/// Everything one experiment needs. Optional fields fall back to
/// per-dataset defaults (see the `resolved_*` accessors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Provenance,
    pub format: Option<DataFormat>,
    /// Training partition: file or directory, depending on the format.
    pub train_path: PathBuf,
    /// Separate test partition, when the dataset ships one.
    pub test_path: Option<PathBuf>,
    /// Source classes kept as (normal, anomaly); `None` expects labels ±1.
    pub binary_classes: Option<(i32, i32)>,
    pub minmax: bool,
    pub architecture: Architecture,
    pub train: TrainConfig,
    /// Images used to fit the autoencoder; `None` uses the whole partition.
    pub cae_train_size: Option<usize>,
    pub sampling: SamplingPlan,
    pub methods: Option<Vec<Method>>,
    pub class_weights: ClassWeights,
    pub nu: f64,
    pub c: f64,
    /// RBF width; `None` uses `1 / (d * var)` of each training subset.
    pub gamma: Option<f64>,
    pub kernel_mode: KernelMode,
    pub solver: SolverOptions,
    pub repetitions: usize,
    /// Drives the autoencoder, its image subset and every repetition
    /// (`seed + r`). Overrides `train.seed` and `sampling.seed`.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: Provenance::Mnist,
            format: None,
            train_path: PathBuf::new(),
            test_path: None,
            binary_classes: None,
            minmax: true,
            architecture: Architecture::Resnet10,
            train: TrainConfig::default(),
            cae_train_size: None,
            sampling: SamplingPlan::default(),
            methods: None,
            class_weights: ClassWeights::default(),
            nu: 0.2,
            c: 1.0,
            gamma: None,
            kernel_mode: KernelMode::Circuit,
            solver: SolverOptions::default(),
            repetitions: 3,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn resolved_format(&self) -> DataFormat {
        self.format.unwrap_or(match self.dataset {
            Provenance::Mnist => DataFormat::Idx,
            Provenance::Cifar10 => DataFormat::CifarBinary,
            Provenance::Htru2 => DataFormat::Csv,
            Provenance::Htru1 | Provenance::Raw => DataFormat::RawContainer,
        })
    }

    pub fn resolved_classes(&self) -> Option<(i32, i32)> {
        self.binary_classes.or(match self.dataset {
            // digits 0/1, airplane/automobile, non-pulsar/pulsar
            Provenance::Mnist | Provenance::Cifar10 | Provenance::Htru2 => Some((0, 1)),
            Provenance::Htru1 | Provenance::Raw => None,
        })
    }

    pub fn resolved_methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| {
            if self.balanced_dataset() {
                vec![Method::Qsvm, Method::Svm]
            } else {
                Method::ALL.to_vec()
            }
        })
    }

    /// Tabular datasets skip the autoencoder.
    pub fn uses_extractor(&self) -> bool {
        self.dataset != Provenance::Htru2
    }

    fn balanced_dataset(&self) -> bool {
        matches!(self.dataset, Provenance::Mnist | Provenance::Cifar10)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::config("repetitions must be at least 1"));
        }
        let methods = self.resolved_methods();
        if methods.is_empty() {
            return Err(Error::config("no methods selected"));
        }
        for (i, m) in methods.iter().enumerate() {
            if methods[..i].contains(m) {
                return Err(Error::config(format!("method {m} listed twice")));
            }
            if m.is_one_class() && self.balanced_dataset() {
                return Err(Error::config(format!(
                    "{m} is not run on balanced datasets ({:?}); use qsvm or svm",
                    self.dataset
                )));
            }
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::config(format!("nu must lie in (0, 1], got {}", self.nu)));
        }
        if !(self.c > 0.0 && self.class_weights.negative > 0.0 && self.class_weights.positive > 0.0) {
            return Err(Error::config("C and both class weights must be positive"));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::config("gamma must be positive and finite"));
        }
        if self.sampling.train_size < 2 || self.sampling.test_size == 0 {
            return Err(Error::config("sampling needs at least 2 training and 1 test sample"));
        }
        if self.train_path.as_os_str().is_empty() {
            return Err(Error::config("train_path is not set"));
        }
        if self.uses_extractor() {
            self.train.validate()?;
            if self.cae_train_size.is_some_and(|n| n < self.train.batch_size) {
                return Err(Error::config(format!(
                    "cae_train_size {} is below batch_size {}",
                    self.cae_train_size.unwrap_or(0),
                    self.train.batch_size
                )));
            }
        }
        Ok(())
    }

    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        self.seed.wrapping_add(repetition as u64)
    }
}
