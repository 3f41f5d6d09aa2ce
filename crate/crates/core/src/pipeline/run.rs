use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::files::{write_scores_csv, ScoreTable};
use crate::cae::{self, build_network, loss_curve_csv, CaeModel};
use crate::data::{
    anomaly_train_filter, load_dataset, select_binary, stratified_subsample, Dataset, MinMaxScaler, SamplingPlan,
};
use crate::error::{Error, IoContext, Result};
use crate::matrix::Matrix;
use crate::metrics::{aggregate_csv, aggregate_runs, confusion_and_metrics, metrics_csv, AggregateReport};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::qkernel::{gram_matrix, qubits_for, GramMatrix};
use crate::svm::{default_gamma, fit_csvm, fit_ocsvm, rbf_gram, save_model, score_and_predict, Model};

/// Training partition and, when the dataset has one, the test partition,
/// both relabeled ±1.
#[derive(Debug, Clone)]
pub struct Partitions {
    pub pool: Dataset,
    pub test_pool: Option<Dataset>,
}

/// Loads both partitions, keeps the two configured classes and min-max
/// scales images with statistics of the training partition. Tabular data is
/// scaled later, per training subset.
pub fn load_partitions(config: &ExperimentConfig) -> Result<Partitions> {
    let format = config.resolved_format();
    let (pool, test) = rayon::join(
        || load_dataset(&config.train_path, format),
        || config.test_path.as_ref().map(|p| load_dataset(p, format)).transpose(),
    );
    let relabel = |mut d: Dataset| -> Result<Dataset> {
        d.provenance = config.dataset;
        match config.resolved_classes() {
            Some(classes) => select_binary(&d, classes),
            None => d.binary_labels().map(|_| d),
        }
    };
    let mut pool = relabel(pool?)?;
    let mut test_pool = test?.map(relabel).transpose()?;
    if config.minmax && !pool.is_tabular() {
        let scaler = MinMaxScaler::fit(&pool)?;
        pool = scaler.transform(&pool)?;
        test_pool = test_pool.map(|t| scaler.transform(&t)).transpose()?;
    }
    log::info!(
        "loaded {:?}: {} training samples {:?}, test partition {}",
        config.dataset,
        pool.len(),
        pool.class_counts(),
        test_pool.as_ref().map_or("none".to_string(), |t| t.len().to_string())
    );
    Ok(Partitions { pool, test_pool })
}

/// Fits one autoencoder on the training partition, or on a seeded subset of
/// `cae_train_size` images.
pub fn train_extractor(config: &ExperimentConfig, pool: &Dataset) -> Result<CaeModel> {
    let mut images = pool.samples.clone();
    if let Some(k) = config.cae_train_size.filter(|&k| k < pool.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut idx = rand::seq::index::sample(&mut rng, pool.len(), k).into_vec();
        idx.sort_unstable();
        images = images.select(&idx);
    }
    let spec = build_network(config.architecture, pool.samples.sample_shape())?;
    let model = CaeModel::new(spec, config.seed)?;
    let train_config = cae::TrainConfig {
        seed: config.seed,
        ..config.train.clone()
    };
    log::info!(
        "training {:?} autoencoder on {} images for {} epochs",
        config.architecture,
        images.batch(),
        train_config.epochs
    );
    cae::train(model, &images, &train_config)
}

/// Latent features from the autoencoder, or the raw rows without one.
pub fn features_for(extractor: Option<&CaeModel>, dataset: &Dataset) -> Result<Matrix> {
    match extractor {
        Some(model) => model.extract_features(&dataset.samples),
        None => Ok(dataset.features()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: Method,
    /// Samples the model was fitted on.
    pub fit_size: usize,
    /// Anomalies among them; always 0 for one-class methods.
    pub fit_anomalies: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub iterations: usize,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip)]
    pub scores: Vec<f64>,
    #[serde(skip)]
    pub predicted: Vec<i8>,
    #[serde(skip)]
    pub model: Option<Model>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub seed: u64,
    /// Source rows of the training and test subsets.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub test_labels: Vec<i8>,
    pub methods: Vec<MethodResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepetitionFailure {
    pub repetition: usize,
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn sub_gram(g: &GramMatrix, keep: &[usize]) -> GramMatrix {
    let ids: Vec<usize> = keep.iter().map(|&i| g.row_ids[i]).collect();
    GramMatrix {
        row_ids: ids.clone(),
        col_ids: ids,
        values: g.values.select_square(keep),
    }
}

fn sub_columns(m: &Matrix, keep: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), keep.len());
    for i in 0..m.rows() {
        let src = m.row(i);
        for (o, &j) in out.row_mut(i).iter_mut().zip(keep) {
            *o = src[j];
        }
    }
    out
}

struct Kernels {
    train: GramMatrix,
    cross: GramMatrix,
    gamma: Option<f64>,
}

/// The subsets and features of one repetition.
#[derive(Debug, Clone)]
pub struct Subsample {
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    pub train_features: Matrix,
    pub test_features: Matrix,
    pub train_labels: Vec<i8>,
    pub test_labels: Vec<i8>,
}

/// Draws the subsets of repetition `repetition` (seed `seed + r`), min-max
/// scales tabular rows with the training subset and extracts features.
pub fn draw_subsample(
    config: &ExperimentConfig,
    parts: &Partitions,
    extractor: Option<&CaeModel>,
    repetition: usize,
) -> Result<Subsample> {
    let seed = config.repetition_seed(repetition);
    let plan = SamplingPlan {
        seed,
        ..config.sampling
    };
    let (mut train, mut test) = stage(
        "sampling",
        stratified_subsample(&parts.pool, parts.test_pool.as_ref(), &plan),
    )?;
    if config.minmax && train.is_tabular() {
        let scaler = stage("scaling", MinMaxScaler::fit(&train))?;
        train = stage("scaling", scaler.transform(&train))?;
        test = stage("scaling", scaler.transform(&test))?;
    }
    Ok(Subsample {
        seed,
        train_labels: stage("sampling", train.binary_labels())?,
        test_labels: stage("sampling", test.binary_labels())?,
        train_features: stage("features", features_for(extractor, &train))?,
        test_features: stage("features", features_for(extractor, &test))?,
        train,
        test,
    })
}

/// One repetition: subsample, features, kernels, fits, scores, metrics.
/// Nothing is written to disk.
pub fn run_repetition(
    config: &ExperimentConfig,
    parts: &Partitions,
    extractor: Option<&CaeModel>,
    repetition: usize,
) -> Result<RepetitionResult> {
    let Subsample {
        seed,
        train,
        test,
        train_features: f_train,
        test_features: f_test,
        train_labels: y_train,
        test_labels: y_test,
    } = draw_subsample(config, parts, extractor, repetition)?;

    let methods = config.resolved_methods();
    let with_ids = |mut g: GramMatrix, rows: &Dataset| {
        g.row_ids.clone_from(&rows.source_indices);
        g.col_ids.clone_from(&train.source_indices);
        g
    };
    let quantum = if methods.iter().any(|m| m.is_quantum()) {
        let n_qubits = qubits_for(f_train.cols());
        let k = stage("gram", gram_matrix(&f_train, None, n_qubits, config.kernel_mode))?;
        let kx = stage(
            "gram",
            gram_matrix(&f_test, Some(&f_train), n_qubits, config.kernel_mode),
        )?;
        Some(Kernels {
            train: with_ids(k, &train),
            cross: with_ids(kx, &test),
            gamma: None,
        })
    } else {
        None
    };
    let classical = if methods.iter().any(|m| !m.is_quantum()) {
        let gamma = match config.gamma {
            Some(g) => g,
            None => stage("gram", default_gamma(&f_train))?,
        };
        let k = stage("gram", rbf_gram(&f_train, None, gamma))?;
        let kx = stage("gram", rbf_gram(&f_test, Some(&f_train), gamma))?;
        Some(Kernels {
            train: with_ids(k, &train),
            cross: with_ids(kx, &test),
            gamma: Some(gamma),
        })
    } else {
        None
    };

    let mut results = Vec::with_capacity(methods.len());
    for method in methods {
        let kernels = if method.is_quantum() { &quantum } else { &classical };
        let kernels = kernels.as_ref().expect("kernels built for every selected family");
        let (model, fit_size, fit_anomalies, cross) = if method.is_one_class() {
            let (normal, removed) = stage("fit", anomaly_train_filter(&train))?;
            let keep: Vec<usize> = (0..y_train.len()).filter(|&i| y_train[i] == 1).collect();
            debug_assert_eq!(keep.len() + removed, y_train.len());
            let fit_anomalies = normal.labels.iter().filter(|&&l| l != 1).count();
            let gram = sub_gram(&kernels.train, &keep);
            let model = stage("fit", fit_ocsvm(&gram, config.nu, &config.solver))?;
            (
                Model::from(model),
                keep.len(),
                fit_anomalies,
                sub_columns(&kernels.cross.values, &keep),
            )
        } else {
            let model = stage(
                "fit",
                fit_csvm(&kernels.train, &y_train, config.c, config.class_weights, &config.solver),
            )?;
            let anomalies = y_train.iter().filter(|&&l| l == -1).count();
            (
                Model::from(model),
                y_train.len(),
                anomalies,
                kernels.cross.values.clone(),
            )
        };
        let report = stage("score", score_and_predict(&model, &cross))?;
        let (confusion, metrics) = stage("evaluate", confusion_and_metrics(&y_test, &report.labels))?;
        let iterations = match &model {
            Model::Svm(m) => m.iterations,
            Model::Ocsvm(m) => m.iterations,
        };
        log::info!(
            "repetition {repetition} {method}: accuracy {:?}, ppp {:?}",
            metrics.accuracy,
            metrics.ppp
        );
        results.push(MethodResult {
            method,
            fit_size,
            fit_anomalies,
            confusion,
            metrics,
            iterations,
            rho: model.rho(),
            gamma: kernels.gamma,
            scores: report.scores,
            predicted: report.labels,
            model: Some(model),
        });
    }
    Ok(RepetitionResult {
        repetition,
        seed,
        train_indices: train.source_indices,
        test_indices: test.source_indices,
        test_labels: y_test,
        methods: results,
    })
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub output_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub loss_curve: Option<PathBuf>,
    pub final_train_loss: Option<f64>,
    pub score_files: Vec<PathBuf>,
    pub model_files: Vec<PathBuf>,
    pub metrics_json: PathBuf,
    pub aggregate_json: PathBuf,
    pub repetitions: Vec<RepetitionResult>,
    pub failures: Vec<RepetitionFailure>,
    pub aggregate: BTreeMap<Method, AggregateReport>,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    repetition: usize,
    seed: u64,
    #[serde(flatten)]
    result: &'a MethodResult,
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    dataset: String,
    repetitions: usize,
    runs: Vec<RunRecord<'a>>,
    failures: &'a [RepetitionFailure],
    aggregate: &'a BTreeMap<Method, AggregateReport>,
}

/// The metrics JSON payload: one object per method per repetition, the
/// failed repetitions and an `aggregate` object keyed by method. Contains
/// no timestamps or paths, so equal inputs give equal bytes.
pub fn metrics_document(
    config: &ExperimentConfig,
    repetitions: &[RepetitionResult],
    failures: &[RepetitionFailure],
    aggregate: &BTreeMap<Method, AggregateReport>,
) -> Result<String> {
    let doc = MetricsDocument {
        dataset: format!("{:?}", config.dataset).to_lowercase(),
        repetitions: config.repetitions,
        runs: repetitions
            .iter()
            .flat_map(|r| {
                r.methods.iter().map(move |m| RunRecord {
                    repetition: r.repetition,
                    seed: r.seed,
                    result: m,
                })
            })
            .collect(),
        failures,
        aggregate,
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

fn aggregate_by_method(reps: &[RepetitionResult]) -> Result<BTreeMap<Method, AggregateReport>> {
    let mut by_method: BTreeMap<Method, Vec<MetricsReport>> = BTreeMap::new();
    for r in reps {
        for m in &r.methods {
            by_method.entry(m.method).or_default().push(m.metrics);
        }
    }
    by_method
        .into_iter()
        .map(|(m, reports)| Ok((m, aggregate_runs(&reports)?)))
        .collect()
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).at(path)
}

fn failure_of(config: &ExperimentConfig, repetition: usize, err: &Error) -> RepetitionFailure {
    let stage = match err {
        Error::Stage { stage, .. } => (*stage).to_string(),
        _ => "repetition".to_string(),
    };
    RepetitionFailure {
        repetition,
        seed: config.repetition_seed(repetition),
        stage,
        message: err.to_string(),
    }
}

/// Runs every repetition concurrently with a fixed extractor and writes the
/// per-repetition score and model files plus the metrics documents under
/// `out`. A failed repetition is reported and the others are kept; the call
/// fails only when none succeeds.
pub fn run_with_extractor(
    config: &ExperimentConfig,
    parts: &Partitions,
    extractor: Option<&CaeModel>,
    out: &Path,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out).at(out)?;
    let outcomes: Vec<Result<RepetitionResult>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| run_repetition(config, parts, extractor, r))
        .collect();
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rep) => reps.push(rep),
            Err(e) => {
                log::error!("repetition {r} failed: {e}");
                failures.push(failure_of(config, r, &e));
                first_error.get_or_insert(e);
            }
        }
    }
    if reps.is_empty() {
        return Err(first_error.expect("at least one repetition ran"));
    }

    write_outputs(
        config,
        reps,
        failures,
        out,
        extractor.and_then(CaeModel::final_train_loss),
    )
}

/// Writes the per-repetition score and model files, `metrics.json`,
/// `aggregate.json` and their CSV twins under `out`.
pub(crate) fn write_outputs(
    config: &ExperimentConfig,
    reps: Vec<RepetitionResult>,
    failures: Vec<RepetitionFailure>,
    out: &Path,
    final_train_loss: Option<f64>,
) -> Result<RunArtifacts> {
    fs::create_dir_all(out).at(out)?;
    let mut score_files = Vec::new();
    let mut model_files = Vec::new();
    for rep in &reps {
        let dir = out.join(format!("rep{}", rep.repetition));
        fs::create_dir_all(&dir).at(&dir)?;
        let indices = serde_json::json!({
            "train_indices": rep.train_indices,
            "test_indices": rep.test_indices,
        });
        write(&dir.join("subsample.json"), &serde_json::to_string(&indices)?)?;
        for m in &rep.methods {
            let path = dir.join(format!("{}_scores.csv", m.method));
            write_scores_csv(
                &path,
                &ScoreTable {
                    sample_ids: rep.test_indices.clone(),
                    scores: m.scores.clone(),
                    true_labels: rep.test_labels.clone(),
                    predicted: m.predicted.clone(),
                },
            )?;
            score_files.push(path);
            if let Some(model) = &m.model {
                let path = dir.join(format!("{}.model", m.method));
                save_model(model, &path)?;
                model_files.push(path);
            }
        }
    }

    let aggregate = aggregate_by_method(&reps)?;
    let metrics_json = out.join("metrics.json");
    write(&metrics_json, &metrics_document(config, &reps, &failures, &aggregate)?)?;
    let aggregate_json = out.join("aggregate.json");
    write(&aggregate_json, &(serde_json::to_string_pretty(&aggregate)? + "\n"))?;
    let rows: Vec<(String, MetricsReport)> = reps
        .iter()
        .flat_map(|r| {
            r.methods
                .iter()
                .map(move |m| (format!("{}/rep{}", m.method, r.repetition), m.metrics))
        })
        .collect();
    write(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    let rows: Vec<(String, AggregateReport)> = aggregate.iter().map(|(m, a)| (m.to_string(), a.clone())).collect();
    write(&out.join("aggregate.csv"), &aggregate_csv(&rows))?;

    Ok(RunArtifacts {
        output_dir: out.to_path_buf(),
        checkpoint: None,
        loss_curve: None,
        final_train_loss,
        score_files,
        model_files,
        metrics_json,
        aggregate_json,
        repetitions: reps,
        failures,
        aggregate,
    })
}

/// Saves the checkpoint and loss curve of a trained extractor under `out`.
pub(crate) fn save_extractor(model: &CaeModel, out: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out).at(out)?;
    let checkpoint = out.join("cae.qkcae");
    cae::save(model, &checkpoint)?;
    let loss = out.join("loss_curve.csv");
    write(&loss, &loss_curve_csv(&model.training_log))?;
    Ok((checkpoint, loss))
}

/// Loads the data, trains the autoencoder once (image datasets only) and
/// runs all repetitions, writing everything under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let parts = stage("load", load_partitions(config))?;
    let out = &config.output_dir;
    let extractor = if config.uses_extractor() {
        Some(stage("cae-training", train_extractor(config, &parts.pool))?)
    } else {
        None
    };
    let saved = extractor.as_ref().map(|m| save_extractor(m, out)).transpose()?;
    let mut artifacts = run_with_extractor(config, &parts, extractor.as_ref(), out)?;
    if let Some((checkpoint, loss)) = saved {
        artifacts.checkpoint = Some(checkpoint);
        artifacts.loss_curve = Some(loss);
    }
    Ok(artifacts)
}
