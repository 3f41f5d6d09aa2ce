use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qfex::cae::{self, Architecture};
use qfex::data::{convert_dumps, load_dataset, write_qkds, DataFormat, DumpType, Provenance};
use qfex::error::{Error, ErrorClass, Result};
use qfex::metrics::{aggregate_runs, confusion_and_metrics};
use qfex::pipeline::{
    channelwise_ensemble, draw_subsample, load_partitions, read_features_csv, read_scores_csv, run_experiment,
    train_extractor, write_features_csv, write_scores_csv, ExperimentConfig, FeatureTable, Method, ScoreTable, Vote,
};
use qfex::qkernel::{gram_matrix, qubits_for, GramMatrix, KernelMode};
use qfex::svm::{
    default_gamma, fit_csvm, fit_ocsvm, load_model, rbf_gram, save_model, score_and_predict, ClassWeights,
    SolverOptions,
};

#[derive(Parser)]
#[command(
    name = "qfex",
    version,
    about = "Autoencoder features and simulated quantum-kernel SVMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a QKDS1 container from per-sample dumps or another format.
    Convert(ConvertArgs),
    /// Train the autoencoder; writes cae.qkcae and loss_curve.csv.
    TrainCae(ExperimentArgs),
    /// Draw one repetition's subsets and write their feature tables.
    Extract(ExtractArgs),
    /// Quantum or RBF kernel matrix from feature tables.
    Gram(GramArgs),
    /// Fit an SVM or one-class SVM on a training Gram matrix.
    Fit(FitArgs),
    /// Score test samples from a cross Gram matrix.
    Score(ScoreArgs),
    /// Metrics JSON from one or more score files.
    Evaluate(EvaluateArgs),
    /// Full experiment: all methods, all repetitions.
    Run(ExperimentArgs),
    /// One simplified autoencoder and SVM per channel, optionally voted.
    Channelwise(ChannelwiseArgs),
}

/// Flags mirroring the experiment config; each overrides `--config`.
#[derive(Args, Clone, Default)]
struct ExperimentArgs {
    /// JSON document with the experiment config field names.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    train_path: Option<PathBuf>,
    #[arg(long)]
    test_path: Option<PathBuf>,
    /// Source classes as `normal,anomaly`.
    #[arg(long)]
    binary_classes: Option<String>,
    #[arg(long)]
    no_minmax: bool,
    #[arg(long)]
    architecture: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    augment: bool,
    #[arg(long)]
    cae_train_size: Option<usize>,
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    unstratified: bool,
    /// Comma-separated: qsvm, qocsvm, svm, ocsvm.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    weight_negative: Option<f64>,
    #[arg(long)]
    weight_positive: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    kernel_mode: Option<String>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.dataset {
            c.dataset = v.parse::<Provenance>()?;
        }
        if let Some(v) = &self.format {
            c.format = Some(v.parse::<DataFormat>()?);
        }
        if let Some(v) = &self.train_path {
            c.train_path.clone_from(v);
        }
        if let Some(v) = &self.test_path {
            c.test_path = Some(v.clone());
        }
        if let Some(v) = &self.binary_classes {
            c.binary_classes = Some(parse_pair(v)?);
        }
        if self.no_minmax {
            c.minmax = false;
        }
        if let Some(v) = &self.architecture {
            c.architecture = v.parse::<Architecture>()?;
        }
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.batch_size, self.batch_size);
        set(&mut c.train.learning_rate, self.learning_rate);
        set(&mut c.train.weight_decay, self.weight_decay);
        c.train.augment |= self.augment;
        if self.cae_train_size.is_some() {
            c.cae_train_size = self.cae_train_size;
        }
        set(&mut c.sampling.train_size, self.train_size);
        set(&mut c.sampling.test_size, self.test_size);
        if self.unstratified {
            c.sampling.stratified = false;
        }
        if let Some(ms) = &self.methods {
            c.methods = Some(ms.iter().map(|m| m.parse()).collect::<Result<_>>()?);
        }
        set(&mut c.class_weights.negative, self.weight_negative);
        set(&mut c.class_weights.positive, self.weight_positive);
        set(&mut c.nu, self.nu);
        set(&mut c.c, self.c);
        if self.gamma.is_some() {
            c.gamma = self.gamma;
        }
        if let Some(v) = &self.kernel_mode {
            c.kernel_mode = v.parse::<KernelMode>()?;
        }
        set(&mut c.repetitions, self.repetitions);
        set(&mut c.seed, self.seed);
        if let Some(v) = &self.out {
            c.output_dir.clone_from(v);
        }
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_pair(s: &str) -> Result<(i32, i32)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts[..] {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::config(format!("bad class pair {s:?}"))),
        },
        _ => Err(Error::config(format!("expected `normal,anomaly`, got {s:?}"))),
    }
}

#[derive(Args)]
struct ConvertArgs {
    /// Dump directory (with labels.csv), or a dataset file/directory with --format.
    input: PathBuf,
    /// Output QKDS1 file.
    #[arg(long)]
    out: PathBuf,
    /// Per-sample shape `c,h,w` of the dumps.
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    #[arg(long, default_value = "u8")]
    dtype: String,
    /// Convert a dataset in this format instead of dumps.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Trained autoencoder; omitted for tabular data.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    repetition: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelKind {
    Quantum,
    Rbf,
}

#[derive(Args)]
struct GramArgs {
    /// Training feature table (columns of the result).
    #[arg(long)]
    train: PathBuf,
    /// Test feature table; omitted for the square training Gram.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "quantum")]
    kernel: KernelKind,
    #[arg(long, default_value = "circuit")]
    mode: String,
    /// RBF width; defaults to 1/(d var) of the training table.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Square training Gram matrix.
    #[arg(long)]
    gram: PathBuf,
    /// Feature table holding the training labels.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value = "qsvm")]
    method: String,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 0.2)]
    nu: f64,
    #[arg(long, default_value_t = 1.0)]
    weight_negative: f64,
    #[arg(long, default_value_t = 1.0)]
    weight_positive: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Cross Gram matrix, test rows by training columns.
    #[arg(long)]
    gram: PathBuf,
    /// Feature table holding the test labels.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Score files; more than one adds an aggregate.
    #[arg(required = true)]
    scores: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ChannelwiseArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, default_value = "none")]
    vote: String,
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn labels_for(ids: &[usize], table: &FeatureTable) -> Result<Vec<i8>> {
    let by_id: BTreeMap<usize, i8> = table
        .sample_ids
        .iter()
        .copied()
        .zip(table.labels.iter().copied())
        .collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id)
                .copied()
                .ok_or_else(|| Error::data(format!("no label for sample {id}")))
        })
        .collect()
}

fn convert(args: &ConvertArgs) -> Result<()> {
    let dataset = match (&args.format, &args.shape) {
        (Some(f), _) => load_dataset(&args.input, f.parse()?)?,
        (None, Some(s)) => {
            let &[c, h, w] = s.as_slice() else {
                return Err(Error::config(format!("--shape needs c,h,w, got {s:?}")));
            };
            convert_dumps(&args.input, [c, h, w], args.dtype.parse::<DumpType>()?)?
        }
        (None, None) => {
            return Err(Error::config(
                "convert needs --shape for dumps or --format for a dataset",
            ))
        }
    };
    write_qkds(&dataset, &args.out)?;
    println!(
        "wrote {} samples of shape {:?} to {}",
        dataset.len(),
        dataset.samples.sample_shape(),
        args.out.display()
    );
    Ok(())
}

fn train_cae(args: &ExperimentArgs) -> Result<()> {
    let config = args.resolve()?;
    config.validate()?;
    let parts = load_partitions(&config)?;
    let model = train_extractor(&config, &parts.pool)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    cae::save(&model, &out.join("cae.qkcae"))?;
    let loss = out.join("loss_curve.csv");
    fs::write(&loss, cae::loss_curve_csv(&model.training_log)).map_err(|e| Error::io(&loss, e))?;
    println!(
        "final training loss {:?}; checkpoint in {}",
        model.final_train_loss(),
        out.display()
    );
    Ok(())
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let config = args.experiment.resolve()?;
    config.validate()?;
    let parts = load_partitions(&config)?;
    let model = args.checkpoint.as_deref().map(cae::load).transpose()?;
    if model.is_none() && config.uses_extractor() {
        return Err(Error::config("image datasets need --checkpoint"));
    }
    let sub = draw_subsample(&config, &parts, model.as_ref(), args.repetition)?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (name, d, f, y) in [
        ("train_features.csv", &sub.train, &sub.train_features, &sub.train_labels),
        ("test_features.csv", &sub.test, &sub.test_features, &sub.test_labels),
    ] {
        write_features_csv(
            &out.join(name),
            &FeatureTable {
                sample_ids: d.source_indices.clone(),
                labels: y.clone(),
                features: f.clone(),
            },
        )?;
    }
    println!(
        "wrote {} training and {} test feature rows to {}",
        sub.train.len(),
        sub.test.len(),
        out.display()
    );
    Ok(())
}

fn gram(args: &GramArgs) -> Result<()> {
    let train = read_features_csv(&args.train)?;
    let test = args.test.as_deref().map(read_features_csv).transpose()?;
    let rows = test.as_ref().unwrap_or(&train);
    let other = test.as_ref().map(|_| &train.features);
    let mut g = match args.kernel {
        KernelKind::Quantum => {
            let n = qubits_for(train.features.cols());
            gram_matrix(&rows.features, other, n, args.mode.parse()?)?
        }
        KernelKind::Rbf => {
            let gamma = match args.gamma {
                Some(g) => g,
                None => default_gamma(&train.features)?,
            };
            rbf_gram(&rows.features, other, gamma)?
        }
    };
    g.row_ids.clone_from(&rows.sample_ids);
    g.col_ids.clone_from(&train.sample_ids);
    g.write_csv(&args.out)?;
    println!(
        "wrote {}x{} kernel matrix to {}",
        g.values.rows(),
        g.values.cols(),
        args.out.display()
    );
    Ok(())
}

fn fit(args: &FitArgs) -> Result<()> {
    let method: Method = args.method.parse()?;
    let gram = GramMatrix::read_csv(&args.gram)?;
    if !gram.is_square() {
        return Err(Error::data("fit needs a square training Gram matrix"));
    }
    let labels = labels_for(&gram.row_ids, &read_features_csv(&args.labels)?)?;
    let opts = SolverOptions::default();
    let model = if method.is_one_class() {
        let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
        if keep.is_empty() {
            return Err(Error::data("no normal samples to fit the one-class SVM on"));
        }
        let ids: Vec<usize> = keep.iter().map(|&i| gram.row_ids[i]).collect();
        let normal = GramMatrix {
            row_ids: ids.clone(),
            col_ids: ids,
            values: gram.values.select_square(&keep),
        };
        fit_ocsvm(&normal, args.nu, &opts)?.into()
    } else {
        let weights = ClassWeights {
            negative: args.weight_negative,
            positive: args.weight_positive,
        };
        fit_csvm(&gram, &labels, args.c, weights, &opts)?.into()
    };
    save_model(&model, &args.out)?;
    println!(
        "{method}: {} training samples, rho {}",
        model.sample_ids().len(),
        model.rho()
    );
    Ok(())
}

fn score(args: &ScoreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let gram = GramMatrix::read_csv(&args.gram)?;
    // reorder columns to the model's training order
    let position: BTreeMap<usize, usize> = gram.col_ids.iter().enumerate().map(|(j, &id)| (id, j)).collect();
    let cols = model
        .sample_ids()
        .iter()
        .map(|id| {
            position
                .get(id)
                .copied()
                .ok_or_else(|| Error::data(format!("Gram lacks training sample {id}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let mut cross = qfex::matrix::Matrix::zeros(gram.values.rows(), cols.len());
    for i in 0..cross.rows() {
        let src = gram.values.row(i);
        for (o, &j) in cross.row_mut(i).iter_mut().zip(&cols) {
            *o = src[j];
        }
    }
    let report = score_and_predict(&model, &cross)?;
    let true_labels = labels_for(&gram.row_ids, &read_features_csv(&args.labels)?)?;
    write_scores_csv(
        &args.out,
        &ScoreTable {
            sample_ids: gram.row_ids.clone(),
            scores: report.scores,
            true_labels,
            predicted: report.labels,
        },
    )?;
    println!("scored {} samples into {}", gram.row_ids.len(), args.out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut runs = Vec::new();
    let mut reports = Vec::new();
    for path in &args.scores {
        let t = read_scores_csv(path)?;
        let (confusion, metrics) = confusion_and_metrics(&t.true_labels, &t.predicted)?;
        runs.push(serde_json::json!({
            "scores": path.display().to_string(),
            "confusion": confusion,
            "metrics": metrics,
        }));
        reports.push(metrics);
    }
    let doc = serde_json::json!({ "runs": runs, "aggregate": aggregate_runs(&reports)? });
    match &args.out {
        Some(p) => write_json(p, &doc),
        None => {
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

fn run(args: &ExperimentArgs) -> Result<()> {
    let config = args.resolve()?;
    let art = run_experiment(&config)?;
    for (method, agg) in &art.aggregate {
        println!(
            "{method}: accuracy {} recall {} ppp {} over {} runs",
            fmt(agg.accuracy.mean),
            fmt(agg.recall.mean),
            fmt(agg.ppp.mean),
            agg.runs
        );
    }
    for f in &art.failures {
        eprintln!("repetition {} failed in {}: {}", f.repetition, f.stage, f.message);
    }
    println!("metrics in {}", art.metrics_json.display());
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.4}"))
}

fn channelwise(args: &ChannelwiseArgs) -> Result<()> {
    let config = args.experiment.resolve()?;
    let vote: Vote = args.vote.parse()?;
    let art = channelwise_ensemble(&config, vote)?;
    for (k, c) in art.channels.iter().enumerate() {
        for (method, agg) in &c.aggregate {
            println!(
                "channel {k} {method}: accuracy {} ppp {}",
                fmt(agg.accuracy.mean),
                fmt(agg.ppp.mean)
            );
        }
    }
    if let Some(combined) = &art.combined {
        for (method, agg) in &combined.aggregate {
            println!(
                "combined {method}: accuracy {} ppp {}",
                fmt(agg.accuracy.mean),
                fmt(agg.ppp.mean)
            );
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Convert(a) => convert(a),
        Command::TrainCae(a) => train_cae(a),
        Command::Extract(a) => extract(a),
        Command::Gram(a) => gram(a),
        Command::Fit(a) => fit(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Run(a) => run(a),
        Command::Channelwise(a) => channelwise(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
