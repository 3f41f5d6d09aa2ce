use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cae::{Architecture, TrainConfig};
use crate::data::{write_qkds, Dataset, Provenance, SamplingPlan};
use crate::error::{Error, ErrorClass};
use crate::nn::Tensor;
use crate::qkernel::qubits_for;

/// Pulsar-like CSV: 8 features, class 1 shifted away from class 0.
fn write_tabular(path: &Path, n: usize, anomaly_every: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("f0,f1,f2,f3,f4,f5,f6,f7,class\n");
    for i in 0..n {
        let class = usize::from(i % anomaly_every == 0);
        let row: Vec<String> = (0..8)
            .map(|j| (rng.random::<f64>() + 1.5 * class as f64 * f64::from(j % 2 == 0)).to_string())
            .collect();
        text.push_str(&format!("{},{class}\n", row.join(",")));
    }
    fs::write(path, text).unwrap();
}

fn tabular_config(dir: &Path) -> ExperimentConfig {
    let csv = dir.join("htru2.csv");
    write_tabular(&csv, 400, 10);
    ExperimentConfig {
        dataset: Provenance::Htru2,
        train_path: csv,
        sampling: SamplingPlan {
            train_size: 60,
            test_size: 60,
            ..Default::default()
        },
        class_weights: crate::svm::ClassWeights {
            negative: 11.11,
            positive: 1.10,
        },
        repetitions: 2,
        seed: 3,
        output_dir: dir.join("out"),
        ..Default::default()
    }
}

#[test]
fn method_defaults_follow_class_balance() {
    let mut c = ExperimentConfig::default();
    assert_eq!(c.resolved_methods(), vec![Method::Qsvm, Method::Svm]);
    c.dataset = Provenance::Htru2;
    assert_eq!(c.resolved_methods(), Method::ALL.to_vec());
    assert!(!c.uses_extractor());
}

#[test]
fn config_validation() {
    let base = ExperimentConfig {
        train_path: "x".into(),
        ..Default::default()
    };
    assert!(base.validate().is_ok());
    let bad = [
        ExperimentConfig {
            methods: Some(vec![Method::Qocsvm]),
            ..base.clone()
        },
        ExperimentConfig {
            dataset: Provenance::Cifar10,
            methods: Some(vec![Method::Svm, Method::Ocsvm]),
            ..base.clone()
        },
        ExperimentConfig {
            repetitions: 0,
            ..base.clone()
        },
        ExperimentConfig {
            nu: 0.0,
            ..base.clone()
        },
        ExperimentConfig {
            methods: Some(vec![Method::Svm, Method::Svm]),
            ..base.clone()
        },
    ];
    for c in bad {
        assert_eq!(c.validate().unwrap_err().class(), ErrorClass::Config, "{c:?}");
    }
}

#[test]
fn config_json_uses_field_names() {
    let c = ExperimentConfig::from_json(
        r#"{"dataset": "htru2", "train_path": "a.csv", "methods": ["qsvm", "ocsvm"],
            "class_weights": {"negative": 11.11, "positive": 1.1}, "nu": 0.9,
            "architecture": "simplified-channelwise", "train": {"epochs": 5}}"#,
    )
    .unwrap();
    assert_eq!(c.methods, Some(vec![Method::Qsvm, Method::Ocsvm]));
    assert_eq!(c.architecture, Architecture::Simplified);
    assert_eq!(c.train.epochs, 5);
    assert_eq!(c.train.batch_size, 256);
    assert_eq!(c.repetitions, 3);
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
    assert!(ExperimentConfig::from_json(r#"{"epochs": 5}"#).is_err());
}

#[test]
fn votes() {
    assert_eq!(majority_vote(&[1, 1, -1]), 1);
    assert_eq!(majority_vote(&[-1, 1, -1]), -1);
    let w = inverse_loss_weights(&[0.01, 0.02, 0.02]).unwrap();
    for (a, b) in w.iter().zip([0.5, 0.25, 0.25]) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(weighted_vote(&[-1, 1, 1], &w) == 0.0);
    assert!(inverse_loss_weights(&[0.1, 0.0]).is_err());
}

#[test]
fn tabular_experiment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = tabular_config(dir.path());
    let art = run_experiment(&config).unwrap();
    assert!(art.failures.is_empty());
    assert_eq!(art.repetitions.len(), 2);
    assert_eq!(art.score_files.len(), 8);
    assert_eq!(art.model_files.len(), 8);
    assert!(art.checkpoint.is_none());
    assert_eq!(qubits_for(8), 3);
    for rep in &art.repetitions {
        assert_eq!(rep.seed, 3 + rep.repetition as u64);
        assert_eq!(rep.train_indices.len(), 60);
        for m in &rep.methods {
            if m.method.is_one_class() {
                assert_eq!(m.fit_anomalies, 0);
                assert_eq!(m.fit_size, 54);
            } else {
                assert_eq!(m.fit_anomalies, 6);
            }
        }
    }
    let scores = read_scores_csv(&art.score_files[0]).unwrap();
    assert_eq!(scores.scores.len(), 60);
    let head = fs::read_to_string(&art.score_files[0]).unwrap();
    assert!(head.starts_with("sample_index,score,true_label,predicted_label\n"));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&art.metrics_json).unwrap()).unwrap();
    assert_eq!(doc["runs"].as_array().unwrap().len(), 8);
    assert_eq!(doc["aggregate"]["qsvm"]["runs"], 2);
    // an easy problem: the two-class quantum model should separate it
    assert!(art.aggregate[&Method::Qsvm].accuracy.mean.unwrap() > 0.85);
    let model = crate::svm::load_model(&art.model_files[0]).unwrap();
    assert_eq!(model.sample_ids(), art.repetitions[0].train_indices.as_slice());
}

#[test]
fn metrics_json_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tabular_config(dir.path());
    let a = fs::read(run_experiment(&config).unwrap().metrics_json).unwrap();
    config.output_dir = dir.path().join("again");
    let b = fs::read(run_experiment(&config).unwrap().metrics_json).unwrap();
    assert_eq!(a, b);
    config.seed = 4;
    config.output_dir = dir.path().join("other");
    let c = fs::read(run_experiment(&config).unwrap().metrics_json).unwrap();
    assert_ne!(a, c);
}

#[test]
fn failures_carry_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tabular_config(dir.path());
    config.sampling.train_size = 380;
    let err = run_experiment(&config).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "sampling", .. }), "{err}");
    assert_eq!(err.class(), ErrorClass::Data);

    config.train_path = dir.path().join("missing.csv");
    let err = run_experiment(&config).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");
}

#[test]
fn feature_table_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let t = FeatureTable {
        sample_ids: vec![4, 9],
        labels: vec![1, -1],
        features: crate::matrix::Matrix::from_rows(&[vec![0.1, -2.5], vec![1e-17, 3.0]]).unwrap(),
    };
    let p = dir.path().join("f.csv");
    write_features_csv(&p, &t).unwrap();
    assert_eq!(read_features_csv(&p).unwrap(), t);
}

fn three_channel(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut data = Vec::with_capacity(n * 3 * 32 * 32);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let anomaly = i % 4 == 0;
        labels.push(if anomaly { -1 } else { 1 });
        for c in 0..3 {
            for y in 0..32 {
                for x in 0..32 {
                    let stripe = if anomaly { (x / 4 + c) % 2 } else { (y / 4 + c) % 2 };
                    data.push(0.6 * stripe as f64 + 0.3 * rng.random::<f64>());
                }
            }
        }
    }
    let d = Dataset::new(
        Tensor::from_vec([n, 3, 32, 32], data).unwrap(),
        labels,
        Provenance::Htru1,
    )
    .unwrap();
    let p = dir.join("htru1.qkds");
    write_qkds(&d, &p).unwrap();
    p
}

fn channel_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        dataset: Provenance::Htru1,
        train_path: three_channel(dir, 96),
        train: TrainConfig {
            epochs: 1,
            batch_size: 16,
            ..Default::default()
        },
        sampling: SamplingPlan {
            train_size: 24,
            test_size: 24,
            ..Default::default()
        },
        methods: Some(vec![Method::Qsvm, Method::Qocsvm]),
        repetitions: 2,
        output_dir: dir.join("out"),
        ..Default::default()
    }
}

#[test]
fn channelwise_majority_recomputes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = channel_config(dir.path());
    let art = channelwise_ensemble(&config, Vote::Majority).unwrap();
    assert_eq!(art.channels.len(), 3);
    let combined = art.combined.unwrap();
    for (r, rep) in combined.repetitions.iter().enumerate() {
        for (mi, m) in rep.methods.iter().enumerate() {
            for i in 0..rep.test_labels.len() {
                let votes: Vec<i8> = art
                    .channels
                    .iter()
                    .map(|c| c.repetitions[r].methods[mi].predicted[i])
                    .collect();
                assert_eq!(m.predicted[i], majority_vote(&votes));
            }
            let (_, metrics) = crate::metrics::confusion_and_metrics(&rep.test_labels, &m.predicted).unwrap();
            assert_eq!(m.metrics, metrics);
        }
    }
    assert!(dir.path().join("out/channel2/loss_curve.csv").is_file());
    assert!(dir.path().join("out/combined/metrics.json").is_file());
    assert!(art.channels.iter().all(|c| c.loss_curve.is_some()));
}

#[test]
fn channelwise_inverse_loss_weights_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = channel_config(dir.path());
    config.repetitions = 1;
    config.methods = Some(vec![Method::Qsvm]);
    let art = channelwise_ensemble(&config, Vote::InverseLoss).unwrap();
    let w = art.weights.unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let losses: Vec<f64> = art.channels.iter().map(|c| c.final_train_loss.unwrap()).collect();
    assert_eq!(w, inverse_loss_weights(&losses).unwrap());
}

#[test]
fn vote_needs_three_channels() {
    let dir = tempfile::tempdir().unwrap();
    let src = three_channel(dir.path(), 40);
    let d = crate::data::read_qkds(&src).unwrap();
    let one = &split_channels(&d).unwrap()[0];
    let p = dir.path().join("one.qkds");
    write_qkds(one, &p).unwrap();
    let config = ExperimentConfig {
        train_path: p,
        ..channel_config(dir.path())
    };
    let err = channelwise_ensemble(&config, Vote::Majority).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Config);
}
