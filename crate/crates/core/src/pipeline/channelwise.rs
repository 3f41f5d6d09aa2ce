//! One simplified autoencoder plus SVM per image channel, optionally
//! combined by a vote over the per-channel labels.

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{
    load_partitions, run_with_extractor, save_extractor, train_extractor, write_outputs, MethodResult, Partitions,
    RepetitionResult, RunArtifacts,
};
use crate::cae::Architecture;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::confusion_and_metrics;
use crate::nn::Tensor;
use crate::svm::label_for;

/// Channels needed before a vote is meaningful.
pub const MIN_VOTERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Vote {
    #[default]
    None,
    Majority,
    #[serde(alias = "inverse-loss-weighted")]
    InverseLoss,
}

impl std::str::FromStr for Vote {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Vote::None),
            "majority" => Ok(Vote::Majority),
            "inverse-loss" | "inverse-loss-weighted" => Ok(Vote::InverseLoss),
            other => Err(Error::config(format!(
                "unknown vote {other:?}; use none, majority or inverse-loss"
            ))),
        }
    }
}

/// Sign of the label sum; a tie counts as normal.
pub fn majority_vote(labels: &[i8]) -> i8 {
    label_for(labels.iter().map(|&l| f64::from(l)).sum())
}

/// `1/L_k` normalized to sum 1.
pub fn inverse_loss_weights(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.is_empty() || losses.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Numerical(format!(
            "inverse-loss weights need positive finite losses, got {losses:?}"
        )));
    }
    let inv: Vec<f64> = losses.iter().map(|l| 1.0 / l).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// Weighted label sum; its sign is the combined label.
pub fn weighted_vote(labels: &[i8], weights: &[f64]) -> f64 {
    labels.iter().zip(weights).map(|(&l, w)| f64::from(l) * w).sum()
}

/// Splits `(N, C, H, W)` into `C` single-channel datasets sharing labels and
/// source indices.
pub fn split_channels(dataset: &Dataset) -> Result<Vec<Dataset>> {
    let [n, c, h, w] = dataset.samples.shape();
    let plane = h * w;
    (0..c)
        .map(|k| {
            let mut data = Vec::with_capacity(n * plane);
            for i in 0..n {
                data.extend_from_slice(&dataset.samples.sample(i)[k * plane..(k + 1) * plane]);
            }
            Ok(Dataset {
                samples: Tensor::from_vec([n, 1, h, w], data)?,
                ..dataset.clone()
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ChannelwiseArtifacts {
    pub channels: Vec<RunArtifacts>,
    pub vote: Vote,
    /// Per-channel vote weights (uniform for majority).
    pub weights: Option<Vec<f64>>,
    pub combined: Option<RunArtifacts>,
}

fn combine(channels: &[RunArtifacts], vote: Vote, weights: &[f64]) -> Result<Vec<RepetitionResult>> {
    let mut combined = Vec::new();
    for base in &channels[0].repetitions {
        let peers: Vec<&RepetitionResult> = channels
            .iter()
            .filter_map(|c| c.repetitions.iter().find(|r| r.repetition == base.repetition))
            .collect();
        if peers.len() != channels.len() {
            log::warn!(
                "repetition {} failed in some channel; left out of the vote",
                base.repetition
            );
            continue;
        }
        if peers.iter().any(|p| p.test_indices != base.test_indices) {
            return Err(Error::data(format!(
                "channels drew different test subsets in repetition {}",
                base.repetition
            )));
        }
        let mut methods = Vec::new();
        for (mi, m) in base.methods.iter().enumerate() {
            let n = base.test_labels.len();
            let mut scores = Vec::with_capacity(n);
            let mut predicted = Vec::with_capacity(n);
            for i in 0..n {
                let labels: Vec<i8> = peers.iter().map(|p| p.methods[mi].predicted[i]).collect();
                let score = weighted_vote(&labels, weights);
                let label = if vote == Vote::Majority {
                    majority_vote(&labels)
                } else {
                    label_for(score)
                };
                scores.push(score);
                predicted.push(label);
            }
            let (confusion, metrics) = confusion_and_metrics(&base.test_labels, &predicted)?;
            methods.push(MethodResult {
                method: m.method,
                fit_size: m.fit_size,
                fit_anomalies: m.fit_anomalies,
                confusion,
                metrics,
                iterations: 0,
                rho: 0.0,
                gamma: None,
                scores,
                predicted,
                model: None,
            });
        }
        combined.push(RepetitionResult {
            methods,
            ..base.clone()
        });
    }
    if combined.is_empty() {
        return Err(Error::data("no repetition succeeded in every channel"));
    }
    Ok(combined)
}

/// Runs the full pipeline once per channel with the simplified architecture
/// (outputs under `channel<k>/`), then optionally votes (outputs under
/// `combined/`). The combined metrics come from the combined labels.
pub fn channelwise_ensemble(config: &ExperimentConfig, vote: Vote) -> Result<ChannelwiseArtifacts> {
    config.validate()?;
    let parts = load_partitions(config).map_err(|e| e.in_stage("load"))?;
    let channel_count = parts.pool.samples.channels();
    if vote != Vote::None && channel_count < MIN_VOTERS {
        return Err(Error::config(format!(
            "a {vote:?} vote needs at least {MIN_VOTERS} channels, the dataset has {channel_count}"
        )));
    }
    let pools = split_channels(&parts.pool)?;
    let test_pools = parts.test_pool.as_ref().map(split_channels).transpose()?;
    let channel_config = ExperimentConfig {
        architecture: Architecture::Simplified,
        ..config.clone()
    };

    let mut channels = Vec::with_capacity(channel_count);
    for (k, pool) in pools.into_iter().enumerate() {
        log::info!("channel {k}");
        let out = config.output_dir.join(format!("channel{k}"));
        let parts = Partitions {
            pool,
            test_pool: test_pools.as_ref().map(|t| t[k].clone()),
        };
        let model = train_extractor(&channel_config, &parts.pool).map_err(|e| e.in_stage("cae-training"))?;
        let (checkpoint, loss) = save_extractor(&model, &out)?;
        let mut artifacts = run_with_extractor(&channel_config, &parts, Some(&model), &out)?;
        artifacts.checkpoint = Some(checkpoint);
        artifacts.loss_curve = Some(loss);
        channels.push(artifacts);
    }

    if vote == Vote::None {
        return Ok(ChannelwiseArtifacts {
            channels,
            vote,
            weights: None,
            combined: None,
        });
    }
    if channels.len() < MIN_VOTERS {
        return Err(Error::config(format!(
            "a vote needs at least {MIN_VOTERS} channel results, got {}",
            channels.len()
        )));
    }
    let weights = match vote {
        Vote::InverseLoss => {
            let losses = channels
                .iter()
                .map(|c| {
                    c.final_train_loss
                        .ok_or_else(|| Error::data("channel has no training loss"))
                })
                .collect::<Result<Vec<f64>>>()?;
            inverse_loss_weights(&losses)?
        }
        _ => vec![1.0 / channels.len() as f64; channels.len()],
    };
    let reps = combine(&channels, vote, &weights)?;
    let combined = write_outputs(config, reps, Vec::new(), &config.output_dir.join("combined"), None)?;
    std::fs::write(
        config.output_dir.join("combined").join("weights.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "vote": vote, "weights": weights }))? + "\n",
    )
    .map_err(|e| Error::io(config.output_dir.join("combined"), e))?;
    Ok(ChannelwiseArtifacts {
        channels,
        vote,
        weights: Some(weights),
        combined: Some(combined),
    })
}
