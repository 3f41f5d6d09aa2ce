//! End-to-end experiments: autoencoder training, feature extraction, kernel
//! matrices, the four SVM variants, repeated runs and the channel-wise
//! ensemble.

mod channelwise;
mod config;
mod files;
mod run;

pub use channelwise::{
    channelwise_ensemble, inverse_loss_weights, majority_vote, split_channels, weighted_vote, ChannelwiseArtifacts,
    Vote, MIN_VOTERS,
};
pub use config::{ExperimentConfig, Method};
pub use files::{read_features_csv, read_scores_csv, write_features_csv, write_scores_csv, FeatureTable, ScoreTable};
pub use run::{
    draw_subsample, features_for, load_partitions, metrics_document, run_experiment, run_repetition,
    run_with_extractor, train_extractor, MethodResult, Partitions, RepetitionFailure, RepetitionResult, RunArtifacts,
    Subsample,
};

#[cfg(test)]
mod tests;
