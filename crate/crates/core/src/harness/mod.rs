//! Dataset ingestion, feature store, synthetic benchmark, experiment
//! configuration and the end-to-end pipeline.

mod dataset;
mod descriptors;
mod store;
mod synth;

pub use dataset::{load_dataset, parse_dataset, Dataset, Split, VideoRecord};
pub use descriptors::{read_descriptors, write_descriptors};
pub use store::{read_table, write_table, FeatureStore, FeatureTable, FEATURE_MAGIC};
pub use synth::{
    is_motion_category, synth_generate, train_codebooks, Concepts, SynthConfig, SynthData, ACTIONS, OBJECTS, SCENES,
};

mod config;
mod experiment;

pub use config::{EvaluatorSpec, ExperimentConfig, LmTrainConfig, ModelSpec};
pub use experiment::{
    bind_models, evaluator_accuracy, evaluator_config, generate_stage, lm_config, prepare, rerank_stage,
    results_table, run_experiment, score_stage, split_perplexity, stage_rng, train_evaluator_stage, train_generator,
    write_chosen, write_results, ExperimentResult, Layout, Prepared, ResultRow,
};

pub mod commands;
