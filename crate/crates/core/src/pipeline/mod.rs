//! End-to-end runs: config parsing, deterministic data streams, the three
//! training stages, the evaluation harness, and the gradient-check suite.

pub mod artifacts;
pub mod config;
pub mod data;
pub mod eval;
pub mod gradsuite;
pub mod optim;
pub mod train;

pub use artifacts::{base_manifest, config_hash, manifest_exists, write_manifest, MANIFEST_NAME};
pub use config::{keys_for_command, parse_config, MaskPolicy, PipelineConfig, PretrainLoss, Stage};
pub use eval::{
    evaluate, flip_predict_right, forward_final, write_report, ConditionMetrics,
    DisparityPredictor, MetricsReport, ModelPredictor, OraclePredictor, SgmPredictor,
};
pub use gradsuite::{format_table, run_gradient_suite, CheckOutcome, GRAD_TOLERANCE};
pub use optim::{lr_at, AdamW};
pub use train::{run_pretrain, run_step1, run_step2, CHECKPOINT_NAME, LOSS_CURVE_NAME};
