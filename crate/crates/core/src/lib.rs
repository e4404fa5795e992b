//! Self-supervised stereo matching under adverse weather, desk scale.
//!
//! The crate provides a reverse-mode autodiff engine (`autodiff`), the warp /
//! loss / mask / metric formulas (`stereo`), a procedural stereo-scene and
//! weather generator with exact ground truth (`weather`), a semi-global
//! matching baseline (`sgm`), the dual-branch iterative-refinement stereo
//! model (`model`), and the three-stage training pipeline (`pipeline`).

pub mod array;
pub mod autodiff;
pub mod error;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sgm;
pub mod stereo;
pub mod weather;

pub use array::Array;
pub use autodiff::{check_gradient, complex_rescale, concat_channels, Graph, Tensor};
pub use error::{Result, RoseError};
pub use model::{ModelBinding, ModelConfig, Variant, WeightStore};
pub use pipeline::{MetricsReport, PipelineConfig};
pub use rng::{Rng, RNG_ALGORITHM};
pub use stereo::{ConfidenceMask, D1Combine, LossWeights};
