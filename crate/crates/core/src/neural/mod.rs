//! Forward-only inference for the class-conditioned variational source model.

mod bundle;
pub mod container;
pub mod kernels;
mod model;

pub use bundle::{Activation, EncoderOutput, Layer, LayerKind, LayerNorm, ModelBundle, Role, FEATURE_SPEC};
pub use container::{load_model, save_model};
pub use model::{
    features, infer_class, infer_latent_poe, neural_update, GainNorm, NeuralConfig, NeuralModel, NeuralSourceState,
    PoeConfig,
};
