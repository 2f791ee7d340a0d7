//! Differentiable building blocks with hand-written backward passes.
//!
//! Everything runs in `f64`. Forward functions are pure; the `*_backward`
//! counterparts take the cache produced by the matching forward call.

mod adam;
mod attention;
mod gradcheck;
mod ops;
mod params;
mod tensor;
mod transformer;

pub use adam::{adam_step, AdamState};
pub use attention::{multi_head_attention, AttentionMask, AttentionWeights};
pub(crate) use attention::BlockLayout;
pub use gradcheck::{grad_check, grad_check_by_tensor, GradCheckConfig};
pub use ops::{
    cross_entropy, dropout, dropout_mask, layer_norm, layer_norm_backward, layer_norm_forward, linear,
    linear_backward, positional_encoding, relu, relu_backward, softmax, softmax_backward, weighted_nll,
    LayerNormCache, LayerNormGrads, LinearGrads, LAYER_NORM_EPS,
};
pub(crate) use ops::apply_mask;
pub use params::{glorot, normal, Gradients, ParameterSet, SNAPSHOT_FORMAT_VERSION};
pub use tensor::Tensor;
pub use transformer::{init_transformer_layer, transformer_layer, TransformerWeights, FFL_EXPANSION};
pub(crate) use transformer::{transformer_backward, transformer_forward, SublayerDropout, TransformerCache};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("width {width} is not divisible by {heads} attention heads")]
    HeadCount { width: usize, heads: usize },
    #[error("positional encoding needs an even width, got {0}")]
    OddWidth(usize),
    #[error("missing parameter `{0}`")]
    MissingParameter(String),
    #[error("parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
