//! Differentiable array kernel.
//!
//! Every layer used by the encoder-decoder has a forward function and an
//! exact analytic backward function. Image tensors are laid out
//! `[batch, height, width, channels]`; convolution kernels are
//! `[k, k, c_in, c_out]`; dense weights are `[d_in, d_out]`.
//!
//! There is no autodiff engine: callers cache what the backward pass needs
//! and chain the adjoints themselves.

mod activation;
mod adam;
mod attention;
mod conv;
mod deconv;
mod dense;
mod gradcheck;
mod init;
mod loss;
mod pool;
mod scalar;
mod tensor;

pub use activation::{
    relu_backward, relu_forward, sigmoid_backward, sigmoid_forward, softmax_backward,
    softmax_forward,
};
pub use adam::{adam_step, AdamHyper, AdamState};
pub use attention::{self_attention_backward, self_attention_forward, AttentionCache, AttentionGrads, AttentionParams};
pub use conv::{conv2d_backward, conv2d_forward, conv_output_extent, ConvGrads};
pub use deconv::{deconv2d_backward, deconv2d_forward, deconv_output_extent};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use gradcheck::{GradCheck, GradCheckEntry, GradCheckReport, FD_STEP};
pub use init::xavier_uniform;
pub use loss::{combined_loss, cross_entropy, huber_loss, huber_scalar, CrossEntropy};
pub use pool::{maxpool2_backward, maxpool2_forward, PoolIndex};
pub use scalar::{NumericWidth, Scalar};
pub use tensor::Tensor;

pub(crate) use activation::sigmoid;
pub(crate) use scalar::gemm;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{0}: backward called without cached forward activations")]
    MissingCache(&'static str),
    #[error("{op}: non-finite value encountered")]
    NonFinite { op: &'static str },
    #[error("huber loss: mask has no active cells")]
    EmptyMask,
    #[error("combined loss: both task weights are zero")]
    ZeroWeights,
}

pub type Result<T> = std::result::Result<T, NumericsError>;
