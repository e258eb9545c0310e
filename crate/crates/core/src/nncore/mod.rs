//! Small differentiable building blocks with hand-written backward passes.
//!
//! Every layer works on batch-major `Array2` values (one row per sample).
//! Forward passes take `&self` and return a cache; backward passes consume the
//! cache, accumulate parameter gradients into [`Param::grad`] when asked to,
//! and return the gradient with respect to the layer input.

mod activation;
mod adam;
mod checkpoint;
mod dense;
mod gaussian;
pub mod gradcheck;
mod lstm;
mod mlp;
mod norm;
mod param;

pub use activation::{relu, relu_backward, sigmoid, tanh_backward};
pub use adam::{adam_update, Adam, AdamHyper};
pub use checkpoint::Checkpoint;
pub use dense::Dense;
pub use gaussian::{
    gaussian_head_backward, gaussian_head_sample, gaussian_log_prob, normal_matrix, GaussianCache,
    PolicySample, LOG_STD_MAX, LOG_STD_MIN, TANH_EPS,
};
pub use lstm::{Lstm, LstmCache, LstmStepCache};
pub use mlp::{Mlp, MlpCache};
pub use norm::{LayerNorm, LayerNormCache, LN_EPS};
pub use param::{
    any_non_finite, copy_params, flat_values, param_count, soft_update, zero_grads, Param,
    Parameterized,
};
