//! Dense tensors, reverse-mode differentiation and the layers built on them.

mod gradcheck;
mod layers;
mod params;
mod rng;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_terms, relative_error, GradCheckReport, DENOM_FLOOR};
pub use layers::{multi_head_attention, Conv, LayerNorm, Linear, SelfAttention, LN_EPS};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::{mix64, seed_for, Rng};
pub use tape::{gelu, gelu_grad, softmax_in_place, ConvGeom, Gradients, Tape, Var};
pub use tensor::Tensor;
