//! Minimal deterministic tensor math with reverse-mode differentiation.
//!
//! Computation is recorded on a [`Graph`] (a tape of nodes in creation
//! order) and differentiated by walking the tape backwards. Everything runs
//! single-threaded with a fixed reduction order, so identical inputs give
//! bit-identical values and gradients. All types are generic over [`Real`]:
//! `f32` for training, `f64` for gradient checks.

mod adam;
mod graph;
mod kernels;
mod layers;
mod tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Gradients, Graph, Var};
pub use layers::{
    encoder_layer, layer_norm, linear, multi_head_self_attention, positional_encoding,
    AttentionParams, EncoderParams, LAYER_NORM_EPS,
};
pub use tensor::Tensor;

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("model dimension {0} must be even for the positional encoding")]
    OddModelDim(usize),
    #[error("model dimension {dim} is not divisible by {heads} heads")]
    HeadDivisibility { dim: usize, heads: usize },
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::ShapeMismatch {
        op,
        detail: detail.into(),
    }
}
