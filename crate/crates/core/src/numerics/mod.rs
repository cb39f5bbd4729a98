//! Dense tensors, reverse-mode differentiation, categorical latents and
//! optimization.

pub mod dist;
pub mod gradcheck;
pub mod graph;
pub mod nn;
pub mod optim;
pub mod params;
pub mod tensor;

pub use dist::{
    kl_balanced, kl_balanced_rows, kl_categorical, kl_rows, sample_categorical_st, CategoricalDist, CategoricalVars,
};
pub use graph::{softmax_rows, Gradients, Graph, Var};
pub use nn::{Activation, Gru, Linear, Mlp};
pub use optim::{clip_grad_norm, global_norm, Adam};
pub use params::{Binding, ParamId, ParamStore};
pub use tensor::Tensor;
