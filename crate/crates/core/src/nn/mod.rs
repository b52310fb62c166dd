//! Minimal neural-network toolkit: a gradient tape, a handful of layers and
//! an Adam optimizer. Sized for the per-agent models of the arena.

pub mod layers;
pub mod optim;
pub mod tape;

pub use layers::{
    highway_combine, highway_forward, Activation, AdditiveAttention, ConvHighwayStack, Gru, Highway, Linear, Mlp,
};
pub use optim::Adam;
pub use tape::{Backward, Grads, ParamId, ParamStore, Tape, Tensor, Var};
