//! Small differentiable network stack: tape autodiff, MLP, GRU and CNN
//! blocks, the oracle and student policies, and parameter snapshots.

pub mod adam;
pub mod graph;
pub mod layers;
pub mod params;
pub mod policy;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use graph::{ConvShape, Gradients, Graph, PoolShape, Var};
pub use layers::{cnn_forward, gru_forward, mlp_forward, Cnn, Gru, Linear, Mlp};
pub use params::{Param, ParamStore};
pub use policy::*;
pub use tensor::Tensor;
