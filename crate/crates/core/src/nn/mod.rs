//! Dense tensors, a reverse-mode tape, LSTM/linear layers, Adam and a
//! finite-difference gradient checker.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod param;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, Header};
pub use gradcheck::{gradient_check, relative_error};
pub use graph::{softmax, Gradients, Graph, Var};
pub use layers::{lstm_step, Linear, LstmWeights};
pub use param::{Group, ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
