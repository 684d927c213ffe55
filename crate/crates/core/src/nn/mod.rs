//! Static-graph neural-network engine in f64: layers with hand-written backward
//! passes, softmax cross-entropy, Adam, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;

pub use gradcheck::{gradient_check, CheckConfig, GradCheck, Objective};
pub use layers::{BatchNorm1d, Conv1d, Dense, Layer, LayerSpec, Mode, Padding, Param, Pinned, BN_EPS};
pub use loss::softmax_xent;
pub use network::Network;
pub use optim::{adam_update, Adam};
pub use tensor::Tensor;
