//! Fully connected tanh networks: forward pass with per-layer trace, backprop, MAP training
//! with Adam, and a versioned binary checkpoint format.

mod checkpoint;
mod network;
mod optim;
mod train;

pub use checkpoint::{load_network, read_network, save_network, write_network, NETWORK_MAGIC, NETWORK_VERSION};
pub use network::{backward, forward, Activation, ForwardTrace, Gradients, MlpArchitecture, MlpNetwork};
pub use optim::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{softmax, train_map, write_training_log, LossKind, TrainConfig, TrainOutcome, LOG_EVERY};
