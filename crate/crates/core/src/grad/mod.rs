//! Dense fp64 reverse-mode differentiation: tensors, the tape, layer
//! stacks, and Adam.

mod net;
mod optim;
mod tape;
mod tensor;

pub use net::{LayerKind, LayerSpec, Net, BN_EPS, BN_MOMENTUM};
pub use optim::{AdamConfig, ParamSet};
pub use tape::{Gradients, Mode, NodeId, Tape, LOG_CLAMP};
pub use tensor::{argmax, Tensor2};
