//! Minimal forward/backward engine: affine, conv2d, 2x2 max-pool, relu,
//! dropout and softmax cross-entropy, trained with Adam.

pub mod adam;
pub mod gradcheck;
pub mod network;
pub mod ops;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use network::{
    accuracy, argmax_rows, CnnSpec, DropoutPass, LayerKind, LayerSizeMode, LayerSpec, MlpSpec, Network,
};
pub use ops::Padding;
