//! Dense double-precision tensors and hand-written forward/backward passes
//! for exactly the layers the stance model uses.

mod adam;
pub mod gradcheck;
pub mod layercheck;
mod layers;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{
    conv1d_maxpool, conv1d_maxpool_backward, dense, dense_backward, embed_backward, embed_lookup,
    relu, relu_backward, softmax_cross_entropy, softmax_cross_entropy_backward, ConvPool,
    GradientReversal,
};
pub use tensor::{Parameter, Tensor};
