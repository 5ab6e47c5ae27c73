//! Convolutional building blocks, each with an exact hand-derived backward
//! pass. Feature maps are channel-last `(H, W, C)`.

mod activation;
mod concat;
mod conv;
mod fc;
mod loss;
mod pool;

pub use activation::Activation;
pub use concat::{concat_channels, split_channels};
pub use conv::{conv2d_backward, conv2d_forward, output_extent, Conv2dParams, ConvGrads};
pub use fc::{fc_backward, fc_forward, FcGrads, FcParams};
pub use loss::{softmax, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use pool::{maxpool_backward, maxpool_forward, PoolRecord};
