//! Forward/backward function pairs for every layer the network presets use.

pub mod activation;
pub mod batchnorm;
pub mod concat;
pub mod conv;
pub mod dropout;
pub mod loss;
pub mod pool;
pub mod upsample;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward};
pub use batchnorm::{
    batchnorm_backward, batchnorm_backward_infer, batchnorm_forward, BatchNormCache, BatchNormGrads,
    BatchNormOutput, BatchNormParams, Mode,
};
pub use concat::{concat_channels, crop_spatial, crop_spatial_backward, split_channels};
pub use conv::{
    conv2d_backward, conv2d_forward, conv_output_extent, transposed_conv2d_backward, transposed_conv2d_forward,
    transposed_output_extent, ConvGeom, ConvGrads, ConvParams,
};
pub use dropout::{dropout, dropout_backward};
pub use loss::{softmax2, weighted_pixel_cross_entropy, LossOutput};
pub use pool::{maxpool2d, maxpool2d_backward, pooled_extent, PoolIndexMap};
pub use upsample::{bilinear_resize, upsample, upsample_backward, UpsampleAlgo};
