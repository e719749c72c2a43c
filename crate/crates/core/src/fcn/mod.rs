//! From-scratch FCN-8s: tensors, differentiable ops, the network, SGD
//! training and checkpoints.

pub mod checkpoint;
pub mod net;
pub mod ops;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use net::{
    activation_pattern, fcn8s_backward, fcn8s_forward, fcn8s_forward_shapes, image_to_tensor, loss_and_grad,
    ActivationPattern, Fcn8sParams, ForwardShapes, NetworkConfig, StackConfig, INPUT_MULTIPLE, NUM_STACKS,
};
pub use ops::{
    bilinear_upsample, bilinear_upsample_backward, conv2d_backward, conv2d_forward, maxpool2d,
    maxpool2d_backward, relu, relu_backward, softmax, softmax_ce_masked, ConvParams, PoolIndices,
};
pub use tensor::{Real, Tensor};
pub use train::{train, Sgd, SgdConfig, TrainConfig, TrainPage, Trainer};
