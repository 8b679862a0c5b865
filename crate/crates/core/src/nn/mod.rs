//! Differentiable building blocks: tensors, dilated convolutions,
//! bidirectional convolutional-recurrent layers, parameters and ADAM.

pub mod adam;
pub mod conv;
pub mod crnn;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_backward};
pub use crnn::{bidir_layer, crnn_bidir_layer, CrnnLayerVars, CrnnLayerWeights};
pub use graph::{Gradients, Graph, Var};
pub use params::{he_init, he_init_with, load_params, save_params, Param, ParamStore};
pub use tensor::Tensor4;
