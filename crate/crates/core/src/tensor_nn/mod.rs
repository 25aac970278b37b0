//! Dense-tensor numeric core: layer forward/backward kernels, losses, Adam.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod convlstm;
pub mod dense;
pub mod loss;
pub mod network;
pub mod pool;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d, conv2d_backward, conv3d, conv3d_backward, Padding};
pub use convlstm::{convlstm2d_sequence, convlstm2d_step, ConvLstmParams};
pub use dense::dense;
pub use loss::{mae_metric, mse_loss};
pub use network::{BatchResult, GradStore, LayerSpec, Network, ParamKey, ParamRole, ParamSet};
pub use pool::{maxpool2d, maxpool3d};
pub use tensor::Tensor;
