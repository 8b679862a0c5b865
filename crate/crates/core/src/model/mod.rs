//! The cascaded reconstruction network, its joint loss and training loop.

pub mod config;
pub mod loss;
pub mod network;
pub mod train;

pub use config::{KtNextConfig, XfInputMode};
pub use loss::{joint_loss, xf_target};
pub use network::{crnn_recon, ktnext_forward, xfcnn_forward, CascadeOutput, CrnnHidden, KtNextOutput};
pub use train::{fit, fit_from, TrainConfig, TrainOutcome, TrainRecord};
