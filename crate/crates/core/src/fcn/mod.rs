//! The counting network, its optimizer and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod net;
pub mod predict;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::{Conv, Tensor};
pub use net::{backward, forward, forward_tensor, FcnParams, ForwardCache, Widths};
pub use predict::{predict_counts, Prediction};
pub use train::{train, train_step, EpochLog, Sample, TrainConfig, TrainOutcome};
