//! Feed-forward classifiers: specs, parameters, losses, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod network;
pub mod presets;
pub mod spec;
pub mod train;

pub use adam::AdamState;
pub use checkpoint::CHECKPOINT_MAGIC;
pub use loss::{cross_entropy, entropy, one_hot};
pub use network::{forward_on_tape, init_parameters, Checkpoint, Mode, Param};
pub use spec::{Activation, LayerSpec, NetworkSpec};
pub use train::{continue_training, train_classifier, TrainConfig, TrainOutcome};
