//! The built-in model: a shared single-layer encoder over mean-pooled
//! embeddings with one head per task.

pub mod checkpoint;
pub mod featurize;
pub mod forward;
pub mod optim;
pub mod params;
pub mod text;
pub mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, Model};
pub use featurize::{scoring_head, training_examples};
pub use forward::{argmax, encode, forward, loss_and_grad, predict, DropoutSpec, Example, Features, Gradient};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{Biaffine, Block, Dense, Dims, Head, HeadId, ModelParams};
pub use text::{tokenize, Vocab};
pub use train::{epoch_schedule, target_accuracy, train_interleaved, write_log, Batch, EpochRecord, TaskData, TrainConfig, TrainOutcome};
