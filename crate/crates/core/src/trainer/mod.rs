//! Full objective, optimization loop, hyperparameters and artifacts.

mod config;
mod io;
mod model;
mod objective;

pub use config::{AblationFlags, Hyperparameters};
pub use io::{
    export_embeddings, load_snapshot, read_embeddings, save_snapshot, write_loss_history, EMBEDDINGS_FILE,
    LOSS_HISTORY_FILE, SNAPSHOT_FILE,
};
pub use model::{train, Augment, EpochInputs, EpochRecord, Model};
pub use objective::{info_regularization, infomin_reward, total_loss, LossTerms};
