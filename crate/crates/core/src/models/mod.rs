//! The early-fusion and Siamese patch classifiers, their training loop and
//! the model file format.

mod check;
mod io;
mod network;
mod train;

pub use check::{branch_features, PairLoss};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use network::{
    build_ef, build_siam, parameter_count, ArchKind, Architecture, Network, Pass, EF_CONV_WIDTHS, EF_HIDDEN, KERNEL,
    SIAM_CONV_WIDTHS, SIAM_HIDDEN, SUPPORTED_CHANNELS,
};
pub use train::{train, train_with, ChangeModel, ClassWeightSource, EpochLog, TrainConfig, TrainLog};
