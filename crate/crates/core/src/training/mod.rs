//! Loss, optimizer, learning-rate schedule, augmentation and the epoch loop.

mod augment;
mod loss;
mod schedule;
mod sgd;
mod trainer;

pub use augment::{augment, AugmentConfig, AugmentDraw};
pub use loss::{seg_loss, LossWeights, DICE_SMOOTH};
pub use schedule::LrSchedule;
pub use sgd::{Sgd, SgdConfig};
pub use trainer::{read_loss_log, train, write_loss_log, LogRow, TrainConfig};
