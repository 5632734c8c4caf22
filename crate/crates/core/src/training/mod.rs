//! Losses, optimizer, checkpoints and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod losses;
mod trainer;

pub use adam::{collect_gradients, Adam, AdamConfig, Moments};
pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use losses::{
    adversarial_losses, content_loss, discriminator_adversarial_loss, generator_adversarial_loss,
    perceptual_loss, total_loss, LossBreakdown, LossWeights, SurrogateNet, PERCEPTUAL_LAYERS,
};
pub use trainer::{derive_seed, load_pairs, StepLog, Stream, Trainer};
