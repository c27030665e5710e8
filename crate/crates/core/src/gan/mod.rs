//! Visible-to-thermal translator. An RRDB generator is trained against a
//! multi-scale least-squares discriminator.

mod discriminator;
mod generator;
mod loss;
mod train;

pub use discriminator::{discriminator_forward, DiscriminatorConfig};
pub use generator::{
    dense_block_forward, generator_forward, init_dense_block, rrdb_forward, translate, translate_batch, GeneratorConfig,
};
pub use loss::{discriminator_loss, generator_loss, GanLossTerms, GeneratorLoss, FAKE_LABEL, REAL_LABEL};
pub use train::{
    mean_abs_error, train_gan, train_gan_with, GanHyper, GanTrainState, LossRecord, PairedSet, ValRecord, GAN_KIND,
};
