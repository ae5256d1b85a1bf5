//! The three networks (orientation CNN, transformer LUT generator, GAN
//! reconstructor), their losses, the end-to-end composition and the
//! staged training loops.

pub mod config;
pub mod losses;
pub mod lutformer;
pub mod orientation;
pub mod pipeline;
pub mod reconstructor;
pub mod train;

pub use config::{
    LossWeights, LutFormerConfig, OrientationNetConfig, Preset, ReconstructorConfig, RunConfig,
};
pub use lutformer::LutFormer;
pub use orientation::{decode_angles, encode_angles, OrientationNet};
pub use pipeline::{EndToEnd, LutSource, ReconstructionMode};
pub use reconstructor::{Discriminator, Generator, PerceptualExtractor};
pub use train::{train_stage, ModelBundle, Stage, TrainOutcome, TrainSchedule};
