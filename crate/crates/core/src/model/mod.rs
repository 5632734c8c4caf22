//! Generator and discriminator networks.

pub mod config;
mod discriminator;
mod generator;
pub mod params;

pub use config::{Mode, ScsNetConfig, CPM_LAYERS, LEAKY_SLOPE};
pub use discriminator::Discriminator;
pub use generator::{cpm_coords, output_size, Generator, GeneratorTrace, VcAttnTrace};
pub use params::{Ctx, Init, ParamSet, ParamSpec};
