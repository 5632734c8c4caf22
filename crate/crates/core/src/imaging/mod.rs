//! Colour spaces, resampling, synthetic data, augmentation and image files.

pub mod augment;
pub mod color;
pub mod io;
pub mod pair;
pub mod resample;
pub mod synth;

pub use augment::{augment_reference, ElasticParams};
pub use color::{lab_to_rgb, rgb_to_lab, LabImage, Planar, RgbImage};
pub use io::{load_dataset, load_rgb, read_manifest, save_rgb, write_manifest, MANIFEST_NAME};
pub use pair::{make_pair, scaled_dim, TrainBatch, TrainPair};
pub use resample::{bicubic_downsample, resize_bicubic};
pub use synth::synth_dataset;
