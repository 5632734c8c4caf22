//! SCSNet: simultaneous colorization and continuous-scale super-resolution.
//!
//! A gray low-resolution source (and optionally a colour reference) goes in,
//! a normalized Lab image at any magnification `p` comes out.

pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod imaging;
pub mod metrics;
pub mod model;
pub mod training;

pub use config::RunConfig;
pub use error::{Result, ScsError};
