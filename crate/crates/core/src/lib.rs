//! Deep video steganography: hide a secret clip inside a cover clip by
//! encoding reference frames and inter-frame residuals with separate networks.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod labeling;
pub mod lsb;
pub mod media;
pub mod nets;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
