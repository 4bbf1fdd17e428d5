//! Descriptors, encoders, a linear classifier and an evaluation harness for
//! measuring how strongly shape, color and texture drive image categories.

pub mod classifier;
pub mod color;
pub mod descriptor;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod pipeline;
pub mod sift;
pub mod synthetic;
pub mod texture;

pub use descriptor::DescriptorSet;
pub use error::{Error, Result};
