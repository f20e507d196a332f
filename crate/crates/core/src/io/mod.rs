//! File formats and the command-line interface.

pub mod cli;
pub mod png;
pub mod scene;
pub mod tensor;

pub use png::{emit_png, Normalization, PngSidecar};
pub use scene::SceneFile;
pub use tensor::{read_tensor, write_tensor, Geometry, Measurement, Tensor, TensorHeader};
