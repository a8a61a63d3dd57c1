pub mod color;
pub mod composite;
pub mod concat;
pub mod error;
pub mod harness;
pub mod jsonl;
pub mod manifest;
pub mod metrics;
pub mod prompts;
pub mod raster;
pub mod render;
pub mod respfilter;
pub mod sft;
pub mod text;
pub mod watermark;

pub use error::{Error, Result};
