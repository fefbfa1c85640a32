//! The joint extraction and generation network.

pub mod beam;
mod config;
pub mod infer;
pub mod losses;
pub mod network;
pub mod train;

pub use config::{Mode, ModelConfig};
pub use network::KgModel;
