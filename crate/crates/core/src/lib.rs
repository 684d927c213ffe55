//! Chaotic time-series generation, chaos measures, and a small neural-network
//! engine for classifying series as chaotic or not.

pub mod dynsys;
pub mod error;
pub mod measures;
pub mod nn;
pub mod pipeline;
pub mod zoo;

pub use error::{Error, Result};
pub use measures::Class;
pub use nn::{Network, Tensor};
pub use pipeline::{LabeledDataset, MetricsReport};
pub use zoo::{Architecture, ArchitectureId};
