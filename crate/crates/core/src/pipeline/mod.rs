//! Dataset assembly, training, evaluation, and the experiment recipes.

mod dataset;
mod recipes;
mod train;

pub use dataset::*;
pub use recipes::*;
pub use train::*;
