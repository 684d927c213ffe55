//! Chaos measures, labeling rules, and series normalization.

mod entropy;
mod label;
mod lyapunov;
mod normalize;

pub use entropy::shannon_entropy;
pub use label::{label_series, ChaosLabel, Class, ENTROPY_THRESHOLD};
pub use lyapunov::{
    continuous_lyapunov, discrete_lyapunov, two_trajectory_lyapunov, LyapunovSettings,
    DERIVATIVE_FLOOR, DISCRETE_DISCARD,
};
pub use normalize::{normalize_minmax, NormalizedSeries};
