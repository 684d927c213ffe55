use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("integration failed for rho = {rho}: step size {step:e} underflowed at t = {t}")]
    Integration { rho: f64, t: f64, step: f64 },

    #[error("Kuramoto-Sivashinsky solution blew up for alpha = {alpha} at step {step}")]
    Instability { alpha: f64, step: usize },

    #[error("backward pass called without a cached forward pass")]
    NoForwardCache,

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn at_layer(self, index: usize) -> Error {
        match self {
            e @ Error::Layer { .. } => e,
            e => Error::Layer {
                index,
                source: Box::new(e),
            },
        }
    }
}
