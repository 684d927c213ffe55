use serde::{Deserialize, Serialize};

/// Entropy threshold for the discrete-map labeling rule.
pub const ENTROPY_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Class {
    /// Non-chaotic.
    NC = 0,
    /// Chaotic.
    C = 1,
}

impl Class {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Class> {
        match i {
            0 => Some(Class::NC),
            1 => Some(Class::C),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosLabel {
    pub value: Class,
    pub lambda: f64,
    pub entropy: Option<f64>,
}

/// With an entropy: chaotic iff lambda > 0 and entropy > threshold.
/// Without: chaotic iff lambda > 0.
pub fn label_series(lambda: f64, entropy: Option<f64>, threshold: f64) -> ChaosLabel {
    let chaotic = lambda > 0.0 && entropy.is_none_or(|s| s > threshold);
    ChaosLabel {
        value: if chaotic { Class::C } else { Class::NC },
        lambda,
        entropy,
    }
}
