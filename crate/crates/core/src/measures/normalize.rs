use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub samples: Vec<f64>,
    pub original_min: f64,
    pub original_max: f64,
}

/// Maps the series affinely onto [0, 1]; a constant series maps to all zeros.
pub fn normalize_minmax(series: &[f64]) -> NormalizedSeries {
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    let samples = if range > 0.0 {
        series.iter().map(|&x| (x - lo) / range).collect()
    } else {
        vec![0.0; series.len()]
    };
    NormalizedSeries {
        samples,
        original_min: lo,
        original_max: hi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_minmax(&[2.0, 4.0, 6.0]).samples, vec![0.0, 0.5, 1.0]);
        let c = normalize_minmax(&[5.0, 5.0, 5.0]);
        assert_eq!(c.samples, vec![0.0; 3]);
        assert_eq!((c.original_min, c.original_max), (5.0, 5.0));
    }

    proptest! {
        #[test]
        fn extremes_affine_invariance_and_idempotence(xs in prop::collection::vec(-100.0f64..100.0, 2..200), a in 0.1f64..10.0, b in -50.0f64..50.0) {
            let n = normalize_minmax(&xs);
            if n.original_max > n.original_min {
                let lo = n.samples.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = n.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!((lo, hi), (0.0, 1.0));
                let again = normalize_minmax(&n.samples);
                for (p, q) in again.samples.iter().zip(&n.samples) {
                    prop_assert!((p - q).abs() <= 1e-15);
                }
                let shifted: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let m = normalize_minmax(&shifted);
                for (p, q) in m.samples.iter().zip(&n.samples) {
                    prop_assert!((p - q).abs() < 1e-9);
                }
            }
        }
    }
}
