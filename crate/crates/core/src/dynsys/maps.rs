//! The two one-dimensional discrete maps: logistic and sine-circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bare rotation number of the sine-circle map.
pub const SINE_CIRCLE_OMEGA: f64 = 0.606661;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapSystem {
    Logistic,
    SineCircle,
}

impl MapSystem {
    /// Admissible bifurcation-parameter interval.
    pub fn mu_range(self) -> (f64, f64) {
        match self {
            MapSystem::Logistic => (0.0, 4.0),
            MapSystem::SineCircle => (0.0, 5.0),
        }
    }

    #[inline]
    pub fn step(self, mu: f64, x: f64) -> f64 {
        match self {
            MapSystem::Logistic => mu * x * (1.0 - x),
            MapSystem::SineCircle => {
                let y = x + SINE_CIRCLE_OMEGA - mu / (2.0 * PI) * (2.0 * PI * x).sin();
                wrap_unit(y)
            }
        }
    }

    /// Derivative of the map with respect to the state.
    #[inline]
    pub fn derivative(self, mu: f64, x: f64) -> f64 {
        match self {
            MapSystem::Logistic => mu * (1.0 - 2.0 * x),
            MapSystem::SineCircle => 1.0 - mu * (2.0 * PI * x).cos(),
        }
    }
}

/// Reduces to [0, 1). `rem_euclid` can round up to exactly 1.0 for tiny negative inputs.
#[inline]
fn wrap_unit(y: f64) -> f64 {
    let r = y.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOrbit {
    pub system: MapSystem,
    pub mu: f64,
    pub x0: f64,
    pub samples: Vec<f64>,
}

impl MapOrbit {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn iterate_logistic(mu: f64, x0: f64, n_steps: usize) -> Result<MapOrbit> {
    iterate(MapSystem::Logistic, mu, x0, n_steps)
}

pub fn iterate_sine_circle(mu: f64, theta0: f64, n_steps: usize) -> Result<MapOrbit> {
    iterate(MapSystem::SineCircle, mu, theta0, n_steps)
}

/// Iterates `system` for `n_steps` steps; the orbit holds `n_steps + 1` samples starting at `x0`.
pub fn iterate(system: MapSystem, mu: f64, x0: f64, n_steps: usize) -> Result<MapOrbit> {
    let (lo, hi) = system.mu_range();
    if !(lo..=hi).contains(&mu) {
        return Err(Error::Domain(format!(
            "{system:?} parameter mu = {mu} outside [{lo}, {hi}]"
        )));
    }
    let state_ok = match system {
        MapSystem::Logistic => (0.0..=1.0).contains(&x0),
        MapSystem::SineCircle => (0.0..1.0).contains(&x0),
    };
    if !state_ok {
        return Err(Error::Domain(format!(
            "{system:?} initial state {x0} outside the map's domain"
        )));
    }
    if n_steps == 0 {
        return Err(Error::Domain("n_steps must be at least 1".into()));
    }

    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    samples.push(x);
    for _ in 0..n_steps {
        x = system.step(mu, x);
        samples.push(x);
    }
    Ok(MapOrbit {
        system,
        mu,
        x0,
        samples,
    })
}

pub fn map_derivative(system: MapSystem, mu: f64, state: f64) -> f64 {
    system.derivative(mu, state)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smallest period p such that the last samples repeat with period p (within tol).
    fn tail_period(xs: &[f64], max_p: usize, tol: f64) -> Option<usize> {
        let n = xs.len();
        (1..=max_p).find(|&p| (0..4 * p).all(|i| (xs[n - 1 - i] - xs[n - 1 - i - p]).abs() < tol))
    }

    #[test]
    fn logistic_trivial_orbits() {
        assert_eq!(iterate_logistic(4.0, 0.5, 3).unwrap().samples, vec![0.5, 1.0, 0.0, 0.0]);
        assert_eq!(iterate_logistic(0.0, 0.5, 2).unwrap().samples, vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn logistic_period_four_at_3_5() {
        let orbit = iterate_logistic(3.5, 0.5, 10_000).unwrap();
        assert_eq!(tail_period(&orbit.samples, 64, 1e-10), Some(4));
        let mut cycle: Vec<f64> = orbit.samples[orbit.len() - 4..].to_vec();
        cycle.sort_by(f64::total_cmp);
        for (got, want) in cycle.iter().zip([0.3828, 0.5009, 0.8269, 0.8750]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn sine_circle_pure_rotation() {
        let orbit = iterate_sine_circle(0.0, 0.5, 2).unwrap();
        let want = [0.5, 0.106661, 0.713322];
        for (g, w) in orbit.samples.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_circle_periodic_and_chaotic_examples() {
        let periodic = iterate_sine_circle(2.1, 0.5, 1000).unwrap();
        assert!(tail_period(&periodic.samples, 100, 1e-8).is_some());
        let chaotic = iterate_sine_circle(2.3, 0.5, 1000).unwrap();
        assert!(tail_period(&chaotic.samples, 200, 1e-8).is_none());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(map_derivative(MapSystem::Logistic, 4.0, 0.5), 0.0);
        assert!((map_derivative(MapSystem::SineCircle, 5.0, 0.25) - 1.0).abs() < 1e-15);
        assert_eq!(map_derivative(MapSystem::Logistic, 3.5, 0.875), -2.625);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(matches!(iterate_logistic(4.5, 0.5, 10), Err(Error::Domain(_))));
        assert!(matches!(iterate_logistic(3.0, 1.5, 10), Err(Error::Domain(_))));
        assert!(matches!(iterate_sine_circle(5.1, 0.5, 10), Err(Error::Domain(_))));
        assert!(matches!(iterate_sine_circle(1.0, 1.0, 10), Err(Error::Domain(_))));
        assert!(iterate_logistic(3.0, 0.5, 0).is_err());
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(wrap_unit(-1e-18), 0.0);
        assert_eq!(wrap_unit(1.0), 0.0);
        assert!((wrap_unit(1.25) - 0.25).abs() < 1e-15);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn logistic_orbit_confined(mu in 0.0f64..=4.0, x0 in 0.0f64..=1.0) {
                let orbit = iterate_logistic(mu, x0, 200).unwrap();
                prop_assert_eq!(orbit.samples[0], x0);
                prop_assert!(orbit.samples.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(2_000))]
            #[test]
            fn sine_circle_orbit_confined(mu in 0.0f64..=5.0, x0 in 0.0f64..1.0) {
                let orbit = iterate_sine_circle(mu, x0, 500).unwrap();
                prop_assert!(orbit.samples.iter().all(|x| (0.0..1.0).contains(x)));
            }

            #[test]
            fn iteration_is_deterministic(mu in 0.0f64..=4.0, x0 in 0.0f64..=1.0) {
                let a = iterate_logistic(mu, x0, 300).unwrap();
                let b = iterate_logistic(mu, x0, 300).unwrap();
                prop_assert!(a.samples.iter().zip(&b.samples).all(|(p, q)| p.to_bits() == q.to_bits()));
            }
        }
    }
}
