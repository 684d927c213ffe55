use serde::{Deserialize, Serialize};

use crate::dynsys::ode::{Dopri5, Tolerances};
use crate::dynsys::{LorenzParams, MapOrbit};
use crate::error::{Error, Result};

/// |f'| is clipped to this floor before taking the log (superstable points).
pub const DERIVATIVE_FLOOR: f64 = 1e-15;

/// Iterates discarded before averaging the discrete exponent.
pub const DISCRETE_DISCARD: usize = 100;

/// Mean of log|f'(x_i)| over the orbit after dropping the first `n_discard` iterates.
pub fn discrete_lyapunov(orbit: &MapOrbit, n_discard: usize) -> Result<f64> {
    let n = orbit.samples.len().saturating_sub(n_discard);
    if n < 100 {
        return Err(Error::Domain(format!(
            "orbit of length {} leaves {n} < 100 iterates after discarding {n_discard}",
            orbit.samples.len()
        )));
    }
    let sum: f64 = orbit.samples[n_discard..]
        .iter()
        .map(|&x| orbit.system.derivative(orbit.mu, x).abs().max(DERIVATIVE_FLOOR).ln())
        .sum();
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSettings {
    /// Initial (and renormalized) separation.
    pub eps0: f64,
    pub renorm_interval: f64,
    pub t_end: f64,
    /// Fraction of the horizon discarded as transient.
    pub discard_fraction: f64,
    pub tol: Tolerances,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings {
            eps0: 1e-9,
            renorm_interval: 0.1,
            t_end: 200.0,
            discard_fraction: 0.1,
            tol: Tolerances::default(),
        }
    }
}

/// Largest exponent of the Lorenz flow started at [1, 1, 1].
pub fn continuous_lyapunov(params: LorenzParams, settings: &LyapunovSettings) -> Result<f64> {
    if !(1e-12..=1e-6).contains(&settings.eps0) {
        return Err(Error::Domain(format!("eps0 = {} outside [1e-12, 1e-6]", settings.eps0)));
    }
    if settings.t_end < 50.0 {
        return Err(Error::Domain(format!("t_end = {} is below 50", settings.t_end)));
    }
    two_trajectory_lyapunov(|s, d| params.rhs(s, d), &[1.0, 1.0, 1.0], settings).map_err(|e| match e {
        Error::Integration { t, step, .. } => Error::Integration {
            rho: params.rho,
            t,
            step,
        },
        e => e,
    })
}

/// Two-trajectory estimate with periodic renormalization for an arbitrary autonomous
/// vector field. The reference and perturbed states are integrated as one coupled
/// system so both see the same step sequence.
pub fn two_trajectory_lyapunov<F>(rhs: F, ic: &[f64], s: &LyapunovSettings) -> Result<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let dim = ic.len();
    let mut joint = Vec::with_capacity(2 * dim);
    joint.extend_from_slice(ic);
    joint.extend_from_slice(ic);
    joint[dim] += s.eps0;

    let coupled = |y: &[f64], d: &mut [f64]| {
        let (d_ref, d_pert) = d.split_at_mut(dim);
        rhs(&y[..dim], d_ref);
        rhs(&y[dim..], d_pert);
    };
    let mut ode = Dopri5::new(coupled, 0.0, &joint, s.tol, 1e-14 * s.t_end);

    let n_intervals = (s.t_end / s.renorm_interval).round() as usize;
    let t_discard = s.discard_fraction * s.t_end;
    let mut sum = 0.0;
    let mut elapsed = 0.0;
    let mut state = joint;
    for k in 1..=n_intervals {
        let t = k as f64 * s.renorm_interval;
        ode.advance_to(t).map_err(|u| Error::Integration {
            rho: f64::NAN,
            t: u.t,
            step: u.h,
        })?;
        state.copy_from_slice(ode.state());
        let (reference, perturbed) = state.split_at_mut(dim);
        let d = reference
            .iter()
            .zip(perturbed.iter())
            .map(|(a, b)| (b - a) * (b - a))
            .sum::<f64>()
            .sqrt();
        if t > t_discard + 1e-12 {
            sum += (d / s.eps0).ln();
            elapsed += s.renorm_interval;
        }
        // A collapsed separation (exact convergence) cannot be rescaled; restart along x.
        let scale = if d > 0.0 { s.eps0 / d } else { 0.0 };
        for i in 0..dim {
            perturbed[i] = reference[i] + (perturbed[i] - reference[i]) * scale;
        }
        if d == 0.0 {
            perturbed[0] += s.eps0;
        }
        ode.set_state(&state);
    }
    Ok(sum / elapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::{iterate_logistic, iterate_sine_circle};

    /// Tangent-linear Benettin estimate with fixed-step RK4: independent of the
    /// two-trajectory code path and of the adaptive integrator.
    fn benettin_tangent(rho: f64, dt: f64, t_end: f64) -> f64 {
        let p = LorenzParams::classic(rho);
        let f = |s: &[f64; 6]| -> [f64; 6] {
            let (x, y, z) = (s[0], s[1], s[2]);
            let (u, v, w) = (s[3], s[4], s[5]);
            [
                p.sigma * (y - x),
                x * (p.rho - z) - y,
                x * y - p.beta * z,
                p.sigma * (v - u),
                (p.rho - z) * u - v - x * w,
                y * u + x * v - p.beta * w,
            ]
        };
        let mut s = [1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        let steps = (t_end / dt).round() as usize;
        let renorm = (0.1 / dt).round() as usize;
        let (mut sum, mut elapsed) = (0.0, 0.0);
        for i in 1..=steps {
            let k1 = f(&s);
            let mut tmp = [0.0; 6];
            for j in 0..6 { tmp[j] = s[j] + 0.5 * dt * k1[j]; }
            let k2 = f(&tmp);
            for j in 0..6 { tmp[j] = s[j] + 0.5 * dt * k2[j]; }
            let k3 = f(&tmp);
            for j in 0..6 { tmp[j] = s[j] + dt * k3[j]; }
            let k4 = f(&tmp);
            for j in 0..6 { s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]); }
            if i % renorm == 0 {
                let n = (s[3] * s[3] + s[4] * s[4] + s[5] * s[5]).sqrt();
                if i as f64 * dt > 0.1 * t_end {
                    sum += n.ln();
                    elapsed += renorm as f64 * dt;
                }
                for v in &mut s[3..6] { *v /= n; }
            }
        }
        sum / elapsed
    }

    #[test]
    fn logistic_at_four_is_ln_two() {
        let orbit = iterate_logistic(4.0, 0.2, 100_000).unwrap();
        let lambda = discrete_lyapunov(&orbit, 100).unwrap();
        assert!((lambda - 2f64.ln()).abs() < 0.01, "{lambda}");
    }

    #[test]
    fn pure_rotation_has_zero_exponent() {
        for theta0 in [0.0, 0.3, 0.77] {
            let orbit = iterate_sine_circle(0.0, theta0, 1000).unwrap();
            assert_eq!(discrete_lyapunov(&orbit, 100).unwrap(), 0.0);
        }
    }

    #[test]
    fn period_two_cycle_matches_direct_evaluation() {
        let orbit = iterate_logistic(3.2, 0.5, 10_000).unwrap();
        let n = orbit.samples.len();
        let (a, b) = (orbit.samples[n - 1].min(orbit.samples[n - 2]), orbit.samples[n - 1].max(orbit.samples[n - 2]));
        assert!((a - 0.5130).abs() < 1e-4 && (b - 0.7995).abs() < 1e-4);
        let direct = 0.5 * ((3.2 * (1.0 - 2.0 * a)).abs().ln() + (3.2 * (1.0 - 2.0 * b)).abs().ln());
        assert!(direct < 0.0);
        let lambda = discrete_lyapunov(&orbit, 100).unwrap();
        assert!((lambda - direct).abs() < 1e-3, "{lambda} vs {direct}");
    }

    #[test]
    fn attracting_cycles_are_negative() {
        for mu in [3.2, 3.5] {
            let orbit = iterate_logistic(mu, 0.5, 1000).unwrap();
            assert!(discrete_lyapunov(&orbit, 100).unwrap() < 0.0);
        }
    }

    #[test]
    fn superstable_point_is_clipped() {
        let orbit = iterate_logistic(2.0, 0.5, 200).unwrap();
        let lambda = discrete_lyapunov(&orbit, 100).unwrap();
        assert!((lambda - DERIVATIVE_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn short_orbit_is_rejected() {
        let orbit = iterate_logistic(3.9, 0.5, 150).unwrap();
        assert!(discrete_lyapunov(&orbit, 100).is_err());
    }

    #[test]
    fn lorenz_28_agrees_with_tangent_oracle() {
        let oracle = benettin_tangent(28.0, 1e-3, 200.0);
        assert!((oracle - 0.9).abs() < 0.1, "oracle {oracle}");
        let lambda = continuous_lyapunov(LorenzParams::classic(28.0), &LyapunovSettings::default()).unwrap();
        assert!((lambda - 0.9).abs() < 0.1, "{lambda}");
        assert!((lambda - oracle).abs() < 0.05, "{lambda} vs {oracle}");
    }

    #[test]
    fn lorenz_subcritical_is_negative() {
        let lambda = continuous_lyapunov(LorenzParams::classic(0.5), &LyapunovSettings::default()).unwrap();
        assert!(lambda < 0.0, "{lambda}");
    }

    #[test]
    fn linear_surrogate_recovers_growth_rate() {
        let s = LyapunovSettings::default();
        let lambda = two_trajectory_lyapunov(|y, d| d[0] = 0.3 * y[0], &[0.0], &s).unwrap();
        assert!((lambda - 0.3).abs() < 1e-3, "{lambda}");
    }

    #[test]
    fn insensitive_to_initial_separation() {
        let base = LyapunovSettings::default();
        let values: Vec<f64> = [1e-10, 1e-9, 1e-8, 1e-7]
            .iter()
            .map(|&eps0| continuous_lyapunov(LorenzParams::classic(28.0), &LyapunovSettings { eps0, ..base }).unwrap())
            .collect();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        assert!(hi - lo <= 0.1 && values.iter().all(|v| (v - values[1]).abs() <= 0.05), "{values:?}");
    }

    #[test]
    fn rejects_bad_settings() {
        let p = LorenzParams::classic(28.0);
        assert!(continuous_lyapunov(p, &LyapunovSettings { eps0: 1e-3, ..Default::default() }).is_err());
        assert!(continuous_lyapunov(p, &LyapunovSettings { t_end: 10.0, ..Default::default() }).is_err());
    }
}
