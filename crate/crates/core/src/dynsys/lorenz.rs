use serde::{Deserialize, Serialize};

use super::ode::{Dopri5, Tolerances};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl LorenzParams {
    /// The classical sigma = 10, beta = 8/3 family.
    pub fn classic(rho: f64) -> Self {
        LorenzParams {
            sigma: 10.0,
            rho,
            beta: 8.0 / 3.0,
        }
    }

    #[inline]
    pub fn rhs(&self, s: &[f64], d: &mut [f64]) {
        let (x, y, z) = (s[0], s[1], s[2]);
        d[0] = self.sigma * (y - x);
        d[1] = x * (self.rho - z) - y;
        d[2] = x * y - self.beta * z;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LorenzComponent {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzTrajectory {
    pub params: LorenzParams,
    pub tol: Tolerances,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl LorenzTrajectory {
    pub fn component(&self, c: LorenzComponent) -> &[f64] {
        match c {
            LorenzComponent::X => &self.x,
            LorenzComponent::Y => &self.y,
            LorenzComponent::Z => &self.z,
        }
    }
}

pub(crate) fn equispaced(t_end: f64, n: usize) -> Vec<f64> {
    let dt = t_end / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { t_end } else { i as f64 * dt })
        .collect()
}

pub fn integrate_lorenz(
    params: LorenzParams,
    ic: [f64; 3],
    t_end: f64,
    n_samples: usize,
) -> Result<LorenzTrajectory> {
    integrate_lorenz_with(params, ic, t_end, n_samples, Tolerances::default())
}

/// Dormand-Prince integration over [0, t_end], sampled at `n_samples` equispaced times
/// through the dense output.
pub fn integrate_lorenz_with(
    params: LorenzParams,
    ic: [f64; 3],
    t_end: f64,
    n_samples: usize,
    tol: Tolerances,
) -> Result<LorenzTrajectory> {
    if !(t_end > 0.0) {
        return Err(Error::Domain(format!("t_end must be positive, got {t_end}")));
    }
    if n_samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let t = equispaced(t_end, n_samples);
    let mut x = vec![0.0; n_samples];
    let mut y = vec![0.0; n_samples];
    let mut z = vec![0.0; n_samples];
    let mut ode = Dopri5::new(|s: &[f64], d: &mut [f64]| params.rhs(s, d), 0.0, &ic, tol, 1e-14 * t_end);
    ode.sample(&t, |i, s| {
        x[i] = s[0];
        y[i] = s[1];
        z[i] = s[2];
    })
    .map_err(|u| Error::Integration {
        rho: params.rho,
        t: u.t,
        step: u.h,
    })?;
    Ok(LorenzTrajectory {
        params,
        tol,
        t,
        x,
        y,
        z,
    })
}
