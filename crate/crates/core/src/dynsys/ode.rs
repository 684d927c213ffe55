//! Adaptive Dormand-Prince 5(4) integrator with the 4th-order continuous extension.
//!
//! Specialized for the small autonomous systems in this crate: state is a flat
//! slice, work buffers are allocated once, and the last accepted step keeps its
//! interpolation coefficients so callers can sample between steps.

use serde::{Deserialize, Serialize};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Dense output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-7,
            atol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepUnderflow {
    pub t: f64,
    pub h: f64,
}

pub struct Dopri5<F> {
    rhs: F,
    tol: Tolerances,
    h_min: f64,
    t: f64,
    h: f64,
    y: Vec<f64>,
    y_new: Vec<f64>,
    y_stage: Vec<f64>,
    k: [Vec<f64>; 7],
    // Interpolation data for the last accepted step [t_prev, t].
    t_prev: f64,
    h_prev: f64,
    cont: [Vec<f64>; 5],
    pub accepted: usize,
    pub rejected: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(&[f64], &mut [f64]),
{
    /// `h_min` is the step size below which a step counts as underflowed.
    pub fn new(mut rhs: F, t0: f64, y0: &[f64], tol: Tolerances, h_min: f64) -> Self {
        let n = y0.len();
        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        rhs(y0, &mut k[0]);
        let mut s = Dopri5 {
            rhs,
            tol,
            h_min,
            t: t0,
            h: 0.0,
            y: y0.to_vec(),
            y_new: vec![0.0; n],
            y_stage: vec![0.0; n],
            k,
            t_prev: t0,
            h_prev: 0.0,
            cont: std::array::from_fn(|_| y0.to_vec()),
            accepted: 0,
            rejected: 0,
        };
        s.h = s.initial_step();
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    /// Replaces the current state (e.g. after renormalization) and refreshes the FSAL stage.
    pub fn set_state(&mut self, y: &[f64]) {
        self.y.copy_from_slice(y);
        (self.rhs)(&self.y, &mut self.k[0]);
        self.h_prev = 0.0;
        for c in &mut self.cont {
            c.copy_from_slice(y);
        }
        self.t_prev = self.t;
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.tol.atol + self.tol.rtol * a.abs().max(b.abs())
    }

    // Hairer & Wanner's starting step heuristic.
    fn initial_step(&mut self) -> f64 {
        let n = self.y.len() as f64;
        let (mut d0, mut d1) = (0.0, 0.0);
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i], 0.0);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k[0][i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..self.y.len() {
            self.y_stage[i] = self.y[i] + h0 * self.k[0][i];
        }
        let (head, tail) = self.k.split_at_mut(1);
        (self.rhs)(&self.y_stage, &mut tail[0]);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.tol.atol + self.tol.rtol * self.y[i].abs();
            d2 += ((tail[0][i] - head[0][i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Attempts a step of size h from (t, y); fills y_new and k[1..7], returns the error norm.
    fn attempt(&mut self, h: f64) -> f64 {
        let n = self.y.len();
        let y = &self.y;
        let ys = &mut self.y_stage;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        (self.rhs)(ys, k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        (self.rhs)(ys, k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        (self.rhs)(ys, k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        (self.rhs)(ys, k5);
        for i in 0..n {
            ys[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        (self.rhs)(ys, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        (self.rhs)(&self.y_new, k7);

        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(self.y_new[i].abs());
            err += (e / sc).powi(2);
        }
        (err / n as f64).sqrt()
    }

    /// Takes one accepted step, never stepping past `t_stop`.
    pub fn step(&mut self, t_stop: f64) -> Result<(), StepUnderflow> {
        let remaining = t_stop - self.t;
        let clipped = self.h > remaining;
        let mut h = self.h.min(remaining);
        let mut last_rejected = false;
        loop {
            if h < self.h_min && h < remaining {
                return Err(StepUnderflow { t: self.t, h });
            }
            let err = self.attempt(h);
            if err <= 1.0 {
                let mut fac = if err == 0.0 {
                    FAC_MAX
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
                };
                if last_rejected {
                    fac = fac.min(1.0);
                }
                self.accept(h);
                // A step shortened to land on t_stop says nothing about the step size.
                if !(clipped && !last_rejected) {
                    self.h = h * fac;
                }
                self.accepted += 1;
                return Ok(());
            }
            self.rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
        }
    }

    fn accept(&mut self, h: f64) {
        let n = self.y.len();
        let [k1, _k2, k3, k4, k5, k6, k7] = &self.k;
        for i in 0..n {
            let y0 = self.y[i];
            let y1 = self.y_new[i];
            let ydiff = y1 - y0;
            let bspl = h * k1[i] - ydiff;
            self.cont[0][i] = y0;
            self.cont[1][i] = ydiff;
            self.cont[2][i] = bspl;
            self.cont[3][i] = ydiff - h * k7[i] - bspl;
            self.cont[4][i] = h
                * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        self.t_prev = self.t;
        self.h_prev = h;
        self.t += h;
        std::mem::swap(&mut self.y, &mut self.y_new);
        // FSAL: the last stage is the derivative at the new point.
        self.k.swap(0, 6);
    }

    /// Interpolates the state at `t` inside the last accepted step.
    pub fn dense(&self, t: f64, out: &mut [f64]) {
        if self.h_prev == 0.0 {
            out.copy_from_slice(&self.y);
            return;
        }
        let theta = (t - self.t_prev) / self.h_prev;
        let theta1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.cont[0][i]
                + theta
                    * (self.cont[1][i]
                        + theta1
                            * (self.cont[2][i]
                                + theta * (self.cont[3][i] + theta1 * self.cont[4][i])));
        }
    }

    /// Integrates until exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<(), StepUnderflow> {
        while self.t < t_target {
            self.step(t_target)?;
            // Snap floating-point residue so the loop terminates on the target.
            if (t_target - self.t).abs() <= 1e-13 * t_target.abs().max(1.0) {
                self.t = t_target;
            }
        }
        Ok(())
    }

    /// Integrates through all `times` (ascending, first >= current t) writing dense samples.
    pub fn sample(&mut self, times: &[f64], mut sink: impl FnMut(usize, &[f64])) -> Result<(), StepUnderflow> {
        let mut buf = vec![0.0; self.y.len()];
        let t_end = match times.last() {
            Some(&t) => t,
            None => return Ok(()),
        };
        let mut next = 0;
        while next < times.len() && times[next] <= self.t {
            sink(next, &self.y);
            next += 1;
        }
        while next < times.len() {
            self.step(t_end)?;
            if (t_end - self.t).abs() <= 1e-13 * t_end.abs().max(1.0) {
                self.t = t_end;
            }
            while next < times.len() && times[next] <= self.t {
                if times[next] == self.t {
                    sink(next, &self.y);
                } else {
                    self.dense(times[next], &mut buf);
                    sink(next, &buf);
                }
                next += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut ode = Dopri5::new(|y: &[f64], d: &mut [f64]| d[0] = -y[0], 0.0, &[1.0], Tolerances::default(), 1e-14);
        ode.advance_to(5.0).unwrap();
        assert_eq!(ode.t(), 5.0);
        assert!((ode.state()[0] - (-5.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let mut ode = Dopri5::new(
            |y: &[f64], d: &mut [f64]| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            Tolerances { rtol: 1e-10, atol: 1e-12 },
            1e-14,
        );
        let mut worst: f64 = 0.0;
        ode.sample(&times, |i, y| worst = worst.max((y[0] - times[i].sin()).abs())).unwrap();
        assert!(worst < 1e-8, "worst dense error {worst}");
    }

    #[test]
    fn reports_underflow() {
        // Finite-time blow-up: y' = y^2, y(0) = 1 explodes at t = 1.
        let mut ode = Dopri5::new(|y: &[f64], d: &mut [f64]| d[0] = y[0] * y[0], 0.0, &[1.0], Tolerances::default(), 1e-14 * 2.0);
        assert!(ode.advance_to(2.0).is_err());
    }
}
