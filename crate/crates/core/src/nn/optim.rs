use serde::{Deserialize, Serialize};

use super::layers::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `p` using its current gradient; `t` is the
/// 1-based step number.
pub fn adam_update(p: &mut Param, t: u64, cfg: &Adam) {
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..p.value.len() {
        let g = p.grad[i];
        p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
        p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
        p.value[i] -= cfg.lr * (p.m[i] / c1) / ((p.v[i] / c2).sqrt() + cfg.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64) -> Param {
        Param::new([1, 1, 1], vec![w])
    }

    #[test]
    fn zero_gradient_leaves_fresh_params() {
        let mut p = scalar(2.0);
        for t in 1..=5 {
            adam_update(&mut p, t, &Adam::default());
        }
        assert_eq!((p.value[0], p.m[0], p.v[0]), (2.0, 0.0, 0.0));
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut p = scalar(2.0);
        p.m[0] = 0.5;
        p.v[0] = 0.25;
        adam_update(&mut p, 3, &Adam::default());
        assert!((p.m[0] - 0.45).abs() < 1e-15 && (p.v[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn first_step_on_square_by_hand() {
        // f(w) = w^2 at w = 1: g = 2, m = 0.2, v = 0.004,
        // m_hat = 2, v_hat = 4, step = 1e-3 * 2 / (2 + 1e-8).
        let mut p = scalar(1.0);
        p.grad[0] = 2.0;
        adam_update(&mut p, 1, &Adam::default());
        let want = 1.0 - 1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((p.value[0] - want).abs() < 1e-15, "{}", p.value[0]);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let cfg = Adam { lr: 0.1, ..Adam::default() };
        let mut p = scalar(0.0);
        for t in 1..=200 {
            p.grad[0] = 2.0 * (p.value[0] - 3.0);
            adam_update(&mut p, t, &cfg);
        }
        // reference: the same recurrences written out independently
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.value[0] - w).abs() < 1e-12);
        assert!((p.value[0] - 3.0).abs() < 0.05, "{}", p.value[0]);
    }
}
