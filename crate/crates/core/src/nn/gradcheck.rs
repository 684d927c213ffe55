use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Relative errors are measured against max(|analytic| + |numeric|, this floor).
pub const REL_FLOOR: f64 = 1e-6;

/// Scalar objective differentiated by the checker.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Mean cross-entropy through the final softmax.
    CrossEntropy(&'a [usize]),
    /// Dot product of the network output with fixed weights (any output shape).
    Projection(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckConfig {
    /// Central-difference step.
    pub h: f64,
    /// Entries sampled per tensor (all entries when the tensor is smaller).
    pub per_tensor: usize,
    pub seed: u64,
    /// Hold ReLU masks and max-pool winners at their base-point values while
    /// perturbing, so a step never straddles a kink of the piecewise-linear parts.
    pub pin_kinks: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            h: 1e-5,
            per_tensor: 200,
            seed: 0,
            pin_kinks: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Location of the worst entry, e.g. "param 3[17]" or "input[5]".
    pub worst: String,
    pub checked: usize,
}

fn objective_value(net: &Network, objective: &Objective) -> Result<f64> {
    match objective {
        Objective::CrossEntropy(labels) => net.cached_loss(labels),
        Objective::Projection(w) => Ok(net.cached_output()?.data().iter().zip(*w).map(|(a, b)| a * b).sum()),
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(REL_FLOOR)
}

fn pick(len: usize, per_tensor: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= per_tensor {
        (0..len).collect()
    } else {
        let mut idx = rand::seq::index::sample(rng, len, per_tensor).into_vec();
        idx.sort_unstable();
        idx
    }
}

/// Compares analytic gradients of every parameter tensor and of the input with
/// central differences, on at most `per_tensor` random entries per tensor.
/// Dropout masks are frozen for the duration of the check; the network's mode
/// is respected.
pub fn gradient_check(net: &mut Network, x: &Tensor, objective: &Objective, cfg: &CheckConfig) -> Result<GradCheck> {
    if !(cfg.h > 0.0) {
        return Err(Error::Domain(format!("finite-difference step {}", cfg.h)));
    }
    net.freeze_dropout(Some(cfg.seed));
    let result = run(net, x, objective, cfg);
    net.freeze_dropout(None);
    let _ = net.pin_pattern(false);
    result
}

fn run(net: &mut Network, x: &Tensor, objective: &Objective, cfg: &CheckConfig) -> Result<GradCheck> {
    let (h, per_tensor, seed) = (cfg.h, cfg.per_tensor, cfg.seed);
    let input_grad = match objective {
        Objective::CrossEntropy(labels) => net.loss_backward_with_input(x, labels)?.1,
        Objective::Projection(w) => {
            let shape = net.forward(x)?.shape();
            net.backward(&Tensor::from_vec(shape, w.to_vec())?)?
        }
    };
    net.pin_pattern(cfg.pin_kinks)?;
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    let owners = net.param_owners();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let record = |report: &mut GradCheck, a: f64, n: f64, at: String| {
        let e = rel_error(a, n);
        report.checked += 1;
        if e > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = e.max(report.max_rel_error);
            report.worst = at;
        }
    };

    for (pi, grads) in analytic.iter().enumerate() {
        let layer = owners[pi];
        for i in pick(grads.len(), per_tensor, &mut rng) {
            let v0 = net.params()[pi].value[i];
            net.params_mut()[pi].value[i] = v0 + h;
            net.forward_from(layer)?;
            let up = objective_value(net, objective)?;
            net.params_mut()[pi].value[i] = v0 - h;
            net.forward_from(layer)?;
            let down = objective_value(net, objective)?;
            net.params_mut()[pi].value[i] = v0;
            record(&mut report, grads[i], (up - down) / (2.0 * h), format!("param {pi}[{i}]"));
        }
        net.forward_from(layer)?;
    }

    for i in pick(x.data().len(), per_tensor, &mut rng) {
        let v0 = x.data()[i];
        net.input_mut()?.data_mut()[i] = v0 + h;
        net.forward_from(0)?;
        let up = objective_value(net, objective)?;
        net.input_mut()?.data_mut()[i] = v0 - h;
        net.forward_from(0)?;
        let down = objective_value(net, objective)?;
        net.input_mut()?.data_mut()[i] = v0;
        record(&mut report, input_grad.data()[i], (up - down) / (2.0 * h), format!("input[{i}]"));
    }
    net.forward_from(0)?;
    Ok(report)
}
