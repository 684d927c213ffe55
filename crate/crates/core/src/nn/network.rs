use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Cache, Layer, LayerSpec, Mode, Param, Pinned};
use super::loss::softmax_xent;
use super::optim::{adam_update, Adam};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Static-graph network: an ordered layer list over (batch, channels, length) tensors.
#[derive(Debug, Clone)]
pub struct Network {
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    /// (channels, length) of every activation; shapes[0] is the input.
    shapes: Vec<(usize, usize)>,
    mode: Mode,
    rng: ChaCha8Rng,
    frozen_dropout: Option<u64>,
    last_dropout_seed: u64,
    pins: Option<Vec<Option<Pinned>>>,
    acts: Vec<Tensor>,
    caches: Vec<Cache>,
    step: u64,
}

impl Network {
    /// Builds and initializes the layers; `seed` drives Glorot initialization and
    /// the dropout stream.
    pub fn new(input: (usize, usize), specs: &[LayerSpec], seed: u64) -> Result<Network> {
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = vec![input];
        for (i, spec) in specs.iter().enumerate() {
            let skip = match spec {
                LayerSpec::Add { from } if *from <= i => Some(shapes[*from]),
                _ => None,
            };
            let (layer, out) = Layer::build(spec, shapes[i], skip, &mut init).map_err(|e| e.at_layer(i))?;
            layers.push(layer);
            shapes.push(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Ok(Network {
            specs: specs.to_vec(),
            layers,
            shapes,
            mode: Mode::Train,
            rng,
            frozen_dropout: None,
            last_dropout_seed: 0,
            pins: None,
            acts: Vec::new(),
            caches: Vec::new(),
            step: 0,
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> (usize, usize) {
        *self.shapes.last().expect("input shape")
    }

    /// (channels, length) after each layer, starting with the input.
    pub fn shape_trace(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.clear_cache();
    }

    /// Adam steps taken so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Every tensor needed to reproduce Eval outputs: parameters in layer order,
    /// with batch-norm running mean and variance after each norm layer's affine pair.
    pub fn state(&self) -> Vec<([usize; 3], Vec<f64>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.params().into_iter().map(|p| (p.shape, p.value.clone())));
            if let Layer::BatchNorm1d(bn) = layer {
                let c = bn.running_mean.len();
                out.push(([1, 1, c], bn.running_mean.clone()));
                out.push(([1, 1, c], bn.running_var.clone()));
            }
        }
        out
    }

    pub fn load_state(&mut self, state: &[([usize; 3], Vec<f64>)]) -> Result<()> {
        let expected: Vec<[usize; 3]> = self.state().into_iter().map(|(s, _)| s).collect();
        let got: Vec<[usize; 3]> = state.iter().map(|(s, _)| *s).collect();
        if expected != got || state.iter().any(|(s, v)| v.len() != s.iter().product::<usize>()) {
            return Err(Error::Shape(format!("state tensors {got:?} do not fit network tensors {expected:?}")));
        }
        let mut it = state.iter();
        for layer in &mut self.layers {
            for p in layer.params_mut() {
                p.value.copy_from_slice(&it.next().expect("checked length").1);
            }
            if let Layer::BatchNorm1d(bn) = layer {
                bn.running_mean.copy_from_slice(&it.next().expect("checked length").1);
                bn.running_var.copy_from_slice(&it.next().expect("checked length").1);
            }
        }
        self.clear_cache();
        Ok(())
    }

    /// Makes every subsequent Train forward reuse one dropout mask draw (for
    /// finite-difference checks); `None` restores fresh masks per call.
    pub fn freeze_dropout(&mut self, seed: Option<u64>) {
        self.frozen_dropout = seed;
    }

    /// Fixes the ReLU masks and pooling winners of the cached forward pass for
    /// subsequent `forward_from` calls; `false` releases them.
    pub(crate) fn pin_pattern(&mut self, on: bool) -> Result<()> {
        if !on {
            self.pins = None;
            return Ok(());
        }
        if self.acts.len() != self.layers.len() + 1 {
            return Err(Error::NoForwardCache);
        }
        let pins = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| match (layer, &self.caches[i]) {
                (Layer::Relu, _) => Some(Pinned::Relu(self.acts[i].data().iter().map(|&v| v > 0.0).collect())),
                (Layer::MaxPool1d { .. }, Cache::Argmax(arg)) => Some(Pinned::Argmax(arg.clone())),
                _ => None,
            })
            .collect();
        self.pins = Some(pins);
        Ok(())
    }

    pub(crate) fn clear_cache(&mut self) {
        self.acts.clear();
        self.caches.clear();
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, l) = self.input_shape();
        if x.channels() != c || x.len() != l {
            return Err(Error::Shape(format!("network expects (b, {c}, {l}) input, got {:?}", x.shape())));
        }
        Ok(())
    }

    /// Forward pass that caches activations for `backward`. Returns the output.
    pub fn forward(&mut self, x: &Tensor) -> Result<&Tensor> {
        self.check_input(x)?;
        self.last_dropout_seed = self.frozen_dropout.unwrap_or_else(|| self.rng.random());
        self.clear_cache();
        self.acts.push(x.clone());
        self.forward_from(0)
    }

    /// Re-runs layers `start..` from the cached activation `start`, e.g. after
    /// perturbing a parameter of layer `start`.
    pub(crate) fn forward_from(&mut self, start: usize) -> Result<&Tensor> {
        if self.acts.len() <= start {
            return Err(Error::NoForwardCache);
        }
        self.acts.truncate(start + 1);
        self.caches.truncate(start);
        for i in start..self.layers.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(self.last_dropout_seed);
            rng.set_stream(i as u64);
            let skip = match self.layers[i] {
                Layer::Add(ref a) => Some(&self.acts[a.from]),
                _ => None,
            };
            let pin = self.pins.as_ref().and_then(|p| p[i].as_ref());
            let (y, cache) = self.layers[i]
                .forward(&self.acts[i], skip, self.mode, &mut rng, pin)
                .map_err(|e| e.at_layer(i))?;
            if self.mode == Mode::Train {
                let x = &self.acts[i];
                self.layers[i].update_running(&cache, x.batch() * x.len());
            }
            self.acts.push(y);
            self.caches.push(cache);
        }
        Ok(self.acts.last().expect("output"))
    }

    /// Eval-mode inference without touching the cache.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut acts: Vec<Tensor> = vec![x.clone()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (i, layer) in self.layers.iter().enumerate() {
            let skip = match layer {
                Layer::Add(a) => Some(&acts[a.from]),
                _ => None,
            };
            let (y, _) = layer.forward(&acts[i], skip, Mode::Eval, &mut rng, None).map_err(|e| e.at_layer(i))?;
            acts.push(y);
        }
        Ok(acts.pop().expect("output"))
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Reverse pass from the gradient of the network output. Parameter gradients
    /// are overwritten; the input gradient is returned.
    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let n = self.layers.len();
        self.backward_from(n, dy.clone(), true).map(|g| g.expect("input gradient requested"))
    }

    fn backward_from(&mut self, end: usize, dy: Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        if self.acts.len() != self.layers.len() + 1 {
            return Err(Error::NoForwardCache);
        }
        let (c, l) = self.shapes[end];
        if dy.shape() != [self.acts[end].batch(), c, l] {
            return Err(Error::Shape(format!("gradient {:?} for activation {:?}", dy.shape(), self.acts[end].shape())));
        }
        self.zero_grads();
        let mut pending: Vec<Option<Tensor>> = vec![None; end + 1];
        let mut g = dy;
        for i in (0..end).rev() {
            let skip = match self.layers[i] {
                Layer::Add(ref a) => Some(&self.acts[a.from]),
                _ => None,
            };
            let (dx, dskip) = self.layers[i].backward(
                &self.acts[i],
                &self.acts[i + 1],
                skip,
                &self.caches[i],
                g,
                self.mode,
                i > 0 || need_input_grad,
            );
            if let (Some(ds), Layer::Add(a)) = (dskip, &self.layers[i]) {
                accumulate(&mut pending[a.from], ds);
            }
            match dx {
                Some(mut dx) => {
                    if let Some(p) = pending[i].take() {
                        dx.data_mut().iter_mut().zip(p.data()).for_each(|(a, b)| *a += b);
                    }
                    g = dx;
                }
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }

    /// Forward, mean cross-entropy against `labels`, and backward through the
    /// logits feeding the final softmax. Returns the loss.
    pub fn loss_backward(&mut self, x: &Tensor, labels: &[usize]) -> Result<f64> {
        self.xent_backward(x, labels, false).map(|(loss, _)| loss)
    }

    /// As `loss_backward`, also returning the gradient with respect to the input.
    pub fn loss_backward_with_input(&mut self, x: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
        self.xent_backward(x, labels, true)
            .map(|(loss, g)| (loss, g.expect("input gradient requested")))
    }

    fn xent_backward(&mut self, x: &Tensor, labels: &[usize], need_input_grad: bool) -> Result<(f64, Option<Tensor>)> {
        let n = self.layers.len();
        if !matches!(self.layers.last(), Some(Layer::Softmax)) {
            return Err(Error::Invalid("cross-entropy training needs a final softmax layer".into()));
        }
        self.forward(x)?;
        let (loss, _, grad) = softmax_xent(&self.acts[n - 1], labels)?;
        let g = self.backward_from(n - 1, grad, need_input_grad)?;
        Ok((loss, g))
    }

    /// Mean cross-entropy of the current (cached) output without a backward pass.
    pub(crate) fn cached_loss(&self, labels: &[usize]) -> Result<f64> {
        let n = self.layers.len();
        let logits = self.acts.get(n - 1).ok_or(Error::NoForwardCache)?;
        Ok(softmax_xent(logits, labels)?.0)
    }

    pub(crate) fn cached_output(&self) -> Result<&Tensor> {
        if self.acts.len() != self.layers.len() + 1 {
            return Err(Error::NoForwardCache);
        }
        Ok(self.acts.last().expect("output"))
    }

    pub(crate) fn input_mut(&mut self) -> Result<&mut Tensor> {
        self.acts.first_mut().ok_or(Error::NoForwardCache)
    }

    pub fn adam_step(&mut self, cfg: &Adam) {
        self.step += 1;
        let t = self.step;
        for p in self.params_mut() {
            adam_update(p, t, cfg);
        }
    }

    /// Index of the layer owning each parameter tensor, in `params()` order.
    pub(crate) fn param_owners(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| std::iter::repeat_n(i, l.params().len()))
            .collect()
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
        None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Padding;

    fn small_residual() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv1d { channels: 3, kernel: 3, padding: Padding::Same, bias: false },
            LayerSpec::BatchNorm1d { momentum: 0.9 },
            LayerSpec::Relu,
            LayerSpec::Conv1d { channels: 3, kernel: 3, padding: Padding::Same, bias: false },
            LayerSpec::Add { from: 0 },
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { units: 2 },
            LayerSpec::Softmax,
        ]
    }

    fn input(b: usize, c: usize, l: usize) -> Tensor {
        Tensor::from_vec([b, c, l], (0..b * c * l).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect()).unwrap()
    }

    #[test]
    fn forward_output_is_a_distribution() {
        let mut net = Network::new((1, 16), &small_residual(), 3).unwrap();
        assert_eq!(net.shape_trace()[4], (3, 16));
        let y = net.forward(&input(4, 1, 16)).unwrap().clone();
        assert_eq!(y.shape(), [4, 1, 2]);
        for row in y.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12 && row.iter().all(|p| *p > 0.0 && *p < 1.0));
        }
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = Network::new((1, 16), &small_residual(), 3).unwrap();
        assert!(matches!(net.backward(&Tensor::zeros([1, 1, 2])), Err(Error::NoForwardCache)));
        assert!(matches!(net.loss_backward(&input(2, 1, 16), &[0, 1]), Ok(l) if l > 0.0));
    }

    #[test]
    fn shape_errors_name_the_layer() {
        let specs = [
            LayerSpec::Conv1d { channels: 2, kernel: 5, padding: Padding::Valid, bias: true },
            LayerSpec::Conv1d { channels: 2, kernel: 5, padding: Padding::Valid, bias: true },
        ];
        match Network::new((1, 7), &specs, 0) {
            Err(Error::Layer { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
        let mut net = Network::new((1, 16), &small_residual(), 3).unwrap();
        assert!(net.forward(&input(1, 1, 15)).is_err());
    }

    #[test]
    fn eval_is_pure_and_matches_predict() {
        let mut net = Network::new((1, 16), &small_residual(), 3).unwrap();
        net.loss_backward(&input(4, 1, 16), &[0, 1, 1, 0]).unwrap();
        net.set_mode(Mode::Eval);
        let x = input(3, 1, 16);
        let a = net.forward(&x).unwrap().clone();
        let b = net.forward(&x).unwrap().clone();
        assert_eq!(a, b);
        assert_eq!(net.predict(&x).unwrap(), a);
    }

    #[test]
    fn two_relus_equal_one() {
        let one = Network::new((1, 8), &[LayerSpec::Relu], 0).unwrap();
        let two = Network::new((1, 8), &[LayerSpec::Relu, LayerSpec::Relu], 0).unwrap();
        let x = input(2, 1, 8);
        assert_eq!(one.predict(&x).unwrap(), two.predict(&x).unwrap());
    }

    #[test]
    fn saturated_correct_logits_give_zero_gradients() {
        let specs = [LayerSpec::Dense { units: 2 }, LayerSpec::Softmax];
        let mut net = Network::new((1, 1), &specs, 0).unwrap();
        if let Layer::Dense(d) = &mut net.layers[0] {
            d.weight.value = vec![0.0, 0.0];
            d.bias.value = vec![100.0, -100.0];
        }
        let x = Tensor::from_vec([1, 1, 1], vec![1.0]).unwrap();
        let loss = net.loss_backward(&x, &[0]).unwrap();
        assert!(loss < 1e-80);
        assert!(net.params().iter().all(|p| p.grad.iter().all(|g| g.abs() < 1e-80)));
    }

    #[test]
    fn state_round_trip() {
        let mut a = Network::new((1, 16), &small_residual(), 3).unwrap();
        a.loss_backward(&input(4, 1, 16), &[0, 1, 1, 0]).unwrap();
        a.adam_step(&Adam::default());
        let mut b = Network::new((1, 16), &small_residual(), 99).unwrap();
        b.load_state(&a.state()).unwrap();
        let x = input(2, 1, 16);
        a.set_mode(Mode::Eval);
        b.set_mode(Mode::Eval);
        assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        assert!(b.load_state(&a.state()[1..]).is_err());
    }
}
