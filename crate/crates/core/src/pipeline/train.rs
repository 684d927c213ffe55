use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::measures::Class;
use crate::nn::{Adam, Mode, Network, Tensor};
use crate::zoo::ArchitectureId;

/// Rows per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub architecture: ArchitectureId,
    pub adam: Adam,
}

impl TrainConfig {
    pub fn new(architecture: ArchitectureId, seed: u64) -> TrainConfig {
        TrainConfig { epochs: 10, batch_size: 32, seed, architecture, adam: Adam::default() }
    }
}

fn batch(ds: &LabeledDataset, rows: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::with_capacity(rows.len() * ds.length);
    for &i in rows {
        data.extend_from_slice(ds.row(i));
    }
    let x = Tensor::from_vec([rows.len(), 1, ds.length], data)?;
    Ok((x, rows.iter().map(|&i| ds.labels[i].index()).collect()))
}

fn check_input(net: &Network, ds: &LabeledDataset) -> Result<()> {
    if net.input_shape() != (1, ds.length) {
        return Err(Error::Shape(format!(
            "network expects input {:?}, dataset rows are (1, {})",
            net.input_shape(),
            ds.length
        )));
    }
    Ok(())
}

/// Minibatch Adam training. Each epoch reshuffles with a seed derived from
/// `cfg.seed` and the epoch index; the last, possibly smaller, batch is kept.
/// Returns the per-epoch mean loss (weighted by batch size); the network is left
/// in Eval mode.
pub fn train(net: &mut Network, set: &LabeledDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    check_input(net, set)?;
    if cfg.batch_size == 0 || set.is_empty() {
        return Err(Error::Domain("empty training set or zero batch size".into()));
    }
    net.set_mode(Mode::Train);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let (x, y) = batch(set, rows)?;
            total += net.loss_backward(&x, &y)? * rows.len() as f64;
            net.adam_step(&cfg.adam);
        }
        history.push(total / set.len() as f64);
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub t_nc: usize,
    pub t_c: usize,
    /// Predicted NC, truly C.
    pub f_nc: usize,
    /// Predicted C, truly NC.
    pub f_c: usize,
    /// Percent.
    pub accuracy: f64,
    /// Chaotic class taken as positive.
    pub precision: f64,
    pub recall: f64,
    pub balanced_accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricsReport {
    pub fn from_counts(t_nc: usize, t_c: usize, f_nc: usize, f_c: usize) -> MetricsReport {
        let total = t_nc + t_c + f_nc + f_c;
        let specificity = ratio(t_nc, t_nc + f_c);
        let recall = ratio(t_c, t_c + f_nc);
        MetricsReport {
            t_nc,
            t_c,
            f_nc,
            f_c,
            accuracy: 100.0 * ratio(t_nc + t_c, total),
            precision: ratio(t_c, t_c + f_c),
            recall,
            balanced_accuracy: (recall + specificity) / 2.0,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Class, Class)>) -> MetricsReport {
        let (mut t_nc, mut t_c, mut f_nc, mut f_c) = (0, 0, 0, 0);
        for (truth, pred) in pairs {
            match (truth, pred) {
                (Class::NC, Class::NC) => t_nc += 1,
                (Class::C, Class::C) => t_c += 1,
                (Class::C, Class::NC) => f_nc += 1,
                (Class::NC, Class::C) => f_c += 1,
            }
        }
        MetricsReport::from_counts(t_nc, t_c, f_nc, f_c)
    }

    pub fn total(&self) -> usize {
        self.t_nc + self.t_c + self.f_nc + self.f_c
    }
}

/// NC iff p_NC ≥ 0.5, for each row of `ds`.
pub fn predict_classes(net: &Network, ds: &LabeledDataset) -> Result<Vec<Class>> {
    check_input(net, ds)?;
    if net.output_shape() != (1, 2) {
        return Err(Error::Shape(format!("expected a two-class output, got {:?}", net.output_shape())));
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut out = Vec::with_capacity(ds.len());
    for rows in idx.chunks(EVAL_CHUNK) {
        let (x, _) = batch(ds, rows)?;
        let p = net.predict(&x)?;
        out.extend((0..rows.len()).map(|b| if p.item(b)[0] >= 0.5 { Class::NC } else { Class::C }));
    }
    Ok(out)
}

pub fn evaluate(net: &Network, ds: &LabeledDataset) -> Result<MetricsReport> {
    let pred = predict_classes(net, ds)?;
    Ok(MetricsReport::from_pairs(ds.labels.iter().copied().zip(pred)))
}

/// One report per distinct regime tag, in tag order.
pub fn evaluate_per_regime(net: &Network, ds: &LabeledDataset) -> Result<Vec<(u8, MetricsReport)>> {
    let pred = predict_classes(net, ds)?;
    Ok(regime_reports(ds, &pred))
}

pub fn regime_reports(ds: &LabeledDataset, pred: &[Class]) -> Vec<(u8, MetricsReport)> {
    let mut tags: Vec<u8> = ds.regimes.clone();
    tags.sort_unstable();
    tags.dedup();
    tags.into_iter()
        .map(|tag| {
            let pairs = (0..ds.len()).filter(|&i| ds.regimes[i] == tag).map(|i| (ds.labels[i], pred[i]));
            (tag, MetricsReport::from_pairs(pairs))
        })
        .collect()
}
