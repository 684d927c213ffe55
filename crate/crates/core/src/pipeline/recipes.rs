use std::collections::HashMap;

use log::info;
use serde::{Deserialize, Serialize};

use super::dataset::{
    build_ks_dataset, build_lorenz_dataset, build_map_dataset, split_train_test, subsample, KsProfile, LabeledDataset,
    KS_REGIMES,
};
use super::train::{predict_classes, regime_reports, train, MetricsReport, TrainConfig};
use crate::dynsys::{LorenzComponent, MapSystem};
use crate::error::{Error, Result};
use crate::nn::{Adam, Network};
use crate::zoo::{Architecture, ArchitectureId};

/// Everything needed to regenerate one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DatasetSpec {
    Map { system: MapSystem, count: usize, length: usize, seed: u64 },
    Lorenz { component: LorenzComponent, count: usize, length: usize, seed: u64 },
    Ks { seed: u64, profile: KsProfile },
}

impl DatasetSpec {
    /// Canonical, filename-safe description of the generation arguments.
    pub fn key(&self) -> String {
        match *self {
            DatasetSpec::Map { system, count, length, seed } => {
                let name = match system {
                    MapSystem::Logistic => "logistic",
                    MapSystem::SineCircle => "sine-circle",
                };
                format!("{name}-n{count}-l{length}-s{seed}")
            }
            DatasetSpec::Lorenz { component, count, length, seed } => {
                format!("lorenz-{}-n{count}-l{length}-s{seed}", format!("{component:?}").to_lowercase())
            }
            DatasetSpec::Ks { seed, profile } => format!("ks-m{}-dt{:e}-s{seed}", profile.n_modes, profile.dt),
        }
    }

    pub fn build(&self) -> Result<LabeledDataset> {
        match *self {
            DatasetSpec::Map { system, count, length, seed } => build_map_dataset(system, count, length, seed),
            DatasetSpec::Lorenz { component, count, length, seed } => build_lorenz_dataset(component, count, length, seed),
            DatasetSpec::Ks { seed, profile } => build_ks_dataset(seed, profile),
        }
    }
}

pub trait DataSource {
    fn dataset(&mut self, spec: &DatasetSpec) -> Result<LabeledDataset>;
}

/// Evaluation of one trained model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub overall: MetricsReport,
    pub regimes: Vec<(u8, MetricsReport)>,
}

/// Persistence for trained models and their evaluations, keyed by strings that
/// encode the full training (and test) configuration.
pub trait ResultStore {
    fn load_eval(&mut self, key: &str) -> Result<Option<EvalRecord>>;
    fn store_eval(&mut self, key: &str, record: &EvalRecord) -> Result<()>;
    fn load_model(&mut self, key: &str, arch: &Architecture) -> Result<Option<Network>>;
    fn store_model(&mut self, key: &str, arch: &Architecture, cfg: &TrainConfig, net: &Network, history: &[f64]) -> Result<()>;
}

/// Builds every dataset on demand and keeps it in memory.
#[derive(Debug, Default)]
pub struct MemorySource {
    cache: HashMap<String, LabeledDataset>,
}

impl DataSource for MemorySource {
    fn dataset(&mut self, spec: &DatasetSpec) -> Result<LabeledDataset> {
        if let Some(ds) = self.cache.get(&spec.key()) {
            return Ok(ds.clone());
        }
        let ds = spec.build()?;
        self.cache.insert(spec.key(), ds.clone());
        Ok(ds)
    }
}

/// Keeps evaluations only; models are always retrained.
#[derive(Debug, Default)]
pub struct MemoryStore {
    pub evals: HashMap<String, EvalRecord>,
    pub trained: usize,
}

impl ResultStore for MemoryStore {
    fn load_eval(&mut self, key: &str) -> Result<Option<EvalRecord>> {
        Ok(self.evals.get(key).cloned())
    }

    fn store_eval(&mut self, key: &str, record: &EvalRecord) -> Result<()> {
        self.evals.insert(key.to_string(), record.clone());
        Ok(())
    }

    fn load_model(&mut self, _: &str, _: &Architecture) -> Result<Option<Network>> {
        Ok(None)
    }

    fn store_model(&mut self, _: &str, _: &Architecture, _: &TrainConfig, _: &Network, _: &[f64]) -> Result<()> {
        self.trained += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecipeConfig {
    pub n_series: usize,
    pub length: usize,
    pub data_seed: u64,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub ks_profile: KsProfile,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: Adam,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        RecipeConfig {
            n_series: 5000,
            length: 1000,
            data_seed: 7,
            split_seed: 0,
            train_fraction: 2.0 / 3.0,
            ks_profile: KsProfile::FULL,
            epochs: 10,
            batch_size: 32,
            adam: Adam::default(),
        }
    }
}

impl RecipeConfig {
    pub fn map(&self, system: MapSystem) -> DatasetSpec {
        DatasetSpec::Map { system, count: self.n_series, length: self.length, seed: self.data_seed }
    }

    pub fn lorenz(&self, component: LorenzComponent) -> DatasetSpec {
        DatasetSpec::Lorenz { component, count: self.n_series, length: self.length, seed: self.data_seed }
    }

    pub fn ks(&self) -> DatasetSpec {
        DatasetSpec::Ks { seed: self.data_seed, profile: self.ks_profile }
    }

    /// Short tag of the training settings that do not appear in dataset keys.
    fn training_tag(&self) -> String {
        let a = &self.adam;
        let mut tag = format!("e{}b{}", self.epochs, self.batch_size);
        if *a != Adam::default() {
            tag.push_str(&format!("-adam{}_{}_{}_{}", a.lr, a.beta1, a.beta2, a.eps));
        }
        tag
    }
}

/// A named dataset as fed to training or evaluation.
pub struct Named {
    pub name: String,
    pub data: LabeledDataset,
}

impl Named {
    pub fn new(name: impl Into<String>, data: LabeledDataset) -> Named {
        Named { name: name.into(), data }
    }
}

fn arch_tag(arch: &Architecture) -> String {
    match arch.id {
        ArchitectureId::Lkcnn => format!("lkcnn-k{}-c{}", arch.kernel, arch.channels),
        id => id.name().to_string(),
    }
}

/// Runs recipes against a data source and a result store.
pub struct Lab<'a> {
    pub data: &'a mut dyn DataSource,
    pub store: &'a mut dyn ResultStore,
    pub cfg: RecipeConfig,
}

impl<'a> Lab<'a> {
    pub fn new(data: &'a mut dyn DataSource, store: &'a mut dyn ResultStore, cfg: RecipeConfig) -> Lab<'a> {
        Lab { data, store, cfg }
    }

    pub fn dataset(&mut self, spec: &DatasetSpec) -> Result<Named> {
        Ok(Named::new(spec.key(), self.data.dataset(spec)?))
    }

    /// Train and test parts of the dataset, named after it.
    pub fn split(&mut self, spec: &DatasetSpec) -> Result<(Named, Named)> {
        let full = self.data.dataset(spec)?;
        let (tr, te) = split_train_test(&full, self.cfg.train_fraction, self.cfg.split_seed)?;
        let tag = format!("sp{}f{:.4}", self.cfg.split_seed, self.cfg.train_fraction);
        Ok((Named::new(format!("{}.train-{tag}", spec.key()), tr), Named::new(format!("{}.test-{tag}", spec.key()), te)))
    }

    pub fn model_key(&self, train: &Named, arch: &Architecture, seed: u64) -> String {
        format!("{}.{}.{}.seed{seed}", train.name, arch_tag(arch), self.cfg.training_tag())
    }

    /// Trains (or loads) one model and evaluates it on every test set, reusing
    /// stored evaluations whenever all of them are present.
    pub fn run(&mut self, train_set: &Named, arch: &Architecture, seed: u64, tests: &[&Named]) -> Result<Vec<EvalRecord>> {
        let key = self.model_key(train_set, arch, seed);
        let eval_keys: Vec<String> = tests.iter().map(|t| format!("{key}@{}", t.name)).collect();
        let mut cached = Vec::with_capacity(tests.len());
        for k in &eval_keys {
            cached.push(self.store.load_eval(k)?);
        }
        if cached.iter().all(Option::is_some) {
            return Ok(cached.into_iter().flatten().collect());
        }
        let net = match self.store.load_model(&key, arch)? {
            Some(net) => net,
            None => {
                info!("training {key} on {} rows", train_set.data.len());
                let mut net = arch.build(train_set.data.length, seed)?;
                let cfg = TrainConfig {
                    epochs: self.cfg.epochs,
                    batch_size: self.cfg.batch_size,
                    seed,
                    architecture: arch.id,
                    adam: self.cfg.adam,
                };
                let history = train(&mut net, &train_set.data, &cfg)?;
                self.store.store_model(&key, arch, &cfg, &net, &history)?;
                net
            }
        };
        let mut out = Vec::with_capacity(tests.len());
        for ((test, k), hit) in tests.iter().zip(&eval_keys).zip(cached) {
            let record = match hit {
                Some(r) => r,
                None => {
                    let pred = predict_classes(&net, &test.data)?;
                    let overall = MetricsReport::from_pairs(test.data.labels.iter().copied().zip(pred.iter().copied()));
                    let record = EvalRecord { overall, regimes: regime_reports(&test.data, &pred) };
                    self.store.store_eval(k, &record)?;
                    record
                }
            };
            out.push(record);
        }
        Ok(out)
    }
}

/// Accuracy table: one row per model family, one column per test set, with the
/// per-seed values kept alongside the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub failures: Vec<SeedFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub label: String,
    pub seeds: Vec<u64>,
    /// per_seed[s][c]: accuracy of seed index s on column c.
    pub per_seed: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub row: String,
    pub seed: u64,
    pub error: String,
}

impl TableReport {
    fn new(title: &str, columns: &[&str]) -> TableReport {
        TableReport {
            title: title.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn row(&self, label: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    /// Mean of `column` in row `label`.
    pub fn mean(&self, label: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.row(label).and_then(|r| r.mean.get(c).copied()).filter(|v| v.is_finite())
    }
}

impl TableRow {
    fn new(label: impl Into<String>) -> TableRow {
        TableRow { label: label.into(), seeds: Vec::new(), per_seed: Vec::new(), mean: Vec::new() }
    }

    fn finish(mut self, n_cols: usize) -> TableRow {
        self.mean = (0..n_cols)
            .map(|c| {
                let n = self.per_seed.len();
                if n == 0 {
                    f64::NAN
                } else {
                    self.per_seed.iter().map(|r| r[c]).sum::<f64>() / n as f64
                }
            })
            .collect();
        self
    }
}

/// Runs `f` for each seed, recording failures instead of aborting.
fn per_seed(
    report: &mut TableReport,
    label: &str,
    seeds: &[u64],
    mut f: impl FnMut(u64) -> Result<Vec<f64>>,
) {
    let mut row = TableRow::new(label);
    for &seed in seeds {
        match f(seed) {
            Ok(values) => {
                row.seeds.push(seed);
                row.per_seed.push(values);
            }
            Err(e) => report.failures.push(SeedFailure { row: label.into(), seed, error: e.to_string() }),
        }
    }
    let n = report.columns.len();
    report.rows.push(row.finish(n));
}

fn require_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::Domain("at least one seed is required".into()));
    }
    Ok(())
}

/// Trains every architecture on the logistic training split and tests on the
/// logistic test split and the whole sine-circle set.
pub fn run_table1(lab: &mut Lab, archs: &[ArchitectureId], seeds: &[u64]) -> Result<TableReport> {
    require_seeds(seeds)?;
    let (train_set, test) = lab.split(&lab.cfg.map(MapSystem::Logistic))?;
    let sine = lab.dataset(&lab.cfg.map(MapSystem::SineCircle))?;
    let mut report = TableReport::new("table1", &["logistic", "sine-circle"]);
    for &id in archs {
        per_seed(&mut report, id.label(), seeds, |seed| {
            let r = lab.run(&train_set, &id.into(), seed, &[&test, &sine])?;
            Ok(r.iter().map(|e| e.overall.accuracy).collect())
        });
    }
    Ok(report)
}

/// Trains on the Lorenz x training split; tests on the x test split and on the
/// whole y and z sets.
pub fn run_table2(lab: &mut Lab, archs: &[ArchitectureId], seeds: &[u64]) -> Result<TableReport> {
    require_seeds(seeds)?;
    let (train_set, test) = lab.split(&lab.cfg.lorenz(LorenzComponent::X))?;
    let y = lab.dataset(&lab.cfg.lorenz(LorenzComponent::Y))?;
    let z = lab.dataset(&lab.cfg.lorenz(LorenzComponent::Z))?;
    let mut report = TableReport::new("table2", &["lorenz-x", "lorenz-y", "lorenz-z"]);
    for &id in archs {
        per_seed(&mut report, id.label(), seeds, |seed| {
            let r = lab.run(&train_set, &id.into(), seed, &[&test, &y, &z])?;
            Ok(r.iter().map(|e| e.overall.accuracy).collect())
        });
    }
    Ok(report)
}

/// Row labels of the per-regime KS table, followed by "overall".
pub fn ks_row_labels() -> Vec<String> {
    let mut rows: Vec<String> = KS_REGIMES.iter().map(|r| format!("{} {}", r.range_label(), r.behaviour)).collect();
    rows.push("overall".into());
    rows
}

fn ks_accuracies(record: &EvalRecord) -> Result<Vec<f64>> {
    let mut acc = Vec::with_capacity(KS_REGIMES.len() + 1);
    for tag in 0..KS_REGIMES.len() as u8 {
        let m = record
            .regimes
            .iter()
            .find(|(t, _)| *t == tag)
            .ok_or_else(|| Error::Invalid(format!("KS regime {tag} missing from evaluation")))?;
        acc.push(m.1.accuracy);
    }
    acc.push(record.overall.accuracy);
    Ok(acc)
}

/// LKCNN trained on the chosen Lorenz component's training split, evaluated on
/// the KS energy series. Columns are the regimes plus the overall accuracy; the
/// single row holds the seed mean.
pub fn run_table3(lab: &mut Lab, component: LorenzComponent, seeds: &[u64]) -> Result<TableReport> {
    require_seeds(seeds)?;
    let (train_set, _) = lab.split(&lab.cfg.lorenz(component))?;
    let ks = lab.dataset(&lab.cfg.ks())?;
    let labels = ks_row_labels();
    let cols: Vec<&str> = labels.iter().map(String::as_str).collect();
    let title = format!("table3-{}", format!("{component:?}").to_lowercase());
    let mut report = TableReport::new(&title, &cols);
    per_seed(&mut report, "lkcnn", seeds, |seed| {
        let r = lab.run(&train_set, &ArchitectureId::Lkcnn.into(), seed, &[&ks])?;
        ks_accuracies(&r[0])
    });
    Ok(report)
}

/// Linear-interpolation quantile of unsorted data (q in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub x: f64,
    pub cycles: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileReport {
    pub title: String,
    pub x_name: String,
    pub rows: Vec<QuartileRow>,
    pub failures: Vec<SeedFailure>,
}

impl QuartileReport {
    pub fn row(&self, x: f64) -> Option<&QuartileRow> {
        self.rows.iter().find(|r| (r.x - x).abs() < 1e-9)
    }
}

pub const DEFAULT_TRAINING_FRACTIONS: [f64; 7] = [0.02, 0.05, 0.10, 0.25, 0.50, 0.75, 1.0];
pub const DEFAULT_LENGTH_FRACTIONS: [f64; 8] = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn sweep(
    title: &str,
    x_name: &str,
    xs: &[f64],
    n_cycles: usize,
    mut f: impl FnMut(f64, u64) -> Result<f64>,
) -> Result<QuartileReport> {
    if n_cycles < 3 {
        return Err(Error::Domain(format!("need at least 3 cycles, got {n_cycles}")));
    }
    let mut report = QuartileReport { title: title.into(), x_name: x_name.into(), rows: Vec::new(), failures: Vec::new() };
    for &x in xs {
        let (mut cycles, mut acc) = (Vec::new(), Vec::new());
        for c in 0..n_cycles as u64 {
            match f(x, c) {
                Ok(a) => {
                    cycles.push(c);
                    acc.push(a);
                }
                Err(e) => report.failures.push(SeedFailure { row: format!("{x_name}={x}"), seed: c, error: e.to_string() }),
            }
        }
        report.rows.push(QuartileRow {
            x,
            q1: quantile(&acc, 0.25),
            median: quantile(&acc, 0.5),
            q3: quantile(&acc, 0.75),
            cycles,
            accuracies: acc,
        });
    }
    Ok(report)
}

/// KS accuracy of LKCNN trained on seeded random fractions of the whole Lorenz x
/// set (0.1 of 5000 is 500 series; no Lorenz rows are needed for testing);
/// cycle c uses subsample seed c and training seed c.
pub fn sweep_training_size(lab: &mut Lab, fractions: &[f64], n_cycles: usize) -> Result<QuartileReport> {
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
        return Err(Error::Domain("training fractions must lie in (0, 1]".into()));
    }
    let train_set = lab.dataset(&lab.cfg.lorenz(LorenzComponent::X))?;
    let ks = lab.dataset(&lab.cfg.ks())?;
    sweep("fig9", "fraction", fractions, n_cycles, |f, c| {
        let sub = Named::new(format!("{}.sub{f}c{c}", train_set.name), subsample(&train_set.data, f, c)?);
        Ok(lab.run(&sub, &ArchitectureId::Lkcnn.into(), c, &[&ks])?[0].overall.accuracy)
    })
}

/// KS accuracy of LKCNN when both the Lorenz x training series and the KS
/// series are cut to the same prefix (renormalized); labels are kept.
pub fn sweep_series_length(lab: &mut Lab, length_fractions: &[f64], n_cycles: usize) -> Result<QuartileReport> {
    if length_fractions.iter().any(|&f| !(0.3 - 1e-12..=1.0).contains(&f)) {
        return Err(Error::Domain("length fractions must lie in [0.3, 1]".into()));
    }
    let (train_set, _) = lab.split(&lab.cfg.lorenz(LorenzComponent::X))?;
    let ks = lab.dataset(&lab.cfg.ks())?;
    let full = train_set.data.length.min(ks.data.length);
    let mut cut = HashMap::new();
    let mut lengths = Vec::new();
    for &f in length_fractions {
        let n = (f * full as f64).round() as usize;
        lengths.push(n as f64);
        let tr = Named::new(format!("{}.len{n}", train_set.name), train_set.data.truncate(n)?);
        let te = Named::new(format!("{}.len{n}", ks.name), ks.data.truncate(n)?);
        cut.insert(n, (tr, te));
    }
    sweep("fig10", "length", &lengths, n_cycles, |len, c| {
        let (tr, te) = &cut[&(len as usize)];
        Ok(lab.run(tr, &ArchitectureId::Lkcnn.into(), c, &[te])?[0].overall.accuracy)
    })
}

pub const DEFAULT_KERNELS: [usize; 6] = [5, 10, 20, 40, 70, 100];
pub const DEFAULT_CHANNELS: [usize; 5] = [5, 10, 20, 35, 50];

/// LKCNN on the logistic to sine-circle task, sweeping the kernel size with 5
/// channels and the channel count with kernel 100.
pub fn sweep_lkcnn_hyperparams(lab: &mut Lab, kernels: &[usize], channels: &[usize], seeds: &[u64]) -> Result<TableReport> {
    require_seeds(seeds)?;
    let (train_set, test) = lab.split(&lab.cfg.map(MapSystem::Logistic))?;
    let sine = lab.dataset(&lab.cfg.map(MapSystem::SineCircle))?;
    let mut report = TableReport::new("appendixA", &["logistic", "sine-circle"]);
    let cases = kernels
        .iter()
        .map(|&k| (format!("kernel={k}"), Architecture::lkcnn(k, 5)))
        .chain(channels.iter().map(|&c| (format!("channels={c}"), Architecture::lkcnn(100, c))));
    for (label, arch) in cases {
        per_seed(&mut report, &label, seeds, |seed| {
            let r = lab.run(&train_set, &arch, seed, &[&test, &sine])?;
            Ok(r.iter().map(|e| e.overall.accuracy).collect())
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RecipeConfig {
        RecipeConfig { n_series: 60, length: 200, epochs: 2, ks_profile: KsProfile::REDUCED, ..Default::default() }
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn dataset_keys_are_distinct() {
        let c = RecipeConfig::default();
        let keys = [
            c.map(MapSystem::Logistic).key(),
            c.map(MapSystem::SineCircle).key(),
            c.lorenz(LorenzComponent::X).key(),
            c.lorenz(LorenzComponent::Z).key(),
            c.ks().key(),
            RecipeConfig { ks_profile: KsProfile::REDUCED, ..c }.ks().key(),
        ];
        for i in 0..keys.len() {
            for j in 0..i {
                assert_ne!(keys[i], keys[j]);
            }
        }
        assert_eq!(keys[0], "logistic-n5000-l1000-s7");
    }

    #[test]
    fn table1_shape_and_cache_reuse() {
        let mut data = MemorySource::default();
        let mut store = MemoryStore::default();
        let archs = [ArchitectureId::ShallowNet, ArchitectureId::Mlp];
        let first = run_table1(&mut Lab::new(&mut data, &mut store, small()), &archs, &[0, 1]).unwrap();
        assert_eq!(first.rows.len(), 2);
        assert!(first.rows.iter().all(|r| r.per_seed.len() == 2 && r.mean.len() == 2));
        assert!(first.failures.is_empty());
        assert_eq!(store.trained, 4);
        let again = run_table1(&mut Lab::new(&mut data, &mut store, small()), &archs, &[0, 1]).unwrap();
        assert_eq!(store.trained, 4);
        assert_eq!(first, again);
        let m = first.mean("ShallowNet", "logistic").unwrap();
        assert!((0.0..=100.0).contains(&m));
    }

    #[test]
    fn failures_are_recorded_per_seed() {
        let mut data = MemorySource::default();
        let mut store = MemoryStore::default();
        // a kernel of 150 needs inputs of at least 300 samples
        let mut lab = Lab::new(&mut data, &mut store, small());
        let r = sweep_lkcnn_hyperparams(&mut lab, &[150], &[], &[0, 1]).unwrap();
        assert_eq!(r.failures.len(), 2);
        assert!(r.mean("kernel=150", "sine-circle").is_none());
    }

    /// Real maps and Lorenz data, with a tiny synthetic stand-in for KS.
    struct StubKs(MemorySource);

    impl DataSource for StubKs {
        fn dataset(&mut self, spec: &DatasetSpec) -> Result<LabeledDataset> {
            let DatasetSpec::Ks { seed, .. } = *spec else { return self.0.dataset(spec) };
            let meta = super::super::dataset::DatasetMeta {
                system: super::super::dataset::SystemId::Ks,
                rule: super::super::dataset::LabelRule::Regime,
                seed,
                resampled: 0,
            };
            let mut ds = LabeledDataset::new(meta, 200);
            for (tag, regime) in KS_REGIMES.iter().enumerate() {
                for i in 0..3 {
                    let row: Vec<f64> = (0..200).map(|j| ((j * (tag + 1) + i) % 7) as f64 / 6.0).collect();
                    ds.push(&row, regime.class, regime.lo, tag as u8);
                }
            }
            Ok(ds)
        }
    }

    #[test]
    fn sweeps_report_quartiles() {
        let mut data = StubKs(MemorySource::default());
        let mut store = MemoryStore::default();
        let cfg = RecipeConfig { n_series: 30, epochs: 1, ..small() };
        let mut lab = Lab::new(&mut data, &mut store, cfg);
        let r = sweep_training_size(&mut lab, &[0.5, 1.0], 3).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.accuracies.len(), 3);
            assert!(row.q1 <= row.median && row.median <= row.q3);
        }
        assert!(sweep_training_size(&mut lab, &[0.5], 2).is_err());
        assert!(sweep_series_length(&mut lab, &[0.2], 3).is_err());
        // 0.3 of 200 samples is below the LKCNN floor: every cycle fails
        let short = sweep_series_length(&mut lab, &[0.3, 1.0], 3).unwrap();
        assert_eq!(short.failures.len(), 3);
        assert_eq!(short.rows[1].x, 200.0);
        assert_eq!(short.rows[1].accuracies.len(), 3);
        let t3 = run_table3(&mut lab, LorenzComponent::X, &[0]).unwrap();
        assert_eq!(t3.columns.len(), 7);
        assert_eq!(t3.rows[0].per_seed[0].len(), 7);
    }
}
