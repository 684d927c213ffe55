use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynsys::{integrate_lorenz, iterate, solve_ks, LorenzComponent, LorenzParams, MapSystem};
use crate::error::{Error, Result};
use crate::measures::{
    continuous_lyapunov, discrete_lyapunov, label_series, normalize_minmax, shannon_entropy, Class, LyapunovSettings,
    DISCRETE_DISCARD, ENTROPY_THRESHOLD,
};

/// Initial state of every map orbit.
pub const MAP_X0: f64 = 0.5;
/// Lorenz series span t in [0, LORENZ_T_END].
pub const LORENZ_T_END: f64 = 100.0;
pub const LORENZ_RHO_MAX: f64 = 250.0;
/// Finite-time exponents within this band of zero are treated as zero when
/// labeling Lorenz series: periodic windows have a vanishing exponent whose
/// estimate fluctuates by about 1e-2 over the default horizon.
pub const LORENZ_ZERO_BAND: f64 = 0.02;
pub const KS_T_END: f64 = 10.0;
pub const KS_LENGTH: usize = 1000;

/// The KS regimes in parameter order: (alpha range, behaviour, rows, label).
pub const KS_REGIMES: [KsRegime; 6] = [
    KsRegime { lo: 18.0, hi: 22.0, behaviour: "periodic", count: 100, class: Class::NC },
    KsRegime { lo: 23.0, hi: 33.0, behaviour: "bimodal", count: 100, class: Class::NC },
    KsRegime { lo: 43.0, hi: 45.0, behaviour: "periodic", count: 100, class: Class::NC },
    KsRegime { lo: 56.0, hi: 65.0, behaviour: "trimodal", count: 100, class: Class::NC },
    KsRegime { lo: 95.0, hi: 115.0, behaviour: "quadrimodal", count: 100, class: Class::NC },
    KsRegime { lo: 120.0, hi: 130.0, behaviour: "chaotic", count: 500, class: Class::C },
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsRegime {
    pub lo: f64,
    pub hi: f64,
    pub behaviour: &'static str,
    pub count: usize,
    pub class: Class,
}

impl KsRegime {
    pub fn range_label(&self) -> String {
        format!("[{},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemId {
    Logistic,
    SineCircle,
    LorenzX,
    LorenzY,
    LorenzZ,
    Ks,
}

impl SystemId {
    pub const ALL: [SystemId; 6] = [
        SystemId::Logistic,
        SystemId::SineCircle,
        SystemId::LorenzX,
        SystemId::LorenzY,
        SystemId::LorenzZ,
        SystemId::Ks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemId::Logistic => "logistic",
            SystemId::SineCircle => "sine-circle",
            SystemId::LorenzX => "lorenz-x",
            SystemId::LorenzY => "lorenz-y",
            SystemId::LorenzZ => "lorenz-z",
            SystemId::Ks => "ks",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<SystemId> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn lorenz(c: LorenzComponent) -> SystemId {
        match c {
            LorenzComponent::X => SystemId::LorenzX,
            LorenzComponent::Y => SystemId::LorenzY,
            LorenzComponent::Z => SystemId::LorenzZ,
        }
    }

    pub fn label_rule(self) -> LabelRule {
        match self {
            SystemId::Logistic | SystemId::SineCircle => LabelRule::LyapunovEntropy,
            SystemId::LorenzX | SystemId::LorenzY | SystemId::LorenzZ => LabelRule::LyapunovSign,
            SystemId::Ks => LabelRule::Regime,
        }
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown system '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelRule {
    /// Positive discrete exponent and entropy above the threshold.
    LyapunovEntropy,
    /// Positive continuous exponent of the x component.
    LyapunovSign,
    /// Class fixed by the parameter interval.
    Regime,
}

impl LabelRule {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<LabelRule> {
        [LabelRule::LyapunovEntropy, LabelRule::LyapunovSign, LabelRule::Regime].get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub system: SystemId,
    pub rule: LabelRule,
    pub seed: u64,
    /// Parameter draws replaced after an integration failure.
    pub resampled: usize,
}

/// Rows of min-max normalized series with their labels, bifurcation parameters,
/// and regime tags (the KS interval index; 0 elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub length: usize,
    /// count × length, row-major.
    pub series: Vec<f64>,
    pub labels: Vec<Class>,
    pub params: Vec<f64>,
    pub regimes: Vec<u8>,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(meta: DatasetMeta, length: usize) -> LabeledDataset {
        LabeledDataset {
            length,
            series: Vec::new(),
            labels: Vec::new(),
            params: Vec::new(),
            regimes: Vec::new(),
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.series[i * self.length..(i + 1) * self.length]
    }

    pub fn push(&mut self, samples: &[f64], label: Class, param: f64, regime: u8) {
        assert_eq!(samples.len(), self.length, "row length");
        self.series.extend_from_slice(samples);
        self.labels.push(label);
        self.params.push(param);
        self.regimes.push(regime);
    }

    pub fn chaotic_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|&&c| c == Class::C).count() as f64 / self.len() as f64
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut out = LabeledDataset::new(self.meta.clone(), self.length);
        for &i in indices {
            out.push(self.row(i), self.labels[i], self.params[i], self.regimes[i]);
        }
        out
    }

    /// Keeps the first `length` samples of every row, renormalized to [0, 1].
    pub fn truncate(&self, length: usize) -> Result<LabeledDataset> {
        if length == 0 || length > self.length {
            return Err(Error::Shape(format!("cannot truncate length {} to {length}", self.length)));
        }
        let mut out = LabeledDataset::new(self.meta.clone(), length);
        for i in 0..self.len() {
            let row = normalize_minmax(&self.row(i)[..length]);
            out.push(&row.samples, self.labels[i], self.params[i], self.regimes[i]);
        }
        Ok(out)
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|c| c.index()).collect()
    }
}

fn check_size(n_params: usize, length: usize) -> Result<()> {
    if n_params < 10 || length < 200 {
        return Err(Error::Domain(format!("need at least 10 series of length 200, got {n_params} x {length}")));
    }
    Ok(())
}

/// Labels one map orbit: discrete exponent (after the standard discard) and
/// entropy over as many bins as samples.
pub fn label_map_orbit(system: MapSystem, mu: f64, length: usize) -> Result<(Vec<f64>, Class, f64, f64)> {
    let orbit = iterate(system, mu, MAP_X0, length - 1)?;
    let lambda = discrete_lyapunov(&orbit, DISCRETE_DISCARD)?;
    let entropy = shannon_entropy(&orbit.samples, length);
    let label = label_series(lambda, Some(entropy), ENTROPY_THRESHOLD);
    Ok((orbit.samples, label.value, lambda, entropy))
}

pub fn build_map_dataset(system: MapSystem, n_params: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
    check_size(n_params, length)?;
    let id = match system {
        MapSystem::Logistic => SystemId::Logistic,
        MapSystem::SineCircle => SystemId::SineCircle,
    };
    let meta = DatasetMeta { system: id, rule: id.label_rule(), seed, resampled: 0 };
    let mut ds = LabeledDataset::new(meta, length);
    let (lo, hi) = system.mu_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_params {
        let mu = rng.random_range(lo..=hi);
        let (samples, class, _, _) = label_map_orbit(system, mu, length)?;
        ds.push(&normalize_minmax(&samples).samples, class, mu, 0);
    }
    Ok(ds)
}

/// Label of the Lorenz flow at `rho` from the sign of its largest exponent.
pub fn lorenz_label(rho: f64) -> Result<(Class, f64)> {
    let lambda = continuous_lyapunov(LorenzParams::classic(rho), &LyapunovSettings::default())?;
    let snapped = if lambda.abs() < LORENZ_ZERO_BAND { 0.0 } else { lambda };
    Ok((label_series(snapped, None, ENTROPY_THRESHOLD).value, lambda))
}

/// X, Y and Z datasets over the same rho draws, sharing the x-derived labels.
pub fn build_lorenz_datasets(n_params: usize, length: usize, seed: u64) -> Result<[LabeledDataset; 3]> {
    check_size(n_params, length)?;
    let mut out = [LorenzComponent::X, LorenzComponent::Y, LorenzComponent::Z].map(|c| {
        let id = SystemId::lorenz(c);
        LabeledDataset::new(DatasetMeta { system: id, rule: id.label_rule(), seed, resampled: 0 }, length)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resampled = 0;
    while out[0].len() < n_params {
        let rho = rng.random_range(0.0..=LORENZ_RHO_MAX);
        let run = integrate_lorenz(LorenzParams::classic(rho), [1.0; 3], LORENZ_T_END, length)
            .and_then(|traj| lorenz_label(rho).map(|label| (traj, label)));
        let (traj, (class, _)) = match run {
            Ok(v) => v,
            Err(Error::Integration { .. }) => {
                resampled += 1;
                if resampled > n_params {
                    return Err(Error::Invalid(format!("{resampled} Lorenz integrations failed")));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        for (ds, c) in out.iter_mut().zip([LorenzComponent::X, LorenzComponent::Y, LorenzComponent::Z]) {
            ds.push(&normalize_minmax(traj.component(c)).samples, class, rho, 0);
        }
    }
    for ds in &mut out {
        ds.meta.resampled = resampled;
    }
    Ok(out)
}

pub fn build_lorenz_dataset(component: LorenzComponent, n_params: usize, length: usize, seed: u64) -> Result<LabeledDataset> {
    let [x, y, z] = build_lorenz_datasets(n_params, length, seed)?;
    Ok(match component {
        LorenzComponent::X => x,
        LorenzComponent::Y => y,
        LorenzComponent::Z => z,
    })
}

/// Spectral resolution and time step of the KS runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsProfile {
    pub n_modes: usize,
    pub dt: f64,
}

impl KsProfile {
    /// 512 modes at dt = 2.5e-4.
    pub const FULL: KsProfile = KsProfile { n_modes: 512, dt: 2.5e-4 };
    /// 128 modes at dt = 5e-4, for smoke runs.
    pub const REDUCED: KsProfile = KsProfile { n_modes: 128, dt: 5e-4 };
}

/// Energy series of one KS run, normalized.
pub fn ks_energy_series(alpha: f64, profile: KsProfile) -> Result<Vec<f64>> {
    let run = solve_ks(alpha, profile.n_modes, profile.dt, KS_T_END, KS_LENGTH, false)?;
    Ok(normalize_minmax(&run.energy).samples)
}

pub fn build_ks_dataset(seed: u64, profile: KsProfile) -> Result<LabeledDataset> {
    let meta = DatasetMeta { system: SystemId::Ks, rule: LabelRule::Regime, seed, resampled: 0 };
    let mut ds = LabeledDataset::new(meta, KS_LENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (tag, regime) in KS_REGIMES.iter().enumerate() {
        for _ in 0..regime.count {
            let alpha = rng.random_range(regime.lo..=regime.hi);
            ds.push(&ks_energy_series(alpha, profile)?, regime.class, alpha, tag as u8);
        }
    }
    Ok(ds)
}

/// Seeded shuffle, then the first floor(fraction·n) rows train and the rest test.
pub fn split_train_test(ds: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Domain(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train_fraction * ds.len() as f64).floor() as usize;
    Ok((ds.select(&idx[..n_train]), ds.select(&idx[n_train..])))
}

/// Seeded random subset with floor(fraction·n) rows (at least one).
pub fn subsample(ds: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("subsample fraction {fraction} outside (0, 1]")));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ((fraction * ds.len() as f64).floor() as usize).max(1);
    Ok(ds.select(&idx[..n]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n: usize) -> LabeledDataset {
        let meta = DatasetMeta { system: SystemId::Logistic, rule: LabelRule::LyapunovEntropy, seed: 0, resampled: 0 };
        let mut ds = LabeledDataset::new(meta, 3);
        for i in 0..n {
            let c = if i % 3 == 0 { Class::C } else { Class::NC };
            ds.push(&[0.0, i as f64 / n as f64, 1.0], c, i as f64, 0);
        }
        ds
    }

    #[test]
    fn map_dataset_rows_are_normalized_and_labeled() {
        let ds = build_map_dataset(MapSystem::Logistic, 200, 1000, 7).unwrap();
        assert_eq!((ds.len(), ds.series.len(), ds.params.len()), (200, 200_000, 200));
        for i in 0..ds.len() {
            let row = ds.row(i);
            let (lo, hi) = row.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            assert!(lo == 0.0 && (hi == 1.0 || hi == 0.0));
            assert!((0.0..=4.0).contains(&ds.params[i]));
        }
        assert_eq!(ds, build_map_dataset(MapSystem::Logistic, 200, 1000, 7).unwrap());
        assert_ne!(ds.params, build_map_dataset(MapSystem::Logistic, 200, 1000, 8).unwrap().params);
        assert!(build_map_dataset(MapSystem::Logistic, 5, 1000, 7).is_err());
    }

    #[test]
    fn map_labels_are_reproducible_from_parameters() {
        let ds = build_map_dataset(MapSystem::SineCircle, 50, 500, 3).unwrap();
        for i in 0..ds.len() {
            let (raw, class, _, _) = label_map_orbit(MapSystem::SineCircle, ds.params[i], 500).unwrap();
            assert_eq!(class, ds.labels[i]);
            assert_eq!(normalize_minmax(&raw).samples, ds.row(i));
        }
    }

    #[test]
    fn lorenz_reference_labels() {
        assert_eq!(lorenz_label(28.0).unwrap().0, Class::C);
        assert_eq!(lorenz_label(0.5).unwrap().0, Class::NC);
        // periodic window: exponent indistinguishable from zero
        let (class, lambda) = lorenz_label(230.0).unwrap();
        assert!(lambda.abs() < LORENZ_ZERO_BAND && class == Class::NC);
    }

    #[test]
    fn lorenz_components_share_labels() {
        let [x, y, z] = build_lorenz_datasets(12, 200, 4).unwrap();
        assert_eq!(x.labels, y.labels);
        assert_eq!(x.labels, z.labels);
        assert_eq!(x.params, z.params);
        assert_ne!(x.series, y.series);
        assert_eq!(z.meta.system, SystemId::LorenzZ);
    }

    #[test]
    fn ks_design_is_balanced() {
        let total: usize = KS_REGIMES.iter().map(|r| r.count).sum();
        let chaotic: usize = KS_REGIMES.iter().filter(|r| r.class == Class::C).map(|r| r.count).sum();
        assert_eq!((total, chaotic), (1000, 500));
        let series = ks_energy_series(125.0, KsProfile::REDUCED).unwrap();
        assert_eq!(series.len(), KS_LENGTH);
        assert!(series.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ds = toy(5000);
        let (tr, te) = split_train_test(&ds, 2.0 / 3.0, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (3333, 1667));
        let mut all: Vec<f64> = tr.params.iter().chain(&te.params).cloned().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ds.params);
        assert_eq!(split_train_test(&ds, 2.0 / 3.0, 1).unwrap().0, tr);
        assert!(split_train_test(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn truncation_renormalizes() {
        let ds = toy(4);
        let t = ds.truncate(2).unwrap();
        assert_eq!(t.length, 2);
        assert_eq!(t.row(1), &[0.0, 1.0]);
        assert!(ds.truncate(4).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_rows(n in 10usize..400, frac in 0.05f64..0.95, seed in 0u64..50) {
            let ds = toy(n);
            let (tr, te) = split_train_test(&ds, frac, seed).unwrap();
            prop_assert_eq!(tr.len() + te.len(), n);
            prop_assert!((tr.len() as f64 - frac * n as f64).abs() <= 1.0);
            let mut seen: Vec<f64> = tr.params.iter().chain(&te.params).cloned().collect();
            seen.sort_by(f64::total_cmp);
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
        }
    }
}
