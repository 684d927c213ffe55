use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chaosnet_core::dynsys::{LorenzComponent, MapSystem};
use chaosnet_core::nn::Adam;
use chaosnet_core::pipeline::{
    build_ks_dataset, build_lorenz_dataset, build_map_dataset, regime_reports, predict_classes, run_table1,
    run_table2, run_table3, split_train_test, sweep_lkcnn_hyperparams, sweep_series_length, sweep_training_size,
    train, KsProfile, Lab, LabeledDataset, RecipeConfig, SystemId, TrainConfig, DEFAULT_CHANNELS, DEFAULT_KERNELS,
    DEFAULT_LENGTH_FRACTIONS, DEFAULT_TRAINING_FRACTIONS, KS_LENGTH,
};
use chaosnet_core::{Architecture, ArchitectureId, Class, MetricsReport};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::json;

use crate::cache::{FileSource, FileStore};
use crate::error::CliError;
use crate::format::{self, Hyperparams};
use crate::report;

#[derive(Debug, Parser)]
#[command(name = "chaosnet", version, about = "Generate chaotic time series and train classifiers on them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset file.
    Generate(GenerateArgs),
    /// Train a network on the training split of a dataset file.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset file.
    Eval(EvalArgs),
    /// Run a table or figure recipe with cached datasets and models.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Full,
    Reduced,
}

impl Profile {
    pub fn ks(self) -> KsProfile {
        match self {
            Profile::Full => KsProfile::FULL,
            Profile::Reduced => KsProfile::REDUCED,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub system: SystemId,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// KS spectral resolution.
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    pub ks_profile: Profile,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub arch: ArchitectureId,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history CSV; defaults to the checkpoint path with a .csv extension.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// LKCNN kernel size.
    #[arg(long, default_value_t = 100)]
    pub kernel: usize,
    /// LKCNN channel count.
    #[arg(long, default_value_t = 5)]
    pub channels: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Rows {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Add one row per regime tag (the six KS intervals).
    #[arg(long)]
    pub per_regime: bool,
    /// Which rows of the dataset to evaluate.
    #[arg(long, value_enum, default_value_t = Rows::All)]
    pub rows: Rows,
    /// Also write the metrics as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Recipe {
    Table1,
    Table2,
    #[value(name = "table3-x")]
    Table3X,
    #[value(name = "table3-z")]
    Table3Z,
    Fig9,
    Fig10,
    #[value(name = "appendixA", alias = "appendix-a")]
    AppendixA,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Table1 => "table1",
            Recipe::Table2 => "table2",
            Recipe::Table3X => "table3-x",
            Recipe::Table3Z => "table3-z",
            Recipe::Fig9 => "fig9",
            Recipe::Fig10 => "fig10",
            Recipe::AppendixA => "appendixA",
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub recipe: Recipe,
    /// Training seeds 0..k for table recipes.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub workdir: PathBuf,
    /// Training cycles per point for the sweeps.
    #[arg(long, default_value_t = 20)]
    pub cycles: usize,
    /// Sweep grid: training fractions (fig9) or length fractions (fig10).
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub archs: Option<Vec<ArchitectureId>>,
    #[arg(long, value_delimiter = ',')]
    pub kernels: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Profile::Full)]
    pub ks_profile: Profile,
    #[arg(long, default_value_t = 5000)]
    pub n_series: usize,
    #[arg(long, default_value_t = 1000)]
    pub length: usize,
    #[arg(long, default_value_t = 7)]
    pub data_seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Experiment(a) => experiment(&a),
    }
}

fn write(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(format::write_atomic(path, contents)?)
}

fn class_counts(ds: &LabeledDataset) -> (usize, usize) {
    let c = ds.labels.iter().filter(|&&l| l == Class::C).count();
    (c, ds.len() - c)
}

pub fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let ds = match a.system {
        SystemId::Ks => {
            if a.count.is_some() || a.length.is_some() {
                warn!("--count and --length are ignored for ks: the design is fixed at 1000 series of {KS_LENGTH}");
            }
            build_ks_dataset(a.seed, a.ks_profile.ks())?
        }
        system => {
            let count = a.count.ok_or_else(|| CliError::Usage("--count is required".into()))?;
            let length = a.length.ok_or_else(|| CliError::Usage("--length is required".into()))?;
            match system {
                SystemId::Logistic => build_map_dataset(MapSystem::Logistic, count, length, a.seed)?,
                SystemId::SineCircle => build_map_dataset(MapSystem::SineCircle, count, length, a.seed)?,
                SystemId::LorenzX => build_lorenz_dataset(LorenzComponent::X, count, length, a.seed)?,
                SystemId::LorenzY => build_lorenz_dataset(LorenzComponent::Y, count, length, a.seed)?,
                _ => build_lorenz_dataset(LorenzComponent::Z, count, length, a.seed)?,
            }
        }
    };
    let bytes = format::encode_dataset(&ds);
    write(&a.out, &bytes)?;
    let (c, nc) = class_counts(&ds);
    let summary = json!({
        "system": a.system.name(),
        "count": ds.len(),
        "length": ds.length,
        "seed": a.seed,
        "chaotic": c,
        "non_chaotic": nc,
        "chaotic_fraction": ds.chaotic_fraction(),
        "resampled": ds.meta.resampled,
        "bytes": bytes.len(),
        "wall_time_s": started.elapsed().as_secs_f64(),
        "out": a.out.display().to_string(),
    });
    println!("{}", report::to_json(&summary));
    Ok(())
}

fn select_rows(ds: LabeledDataset, rows: Rows, split: &SplitArgs) -> Result<LabeledDataset, CliError> {
    if rows == Rows::All {
        return Ok(ds);
    }
    let (tr, te) = split_train_test(&ds, split.train_fraction, split.split_seed).map_err(CliError::usage)?;
    Ok(if rows == Rows::Train { tr } else { te })
}

pub fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let ds = format::read_dataset(&a.data)?;
    let set = select_rows(ds, Rows::Train, &a.split)?;
    let arch = Architecture { id: a.arch, kernel: a.kernel, channels: a.channels };
    let mut net = arch.build(set.length, a.seed).map_err(CliError::usage)?;
    let adam = Adam { lr: a.lr, ..Adam::default() };
    let cfg = TrainConfig { epochs: a.epochs, batch_size: a.batch, seed: a.seed, architecture: a.arch, adam };
    let history = train(&mut net, &set, &cfg)?;
    let hyper = Hyperparams { epochs: a.epochs as u32, batch_size: a.batch as u32, seed: a.seed, adam };
    write(&a.out, &format::encode_checkpoint(&arch, &hyper, &net))?;
    let history_path = a.history.clone().unwrap_or_else(|| a.out.with_extension("csv"));
    write(&history_path, report::history_csv(&history).as_bytes())?;
    let summary = json!({
        "arch": a.arch.name(),
        "rows": set.len(),
        "parameters": net.num_params(),
        "history": history,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "out": a.out.display().to_string(),
    });
    println!("{}", report::to_json(&summary));
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let ck = format::read_checkpoint(&a.model)?;
    let ds = select_rows(format::read_dataset(&a.data)?, a.rows, &a.split)?;
    let pred = predict_classes(&ck.net, &ds).map_err(CliError::usage)?;
    let overall = MetricsReport::from_pairs(ds.labels.iter().copied().zip(pred.iter().copied()));
    let ks = ds.meta.system == SystemId::Ks;
    let mut out = report::metrics_json(&overall);
    let regimes = a.per_regime.then(|| regime_reports(&ds, &pred));
    if let Some(rows) = &regimes {
        out.as_object_mut().unwrap().insert("regimes".into(), report::regimes_json(rows, ks));
    }
    if let Some(path) = &a.csv {
        write(path, report::metrics_csv(&overall, regimes.as_deref().map(|r| (r, ks))).as_bytes())?;
    }
    println!("{}", report::to_json(&out));
    Ok(())
}

pub fn recipe_config(a: &ExperimentArgs) -> RecipeConfig {
    RecipeConfig {
        n_series: a.n_series,
        length: a.length,
        data_seed: a.data_seed,
        ks_profile: a.ks_profile.ks(),
        epochs: a.epochs,
        batch_size: a.batch,
        ..RecipeConfig::default()
    }
}

pub fn experiment(a: &ExperimentArgs) -> Result<(), CliError> {
    let started = Instant::now();
    fs::create_dir_all(&a.workdir)?;
    let mut source = FileSource::new(&a.workdir)?;
    let mut store = FileStore::new(&a.workdir)?;
    let cfg = recipe_config(a);
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let archs = a.archs.clone().unwrap_or_else(|| ArchitectureId::ALL.to_vec());
    let name = a.recipe.name();
    let reports = a.workdir.join("reports");
    let (json_text, csv, detail, failures) = {
        let mut lab = Lab::new(&mut source, &mut store, cfg);
        match a.recipe {
            Recipe::Table1 | Recipe::Table2 | Recipe::Table3X | Recipe::Table3Z | Recipe::AppendixA => {
                let t = match a.recipe {
                    Recipe::Table1 => run_table1(&mut lab, &archs, &seeds)?,
                    Recipe::Table2 => run_table2(&mut lab, &archs, &seeds)?,
                    Recipe::Table3X => run_table3(&mut lab, LorenzComponent::X, &seeds)?,
                    Recipe::Table3Z => run_table3(&mut lab, LorenzComponent::Z, &seeds)?,
                    _ => sweep_lkcnn_hyperparams(
                        &mut lab,
                        a.kernels.as_deref().unwrap_or(&DEFAULT_KERNELS),
                        a.channels.as_deref().unwrap_or(&DEFAULT_CHANNELS),
                        &seeds,
                    )?,
                };
                (report::to_json(&t), report::table_csv(&t), report::table_seeds_csv(&t), t.failures)
            }
            Recipe::Fig9 | Recipe::Fig10 => {
                let q = if a.recipe == Recipe::Fig9 {
                    sweep_training_size(&mut lab, a.fractions.as_deref().unwrap_or(&DEFAULT_TRAINING_FRACTIONS), a.cycles)?
                } else {
                    sweep_series_length(&mut lab, a.fractions.as_deref().unwrap_or(&DEFAULT_LENGTH_FRACTIONS), a.cycles)?
                };
                (report::to_json(&q), report::quartile_csv(&q), report::quartile_cycles_csv(&q), q.failures)
            }
        }
    };
    let detail_name = if matches!(a.recipe, Recipe::Fig9 | Recipe::Fig10) { "cycles" } else { "seeds" };
    write(&reports.join(format!("{name}.csv")), csv.as_bytes())?;
    write(&reports.join(format!("{name}_{detail_name}.csv")), detail.as_bytes())?;
    write(&reports.join(format!("{name}.json")), json_text.as_bytes())?;
    let manifest = json!({
        "recipe": name,
        "seeds": seeds,
        "cycles": a.cycles,
        "config": cfg,
        "versions": { "chaosnet": env!("CARGO_PKG_VERSION"), "dataset_format": format::DATASET_VERSION, "checkpoint_format": format::CHECKPOINT_VERSION },
        "datasets": source.events.iter().map(|e| json!({
            "key": e.key,
            "file": e.file,
            "status": if e.cached { "cached" } else { "generated" },
            "seconds": e.seconds,
        })).collect::<Vec<_>>(),
        "models_trained": store.trained,
        "evaluations_computed": store.evaluated,
        "failures": failures,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    write(&reports.join(format!("{name}.manifest.json")), report::to_json(&manifest).as_bytes())?;
    print!("{csv}");
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("{} seed {}: {}", f.row, f.seed, f.error);
        }
        return Err(CliError::Numerical(format!("{} of the runs failed", failures.len())));
    }
    Ok(())
}
