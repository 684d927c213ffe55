//! Content-keyed workdir cache for datasets, trained models, and evaluations.
//!
//! Layout under the workdir:
//! `datasets/<key>.<hash>.ctsd`, `models/<hash>.ckpt` (+ `.csv` loss history),
//! `evals/<hash>.json`. Every write happens under `<file>.lock`.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use chaosnet_core::dynsys::LorenzComponent;
use chaosnet_core::pipeline::{
    build_lorenz_datasets, DataSource, DatasetSpec, EvalRecord, LabeledDataset, ResultStore, TrainConfig,
};
use chaosnet_core::{Architecture, Error, Network, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::format::{self, write_atomic, FormatError, Hyperparams, DATASET_VERSION};

pub fn content_hash(key: &str) -> String {
    let digest = Sha256::digest(key.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Invalid(format!("cache: {e}"))
}

/// Exclusive claim on one cache entry; released on drop.
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(target: &Path) -> io::Result<Lock> {
        let path = PathBuf::from(format!("{}.lock", target.display()));
        let started = Instant::now();
        loop {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    write!(f, "{}", std::process::id())?;
                    return Ok(Lock { path });
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                    if holder_is_gone(&path) {
                        warn!("removing stale lock {}", path.display());
                        let _ = fs::remove_file(&path);
                        continue;
                    }
                    if started.elapsed() > Duration::from_secs(24 * 3600) {
                        return Err(io::Error::new(io::ErrorKind::TimedOut, format!("lock {} held too long", path.display())));
                    }
                    thread::sleep(Duration::from_millis(250));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn holder_is_gone(lock: &Path) -> bool {
    let Ok(pid) = fs::read_to_string(lock) else { return false };
    let Ok(pid) = pid.trim().parse::<u32>() else { return false };
    Path::new("/proc/self").exists() && !Path::new(&format!("/proc/{pid}")).exists()
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEvent {
    pub key: String,
    pub file: String,
    pub cached: bool,
    pub seconds: f64,
}

/// Dataset source backed by files in `<workdir>/datasets`.
pub struct FileSource {
    dir: PathBuf,
    pub events: Vec<CacheEvent>,
}

impl FileSource {
    pub fn new(workdir: &Path) -> io::Result<FileSource> {
        let dir = workdir.join("datasets");
        fs::create_dir_all(&dir)?;
        Ok(FileSource { dir, events: Vec::new() })
    }

    pub fn path(&self, spec: &DatasetSpec) -> PathBuf {
        let key = spec.key();
        self.dir.join(format!("{key}.{}.ctsd", content_hash(&format!("v{DATASET_VERSION}:{key}"))))
    }

    fn read(&self, path: &Path) -> Option<LabeledDataset> {
        match format::read_dataset(path) {
            Ok(ds) => Some(ds),
            Err(FormatError::Io(e)) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => {
                warn!("ignoring unreadable {}: {e}", path.display());
                None
            }
        }
    }
}

impl DataSource for FileSource {
    fn dataset(&mut self, spec: &DatasetSpec) -> Result<LabeledDataset> {
        let path = self.path(spec);
        let started = Instant::now();
        let file = path.display().to_string();
        if let Some(ds) = self.read(&path) {
            self.events.push(CacheEvent { key: spec.key(), file, cached: true, seconds: started.elapsed().as_secs_f64() });
            return Ok(ds);
        }
        let _lock = Lock::acquire(&path).map_err(io_err)?;
        if let Some(ds) = self.read(&path) {
            self.events.push(CacheEvent { key: spec.key(), file, cached: true, seconds: started.elapsed().as_secs_f64() });
            return Ok(ds);
        }
        info!("generating {}", spec.key());
        let ds = match *spec {
            // the three components share their labels: build and store them together
            DatasetSpec::Lorenz { component, count, length, seed } => {
                let all = build_lorenz_datasets(count, length, seed)?;
                let mut wanted = None;
                for (c, ds) in [LorenzComponent::X, LorenzComponent::Y, LorenzComponent::Z].into_iter().zip(all) {
                    let sibling = DatasetSpec::Lorenz { component: c, count, length, seed };
                    if c == component {
                        wanted = Some(ds);
                    } else {
                        let p = self.path(&sibling);
                        let _l = Lock::acquire(&p).map_err(io_err)?;
                        if !p.exists() {
                            format::write_dataset(&p, &ds).map_err(io_err)?;
                        }
                    }
                }
                wanted.expect("component present")
            }
            _ => spec.build()?,
        };
        format::write_dataset(&path, &ds).map_err(io_err)?;
        // what later runs will read back: samples rounded to f32
        let ds = format::decode_dataset(&format::encode_dataset(&ds)).map_err(io_err)?;
        self.events.push(CacheEvent { key: spec.key(), file, cached: false, seconds: started.elapsed().as_secs_f64() });
        Ok(ds)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredEval {
    key: String,
    record: EvalRecord,
}

/// Model and evaluation store in `<workdir>/models` and `<workdir>/evals`.
pub struct FileStore {
    models: PathBuf,
    evals: PathBuf,
    pub trained: usize,
    pub evaluated: usize,
}

impl FileStore {
    pub fn new(workdir: &Path) -> io::Result<FileStore> {
        let models = workdir.join("models");
        let evals = workdir.join("evals");
        fs::create_dir_all(&models)?;
        fs::create_dir_all(&evals)?;
        Ok(FileStore { models, evals, trained: 0, evaluated: 0 })
    }

    pub fn model_path(&self, key: &str) -> PathBuf {
        self.models.join(format!("{}.ckpt", content_hash(key)))
    }

    fn eval_path(&self, key: &str) -> PathBuf {
        self.evals.join(format!("{}.json", content_hash(key)))
    }
}

impl ResultStore for FileStore {
    fn load_eval(&mut self, key: &str) -> Result<Option<EvalRecord>> {
        let Ok(text) = fs::read_to_string(self.eval_path(key)) else { return Ok(None) };
        match serde_json::from_str::<StoredEval>(&text) {
            Ok(s) if s.key == key => Ok(Some(s.record)),
            _ => Ok(None),
        }
    }

    fn store_eval(&mut self, key: &str, record: &EvalRecord) -> Result<()> {
        let path = self.eval_path(key);
        let _lock = Lock::acquire(&path).map_err(io_err)?;
        let text = serde_json::to_string_pretty(&StoredEval { key: key.into(), record: record.clone() }).map_err(io_err)?;
        write_atomic(&path, text.as_bytes()).map_err(io_err)?;
        self.evaluated += 1;
        Ok(())
    }

    fn load_model(&mut self, key: &str, arch: &Architecture) -> Result<Option<Network>> {
        let path = self.model_path(key);
        if !path.exists() {
            return Ok(None);
        }
        match format::read_checkpoint(&path) {
            Ok(ck) if ck.arch == *arch => Ok(Some(ck.net)),
            Ok(_) => Ok(None),
            Err(e) => {
                warn!("retraining: {} unreadable ({e})", path.display());
                Ok(None)
            }
        }
    }

    fn store_model(&mut self, key: &str, arch: &Architecture, cfg: &TrainConfig, net: &Network, history: &[f64]) -> Result<()> {
        let path = self.model_path(key);
        let _lock = Lock::acquire(&path).map_err(io_err)?;
        let hyper = Hyperparams { epochs: cfg.epochs as u32, batch_size: cfg.batch_size as u32, seed: cfg.seed, adam: cfg.adam };
        format::write_checkpoint(&path, arch, &hyper, net).map_err(io_err)?;
        write_atomic(&path.with_extension("csv"), crate::report::history_csv(history).as_bytes()).map_err(io_err)?;
        write_atomic(&path.with_extension("key"), key.as_bytes()).map_err(io_err)?;
        self.trained += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chaosnet_core::dynsys::MapSystem;

    #[test]
    fn hashes_are_stable_and_distinct() {
        assert_eq!(content_hash("a"), content_hash("a"));
        assert_ne!(content_hash("a"), content_hash("b"));
        assert_eq!(content_hash("a").len(), 16);
    }

    #[test]
    fn second_request_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let mut src = FileSource::new(dir.path()).unwrap();
        let spec = DatasetSpec::Map { system: MapSystem::Logistic, count: 10, length: 200, seed: 1 };
        let a = src.dataset(&spec).unwrap();
        let b = src.dataset(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(src.events.iter().map(|e| e.cached).collect::<Vec<_>>(), [false, true]);
        assert!(!PathBuf::from(format!("{}.lock", src.path(&spec).display())).exists());
    }

    #[test]
    fn lorenz_siblings_are_written_together() {
        let dir = tempfile::tempdir().unwrap();
        let mut src = FileSource::new(dir.path()).unwrap();
        let spec = |component| DatasetSpec::Lorenz { component, count: 10, length: 200, seed: 2 };
        let z = src.dataset(&spec(LorenzComponent::Z)).unwrap();
        assert!(src.path(&spec(LorenzComponent::X)).exists());
        let x = src.dataset(&spec(LorenzComponent::X)).unwrap();
        assert_eq!(x.labels, z.labels);
        assert!(src.events[1].cached);
    }

    #[test]
    fn stale_lock_is_reclaimed() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("x");
        // pid far above any live process
        fs::write(dir.path().join("x.lock"), "4000000000").unwrap();
        let lock = Lock::acquire(&target).unwrap();
        drop(lock);
        assert!(!dir.path().join("x.lock").exists());
    }
}
