//! Binary dataset and checkpoint files. All integers are little-endian.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chaosnet_core::nn::Adam;
use chaosnet_core::pipeline::{DatasetMeta, LabelRule, LabeledDataset, SystemId};
use chaosnet_core::zoo::{Architecture, ArchitectureId};
use chaosnet_core::{Class, Network};
use crc::{Crc, CRC_64_XZ};
use thiserror::Error;

pub const DATASET_MAGIC: &[u8; 4] = b"CTSD";
pub const DATASET_VERSION: u16 = 1;
/// magic 4, version 2, count 4, length 4, system 1, rule 1, seed 8.
pub const DATASET_HEADER_LEN: usize = 24;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CTCK";
pub const CHECKPOINT_VERSION: u16 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Core(#[from] chaosnet_core::Error),
}

fn corrupt(msg: impl Into<String>) -> FormatError {
    FormatError::Corrupt(msg.into())
}

pub fn dataset_file_len(count: usize, length: usize) -> usize {
    DATASET_HEADER_LEN + count * (10 + 4 * length)
}

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(dataset_file_len(ds.len(), ds.length));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.length as u32).to_le_bytes());
    out.push(ds.meta.system.code());
    out.push(ds.meta.rule.code());
    out.extend_from_slice(&ds.meta.seed.to_le_bytes());
    for i in 0..ds.len() {
        out.push(ds.labels[i].index() as u8);
        out.push(ds.regimes[i]);
        out.extend_from_slice(&ds.params[i].to_le_bytes());
        for &v in ds.row(i) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<LabeledDataset, FormatError> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != DATASET_MAGIC {
        return Err(corrupt("not a dataset file"));
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(corrupt(format!("unsupported dataset version {version}")));
    }
    let count = r.u32()? as usize;
    let length = r.u32()? as usize;
    let system = SystemId::from_code(r.u8()?).ok_or_else(|| corrupt("unknown system id"))?;
    let rule = LabelRule::from_code(r.u8()?).ok_or_else(|| corrupt("unknown label rule"))?;
    let seed = r.u64()?;
    if buf.len() != dataset_file_len(count, length) {
        return Err(corrupt(format!("size {} does not match {count} rows of length {length}", buf.len())));
    }
    let mut ds = LabeledDataset::new(DatasetMeta { system, rule, seed, resampled: 0 }, length);
    let mut row = vec![0.0; length];
    for _ in 0..count {
        let label = Class::from_index(r.u8()? as usize).ok_or_else(|| corrupt("bad label"))?;
        let regime = r.u8()?;
        let param = r.f64()?;
        for (v, b) in row.iter_mut().zip(r.take(4 * length)?.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
        ds.push(&row, label, param, regime);
    }
    Ok(ds)
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset) -> io::Result<()> {
    write_atomic(path, &encode_dataset(ds))
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset, FormatError> {
    decode_dataset(&fs::read(path)?)
}

/// Training settings stored with a model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub epochs: u32,
    pub batch_size: u32,
    pub seed: u64,
    pub adam: Adam,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub input_len: usize,
    pub hyper: Hyperparams,
    pub net: Network,
}

pub fn encode_checkpoint(arch: &Architecture, hyper: &Hyperparams, net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(arch.id.code());
    out.extend_from_slice(&(arch.kernel as u32).to_le_bytes());
    out.extend_from_slice(&(arch.channels as u32).to_le_bytes());
    out.extend_from_slice(&(net.input_shape().1 as u32).to_le_bytes());
    out.extend_from_slice(&hyper.epochs.to_le_bytes());
    out.extend_from_slice(&hyper.batch_size.to_le_bytes());
    out.extend_from_slice(&hyper.seed.to_le_bytes());
    for v in [hyper.adam.lr, hyper.adam.beta1, hyper.adam.beta2, hyper.adam.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let state = net.state();
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (shape, values) in &state {
        for d in shape {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = CRC64.checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

/// Verifies the checksum before anything else is parsed.
pub fn decode_checkpoint(buf: &[u8]) -> Result<Checkpoint, FormatError> {
    if buf.len() < 8 + CHECKPOINT_MAGIC.len() {
        return Err(corrupt("checkpoint too short"));
    }
    let (body, tail) = buf.split_at(buf.len() - 8);
    if CRC64.checksum(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checkpoint checksum mismatch"));
    }
    let mut r = Reader { buf: body, at: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file"));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(format!("unsupported checkpoint version {version}")));
    }
    let id = ArchitectureId::from_code(r.u8()?).ok_or_else(|| corrupt("unknown architecture"))?;
    let arch = Architecture { id, kernel: r.u32()? as usize, channels: r.u32()? as usize };
    let input_len = r.u32()? as usize;
    let (epochs, batch_size, seed) = (r.u32()?, r.u32()?, r.u64()?);
    let adam = Adam { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()? };
    let n = r.u32()? as usize;
    let mut state = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("tensor too large"))?;
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
        state.push((shape, bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()));
    }
    if r.at != body.len() {
        return Err(corrupt("trailing bytes in checkpoint"));
    }
    let mut net = arch.build(input_len, 0)?;
    net.load_state(&state).map_err(|e| corrupt(format!("tensor layout does not match {}: {e}", id.name())))?;
    net.set_mode(chaosnet_core::nn::Mode::Eval);
    Ok(Checkpoint { arch, input_len, hyper: Hyperparams { epochs, batch_size, seed, adam }, net })
}

pub fn write_checkpoint(path: &Path, arch: &Architecture, hyper: &Hyperparams, net: &Network) -> io::Result<()> {
    write_atomic(path, &encode_checkpoint(arch, hyper, net))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, FormatError> {
    decode_checkpoint(&fs::read(path)?)
}
