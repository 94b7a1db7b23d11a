//! Binary checkpoints: model tensors, optimizer state and the run metadata
//! needed to regenerate a report. Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "TITANCK1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (see `CheckpointHeader`)
//! count        u64      number of tensors
//! per tensor:
//!   name_len   u32
//!   name       name_len bytes UTF-8
//!   ndim       u32
//!   dims       ndim x u64
//!   data       prod(dims) x f64 (IEEE 754 binary64)
//! ```
//!
//! Tensor names: `param/<name>` for trainable tensors, `frozen/<name>` for
//! fixed ones, and for the optimizer `adam.m/<name>`, `adam.v/<name>` and
//! (Bregman runs) `dual/<name>`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use titan_core::autodiff::NormStats;
use titan_core::Tensor;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::model::AnyModel;
use crate::train::OptimizerState;

pub const MAGIC: &[u8; 8] = b"TITANCK1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ExperimentConfig,
    /// Model output channels (the rest of the architecture is in `config`).
    pub out_channels: usize,
    pub loss_curve: Vec<f64>,
    pub adam_steps: u64,
    /// Normalization statistics of the last training pass, per layer.
    #[serde(default)]
    pub norm_stats: Vec<StoredNormStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl From<&NormStats> for StoredNormStats {
    fn from(s: &NormStats) -> Self {
        Self { mean: s.mean.clone(), var: s.var.clone() }
    }
}

impl From<&StoredNormStats> for NormStats {
    fn from(s: &StoredNormStats) -> Self {
        NormStats { mean: s.mean.clone(), var: s.var.clone() }
    }
}

pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: AnyModel,
    pub optimizer: OptimizerState,
}

fn named_tensors<'a>(model: &'a AnyModel, opt: &'a OptimizerState) -> Vec<(String, &'a Tensor)> {
    let p = model.parametric();
    let specs = p.param_specs();
    let mut out: Vec<(String, &Tensor)> = Vec::new();
    for (s, t) in specs.iter().zip(p.params()) {
        out.push((format!("param/{}", s.name), t));
    }
    for (name, t) in p.frozen() {
        out.push((format!("frozen/{name}"), t));
    }
    let adam = opt.adam();
    for (i, s) in specs.iter().enumerate() {
        out.push((format!("adam.m/{}", s.name), &adam.m[i]));
        out.push((format!("adam.v/{}", s.name), &adam.v[i]));
    }
    if let Some(b) = opt.bregman() {
        for (s, u) in specs.iter().zip(&b.duals) {
            if let Some(u) = u {
                out.push((format!("dual/{}", s.name), u));
            }
        }
    }
    out
}

pub fn save(path: &Path, header: &CheckpointHeader, model: &AnyModel, opt: &OptimizerState) -> Result<()> {
    let io = |e| HarnessError::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    let json = serde_json::to_vec(header).expect("header serializes");
    let tensors = named_tensors(model, opt);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    w.write_all(&(tensors.len() as u64).to_le_bytes()).map_err(io)?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name.as_bytes()).map_err(io)?;
        w.write_all(&(t.ndim() as u32).to_le_bytes()).map_err(io)?;
        for d in t.shape() {
            w.write_all(&(*d as u64).to_le_bytes()).map_err(io)?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

struct Cursor<'a> {
    path: &'a Path,
    r: BufReader<File>,
}

impl Cursor<'_> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0; n];
        self.r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                HarnessError::format(self.path, "truncated checkpoint")
            } else {
                HarnessError::io(self.path, e)
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str, limit: u64) -> Result<usize> {
        let n = self.u64()?;
        if n > limit {
            return Err(HarnessError::format(self.path, format!("implausible {what} {n}")));
        }
        Ok(n as usize)
    }
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut c = Cursor { path, r: BufReader::new(file) };
    if c.bytes(8)? != MAGIC {
        return Err(HarnessError::format(path, "not a TITAN checkpoint (bad magic)"));
    }
    let hlen = c.len("header length", 1 << 30)?;
    let header: CheckpointHeader = serde_json::from_slice(&c.bytes(hlen)?)
        .map_err(|e| HarnessError::format(path, format!("checkpoint header: {e}")))?;
    if header.format_version != 1 {
        return Err(HarnessError::format(path, format!("unsupported checkpoint version {}", header.format_version)));
    }
    let count = c.len("tensor count", 1 << 20)?;
    let mut tensors = std::collections::BTreeMap::new();
    for _ in 0..count {
        let nlen = c.u32()? as usize;
        let name =
            String::from_utf8(c.bytes(nlen)?).map_err(|_| HarnessError::format(path, "tensor name is not UTF-8"))?;
        let ndim = c.u32()? as usize;
        let dims = (0..ndim).map(|_| c.len("dimension", 1 << 32)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = c.bytes(8 * n)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        tensors.insert(name, Tensor::new(dims, data)?);
    }

    let mut model = AnyModel::build(&header.config, header.out_channels)?;
    let mut optimizer = crate::train::OptimizerState::init(&header.config, &mut model)?;
    let mut take = |name: String, into: &mut Tensor| -> Result<()> {
        let t = tensors.remove(&name).ok_or_else(|| HarnessError::format(path, format!("missing tensor `{name}`")))?;
        if t.shape() != into.shape() {
            return Err(HarnessError::format(
                path,
                format!("tensor `{name}` has shape {:?}, model expects {:?}", t.shape(), into.shape()),
            ));
        }
        *into = t;
        Ok(())
    };
    let specs = model.param_specs();
    {
        let p = model.parametric_mut();
        for (s, t) in specs.iter().zip(p.params_mut()) {
            take(format!("param/{}", s.name), t)?;
        }
        for (name, t) in p.frozen_mut() {
            take(format!("frozen/{name}"), t)?;
        }
    }
    {
        let adam = optimizer.adam_mut();
        adam.t = header.adam_steps;
        for (i, s) in specs.iter().enumerate() {
            take(format!("adam.m/{}", s.name), &mut adam.m[i])?;
            take(format!("adam.v/{}", s.name), &mut adam.v[i])?;
        }
    }
    if let Some(b) = optimizer.bregman_mut() {
        for (s, u) in specs.iter().zip(b.duals.iter_mut()) {
            if let Some(u) = u {
                take(format!("dual/{}", s.name), u)?;
            }
        }
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(HarnessError::format(path, format!("unexpected tensor `{extra}`")));
    }
    Ok(Checkpoint { header, model, optimizer })
}
