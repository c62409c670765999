//! Binary model container.
//!
//! ```text
//! magic    4 bytes  "PTCN"
//! version  u32 LE
//! cfg_len  u32 LE, followed by cfg_len bytes of canonical JSON (TcnConfig)
//! count    u32 LE  number of tensors that follow
//! tensor*  ndim u32 LE, ndim x u64 LE dims, prod(dims) x f64 LE
//! ```
//!
//! Tensors are the parameters in declaration order followed by the
//! batch-norm running mean and variance of each block.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{TcnConfig, TcnError, TcnModel, NUM_BLOCKS};
use crate::nn::{RunningStats, Tensor, BN_MOMENTUM};

pub const MODEL_MAGIC: &[u8; 4] = b"PTCN";
pub const MODEL_VERSION: u32 = 1;

fn write_tensor<W: Write>(w: &mut W, shape: &[usize], data: &[f64]) -> std::io::Result<()> {
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model<W: Write>(model: &TcnModel, w: &mut W) -> Result<(), TcnError> {
    let cfg = serde_json::to_vec(model.config()).map_err(|e| TcnError::Load(e.to_string()))?;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    let count = model.params().len() + 2 * model.bn_stats().len();
    w.write_all(&(count as u32).to_le_bytes())?;
    for p in model.params() {
        write_tensor(w, p.shape(), p.data())?;
    }
    for s in model.bn_stats() {
        write_tensor(w, &[s.mean.len()], &s.mean)?;
        write_tensor(w, &[s.var.len()], &s.var)?;
    }
    Ok(())
}

pub fn save_model(model: &TcnModel, path: impl AsRef<Path>) -> Result<(), TcnError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], TcnError> {
        if self.buf.len() - self.pos < n {
            return Err(TcnError::Load(format!("truncated file while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, TcnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, TcnError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn tensor(&mut self, i: usize) -> Result<Tensor, TcnError> {
        let what = format!("tensor {i}");
        let ndim = self.u32(&what)? as usize;
        if ndim > 8 {
            return Err(TcnError::Load(format!("{what}: implausible rank {ndim}")));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u64(&what)? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.pos))
            .ok_or_else(|| TcnError::Load(format!("truncated file while reading {what}")))?;
        let bytes = self.take(n * 8, &what)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Tensor::new(shape, data)?)
    }
}

pub fn read_model<R: Read>(r: &mut R) -> Result<TcnModel, TcnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4, "magic")? != MODEL_MAGIC {
        return Err(TcnError::Load("not a model file (bad magic)".into()));
    }
    let version = c.u32("version")?;
    if version != MODEL_VERSION {
        return Err(TcnError::Load(format!(
            "unsupported model version {version} (expected {MODEL_VERSION})"
        )));
    }
    let cfg_len = c.u32("config length")? as usize;
    let cfg_bytes = c.take(cfg_len, "config")?;
    let config: TcnConfig =
        serde_json::from_slice(cfg_bytes).map_err(|e| TcnError::Load(format!("bad config JSON: {e}")))?;
    config.validate()?;
    let count = c.u32("tensor count")? as usize;
    let n_params = config.param_shapes().len();
    if count != n_params + 2 * NUM_BLOCKS {
        return Err(TcnError::Load(format!(
            "config implies {} tensors, file holds {count}",
            n_params + 2 * NUM_BLOCKS
        )));
    }
    let mut params = Vec::with_capacity(n_params);
    for i in 0..n_params {
        params.push(c.tensor(i)?);
    }
    let mut stats = Vec::with_capacity(NUM_BLOCKS);
    for b in 0..NUM_BLOCKS {
        let mean = c.tensor(n_params + 2 * b)?.into_data();
        let var = c.tensor(n_params + 2 * b + 1)?.into_data();
        stats.push(RunningStats {
            mean,
            var,
            momentum: BN_MOMENTUM,
        });
    }
    if c.pos != buf.len() {
        return Err(TcnError::Load(format!(
            "{} trailing bytes after last tensor",
            buf.len() - c.pos
        )));
    }
    TcnModel::from_parts(config, params, stats)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TcnModel, TcnError> {
    read_model(&mut File::open(path)?)
}
