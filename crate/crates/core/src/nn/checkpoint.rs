//! Binary model container: `"TSQM"`, u32 version, u32-length JSON config,
//! u32 tensor count, then per tensor a u32-length name, u32 rank, u64 dims
//! and little-endian f32 values.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::model::{MicroModel, ModelConfig};
use super::tape::ParamStore;
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TSQM";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: impl AsRef<Path>, model: &MicroModel<f32>) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&model.cfg)?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(&cfg)?;
    w.write_all(&(model.params.len() as u32).to_le_bytes())?;
    for (name, t) in model.params.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader {
    bytes: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint is truncated".into()));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MicroModel<f32>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a TSQM checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(n)?)?;
    let mut model = MicroModel::<f32>::new(cfg, 0)?;
    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = r.take(4 * len)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        params.add(name, Tensor::new(&shape, data));
    }
    if r.pos != r.bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint tensors".into()));
    }
    model.set_params(params)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = ModelConfig { image_h: 32, image_w: 32, d_model: 16, heads: 2, ffn: 16, vocab: 30, max_len: 16, ..Default::default() };
        let m = MicroModel::<f32>::new(cfg, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.tsqm");
        save_checkpoint(&p, &m).unwrap();
        let back = load_checkpoint(&p).unwrap();
        assert_eq!(back.cfg, m.cfg);
        for ((na, a), (nb, b)) in back.params.iter().zip(m.params.iter()) {
            assert_eq!((na, a), (nb, b));
        }
        let mut raw = std::fs::read(&p).unwrap();
        raw.truncate(raw.len() - 3);
        std::fs::write(&p, raw).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::Format(_))));
    }
}
