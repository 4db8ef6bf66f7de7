use std::io::{Read, Write};
use std::path::Path;

use super::{AdError, Optimizer, OptimizerKind, ParamStore, Result, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"ERRSUP1";

/// Parameters, optional optimizer state and free-form JSON metadata
/// (model configuration, schedule state, vocabularies).
///
/// Layout, all integers little-endian:
///
/// ```text
/// "ERRSUP1"
/// u32 n_params, then n_params blocks
/// u32 meta_len, meta_len bytes of UTF-8 JSON
/// u32 n_opt, then n_opt blocks ("first/<name>", "second/<name>")
/// block := u32 name_len, name, u32 ndim, ndim x u64 dims, f64 values
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub meta: serde_json::Value,
    pub optimizer: Option<Optimizer>,
}

fn write_block<W: Write>(w: &mut W, name: &str, t: &Tensor) -> Result<()> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(t.ndim() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &x in t.data() {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_block<R: Read>(r: &mut R) -> Result<(String, Tensor)> {
    let len = read_u32(r)? as usize;
    let mut name = vec![0u8; len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|e| AdError::Checkpoint(e.to_string()))?;
    let ndim = read_u32(r)? as usize;
    if ndim > 8 {
        return Err(AdError::Checkpoint(format!("{name}: implausible rank {ndim}")));
    }
    let shape = (0..ndim).map(|_| read_u64(r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let mut raw = vec![0u8; n * 8];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((name, Tensor::new(shape, data)?))
}

impl Checkpoint {
    pub fn new(params: ParamStore, meta: serde_json::Value) -> Self {
        Checkpoint {
            params,
            meta,
            optimizer: None,
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (_, p) in self.params.iter() {
            write_block(w, &p.name, &p.value)?;
        }
        let mut meta = self.meta.clone();
        if let (Some(opt), Some(obj)) = (&self.optimizer, meta.as_object_mut()) {
            obj.insert("optimizer".into(), serde_json::to_value(opt.kind).unwrap());
            obj.insert("optimizer_steps".into(), opt.steps.into());
        }
        let meta = serde_json::to_vec(&meta).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        w.write_all(&(meta.len() as u32).to_le_bytes())?;
        w.write_all(&meta)?;
        match &self.optimizer {
            Some(opt) => {
                let n = opt.first.len() + opt.second.len();
                w.write_all(&(n as u32).to_le_bytes())?;
                for (k, (_, p)) in self.params.iter().enumerate() {
                    write_block(w, &format!("first/{}", p.name), &opt.first[k])?;
                }
                for (k, (_, p)) in self.params.iter().enumerate().take(opt.second.len()) {
                    write_block(w, &format!("second/{}", p.name), &opt.second[k])?;
                }
            }
            None => w.write_all(&0u32.to_le_bytes())?,
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(AdError::Checkpoint("missing ERRSUP1 header".into()));
        }
        let mut params = ParamStore::new();
        for _ in 0..read_u32(r)? {
            let (name, t) = read_block(r)?;
            params.add_tensor(&name, t);
        }
        let meta_len = read_u32(r)? as usize;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let mut meta: serde_json::Value =
            serde_json::from_slice(&meta).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        let n_opt = read_u32(r)? as usize;
        let mut blocks = Vec::with_capacity(n_opt);
        for _ in 0..n_opt {
            blocks.push(read_block(r)?);
        }
        let kind = meta
            .as_object_mut()
            .and_then(|o| o.remove("optimizer"))
            .map(serde_json::from_value::<OptimizerKind>)
            .transpose()
            .map_err(|e| AdError::Checkpoint(e.to_string()))?;
        let steps = meta
            .as_object_mut()
            .and_then(|o| o.remove("optimizer_steps"))
            .and_then(|v| v.as_u64())
            .unwrap_or(0);
        let optimizer = match kind {
            Some(kind) => {
                let mut first = Vec::new();
                let mut second = Vec::new();
                for (name, t) in blocks {
                    if name.starts_with("first/") {
                        first.push(t);
                    } else if name.starts_with("second/") {
                        second.push(t);
                    } else {
                        return Err(AdError::Checkpoint(format!("unexpected block {name}")));
                    }
                }
                if first.len() != params.len() {
                    return Err(AdError::Checkpoint("optimizer state does not match parameters".into()));
                }
                Some(Optimizer {
                    kind,
                    steps,
                    first,
                    second,
                })
            }
            None => None,
        };
        Ok(Checkpoint {
            params,
            meta,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Checkpoint::read(&mut bytes.as_slice())
    }
}
