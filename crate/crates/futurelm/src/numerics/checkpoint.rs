//! Checkpoint file format: named parameter tensors plus optimizer state
//! behind a versioned header.
//!
//! Layout (all integers little-endian):
//!   magic "FLMCKPT\0" | version u32 | digest str | metadata JSON str |
//!   tensor count u32 | { name str, ndim u32, dims u64.., data f64.. } |
//!   adam flag u8 | [ step u64, lr/b1/b2/eps f64, moments ]
//! Strings are u32 length-prefixed UTF-8.

use crate::error::{Error, Result};
use crate::numerics::adam::{AdamConfig, AdamState};
use crate::numerics::params::ParamSet;
use crate::numerics::tensor::Tensor;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"FLMCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

pub struct Checkpoint {
    pub digest: String,
    pub meta: serde_json::Value,
    pub params: ParamSet,
    pub adam: Option<AdamState>,
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_str(&mut w, &ckpt.digest)?;
    write_str(&mut w, &ckpt.meta.to_string())?;
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes())?;
    for (name, t) in ckpt.params.iter() {
        write_str(&mut w, name)?;
        write_tensor(&mut w, t)?;
    }
    match &ckpt.adam {
        None => w.write_all(&[0u8])?,
        Some(a) => {
            w.write_all(&[1u8])?;
            w.write_all(&a.step.to_le_bytes())?;
            for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
                w.write_all(&v.to_le_bytes())?;
            }
            for t in a.first.iter().chain(a.second.iter()) {
                write_tensor(&mut w, t)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint format version {version} not supported (expected {FORMAT_VERSION})"
        )));
    }
    let digest = read_str(&mut r)?;
    let meta: serde_json::Value = serde_json::from_str(&read_str(&mut r)?)
        .map_err(|e| Error::Format(format!("bad checkpoint metadata: {e}")))?;
    let n = read_u32(&mut r)? as usize;
    let mut params = ParamSet::new();
    for _ in 0..n {
        let name = read_str(&mut r)?;
        let t = read_tensor(&mut r)?;
        params.add(&name, t)?;
    }
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let adam = if flag[0] == 1 {
        let mut step = [0u8; 8];
        r.read_exact(&mut step)?;
        let mut hp = [0f64; 4];
        for v in hp.iter_mut() {
            *v = read_f64(&mut r)?;
        }
        let config = AdamConfig {
            lr: hp[0],
            beta1: hp[1],
            beta2: hp[2],
            eps: hp[3],
        };
        let first: Vec<Tensor> = (0..n).map(|_| read_tensor(&mut r)).collect::<Result<_>>()?;
        let second: Vec<Tensor> = (0..n).map(|_| read_tensor(&mut r)).collect::<Result<_>>()?;
        Some(AdamState {
            config,
            step: u64::from_le_bytes(step),
            first,
            second,
        })
    } else {
        None
    };
    Ok(Checkpoint {
        digest,
        meta,
        params,
        adam,
    })
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(format!("bad string in artifact: {e}")))
}

fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let ndim = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(read_f64(r)?);
    }
    Tensor::new(shape, data)
}
