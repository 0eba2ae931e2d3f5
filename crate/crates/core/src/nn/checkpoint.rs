//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field        | encoding                                            |
//! |--------------|-----------------------------------------------------|
//! | magic        | 8 bytes `SYNSPECK`                                  |
//! | version      | `u32`, currently 1                                  |
//! | dtype        | `u8` bytes per value (4 = f32, 8 = f64)             |
//! | architecture | `u32` length + UTF-8 layer tokens (`C16k5s1,R,...`) |
//! | input length | `u64`                                               |
//! | parameters   | tensor list                                         |
//! | buffers      | tensor list (batch-norm running mean / variance)    |
//! | has_adam     | `u8` 0 or 1                                         |
//! | adam         | `u64` t, `f64` lr, beta1, beta2, eps, m list, v list |
//!
//! A tensor list is a `u32` count followed, per tensor, by a `u64` length
//! and that many values. Trailing bytes are an error.

use std::fs;
use std::path::Path;

use super::adam::AdamState;
use super::layer::LayerSpec;
use super::model::Model;
use super::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SYNSPECK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode<T: Real>(model: &Model<T>, adam: Option<&AdamState<T>>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    let arch = LayerSpec::format_stack(model.specs());
    out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    out.extend_from_slice(&(model.input_len() as u64).to_le_bytes());
    write_list(&mut out, model.params());
    write_list(&mut out, model.buffers());
    match adam {
        None => out.push(0),
        Some(a) => {
            out.push(1);
            out.extend_from_slice(&a.t.to_le_bytes());
            for v in [a.learning_rate, a.beta1, a.beta2, a.epsilon] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            write_list(&mut out, a.m.iter().map(|v| v.as_slice()).collect());
            write_list(&mut out, a.v.iter().map(|v| v.as_slice()).collect());
        }
    }
    out
}

fn write_list<T: Real>(out: &mut Vec<u8>, tensors: Vec<&[T]>) {
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for &v in t {
            v.write_le(out);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("checkpoint truncated at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn list<T: Real>(&mut self) -> Result<Vec<Vec<T>>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let len = usize::try_from(self.u64()?).map_err(|_| Error::Format("tensor too large".into()))?;
            let raw = self.take(len.checked_mul(T::BYTES).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            out.push(raw.chunks_exact(T::BYTES).map(T::read_le).collect());
        }
        Ok(out)
    }
}

pub fn decode<T: Real>(bytes: &[u8]) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let width = r.u8()? as usize;
    if width != T::BYTES {
        return Err(Error::Format(format!(
            "checkpoint stores {width}-byte values, requested {}",
            T::NAME
        )));
    }
    let arch_len = r.u32()? as usize;
    let arch = std::str::from_utf8(r.take(arch_len)?)
        .map_err(|_| Error::Format("architecture text is not UTF-8".into()))?;
    let specs = LayerSpec::parse_stack(arch)?;
    let input_len = usize::try_from(r.u64()?).map_err(|_| Error::Format("input length overflow".into()))?;
    let mut model = Model::zeros(specs, input_len)?;
    let params = r.list()?;
    let buffers = r.list()?;
    model
        .restore(&(params, buffers))
        .map_err(|_| Error::Format("checkpoint tensors do not match the architecture".into()))?;
    let adam = match r.u8()? {
        0 => None,
        1 => {
            let t = r.u64()?;
            let (learning_rate, beta1, beta2, epsilon) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let m = r.list()?;
            let v = r.list()?;
            let sizes = model.param_sizes();
            let fits = |x: &Vec<Vec<T>>| x.len() == sizes.len() && x.iter().zip(&sizes).all(|(a, &n)| a.len() == n);
            if !fits(&m) || !fits(&v) {
                return Err(Error::Format("optimizer state does not match the parameters".into()));
            }
            Some(AdamState { m, v, t, learning_rate, beta1, beta2, epsilon })
        }
        other => return Err(Error::Format(format!("invalid optimizer flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    Ok((model, adam))
}

pub fn save<T: Real>(path: &Path, model: &Model<T>, adam: Option<&AdamState<T>>) -> Result<()> {
    fs::write(path, encode(model, adam)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load<T: Real>(path: &Path) -> Result<(Model<T>, Option<AdamState<T>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model<f32> {
        Model::new(LayerSpec::parse_stack("C4k3s1,BN,R,MP2,F,D5,SM").unwrap(), 16, 3).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut adam = AdamState::new(&m.param_sizes(), 3e-4);
        adam.t = 17;
        adam.m[0][1] = 0.125;
        adam.v[2][0] = 4.5;
        let bytes = encode(&m, Some(&adam));
        let (back, back_adam) = decode::<f32>(&bytes).unwrap();
        assert_eq!(back.specs(), m.specs());
        assert_eq!(back.snapshot(), m.snapshot());
        assert_eq!(back_adam.unwrap(), adam);
        assert_eq!(encode(&back, Some(&adam)), bytes);
    }

    #[test]
    fn corrupt_inputs_are_format_errors() {
        let bytes = encode(&model(), None);
        assert!(matches!(decode::<f32>(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode::<f32>(&extra), Err(Error::Format(_))));
        assert!(matches!(decode::<f64>(&bytes), Err(Error::Format(_))));
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(matches!(decode::<f32>(&magic), Err(Error::Format(_))));
    }
}
