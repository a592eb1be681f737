//! Binary checkpoint:
//!
//! ```text
//! magic "ADDRCKPT", u32 version
//! str experiment tag, str profile (key = value lines)
//! u32 tensor count, then per tensor: str name, u32 rank, u64 dims..., f64 values...
//! ```
//!
//! Integers and doubles are little-endian; `str` is a u32 byte length followed by UTF-8.

use std::fs;
use std::path::Path;

use super::{param_specs, Experiment, Model, ModelProfile};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADDRCKPT";
const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + model.parameter_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, VERSION);
    put_str(&mut out, model.experiment.tag());
    put_str(&mut out, &model.profile.to_key_values().to_string());
    put_u32(&mut out, model.params.len() as u32);
    for p in model.params.iter() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.value.ndim() as u32);
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::validation(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<&'a str> {
        let n = self.u32()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::validation("checkpoint string is not UTF-8"))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::validation("not a checkpoint (bad magic bytes)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::validation(format!("unsupported checkpoint version {version}")));
    }
    let experiment: Experiment = r.str()?.parse()?;
    let profile = ModelProfile::from_key_values(&KeyValues::parse(r.str()?, Path::new("<checkpoint profile>"))?)?;
    let specs = param_specs(experiment.architecture(), &profile)?;
    let count = r.u32()? as usize;
    if count != specs.len() {
        return Err(Error::validation(format!(
            "checkpoint holds {count} tensors, model {experiment} needs {}",
            specs.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for spec in &specs {
        let name = r.str()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(Error::validation(format!(
                "checkpoint tensor {name} {shape:?} does not match expected {} {:?}",
                spec.name, spec.shape
            )));
        }
        let data = r
            .take(8 * spec.numel())?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        values.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::validation(format!("{} trailing bytes after checkpoint", bytes.len() - r.pos)));
    }
    let mut model = Model::new(experiment, &profile, 0)?;
    model.profile = profile;
    model.params.set_values(values)?;
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes).map_err(|e| Error::validation(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = Model::new(Experiment::Binary, &ModelProfile::tiny(), 17).unwrap();
        let bytes = encode(&m);
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(decode(&bytes).unwrap(), m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn corruption_is_detected() {
        let m = Model::new(Experiment::PoseOnly, &ModelProfile::tiny(), 1).unwrap();
        let bytes = encode(&m);
        assert!(decode(&bytes[..bytes.len() - 1]).unwrap_err().to_string().contains("truncated"));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).unwrap_err().to_string().contains("magic"));
        let mut long = bytes;
        long.push(0);
        assert!(decode(&long).is_err());
    }
}
