//! Named-tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"PLKGCKPT"  u32 version  u32 tensor_count
//! per tensor:  u32 name_len  name (utf-8)  u32 ndim  u64 dims[ndim]  f64 values[prod(dims)]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;

use super::param::Parameterized;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"PLKGCKPT";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        dims: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<()> {
        if dims.iter().product::<usize>() != values.len() {
            return Err(Error::Checkpoint(format!(
                "shape {dims:?} does not match {} values",
                values.len()
            )));
        }
        self.tensors.insert(name.into(), (dims, values));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.tensors
            .get(name)
            .map(|(d, v)| (d.as_slice(), v.as_slice()))
    }

    /// Stores every parameter of `model` as `prefix.name`.
    pub fn capture<T: Real>(&mut self, prefix: &str, model: &(impl Parameterized<T> + ?Sized)) {
        model.visit(&mut |name, p| {
            let (r, c) = p.value.dim();
            let values = p.value.iter().map(|v| v.to_f64_lossy()).collect();
            self.tensors
                .insert(format!("{prefix}.{name}"), (vec![r, c], values));
        });
    }

    /// Overwrites the parameters of `model` from `prefix.*` entries.
    pub fn restore<T: Real>(
        &self,
        prefix: &str,
        model: &mut (impl Parameterized<T> + ?Sized),
    ) -> Result<()> {
        let mut err = None;
        model.visit_mut(&mut |name, p| {
            if err.is_some() {
                return;
            }
            let key = format!("{prefix}.{name}");
            match self.tensors.get(&key) {
                Some((dims, values)) if dims.as_slice() == [p.value.nrows(), p.value.ncols()] => {
                    let arr = Array2::from_shape_vec(
                        p.value.raw_dim(),
                        values.iter().map(|&v| T::lit(v)).collect(),
                    )
                    .expect("shape checked");
                    p.value = arr;
                }
                Some((dims, _)) => {
                    err = Some(Error::Checkpoint(format!(
                        "`{key}` has shape {dims:?}, model expects {:?}",
                        p.value.dim()
                    )))
                }
                None => err = Some(Error::Checkpoint(format!("missing tensor `{key}`"))),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, (dims, values)) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
            for &d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| Error::Checkpoint(format!("tensor name: {e}")))?
                .to_owned();
            let ndim = r.u32()? as usize;
            let dims = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = dims.iter().product();
            let values = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            ck.insert(name, dims, values)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{flat_values, Lstm, Mlp};
    use crate::numerics::RngStream;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = RngStream::new(4, 0);
        let mlp = Mlp::<f64>::new(5, &[7, 7], 3, &mut rng).unwrap();
        let lstm = Lstm::<f64>::new(4, 6, &mut rng);
        let mut ck = Checkpoint::new();
        ck.capture("actor", &mlp);
        ck.capture("lstm", &lstm);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), ck.to_bytes());

        let mut other = Mlp::<f64>::new(5, &[7, 7], 3, &mut RngStream::new(9, 9)).unwrap();
        back.restore("actor", &mut other).unwrap();
        let a: Vec<u64> = flat_values(&mlp).iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = flat_values(&other).iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn restore_rejects_wrong_shape_and_missing() {
        let mut rng = RngStream::new(4, 0);
        let small = Mlp::<f64>::new(5, &[4], 3, &mut rng).unwrap();
        let mut ck = Checkpoint::new();
        ck.capture("m", &small);
        let mut big = Mlp::<f64>::new(5, &[6], 3, &mut rng).unwrap();
        assert!(matches!(
            ck.restore("m", &mut big),
            Err(Error::Checkpoint(_))
        ));
        assert!(matches!(
            ck.restore("x", &mut big),
            Err(Error::Checkpoint(_))
        ));
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut ck = Checkpoint::new();
        ck.insert("a", vec![2], vec![1.0, 2.0]).unwrap();
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOTACKPT").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        assert!(ck.insert("b", vec![3], vec![1.0]).is_err());
    }
}
