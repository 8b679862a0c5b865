//! Named parameter storage and the "KTNP" checkpoint format.
//!
//! KTNP layout (little-endian): `b"KTNP"`, `u32` record count, then per
//! record `u16` name length, UTF-8 name, `u8` rank, `rank × u32` dims, and
//! the `f64` payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, FormatError, Result};
use crate::io::read_magic;
use crate::nn::graph::{Graph, Gradients, Var};
use crate::nn::tensor::Tensor4;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KTNP";

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    /// Shape padded to four axes on the right (`[c]` → `[c, 1, 1, 1]`).
    pub fn dims4(&self) -> [usize; 4] {
        let mut d = [1; 4];
        for (i, &s) in self.shape.iter().take(4).enumerate() {
            d[i] = s;
        }
        d
    }

    pub fn to_tensor(&self) -> Tensor4 {
        Tensor4::from_vec(self.dims4(), self.data.clone()).expect("param shape invariant")
    }
}

/// Ordered, uniquely named collection of real arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(Error::ParamMismatch(format!("duplicate parameter {name}")));
        }
        if shape.is_empty() || shape.len() > 4 || shape.iter().product::<usize>() != data.len() {
            return Err(Error::ParamMismatch(format!(
                "parameter {name}: shape {shape:?} holds {} values",
                data.len()
            )));
        }
        self.params.push(Param { name, shape, data });
        Ok(self.params.len() - 1)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<usize> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn get(&self, index: usize) -> &Param {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Param {
        &mut self.params[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Total number of scalar parameters.
    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    /// Flat view of all values in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_count() {
            return Err(Error::ParamMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.total_count()
            )));
        }
        let mut at = 0;
        for p in &mut self.params {
            let n = p.data.len();
            p.data.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.data.fill(0.0);
        }
    }

    /// Places every parameter on the tape as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| g.input(p.to_tensor())).collect()
    }

    /// Collects gradients for vars produced by [`ParamStore::bind`], in store order.
    pub fn gradients(&self, vars: &[Var], grads: &Gradients) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, &v)| match grads.get(v) {
                Some(t) => t.data().to_vec(),
                None => vec![0.0; p.data.len()],
            })
            .collect()
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }
}

/// Fan-in-scaled normal initialisation: weights ~ N(0, 2 / fan_in), where
/// fan_in is the product of all axes but the first. Rank-1 entries (biases)
/// are zeroed. Deterministic per seed.
pub fn he_init(store: &mut ParamStore, seed: u64) {
    he_init_with(store, seed, |p| p.shape[1..].iter().product());
}

/// [`he_init`] with a caller-supplied fan-in, for weights whose outputs are
/// summed with other convolutions before the nonlinearity.
pub fn he_init_with<F>(store: &mut ParamStore, seed: u64, fan_in: F)
where
    F: Fn(&Param) -> usize,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut store.params {
        if p.shape.len() == 1 {
            p.data.fill(0.0);
            continue;
        }
        let fan = fan_in(p).max(1);
        let normal = Normal::new(0.0, (2.0 / fan as f64).sqrt()).expect("positive std");
        for v in &mut p.data {
            *v = normal.sample(&mut rng);
        }
    }
}

pub fn write_params<W: Write>(mut w: W, store: &ParamStore) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    let count = u32::try_from(store.len()).map_err(|_| FormatError::DimensionOverflow)?;
    w.write_all(&count.to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        let len = u16::try_from(name.len()).map_err(|_| FormatError::Malformed("name too long".into()))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.shape.len() as u8])?;
        for &d in &p.shape {
            let d = u32::try_from(d).map_err(|_| FormatError::DimensionOverflow)?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.data.len() * 8);
        for v in &p.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).ok_or(FormatError::DimensionOverflow)?;
        if end > self.bytes.len() {
            return Err(FormatError::Truncated {
                expected: end as u64,
                found: self.bytes.len() as u64,
            }
            .into());
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn read_params<R: Read>(mut r: R) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    read_magic(&bytes, CHECKPOINT_MAGIC)?;
    let mut cur = Cursor { bytes: &bytes, at: 4 };
    let count = cur.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(len)?)
            .map_err(|_| FormatError::Malformed("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = cur.u8()? as usize;
        if rank == 0 || rank > 4 {
            return Err(FormatError::Malformed(format!("rank {rank} for {name}")).into());
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= 1 << 31)
            .ok_or(FormatError::DimensionOverflow)?;
        let payload = cur.take(n.checked_mul(8).ok_or(FormatError::DimensionOverflow)?)?;
        let data = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        store.insert(name, shape, data).map_err(|e| FormatError::Malformed(e.to_string()))?;
    }
    if cur.at != bytes.len() {
        return Err(FormatError::Malformed(format!("{} trailing bytes", bytes.len() - cur.at)).into());
    }
    Ok(store)
}

pub fn save_params<P: AsRef<Path>>(path: P, store: &ParamStore) -> Result<()> {
    write_params(BufWriter::new(File::create(path)?), store)
}

pub fn load_params<P: AsRef<Path>>(path: P) -> Result<ParamStore> {
    read_params(BufReader::new(File::open(path)?))
}
