//! Named learnable tensors with gradient slots and Adam moments, plus the
//! binary checkpoint container.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Mat;

/// One learnable tensor and its optimiser buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Mat,
    pub grad: Mat,
    pub m: Mat,
    pub v: Mat,
}

impl Param {
    pub fn new(value: Mat) -> Self {
        let (r, c) = value.shape();
        Param { value, grad: Mat::zeros(r, c), m: Mat::zeros(r, c), v: Mat::zeros(r, c) }
    }
}

/// Parameters keyed by hierarchical name; iteration is sorted by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
    /// Number of optimiser steps applied so far.
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.entries.values().map(|p| p.value.data().len()).sum()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) -> Result<()> {
        let name = name.into();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("parameter {name} has non-finite values")));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.entries.insert(name, Param::new(value));
        Ok(())
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weight matrix.
    pub fn insert_glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<()> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Mat::from_fn(fan_in, fan_out, |_, _| rng.gen_range(-bound..=bound));
        self.insert(name, w)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.entries.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Result<&Mat> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Sets every value to zero.
    pub fn zero_values(&mut self) {
        for p in self.entries.values_mut() {
            p.value.fill(0.0);
        }
    }

    pub fn accumulate_grads(&mut self, grads: &BTreeMap<String, Mat>) -> Result<()> {
        for (name, g) in grads {
            let p = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::Config(format!("gradient for unknown parameter {name}")))?;
            if p.grad.shape() != g.shape() {
                return Err(Error::Config(format!("gradient shape {:?} for {name} {:?}", g.shape(), p.grad.shape())));
            }
            p.grad.add_assign(g);
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries.values().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt()
    }

    /// Checks that `other` has the same names and shapes.
    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Config(format!("expected {} tensors, found {}", self.len(), other.len())));
        }
        for ((na, a), (nb, b)) in self.entries.iter().zip(other.entries.iter()) {
            if na != nb || a.value.shape() != b.value.shape() {
                return Err(Error::Config(format!(
                    "tensor mismatch: {na} {:?} vs {nb} {:?}",
                    a.value.shape(),
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }

    /// Replaces all values (and optionally optimiser state) from `other`.
    pub fn load_from(&mut self, other: &ParamStore, with_optimizer: bool) -> Result<()> {
        self.check_compatible(other)?;
        for (p, q) in self.entries.values_mut().zip(other.entries.values()) {
            p.value = q.value.clone();
            if with_optimizer {
                p.m = q.m.clone();
                p.v = q.v.clone();
            }
        }
        if with_optimizer {
            self.step = other.step;
        }
        Ok(())
    }

    pub fn save_values(&self, path: impl AsRef<Path>) -> Result<()> {
        let records: Vec<(String, &Mat)> = self.entries.iter().map(|(n, p)| (n.clone(), &p.value)).collect();
        write_container(&mut std::fs::File::create(path)?, &records)
    }

    /// Values plus Adam moments and step count.
    pub fn save_full(&self, path: impl AsRef<Path>) -> Result<()> {
        let step = Mat::from_vec(1, 1, vec![self.step as f64]);
        let mut records: Vec<(String, &Mat)> = Vec::new();
        records.push(("@step".to_string(), &step));
        for (n, p) in &self.entries {
            records.push((n.clone(), &p.value));
            records.push((format!("@m/{n}"), &p.m));
            records.push((format!("@v/{n}"), &p.v));
        }
        records.sort_by(|a, b| a.0.cmp(&b.0));
        write_container(&mut std::fs::File::create(path)?, &records)
    }

    /// Reads a file written by [`save_values`](Self::save_values) or
    /// [`save_full`](Self::save_full).
    pub fn load(path: impl AsRef<Path>) -> Result<ParamStore> {
        let records = read_container(&mut std::fs::File::open(path)?)?;
        Self::from_records(records)
    }

    fn from_records(records: Vec<(String, Mat)>) -> Result<ParamStore> {
        let mut store = ParamStore::new();
        let mut moments = Vec::new();
        for (name, m) in records {
            if name == "@step" {
                store.step = m.get(0, 0) as u64;
            } else if name.starts_with('@') {
                moments.push((name, m));
            } else {
                store.insert(name, m)?;
            }
        }
        for (name, m) in moments {
            let (slot, base) = name[1..]
                .split_once('/')
                .ok_or_else(|| Error::Format(format!("bad record name {name}")))?;
            let p = store
                .entries
                .get_mut(base)
                .ok_or_else(|| Error::Format(format!("moment for unknown tensor {base}")))?;
            if m.shape() != p.value.shape() {
                return Err(Error::Format(format!("moment shape mismatch for {base}")));
            }
            match slot {
                "m" => p.m = m,
                "v" => p.v = m,
                _ => return Err(Error::Format(format!("unknown slot {slot}"))),
            }
        }
        Ok(store)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MONETCKP";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Writes sorted `(name, shape, row-major f64 values)` records, little-endian.
pub fn write_container(w: &mut impl Write, records: &[(String, &Mat)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.push(CHECKPOINT_VERSION);
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, m) in records {
        let bytes = name.as_bytes();
        buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        buf.extend_from_slice(bytes);
        buf.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_container(r: &mut impl Read) -> Result<Vec<(String, Mat)>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = cur.take(1)?[0];
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = cur.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| Error::Format("record name is not UTF-8".into()))?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().unwrap()));
        }
        out.push((name, Mat::from_vec(rows, cols, data)));
    }
    if cur.pos != buf.len() {
        return Err(Error::Format("trailing bytes after last record".into()));
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
