//! Binary checkpoint container. The byte layout is described in
//! `docs/checkpoint-format.md`; bump [`FORMAT_VERSION`] on any change.

use std::io::Read;
use std::path::Path;

use super::config::TrainConfig;
use super::trainer::LossRecord;
use crate::error::{Error, Result};
use crate::geometry::{Point3, UnitCubeTransform};
use crate::tensor::{AdamConfig, Tensor};

pub const MAGIC: &[u8; 8] = b"SDFCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamSnapshot {
    pub t: u64,
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Everything needed to resume or reconstruct a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub iteration: u64,
    pub transform: UnitCubeTransform,
    /// Normalised input cloud.
    pub input: Vec<Point3>,
    /// `(name, value)` in registration order.
    pub params: Vec<(String, Tensor)>,
    pub adam: AdamSnapshot,
    pub history: Vec<LossRecord>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.0.extend_from_slice(&self.config.hash());
        w.str(&self.config.canonical());
        w.u64(self.iteration);
        w.f64s(&self.transform.center);
        w.f64(self.transform.scale);
        w.u64(self.input.len() as u64);
        self.input.iter().for_each(|p| w.f64s(p));
        w.u32(self.params.len() as u32);
        for (name, t) in &self.params {
            w.str(name);
            w.u32(t.rows() as u32);
            w.u32(t.cols() as u32);
            w.f64s(t.data());
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.adam.config;
        w.u64(self.adam.t);
        w.f64s(&[lr, beta1, beta2, eps]);
        w.u32(self.adam.m.len() as u32);
        for (m, v) in self.adam.m.iter().zip(&self.adam.v) {
            w.u64(m.len() as u64);
            w.f64s(m);
            w.f64s(v);
        }
        w.u64(self.history.len() as u64);
        for r in &self.history {
            w.f64s(&[r.total, r.para, r.surf, r.deform]);
            w.0.push(r.empty as u8);
        }
        w.0
    }

    /// Parses a checkpoint and checks that the stored config hash matches
    /// the stored config.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let mut hash = [0u8; 8];
        hash.copy_from_slice(r.take(8)?);
        let config = TrainConfig::from_canonical(&r.str()?)
            .map_err(|e| Error::Checkpoint(format!("stored config: {e}")))?;
        if config.hash() != hash {
            return Err(Error::Checkpoint(
                "config hash does not match stored config".into(),
            ));
        }
        let iteration = r.u64()?;
        let center = r.point()?;
        let transform = UnitCubeTransform {
            center,
            scale: r.f64()?,
        };
        let n = r.len(24)?;
        let input = (0..n).map(|_| r.point()).collect::<Result<_>>()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.str()?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data = r.f64s(
                rows.checked_mul(cols)
                    .ok_or_else(|| Error::Checkpoint("shape overflow".into()))?,
            )?;
            params.push((name, Tensor::new(rows, cols, data)));
        }
        let t = r.u64()?;
        let c = r.f64s(4)?;
        let config_adam = AdamConfig {
            lr: c[0],
            beta1: c[1],
            beta2: c[2],
            eps: c[3],
        };
        let slots = r.u32()? as usize;
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for _ in 0..slots {
            let len = r.len(16)?;
            m.push(r.f64s(len)?);
            v.push(r.f64s(len)?);
        }
        let records = r.len(33)?;
        let mut history = Vec::with_capacity(records);
        for _ in 0..records {
            let f = r.f64s(4)?;
            let empty = match r.take(1)?[0] {
                0 => false,
                1 => true,
                b => return Err(Error::Checkpoint(format!("bad flag byte {b}"))),
            };
            history.push(LossRecord {
                total: f[0],
                para: f[1],
                surf: f[2],
                deform: f[3],
                empty,
            });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            config,
            iteration,
            transform,
            input,
            params,
            adam: AdamSnapshot {
                t,
                config: config_adam,
                m,
                v,
            },
            history,
        })
    }

    /// Written atomically, so an interrupted save keeps the previous file.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a checkpoint and rejects it unless it was written under
    /// `expected`.
    pub fn load_for(path: &Path, expected: &TrainConfig) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.config.hash() != expected.hash() {
            return Err(Error::Checkpoint(format!(
                "config hash {} does not match expected {}",
                hex(&ckpt.config.hash()),
                hex(&expected.hash())
            )));
        }
        Ok(ckpt)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
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
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if (self.buf.len() - self.pos) / 8 < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn point(&mut self) -> Result<Point3> {
        Ok([self.f64()?, self.f64()?, self.f64()?])
    }
    /// Element count that must fit in the remaining bytes at `min_size`
    /// bytes per element.
    fn len(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u64()?;
        if n > ((self.buf.len() - self.pos) / min_size) as u64 {
            return Err(Error::Checkpoint(format!("count {n} exceeds file size")));
        }
        Ok(n as usize)
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }
}
