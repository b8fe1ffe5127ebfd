//! Named weight storage and its binary file format.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! "FCNW" | version u8 = 1 | record*
//! record := name_len u16 | name (UTF-8) | kind u8 | rank u8 | dims u32[rank] | payload f32*
//! ```
//!
//! | kind | meaning          | dims                   | payload                                   |
//! |------|------------------|------------------------|-------------------------------------------|
//! | 0    | conv, no bias    | `[kh, kw, cin, cout]`  | weights in `(kh, kw, cin, cout)` order    |
//! | 1    | batch norm       | `[4, C]`               | mean, variance, gamma, beta (C each), eps |
//! | 2    | conv with bias   | `[kh, kw, cin, cout]`  | weights as kind 0, then `cout` biases     |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{BatchNormParams, ConvKernel};

use super::graph::{LayerGraph, ParamSpec};

pub const MAGIC: &[u8; 4] = b"FCNW";
pub const VERSION: u8 = 1;

const KIND_CONV: u8 = 0;
const KIND_BATCHNORM: u8 = 1;
const KIND_CONV_BIAS: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub enum Param {
    Conv(ConvKernel),
    BatchNorm(BatchNormParams),
}

impl Param {
    pub fn spec(&self) -> ParamSpec {
        match self {
            Param::Conv(k) => ParamSpec::Conv {
                kh: k.kh(),
                kw: k.kw(),
                cin: k.cin(),
                cout: k.cout(),
                bias: k.bias().is_some(),
            },
            Param::BatchNorm(bn) => ParamSpec::BatchNorm {
                channels: bn.channels(),
            },
        }
    }

    /// Number of stored floats.
    pub fn len(&self) -> usize {
        match self {
            Param::Conv(k) => k.weights().len() + k.bias().map_or(0, <[f32]>::len),
            Param::BatchNorm(bn) => 4 * bn.channels() + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All stored floats in file order.
    pub fn values(&self) -> Vec<f32> {
        match self {
            Param::Conv(k) => k
                .weights()
                .iter()
                .chain(k.bias().unwrap_or(&[]))
                .copied()
                .collect(),
            Param::BatchNorm(bn) => bn
                .mean
                .iter()
                .chain(&bn.variance)
                .chain(&bn.gamma)
                .chain(&bn.beta)
                .chain(std::iter::once(&bn.eps))
                .copied()
                .collect(),
        }
    }
}

/// Parameters by name, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightContainer {
    entries: IndexMap<String, Param>,
}

impl WeightContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.entries.insert(name, param);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Param> {
        self.entries.shift_remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn lookup(&self, layer: &str, key: &str, spec: &ParamSpec) -> Result<&Param> {
        let param = self.entries.get(key).ok_or_else(|| Error::MissingWeight {
            layer: layer.to_string(),
            key: key.to_string(),
        })?;
        if param.spec() != *spec {
            return Err(Error::Layer {
                layer: layer.to_string(),
                source: Box::new(Error::InvalidKernel(format!(
                    "weight `{key}` is {:?}, graph expects {spec:?}",
                    param.spec()
                ))),
            });
        }
        Ok(param)
    }

    /// Convolution `key` for `layer`, checked against the expected shape.
    pub fn conv(&self, layer: &str, key: &str, spec: &ParamSpec) -> Result<&ConvKernel> {
        match self.lookup(layer, key, spec)? {
            Param::Conv(k) => Ok(k),
            Param::BatchNorm(_) => unreachable!("spec comparison rules out a kind mismatch"),
        }
    }

    pub fn batchnorm(&self, layer: &str, key: &str, spec: &ParamSpec) -> Result<&BatchNormParams> {
        match self.lookup(layer, key, spec)? {
            Param::BatchNorm(bn) => Ok(bn),
            Param::Conv(_) => unreachable!("spec comparison rules out a kind mismatch"),
        }
    }

    /// Checks that every weight `graph` needs is present with the right shape.
    pub fn check_resolves(&self, graph: &LayerGraph) -> Result<()> {
        for (layer, key, spec) in graph.weight_specs() {
            self.lookup(layer, key, spec)?;
        }
        Ok(())
    }

    /// Seeded random weights for every parameter of `graph`. Convolutions
    /// draw from `±sqrt(3 / fan_in)` (unit fan-in variance), biases from
    /// `±0.1`, batch norms from [`BatchNormParams::random`].
    pub fn random_for(graph: &LayerGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = WeightContainer::new();
        for (_, key, spec) in graph.weight_specs() {
            let param = match *spec {
                ParamSpec::Conv {
                    kh,
                    kw,
                    cin,
                    cout,
                    bias,
                } => {
                    let scale = (3.0 / (kh * kw * cin) as f64).sqrt();
                    let mut k = ConvKernel::random(kh, kw, cin, cout, scale, false, &mut rng);
                    if bias {
                        let b = (0..cout).map(|_| rng.gen_range(-0.1..0.1)).collect();
                        k = k.with_bias(b).expect("bias has cout entries");
                    }
                    Param::Conv(k)
                }
                ParamSpec::BatchNorm { channels } => {
                    Param::BatchNorm(BatchNormParams::random(channels, &mut rng))
                }
            };
            out.insert(key, param)
                .expect("graph weight keys are unique");
        }
        out
    }

    /// All-zero convolutions and identity batch norms with zero shift.
    pub fn zeros_for(graph: &LayerGraph) -> Self {
        let mut out = WeightContainer::new();
        for (_, key, spec) in graph.weight_specs() {
            let param = match *spec {
                ParamSpec::Conv {
                    kh,
                    kw,
                    cin,
                    cout,
                    bias,
                } => {
                    let k = ConvKernel::zeros(kh, kw, cin, cout);
                    Param::Conv(if bias {
                        k.with_bias(vec![0.0; cout]).unwrap()
                    } else {
                        k
                    })
                }
                ParamSpec::BatchNorm { channels } => {
                    Param::BatchNorm(BatchNormParams::identity(channels))
                }
            };
            out.insert(key, param)
                .expect("graph weight keys are unique");
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        for (name, param) in &self.entries {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("weight name `{name}` is too long")))?;
            w.write_all(&name_len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            let (kind, dims): (u8, Vec<usize>) = match param {
                Param::Conv(k) => (
                    if k.bias().is_some() {
                        KIND_CONV_BIAS
                    } else {
                        KIND_CONV
                    },
                    vec![k.kh(), k.kw(), k.cin(), k.cout()],
                ),
                Param::BatchNorm(bn) => (KIND_BATCHNORM, vec![4, bn.channels()]),
            };
            w.write_all(&[kind, dims.len() as u8])?;
            for d in dims {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Format(format!("dimension {d} overflows u32")))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut payload = Vec::with_capacity(param.len() * 4);
            for v in param.values() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&payload)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4, "magic")? != MAGIC {
            return Err(Error::Format("bad magic, expected FCNW".into()));
        }
        let version = cur.u8("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let mut out = WeightContainer::new();
        while cur.pos < bytes.len() {
            let name_len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap());
            let name = std::str::from_utf8(cur.take(name_len as usize, "name")?)
                .map_err(|_| Error::Format("weight name is not UTF-8".into()))?
                .to_string();
            let kind = cur.u8("kind")?;
            let rank = cur.u8("rank")? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(u32::from_le_bytes(cur.take(4, "dims")?.try_into().unwrap()) as usize);
            }
            let param = match (kind, dims.as_slice()) {
                (KIND_CONV | KIND_CONV_BIAS, &[kh, kw, cin, cout]) => {
                    let weights = cur.floats(kh * kw * cin * cout, &name)?;
                    let bias = if kind == KIND_CONV_BIAS {
                        Some(cur.floats(cout, &name)?)
                    } else {
                        None
                    };
                    Param::Conv(ConvKernel::new(kh, kw, cin, cout, weights, bias)?)
                }
                (KIND_BATCHNORM, &[4, c]) => {
                    let mut v = cur.floats(4 * c + 1, &name)?;
                    let eps = v.pop().unwrap();
                    let beta = v.split_off(3 * c);
                    let gamma = v.split_off(2 * c);
                    let variance = v.split_off(c);
                    Param::BatchNorm(BatchNormParams::new(v, variance, gamma, beta, eps)?)
                }
                _ => {
                    return Err(Error::Format(format!(
                        "record `{name}` has kind {kind} with dims {dims:?}"
                    )))
                }
            };
            out.insert(name, param)?;
        }
        Ok(out)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "truncated while reading {what} at byte {}",
                    self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn floats(&mut self, n: usize, name: &str) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::Format(format!("record `{name}` is too large")))?,
            &format!("payload of `{name}`"),
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
