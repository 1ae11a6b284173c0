//! Versioned binary checkpoint: layer specs, primary vectors, biases,
//! batch-norm statistics, quantizer specs, the fitted crosstalk operator
//! and the training RNG state.
//!
//! Layout (all little-endian): magic `CPTC`, version u32, order u32,
//! classes u32, optional weight/activation quant specs (tag u8 then bits
//! u32, lo f64, hi f64), optional gamma (tag u8 then n u32, n*n f64),
//! train seed u64, RNG word position u128 (lo, hi u64), layer count u32,
//! then per-layer records tagged by a u8. f64 values round-trip as raw
//! bits, so save -> load -> save is byte-identical.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::graph::LayerGraph;
use crate::nn::layers::{BatchNormLayer, ConvLayer, Layer, LinearLayer, WeightKind, WeightStore};
use crate::quant::QuantSpec;

const MAGIC: &[u8; 4] = b"CPTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: LayerGraph,
    pub weight_quant: Option<QuantSpec>,
    pub act_quant: Option<QuantSpec>,
    pub gamma: Option<Matrix>,
    pub train_seed: u64,
    pub rng_word_pos: u128,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    fn quant(&mut self, q: &Option<QuantSpec>) {
        match q {
            None => self.u8(0),
            Some(s) => {
                self.u8(1);
                self.u32(s.bits);
                self.f64(s.lo);
                self.f64(s.hi);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        if n > self.buf.len() / 8 + 1 {
            return Err(Error::Checkpoint("implausible array length".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn quant(&mut self) -> Result<Option<QuantSpec>> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(QuantSpec {
                bits: self.u32()?,
                lo: self.f64()?,
                hi: self.f64()?,
            })),
            t => Err(Error::Checkpoint(format!("bad quant tag {t}"))),
        }
    }
}

fn write_weight_store(w: &mut Writer, store: &WeightStore) {
    match store.kind {
        WeightKind::Dense => {
            w.u8(0);
            w.u32(0);
        }
        WeightKind::Circulant { order } => {
            w.u8(1);
            w.u32(order as u32);
        }
    }
    w.u32(store.rows as u32);
    w.u32(store.cols as u32);
    w.f64s(&store.params);
}

fn read_weight_store(r: &mut Reader) -> Result<WeightStore> {
    let kind = match r.u8()? {
        0 => {
            r.u32()?;
            WeightKind::Dense
        }
        1 => WeightKind::Circulant {
            order: r.u32()? as usize,
        },
        t => return Err(Error::Checkpoint(format!("bad weight kind {t}"))),
    };
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let params = r.f64s()?;
    let expected = match kind {
        WeightKind::Dense => rows * cols,
        WeightKind::Circulant { order } => {
            if order == 0 || rows % order != 0 || cols % order != 0 {
                return Err(Error::Checkpoint("inconsistent circulant dims".into()));
            }
            rows * cols / order
        }
    };
    if params.len() != expected {
        return Err(Error::Checkpoint(format!(
            "weight store expects {expected} params, found {}",
            params.len()
        )));
    }
    Ok(WeightStore {
        kind,
        rows,
        cols,
        params,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        {
            let w = &mut w;
            w.buf.extend_from_slice(MAGIC);
            w.u32(VERSION);
            w.u32(self.model.order as u32);
            w.u32(self.model.classes as u32);
            w.quant(&self.weight_quant);
            w.quant(&self.act_quant);
            match &self.gamma {
                None => w.u8(0),
                Some(g) => {
                    w.u8(1);
                    w.u32(g.rows() as u32);
                    for i in 0..g.rows() {
                        for j in 0..g.cols() {
                            w.f64(g.get(i, j));
                        }
                    }
                }
            }
            w.u64(self.train_seed);
            w.u64(self.rng_word_pos as u64);
            w.u64((self.rng_word_pos >> 64) as u64);
            w.u32(self.model.layers.len() as u32);
        }
        for layer in &self.model.layers {
            match layer {
                Layer::Linear(l) => {
                    w.u8(0);
                    w.u32(l.in_dim as u32);
                    w.u32(l.out_dim as u32);
                    write_weight_store(&mut w, &l.weights);
                    w.f64s(&l.bias);
                }
                Layer::Conv(c) => {
                    w.u8(1);
                    w.u32(c.c_in as u32);
                    w.u32(c.c_out as u32);
                    w.u32(c.k as u32);
                    write_weight_store(&mut w, &c.weights);
                    w.f64s(&c.bias);
                }
                Layer::Relu => w.u8(2),
                Layer::MaxPool2 => w.u8(3),
                Layer::AvgPool2 => w.u8(4),
                Layer::BatchNorm(bn) => {
                    w.u8(5);
                    w.u32(bn.features as u32);
                    w.f64(bn.momentum);
                    w.f64(bn.eps);
                    w.f64s(&bn.gamma);
                    w.f64s(&bn.beta);
                    w.f64s(&bn.running_mean);
                    w.f64s(&bn.running_var);
                }
                Layer::Flatten => w.u8(6),
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}, this build reads {VERSION}"
            )));
        }
        let order = r.u32()? as usize;
        let classes = r.u32()? as usize;
        let weight_quant = r.quant()?;
        let act_quant = r.quant()?;
        let gamma = match r.u8()? {
            0 => None,
            1 => {
                let n = r.u32()? as usize;
                let mut m = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m.set(i, j, r.f64()?);
                    }
                }
                Some(m)
            }
            t => return Err(Error::Checkpoint(format!("bad gamma tag {t}"))),
        };
        let train_seed = r.u64()?;
        let rng_word_pos = r.u64()? as u128 | ((r.u64()? as u128) << 64);
        let layer_count = r.u32()? as usize;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let layer = match r.u8()? {
                0 => {
                    let in_dim = r.u32()? as usize;
                    let out_dim = r.u32()? as usize;
                    let weights = read_weight_store(&mut r)?;
                    let bias = r.f64s()?;
                    if bias.len() != out_dim {
                        return Err(Error::Checkpoint("bias length mismatch".into()));
                    }
                    Layer::Linear(LinearLayer {
                        in_dim,
                        out_dim,
                        weights,
                        bias,
                    })
                }
                1 => {
                    let c_in = r.u32()? as usize;
                    let c_out = r.u32()? as usize;
                    let k = r.u32()? as usize;
                    let weights = read_weight_store(&mut r)?;
                    let bias = r.f64s()?;
                    if bias.len() != c_out {
                        return Err(Error::Checkpoint("bias length mismatch".into()));
                    }
                    Layer::Conv(ConvLayer {
                        c_in,
                        c_out,
                        k,
                        weights,
                        bias,
                    })
                }
                2 => Layer::Relu,
                3 => Layer::MaxPool2,
                4 => Layer::AvgPool2,
                5 => {
                    let features = r.u32()? as usize;
                    let momentum = r.f64()?;
                    let eps = r.f64()?;
                    let gamma = r.f64s()?;
                    let beta = r.f64s()?;
                    let running_mean = r.f64s()?;
                    let running_var = r.f64s()?;
                    if [&gamma, &beta, &running_mean, &running_var]
                        .iter()
                        .any(|v| v.len() != features)
                    {
                        return Err(Error::Checkpoint("batch-norm length mismatch".into()));
                    }
                    Layer::BatchNorm(BatchNormLayer {
                        features,
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                        momentum,
                        eps,
                    })
                }
                6 => Layer::Flatten,
                t => return Err(Error::Checkpoint(format!("bad layer tag {t}"))),
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            model: LayerGraph {
                layers,
                order,
                classes,
            },
            weight_quant,
            act_quant,
            gamma,
            train_seed,
            rng_word_pos,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::desk_cnn;

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = desk_cnn(true, 42).unwrap();
        let ck = Checkpoint {
            model,
            weight_quant: Some(QuantSpec {
                bits: 6,
                lo: -1.0,
                hi: 1.0,
            }),
            act_quant: Some(QuantSpec {
                bits: 4,
                lo: 0.0,
                hi: 1.0,
            }),
            gamma: Some(crate::nn::gamma::identity_matrix(4)),
            train_seed: 7,
            rng_word_pos: 123456789,
        };
        let bytes = ck.to_bytes();
        let loaded = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(loaded, ck);
        assert_eq!(loaded.to_bytes(), bytes);
    }

    #[test]
    fn version_and_corruption_are_rejected() {
        let model = desk_cnn(false, 1).unwrap();
        let ck = Checkpoint {
            model,
            weight_quant: None,
            act_quant: None,
            gamma: None,
            train_seed: 0,
            rng_word_pos: 0,
        };
        let mut bytes = ck.to_bytes();
        bytes[4] = 9; // version
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Checkpoint(_))
        ));
        let good = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&good[..good.len() - 3]).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
    }
}
