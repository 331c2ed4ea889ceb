//! Self-describing binary checkpoints.
//!
//! Layout: an 8-byte magic, a version word, the model geometry (so a loader
//! can validate before touching any tensor), then named shape-tagged f64
//! arrays in row-major little-endian order. Base weights, prefix rows and
//! trainer state all reuse this one container with different array names.

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::{BaseParams, LayerParams};
use crate::model::prefix::PrefixParams;
use crate::scalar::{c, Scalar};
use crate::util;
use ndarray::{Array1, Array2, ArrayD, Ix1, Ix2};
use std::path::Path;

const MAGIC: &[u8; 8] = b"PFXCKPT\0";
const VERSION: u32 = 1;
const MAX_NAME: usize = 4096;
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub cfg: ModelConfig,
    pub m_len: usize,
    pub bottleneck: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub arrays: Vec<(String, ArrayD<f64>)>,
    origin: String,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Checkpoint {
            meta,
            arrays: Vec::new(),
            origin: "(unsaved)".to_string(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, array: ArrayD<f64>) {
        self.arrays.push((name.into(), array));
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    fn require(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.get(name)
            .ok_or_else(|| Error::checkpoint(&self.origin, format!("missing array `{name}`")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for v in [
            self.meta.cfg.layers,
            self.meta.cfg.hidden,
            self.meta.cfg.heads,
            self.meta.cfg.vocab,
            self.meta.cfg.max_context,
            self.meta.m_len,
            self.meta.bottleneck,
        ] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
        buf.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, arr) in &self.arrays {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(arr.ndim() as u32).to_le_bytes());
            for &d in arr.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            let std = arr.as_standard_layout();
            for &x in std.as_slice().expect("standard layout") {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        util::write_bytes(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            buf: &buf,
            pos: 0,
            path,
        };
        if r.bytes(8)? != MAGIC {
            return Err(Error::checkpoint(path, "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::checkpoint(
                path,
                format!("unsupported version {version}"),
            ));
        }
        let layers = r.u64()? as usize;
        let hidden = r.u64()? as usize;
        let heads = r.u64()? as usize;
        let vocab = r.u64()? as usize;
        let max_context = r.u64()? as usize;
        let m_len = r.u64()? as usize;
        let bottleneck = r.u64()? as usize;
        let meta = CheckpointMeta {
            cfg: ModelConfig {
                layers,
                hidden,
                heads,
                vocab,
                max_context,
            },
            m_len,
            bottleneck,
        };
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            if name_len > MAX_NAME {
                return Err(Error::checkpoint(path, "array name too long"));
            }
            let name = String::from_utf8(r.bytes(name_len)?.to_vec())
                .map_err(|_| Error::checkpoint(path, "array name is not utf-8"))?;
            let ndim = r.u32()? as usize;
            if ndim > MAX_NDIM {
                return Err(Error::checkpoint(path, format!("ndim {ndim} too large")));
            }
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let total: usize = dims.iter().product();
            if total.checked_mul(8).map_or(true, |b| b > r.remaining()) {
                return Err(Error::checkpoint(
                    path,
                    format!("array `{name}` truncated"),
                ));
            }
            let mut data = Vec::with_capacity(total);
            for _ in 0..total {
                data.push(r.f64()?);
            }
            let arr = ArrayD::from_shape_vec(dims, data)
                .map_err(|e| Error::checkpoint(path, format!("array `{name}`: {e}")))?;
            arrays.push((name, arr));
        }
        if r.remaining() != 0 {
            return Err(Error::checkpoint(path, "trailing bytes after last array"));
        }
        Ok(Checkpoint {
            meta,
            arrays,
            origin: path.display().to_string(),
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::checkpoint(self.path, "unexpected end of file"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }
}

fn to_dyn2<T: Scalar>(a: &Array2<T>) -> ArrayD<f64> {
    a.mapv(|x| x.to_f64()).into_dyn()
}

fn to_dyn1<T: Scalar>(a: &Array1<T>) -> ArrayD<f64> {
    a.mapv(|x| x.to_f64()).into_dyn()
}

pub(crate) fn expect_a2<T: Scalar>(
    ckpt: &Checkpoint,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<Array2<T>> {
    let a = ckpt.require(name)?;
    let v = a
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::ShapeMismatch {
            name: name.to_string(),
            expected: format!("{rows}x{cols}"),
            found: format!("{:?}", a.shape()),
        })?;
    if v.dim() != (rows, cols) {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: format!("{rows}x{cols}"),
            found: format!("{}x{}", v.dim().0, v.dim().1),
        });
    }
    Ok(v.mapv(|x| c(x)))
}

pub(crate) fn expect_a1<T: Scalar>(ckpt: &Checkpoint, name: &str, len: usize) -> Result<Array1<T>> {
    let a = ckpt.require(name)?;
    let v = a
        .view()
        .into_dimensionality::<Ix1>()
        .map_err(|_| Error::ShapeMismatch {
            name: name.to_string(),
            expected: format!("{len}"),
            found: format!("{:?}", a.shape()),
        })?;
    if v.len() != len {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: format!("{len}"),
            found: format!("{}", v.len()),
        });
    }
    Ok(v.mapv(|x| c(x)))
}

const LAYER_FIELDS: [&str; 16] = [
    "ln1_g", "ln1_b", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln2_g", "ln2_b",
    "w_fc", "b_fc", "w_proj", "b_proj",
];

impl<T: Scalar> BaseParams<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointMeta {
            cfg: self.cfg,
            m_len: 0,
            bottleneck: 0,
        });
        ck.push("tok_emb", to_dyn2(&self.tok_emb));
        ck.push("pos_emb", to_dyn2(&self.pos_emb));
        for (i, l) in self.layers.iter().enumerate() {
            ck.push(format!("layer{i}.ln1_g"), to_dyn1(&l.ln1_g));
            ck.push(format!("layer{i}.ln1_b"), to_dyn1(&l.ln1_b));
            ck.push(format!("layer{i}.w_q"), to_dyn2(&l.w_q));
            ck.push(format!("layer{i}.b_q"), to_dyn1(&l.b_q));
            ck.push(format!("layer{i}.w_k"), to_dyn2(&l.w_k));
            ck.push(format!("layer{i}.b_k"), to_dyn1(&l.b_k));
            ck.push(format!("layer{i}.w_v"), to_dyn2(&l.w_v));
            ck.push(format!("layer{i}.b_v"), to_dyn1(&l.b_v));
            ck.push(format!("layer{i}.w_o"), to_dyn2(&l.w_o));
            ck.push(format!("layer{i}.b_o"), to_dyn1(&l.b_o));
            ck.push(format!("layer{i}.ln2_g"), to_dyn1(&l.ln2_g));
            ck.push(format!("layer{i}.ln2_b"), to_dyn1(&l.ln2_b));
            ck.push(format!("layer{i}.w_fc"), to_dyn2(&l.w_fc));
            ck.push(format!("layer{i}.b_fc"), to_dyn1(&l.b_fc));
            ck.push(format!("layer{i}.w_proj"), to_dyn2(&l.w_proj));
            ck.push(format!("layer{i}.b_proj"), to_dyn1(&l.b_proj));
        }
        ck.push("ln_f_g", to_dyn1(&self.ln_f_g));
        ck.push("ln_f_b", to_dyn1(&self.ln_f_b));
        ck.push("w_out", to_dyn2(&self.w_out));
        ck.push("b_out", to_dyn1(&self.b_out));
        ck
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = ckpt.meta.cfg;
        cfg.validate()
            .map_err(|e| Error::checkpoint(&ckpt.origin, format!("invalid geometry: {e}")))?;
        let expected_arrays = 2 + cfg.layers * LAYER_FIELDS.len() + 4;
        if ckpt.arrays.len() != expected_arrays {
            return Err(Error::checkpoint(
                &ckpt.origin,
                format!(
                    "expected {expected_arrays} arrays for base weights, found {}",
                    ckpt.arrays.len()
                ),
            ));
        }
        let e = cfg.hidden;
        let m = cfg.mlp_dim();
        let mut layers = Vec::with_capacity(cfg.layers);
        for i in 0..cfg.layers {
            let n = |f: &str| format!("layer{i}.{f}");
            layers.push(LayerParams {
                ln1_g: expect_a1(ckpt, &n("ln1_g"), e)?,
                ln1_b: expect_a1(ckpt, &n("ln1_b"), e)?,
                w_q: expect_a2(ckpt, &n("w_q"), e, e)?,
                b_q: expect_a1(ckpt, &n("b_q"), e)?,
                w_k: expect_a2(ckpt, &n("w_k"), e, e)?,
                b_k: expect_a1(ckpt, &n("b_k"), e)?,
                w_v: expect_a2(ckpt, &n("w_v"), e, e)?,
                b_v: expect_a1(ckpt, &n("b_v"), e)?,
                w_o: expect_a2(ckpt, &n("w_o"), e, e)?,
                b_o: expect_a1(ckpt, &n("b_o"), e)?,
                ln2_g: expect_a1(ckpt, &n("ln2_g"), e)?,
                ln2_b: expect_a1(ckpt, &n("ln2_b"), e)?,
                w_fc: expect_a2(ckpt, &n("w_fc"), e, m)?,
                b_fc: expect_a1(ckpt, &n("b_fc"), m)?,
                w_proj: expect_a2(ckpt, &n("w_proj"), m, e)?,
                b_proj: expect_a1(ckpt, &n("b_proj"), e)?,
            });
        }
        Ok(BaseParams {
            tok_emb: expect_a2(ckpt, "tok_emb", cfg.vocab, e)?,
            pos_emb: expect_a2(ckpt, "pos_emb", cfg.max_context, e)?,
            layers,
            ln_f_g: expect_a1(ckpt, "ln_f_g", e)?,
            ln_f_b: expect_a1(ckpt, "ln_f_b", e)?,
            w_out: expect_a2(ckpt, "w_out", e, cfg.vocab)?,
            b_out: expect_a1(ckpt, "b_out", cfg.vocab)?,
            cfg,
        })
    }
}

impl<T: Scalar> PrefixParams<T> {
    pub fn to_checkpoint(&self, cfg: &ModelConfig) -> Checkpoint {
        let mut ck = Checkpoint::new(CheckpointMeta {
            cfg: *cfg,
            m_len: self.m_len,
            bottleneck: 0,
        });
        for (i, k) in self.keys.iter().enumerate() {
            ck.push(format!("prefix.k{i}"), to_dyn2(k));
        }
        for (i, v) in self.values.iter().enumerate() {
            ck.push(format!("prefix.v{i}"), to_dyn2(v));
        }
        ck
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, expected_cfg: &ModelConfig) -> Result<Self> {
        if ckpt.meta.cfg != *expected_cfg {
            return Err(Error::checkpoint(
                &ckpt.origin,
                format!(
                    "prefix was trained for geometry {:?}, model is {:?}",
                    ckpt.meta.cfg, expected_cfg
                ),
            ));
        }
        let m = ckpt.meta.m_len;
        let mut keys = Vec::with_capacity(expected_cfg.layers);
        let mut values = Vec::with_capacity(expected_cfg.layers);
        for i in 0..expected_cfg.layers {
            keys.push(expect_a2(
                ckpt,
                &format!("prefix.k{i}"),
                m,
                expected_cfg.hidden,
            )?);
            values.push(expect_a2(
                ckpt,
                &format!("prefix.v{i}"),
                m,
                expected_cfg.hidden,
            )?);
        }
        Ok(PrefixParams {
            m_len: m,
            keys,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn base_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("base.ckpt");
        let p: BaseParams<f64> = BaseParams::init(ModelConfig::toy(16), 21).unwrap();
        p.to_checkpoint().save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let q = BaseParams::<f64>::from_checkpoint(&loaded).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn prefix_round_trip_and_geometry_check() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prefix.ckpt");
        let cfg = ModelConfig::toy(16);
        let mut p: PrefixParams<f64> = PrefixParams::zeros(&cfg, 4);
        p.keys[1][[2, 5]] = 0.25;
        p.to_checkpoint(&cfg).save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let q = PrefixParams::<f64>::from_checkpoint(&loaded, &cfg).unwrap();
        assert_eq!(p, q);
        let other = ModelConfig::toy(32);
        assert!(PrefixParams::<f64>::from_checkpoint(&loaded, &other).is_err());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        let p: BaseParams<f64> = BaseParams::init(ModelConfig::toy(8), 0).unwrap();
        p.to_checkpoint().save(&path).unwrap();

        let good = std::fs::read(&path).unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(Checkpoint::load(&path).is_err());

        let truncated = &good[..good.len() / 2];
        std::fs::write(&path, truncated).unwrap();
        assert!(Checkpoint::load(&path).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        std::fs::write(&path, &trailing).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn missing_array_reported_by_name() {
        let cfg = ModelConfig::toy(8);
        let p: BaseParams<f64> = BaseParams::init(cfg, 0).unwrap();
        let mut ck = p.to_checkpoint();
        let removed = ck.arrays.remove(3);
        ck.push(format!("{}+renamed", removed.0), removed.1);
        let err = BaseParams::<f64>::from_checkpoint(&ck).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("layer0"), "{msg}");
    }

    #[test]
    fn f32_params_survive_f64_container() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f32.ckpt");
        let p: BaseParams<f32> = BaseParams::init(ModelConfig::toy(8), 13).unwrap();
        p.to_checkpoint().save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let q = BaseParams::<f32>::from_checkpoint(&loaded).unwrap();
        assert_eq!(p, q);
    }
}
