//! Checkpoint file: header {magic "CTEC", version u32, config fields},
//! a named tensor manifest, then raw little-endian f64 payloads for the
//! student, teacher, optimizer moments, and the step counter. Save/load
//! round-trips bit-exactly, which is what makes resume reproducible.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{EncoderParams, LayerParams, ModelConfig, TokenMode};

const MAGIC: &[u8; 4] = b"CTEC";
const VERSION: u32 = 1;

/// Full training snapshot.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub step: u64,
    pub student: EncoderParams,
    pub teacher: EncoderParams,
    /// Adam first/second moments, aligned with `EncoderParams::learnable`.
    pub adam_m: Vec<Tensor>,
    pub adam_v: Vec<Tensor>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated at byte {}",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
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
}

impl Checkpoint {
    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, t) in self.student.learnable() {
            out.push((format!("student.{name}"), t));
        }
        out.push(("student.positional".to_string(), &self.student.positional));
        for (name, t) in self.teacher.learnable() {
            out.push((format!("teacher.{name}"), t));
        }
        out.push(("teacher.positional".to_string(), &self.teacher.positional));
        for ((name, _), m) in self.student.learnable().iter().zip(self.adam_m.iter()) {
            out.push((format!("adam_m.{name}"), m));
        }
        for ((name, _), v) in self.student.learnable().iter().zip(self.adam_v.iter()) {
            out.push((format!("adam_v.{name}"), v));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors = self.named_tensors();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_u32(&mut out, self.config.layers as u32);
        put_u32(&mut out, self.config.model_dim as u32);
        put_u32(&mut out, self.config.ffn_dim as u32);
        put_u32(&mut out, self.config.heads as u32);
        put_u32(&mut out, self.config.top_k as u32);
        put_u32(&mut out, self.config.feature_dim as u32);
        put_u32(&mut out, self.config.max_frames as u32);
        out.push(match self.config.token_mode {
            TokenMode::Ones => 0,
            TokenMode::Zeros => 1,
        });
        out.extend_from_slice(&self.config.dropout.to_le_bytes());
        put_u64(&mut out, self.seed);
        put_u64(&mut out, self.step);

        put_u32(&mut out, tensors.len() as u32);
        for (name, t) in &tensors {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for &e in t.shape() {
                put_u32(&mut out, e as u32);
            }
            out.push(0u8); // dtype: f64 little-endian
        }
        for (_, t) in &tensors {
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        let mut r = Reader {
            bytes: &bytes,
            pos: 0,
            path,
        };
        if r.take(4)? != MAGIC {
            return Err(Error::Format(format!(
                "{}: not a CTEC checkpoint",
                path.display()
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let config = ModelConfig {
            layers: r.u32()? as usize,
            model_dim: r.u32()? as usize,
            ffn_dim: r.u32()? as usize,
            heads: r.u32()? as usize,
            top_k: r.u32()? as usize,
            feature_dim: r.u32()? as usize,
            max_frames: r.u32()? as usize,
            token_mode: match r.u8()? {
                0 => TokenMode::Ones,
                1 => TokenMode::Zeros,
                other => {
                    return Err(Error::Format(format!(
                        "{}: unknown token mode {other}",
                        path.display()
                    )))
                }
            },
            dropout: r.f64()?,
        };
        config.validate()?;
        let seed = r.u64()?;
        let step = r.u64()?;

        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format(format!("{}: bad tensor name", path.display())))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let dtype = r.u8()?;
            if dtype != 0 {
                return Err(Error::Format(format!(
                    "{}: unsupported dtype {dtype} for {name}",
                    path.display()
                )));
            }
            manifest.push((name, shape));
        }
        let mut tensors: HashMap<String, Tensor> = HashMap::with_capacity(count);
        for (name, shape) in manifest {
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(r.f64()?);
            }
            tensors.insert(name, Tensor::new(data, &shape)?);
        }

        let mut take = |name: String| -> Result<Tensor> {
            tensors
                .remove(&name)
                .ok_or_else(|| Error::Format(format!("{}: missing tensor {name}", path.display())))
        };
        let mut load_params = |prefix: &str| -> Result<EncoderParams> {
            let mut layers = Vec::with_capacity(config.layers);
            for i in 0..config.layers {
                layers.push(LayerParams {
                    ln1_gamma: take(format!("{prefix}.layer{i}.ln1.gamma"))?,
                    ln1_beta: take(format!("{prefix}.layer{i}.ln1.beta"))?,
                    wq: take(format!("{prefix}.layer{i}.attn.wq"))?,
                    bq: take(format!("{prefix}.layer{i}.attn.bq"))?,
                    wk: take(format!("{prefix}.layer{i}.attn.wk"))?,
                    bk: take(format!("{prefix}.layer{i}.attn.bk"))?,
                    wv: take(format!("{prefix}.layer{i}.attn.wv"))?,
                    bv: take(format!("{prefix}.layer{i}.attn.bv"))?,
                    wo: take(format!("{prefix}.layer{i}.attn.wo"))?,
                    bo: take(format!("{prefix}.layer{i}.attn.bo"))?,
                    ln2_gamma: take(format!("{prefix}.layer{i}.ln2.gamma"))?,
                    ln2_beta: take(format!("{prefix}.layer{i}.ln2.beta"))?,
                    w1: take(format!("{prefix}.layer{i}.ffn.w1"))?,
                    b1: take(format!("{prefix}.layer{i}.ffn.b1"))?,
                    w2: take(format!("{prefix}.layer{i}.ffn.w2"))?,
                    b2: take(format!("{prefix}.layer{i}.ffn.b2"))?,
                });
            }
            Ok(EncoderParams {
                input_weight: take(format!("{prefix}.input.weight"))?,
                input_bias: take(format!("{prefix}.input.bias"))?,
                positional: take(format!("{prefix}.positional"))?,
                layers,
                final_gamma: take(format!("{prefix}.final_norm.gamma"))?,
                final_beta: take(format!("{prefix}.final_norm.beta"))?,
            })
        };

        let student = load_params("student")?;
        let teacher = load_params("teacher")?;
        let names: Vec<String> = student.learnable().into_iter().map(|(n, _)| n).collect();
        let mut adam_m = Vec::with_capacity(names.len());
        let mut adam_v = Vec::with_capacity(names.len());
        for n in &names {
            adam_m.push(take(format!("adam_m.{n}"))?);
        }
        for n in &names {
            adam_v.push(take(format!("adam_v.{n}"))?);
        }
        Ok(Checkpoint {
            config,
            seed,
            step,
            student,
            teacher,
            adam_m,
            adam_v,
        })
    }
}
