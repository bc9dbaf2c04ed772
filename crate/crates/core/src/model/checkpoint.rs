//! Self-describing checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "FSIFTCKP"
//! version  u32      currently 1
//! hdr_len  u32      length of the JSON header
//! header   JSON     { "config": ModelConfig, "class_names": [..] | null }
//! count    u32      number of tensors
//! tensor*  name_len u32, name, ndim u32, dims u64*, dtype u8 (0 = f32),
//!          byte_len u64, raw f32 data
//! ```
//!
//! Tensor data is stored as f32 regardless of the in-memory element type;
//! loading an f32 model therefore reproduces forward outputs bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::math::{s, Scalar};
use super::{Classifier, ModelConfig, ModelError, ParamSet, TensorMut};

const MAGIC: &[u8; 8] = b"FSIFTCKP";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    class_names: Option<Vec<String>>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serialized size in bytes of a checkpoint for this model: the fixed
/// framing, the JSON header, per-tensor metadata, and 4 bytes per parameter.
pub fn checkpoint_size(model: &Classifier<impl Scalar>) -> usize {
    let header = serde_json::to_vec(&Header {
        config: model.config,
        class_names: model.class_names.clone(),
    })
    .expect("header serializes");
    let mut size = 8 + 4 + 4 + header.len() + 4;
    for (name, t) in model.params.tensors() {
        size += 4 + name.len() + 4 + 8 * t.dims().len() + 1 + 8 + 4 * t.len();
    }
    size
}

/// Writes the model to `path`, casting weights to f32.
pub fn save_checkpoint<F: Scalar>(model: &Classifier<F>, path: &Path) -> Result<(), ModelError> {
    let err = io_err(path);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(&err)?);
    out.write_all(MAGIC).map_err(&err)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(&err)?;
    let header = serde_json::to_vec(&Header {
        config: model.config,
        class_names: model.class_names.clone(),
    })
    .expect("header serializes");
    out.write_all(&(header.len() as u32).to_le_bytes())
        .map_err(&err)?;
    out.write_all(&header).map_err(&err)?;

    let tensors = model.params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())
        .map_err(&err)?;
    for (name, t) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())
            .map_err(&err)?;
        out.write_all(name.as_bytes()).map_err(&err)?;
        let dims = t.dims();
        out.write_all(&(dims.len() as u32).to_le_bytes())
            .map_err(&err)?;
        for d in &dims {
            out.write_all(&(*d as u64).to_le_bytes()).map_err(&err)?;
        }
        out.write_all(&[DTYPE_F32]).map_err(&err)?;
        let data = t.as_slice();
        out.write_all(&((data.len() * 4) as u64).to_le_bytes())
            .map_err(&err)?;
        for v in data {
            let v32 = v.to_f64().unwrap_or(0.0) as f32;
            out.write_all(&v32.to_le_bytes()).map_err(&err)?;
        }
    }
    out.flush().map_err(&err)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.at + n > self.bytes.len() {
            return Err(ModelError::CorruptCheckpoint {
                reason: format!("truncated at byte {}", self.at),
            });
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint, validating the layout and every tensor shape against
/// the embedded config.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<Classifier<F>, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let mut r = Reader { bytes: &bytes, at: 0 };

    if r.take(8)? != MAGIC {
        return Err(ModelError::CorruptCheckpoint {
            reason: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(ModelError::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let hdr_len = r.u32()? as usize;
    let header: Header =
        serde_json::from_slice(r.take(hdr_len)?).map_err(|e| ModelError::CorruptCheckpoint {
            reason: format!("bad header: {e}"),
        })?;
    header.config.validate()?;

    let mut params = ParamSet::<F>::zeros(&header.config);
    let count = r.u32()? as usize;
    {
        let mut remaining: Vec<(String, TensorMut<'_, F>)> = params.tensors_mut();
        if count != remaining.len() {
            return Err(ModelError::CorruptCheckpoint {
                reason: format!("expected {} tensors, found {count}", remaining.len()),
            });
        }
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| {
                ModelError::CorruptCheckpoint {
                    reason: "tensor name is not UTF-8".into(),
                }
            })?;
            let ndim = r.u32()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let dtype = r.take(1)?[0];
            if dtype != DTYPE_F32 {
                return Err(ModelError::CorruptCheckpoint {
                    reason: format!("unknown dtype {dtype} for `{name}`"),
                });
            }
            let byte_len = r.u64()? as usize;
            let data = r.take(byte_len)?;

            let pos = remaining
                .iter()
                .position(|(n, _)| n == &name)
                .ok_or_else(|| ModelError::CorruptCheckpoint {
                    reason: format!("unexpected or duplicate tensor `{name}`"),
                })?;
            let (_, mut tensor) = remaining.swap_remove(pos);
            let expect_dims = match &tensor {
                TensorMut::T1(a) => vec![a.len()],
                TensorMut::T2(a) => a.shape().to_vec(),
            };
            let slice = tensor.as_slice_mut();
            if dims != expect_dims || byte_len != slice.len() * 4 {
                return Err(ModelError::CorruptCheckpoint {
                    reason: format!(
                        "tensor `{name}` has shape {dims:?}, expected {expect_dims:?}"
                    ),
                });
            }
            for (i, v) in slice.iter_mut().enumerate() {
                let raw: [u8; 4] = data[i * 4..i * 4 + 4].try_into().unwrap();
                *v = s(f32::from_le_bytes(raw) as f64);
            }
        }
    }
    if r.at != bytes.len() {
        return Err(ModelError::CorruptCheckpoint {
            reason: format!("{} trailing bytes", bytes.len() - r.at),
        });
    }
    Ok(Classifier {
        config: header.config,
        class_names: header.class_names,
        params,
    })
}
