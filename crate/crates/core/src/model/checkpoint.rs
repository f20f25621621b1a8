//! Binary checkpoint format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic   b"SRFG"
//! u32     format version
//! u32     header length, then the header as TOML (model config, step,
//!         record count, per-parameter Adam step counts)
//! record* u32 name length, name bytes, u8 rank, rank × u32 dims,
//!         raw f32 data
//! ```
//!
//! Parameter records come first in model order; Adam moments follow as
//! records named `<param>/m` and `<param>/v`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, Param, ParamStore};
use crate::error::{Error, Result};
use crate::train::{AdamState, Moments};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SRFG";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters, optimizer state and position of a training run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    /// Completed updates.
    pub step: u64,
}

/// `<param>/m` and `<param>/v` as they are read.
type MomentRecords = (Option<Vec<f32>>, Option<Vec<f32>>);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    step: u64,
    records: u64,
    model: ModelConfig,
    #[serde(default)]
    adam_steps: BTreeMap<String, u64>,
}

impl Checkpoint {
    pub fn new(model: &Model, adam: &AdamState, step: u64) -> Self {
        Checkpoint {
            config: model.config().clone(),
            params: model.params().clone(),
            adam: adam.clone(),
            step,
        }
    }

    /// Rebuilds the model, checking the parameters against the embedded
    /// config.
    pub fn model(&self) -> Result<Model> {
        Model::from_parts(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let records = self.params.len() + 2 * self.adam.len();
        let header = Header {
            step: self.step,
            records: records as u64,
            model: self.config.clone(),
            adam_steps: self
                .adam
                .iter()
                .map(|(name, m)| (name.to_owned(), m.t))
                .collect(),
        };
        let text = toml::to_string(&header)
            .map_err(|e| Error::config(format!("cannot encode checkpoint header: {e}")))?;

        let mut out = Vec::with_capacity(64 + 4 * self.params.scalar_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        write_bytes(&mut out, text.as_bytes());
        for (name, p) in self.params.iter() {
            write_record(&mut out, name, p.dims(), p.value.data());
        }
        for (name, m) in self.adam.iter() {
            let dims = self
                .params
                .get(name)
                .ok_or_else(|| Error::config(format!("optimizer state for unknown {name}")))?
                .dims();
            write_record(&mut out, &format!("{name}/m"), dims, &m.m);
            write_record(&mut out, &format!("{name}/v"), dims, &m.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(r.error_at(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32("format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(r.error_at(4, format!("unsupported format version {version}")));
        }
        let header_at = r.pos;
        let header_len = r.u32("header length")? as usize;
        let header_bytes = r.take(header_len, "header")?;
        let header: Header = std::str::from_utf8(header_bytes)
            .map_err(|e| e.to_string())
            .and_then(|s| toml::from_str(s).map_err(|e| e.to_string()))
            .map_err(|e| r.error_at(header_at, format!("invalid header: {e}")))?;

        let mut params = ParamStore::new();
        let mut moments: BTreeMap<String, MomentRecords> = BTreeMap::new();
        for i in 0..header.records {
            let at = r.pos;
            let what = format!("record {i} of {}", header.records);
            let name_len = r.u32(&format!("{what} name length"))? as usize;
            let name = std::str::from_utf8(r.take(name_len, &format!("{what} name"))?)
                .map_err(|_| r.error_at(at, "record name is not UTF-8"))?
                .to_owned();
            let rank = r.u8(&format!("record '{name}' rank"))? as usize;
            let dims = (0..rank)
                .map(|_| r.u32(&format!("record '{name}' dims")).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = dims.iter().product();
            let raw = r.take(4 * count, &format!("record '{name}' data"))?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(base) = name.strip_suffix("/m") {
                moments.entry(base.to_owned()).or_default().0 = Some(data);
            } else if let Some(base) = name.strip_suffix("/v") {
                moments.entry(base.to_owned()).or_default().1 = Some(data);
            } else {
                let p = Param::new(dims, data).map_err(|e| r.error_at(at, e.to_string()))?;
                params
                    .insert(name, p)
                    .map_err(|e| r.error_at(at, e.to_string()))?;
            }
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after last record"));
        }

        let mut adam = AdamState::default();
        for (name, (m, v)) in moments {
            let (Some(m), Some(v)) = (m, v) else {
                return Err(r.error_at(r.pos, format!("incomplete optimizer state for {name}")));
            };
            let Some(&t) = header.adam_steps.get(&name) else {
                return Err(r.error_at(r.pos, format!("missing Adam step count for {name}")));
            };
            adam.insert(name, Moments { m, v, t });
        }

        let ckpt = Checkpoint {
            config: header.model,
            params,
            adam,
            step: header.step,
        };
        ckpt.model().map_err(|e| r.error_at(r.pos, e.to_string()))?;
        for (name, m) in ckpt.adam.iter() {
            let expected = ckpt.params.get(name).map(Param::len);
            if expected != Some(m.m.len()) || expected != Some(m.v.len()) {
                return Err(r.error_at(r.pos, format!("optimizer state for {name} does not fit")));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&self.to_bytes()?)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn write_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn write_record(out: &mut Vec<u8>, name: &str, dims: &[usize], data: &[f32]) {
    write_bytes(out, name.as_bytes());
    out.push(dims.len() as u8);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error_at(
                self.pos,
                format!(
                    "truncated: {what} needs {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}
