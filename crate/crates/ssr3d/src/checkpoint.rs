//! SSRC checkpoint container.
//!
//! ```text
//! "SSRC"  u16 version
//! u32 d_modules, u32 units, u32 filters, u32 k, u32 scale, u8 flags, u8 block
//! f64 training mean
//! u32 entry count, then per entry:
//!     u16 name length, name bytes, u8 rank, rank × u32 dims, f32 values
//! u32 CRC32 of every preceding byte
//! ```
//!
//! All integers and floats are little endian. Entries are named
//! `<layer>.weight` and `<layer>.bias`.

use std::fs;
use std::path::Path;

use ssr3d_core::model::ParamStore;
use ssr3d_core::SsrnetConfig;

use crate::error::{AppError, AppResult, FormatError};

pub const MAGIC: [u8; 4] = *b"SSRC";
pub const VERSION: u16 = 1;

/// Everything needed to rerun a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: SsrnetConfig,
    /// Global training mean, added back to network output.
    pub mean: f64,
    pub store: ParamStore,
}

impl Checkpoint {
    /// Parameters as the file stores them (rounded to `f32`).
    pub fn rounded(config: SsrnetConfig, mean: f64, store: &ParamStore) -> Self {
        let mut store = store.clone();
        store.round_to_f32();
        Self { config, mean, store }
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let c = &ck.config;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.d_modules, c.units_per_module, c.filters, c.k, c.scale] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(c.flags());
    out.push(c.block_code());
    out.extend_from_slice(&ck.mean.to_le_bytes());
    out.extend_from_slice(&(2 * ck.store.len() as u32).to_le_bytes());
    let mut entry = |name: String, dims: &[usize], values: &mut dyn Iterator<Item = f64>| {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(dims.len() as u8);
        for d in dims {
            out.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in values {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    };
    for (name, p) in ck.store.iter() {
        entry(format!("{name}.weight"), &p.weight.shape().dims(), &mut p.weight.data().iter().copied());
        entry(format!("{name}.bias"), &[p.bias.len()], &mut p.bias.iter().copied());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::Truncated {
                offset: self.bytes.len() as u64,
                needed: (n - (self.bytes.len() - self.pos)) as u64,
                what,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, FormatError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }
}

/// Decodes and validates a checkpoint against its own configuration.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint, FormatError> {
    if bytes.len() >= 4 && bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(FormatError::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    if bytes.len() < 4 + 4 {
        return Err(FormatError::Truncated {
            offset: bytes.len() as u64,
            needed: (8 - bytes.len()) as u64,
            what: "header",
        });
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..body_len]);
    let mut cur = Cursor {
        bytes: &bytes[..body_len],
        pos: 4,
    };
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(FormatError::Version { offset: 4, found: version });
    }
    if stored != computed {
        return Err(FormatError::Checksum {
            offset: body_len as u64,
            stored,
            computed,
        });
    }
    let mut fields = [0usize; 5];
    for f in fields.iter_mut() {
        *f = cur.u32("configuration")? as usize;
    }
    let flags_at = cur.offset();
    let flags = cur.u8("flags")?;
    let block_at = cur.offset();
    let block = SsrnetConfig::block_from_code(cur.u8("block kind")?).ok_or_else(|| FormatError::Invalid {
        offset: block_at,
        detail: "unknown block kind".into(),
    })?;
    if flags > 3 {
        return Err(FormatError::Invalid {
            offset: flags_at,
            detail: format!("unknown flag bits {flags:#04x}"),
        });
    }
    let config = SsrnetConfig {
        d_modules: fields[0],
        units_per_module: fields[1],
        filters: fields[2],
        k: fields[3],
        scale: fields[4],
        lff_enabled: flags & 1 != 0,
        grl_enabled: flags & 2 != 0,
        block_kind: block,
    };
    config.validate().map_err(|e| FormatError::Invalid {
        offset: 6,
        detail: e.to_string(),
    })?;
    let mean = f64::from_le_bytes(cur.take(8, "mean")?.try_into().expect("8 bytes"));
    let mut store = ParamStore::zeros(&config).map_err(|e| FormatError::Invalid {
        offset: 6,
        detail: e.to_string(),
    })?;
    let count_at = cur.offset();
    let count = cur.u32("entry count")? as usize;
    if count != 2 * store.len() {
        return Err(FormatError::Invalid {
            offset: count_at,
            detail: format!("{count} entries, configuration needs {}", 2 * store.len()),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..count {
        let name_at = cur.offset();
        let len = cur.u16("entry name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "entry name")?)
            .map_err(|_| FormatError::Invalid {
                offset: name_at,
                detail: "entry name is not UTF-8".into(),
            })?
            .to_owned();
        let invalid = |detail: String| FormatError::Invalid { offset: name_at, detail };
        if !seen.insert(name.clone()) {
            return Err(invalid(format!("duplicate entry `{name}`")));
        }
        let rank = cur.u8("entry rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("entry dims")? as usize);
        }
        let (layer, part) = name
            .rsplit_once('.')
            .ok_or_else(|| invalid(format!("entry `{name}` lacks a .weight/.bias suffix")))?;
        let p = store
            .get_mut(layer)
            .ok_or_else(|| invalid(format!("entry `{name}` is not a layer of this configuration")))?;
        let target: &mut [f64] = match part {
            "weight" if dims == p.weight.shape().dims() => p.weight.data_mut(),
            "bias" if dims == [p.bias.len()] => &mut p.bias,
            _ => return Err(invalid(format!("entry `{name}` has unexpected shape {dims:?}"))),
        };
        let values_at = cur.offset();
        let raw = cur.take(4 * target.len(), "entry values")?;
        for (i, (slot, chunk)) in target.iter_mut().zip(raw.chunks_exact(4)).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    offset: values_at + 4 * i as u64,
                });
            }
            *slot = f64::from(v);
        }
    }
    if cur.pos != body_len {
        return Err(FormatError::TrailingBytes {
            offset: cur.offset(),
            extra: (body_len - cur.pos) as u64,
        });
    }
    Ok(Checkpoint { config, mean, store })
}

pub fn save(ck: &Checkpoint, path: &Path) -> AppResult<()> {
    fs::write(path, encode(ck)).map_err(|e| AppError::io(path, e))
}

pub fn load(path: &Path) -> AppResult<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    decode(&bytes).map_err(|source| AppError::Format {
        path: path.to_path_buf(),
        source,
    })
}
