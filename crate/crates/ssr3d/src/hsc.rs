//! HSC cube container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "HSC1"
//! 4       4         bands   (u32 LE)
//! 8       4         height  (u32 LE)
//! 12      4         width   (u32 LE)
//! 16      4·L·H·W   f32 LE values, band-major (band, row, col)
//! end−4   4         CRC32 of every preceding byte
//! ```
//!
//! The header is validated before any payload is read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ssr3d_core::HsiCube;

use crate::error::{AppError, AppResult, FormatError};

pub const MAGIC: [u8; 4] = *b"HSC1";
pub const HEADER_LEN: u64 = 16;
/// Largest accepted extent of any single axis.
pub const MAX_DIM: u64 = 1 << 20;
/// Largest accepted element count.
pub const MAX_ELEMENTS: u64 = i32::MAX as u64;

pub fn encode(cube: &HsiCube) -> Vec<u8> {
    let (l, h, w) = cube.dims();
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * cube.values().len() + 4);
    out.extend_from_slice(&MAGIC);
    for d in [l, h, w] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in cube.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Checks a header and returns `(bands, height, width)`.
pub fn parse_header(header: &[u8; HEADER_LEN as usize]) -> Result<(usize, usize, usize), FormatError> {
    let mut found = [0u8; 4];
    found.copy_from_slice(&header[..4]);
    if found != MAGIC {
        return Err(FormatError::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    let mut dims = [0u64; 3];
    for (i, (d, what)) in dims.iter_mut().zip(["bands", "height", "width"]).enumerate() {
        let offset = 4 + 4 * i as u64;
        let at = offset as usize;
        let v = u64::from(u32::from_le_bytes(header[at..at + 4].try_into().expect("4 bytes")));
        if v == 0 {
            return Err(FormatError::ZeroDim { offset, what });
        }
        if v > MAX_DIM {
            return Err(FormatError::DimOverflow {
                offset,
                what,
                value: v,
                limit: MAX_DIM,
            });
        }
        *d = v;
    }
    let count = dims[0] * dims[1] * dims[2];
    if count > MAX_ELEMENTS {
        return Err(FormatError::DimOverflow {
            offset: 4,
            what: "element count",
            value: count,
            limit: MAX_ELEMENTS,
        });
    }
    Ok((dims[0] as usize, dims[1] as usize, dims[2] as usize))
}

/// Decodes a complete HSC stream.
pub fn decode_from(mut reader: impl Read) -> Result<Result<HsiCube, FormatError>, std::io::Error> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_up_to(&mut reader, &mut header)?;
    if got < header.len() {
        if got >= 4 && header[..4] != MAGIC {
            let mut found = [0u8; 4];
            found.copy_from_slice(&header[..4]);
            return Ok(Err(FormatError::BadMagic {
                expected: MAGIC,
                found,
            }));
        }
        return Ok(Err(FormatError::Truncated {
            offset: got as u64,
            needed: HEADER_LEN - got as u64,
            what: "header",
        }));
    }
    let (l, h, w) = match parse_header(&header) {
        Ok(d) => d,
        Err(e) => return Ok(Err(e)),
    };
    let payload_len = 4 * (l * h * w) as u64;
    let mut rest = Vec::new();
    // `take` bounds the allocation by what the file actually holds
    reader.by_ref().take(payload_len + 4).read_to_end(&mut rest)?;
    if (rest.len() as u64) < payload_len + 4 {
        let what = if (rest.len() as u64) < payload_len { "payload" } else { "checksum" };
        return Ok(Err(FormatError::Truncated {
            offset: HEADER_LEN + rest.len() as u64,
            needed: payload_len + 4 - rest.len() as u64,
            what,
        }));
    }
    let mut extra = Vec::new();
    reader.take(1 << 16).read_to_end(&mut extra)?;
    if !extra.is_empty() {
        return Ok(Err(FormatError::TrailingBytes {
            offset: HEADER_LEN + payload_len + 4,
            extra: extra.len() as u64,
        }));
    }
    let payload = &rest[..payload_len as usize];
    let stored = u32::from_le_bytes(rest[payload_len as usize..].try_into().expect("4 bytes"));
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&header);
    hasher.update(payload);
    let computed = hasher.finalize();
    if stored != computed {
        return Ok(Err(FormatError::Checksum {
            offset: HEADER_LEN + payload_len,
            stored,
            computed,
        }));
    }
    let mut values = Vec::with_capacity(l * h * w);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Ok(Err(FormatError::NonFinite {
                offset: HEADER_LEN + 4 * i as u64,
            }));
        }
        values.push(v);
    }
    Ok(Ok(HsiCube::new(l, h, w, values).expect("validated length and finiteness")))
}

fn read_up_to(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn decode(bytes: &[u8]) -> Result<HsiCube, FormatError> {
    decode_from(bytes).expect("reading from a slice cannot fail")
}

pub fn read_hsc(path: &Path) -> AppResult<HsiCube> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    decode_from(BufReader::new(file))
        .map_err(|e| AppError::io(path, e))?
        .map_err(|source| AppError::Format {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_hsc(cube: &HsiCube, path: &Path) -> AppResult<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode(cube)).and_then(|_| w.flush()).map_err(|e| AppError::io(path, e))
}
