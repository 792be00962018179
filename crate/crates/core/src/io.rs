//! On-disk formats.
//!
//! CRPT tensor layout, all integers little endian:
//!
//! | bytes      | field                                 |
//! |------------|---------------------------------------|
//! | 4          | magic `CRPT`                          |
//! | 1          | version, always 1                     |
//! | 1          | dtype: 1 = f32, 2 = f64               |
//! | 1          | ndim                                  |
//! | 4 × ndim   | dims, u32 each                        |
//! | rest       | row-major payload                     |
//!
//! Maps are stored as binary (P5) PGM with maxval 255.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CorpError, Result};
use crate::tensor::Tensor;

pub const CRPT_MAGIC: &[u8; 4] = b"CRPT";
pub const CRPT_VERSION: u8 = 1;
const HEADER_FIXED: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(CorpError::UnsupportedDtype(other)),
        }
    }
}

/// A tensor read from disk, in whichever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dims(&self) -> &[usize] {
        match self {
            AnyTensor::F32(t) => t.dims(),
            AnyTensor::F64(t) => t.dims(),
        }
    }

    /// Converts to `f32`, rounding `f64` payloads.
    pub fn into_f32(self) -> Tensor<f32> {
        match self {
            AnyTensor::F32(t) => t,
            AnyTensor::F64(t) => t.map(|v| v as f32),
        }
    }
}

/// Element types storable in CRPT files.
pub trait CrptScalar: crate::tensor::Scalar {
    const DTYPE: Dtype;
    fn put(self, out: &mut Vec<u8>);
}

impl CrptScalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

impl CrptScalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
}

pub fn encode_tensor<T: CrptScalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let ndim = u8::try_from(t.dims().len())
        .map_err(|_| CorpError::shape("CRPT supports at most 255 dimensions"))?;
    let mut out = Vec::with_capacity(HEADER_FIXED + 4 * t.dims().len() + t.len() * T::DTYPE.size());
    out.extend_from_slice(CRPT_MAGIC);
    out.push(CRPT_VERSION);
    out.push(T::DTYPE as u8);
    out.push(ndim);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| CorpError::shape(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.put(&mut out);
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 4 {
        return Err(CorpError::Truncated {
            expected: HEADER_FIXED,
            actual: bytes.len(),
        });
    }
    if &bytes[..4] != CRPT_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(CorpError::BadMagic { found });
    }
    if bytes.len() < HEADER_FIXED {
        return Err(CorpError::Truncated {
            expected: HEADER_FIXED,
            actual: bytes.len(),
        });
    }
    if bytes[4] != CRPT_VERSION {
        return Err(CorpError::UnsupportedVersion(bytes[4]));
    }
    let dtype = Dtype::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    let header = HEADER_FIXED + 4 * ndim;
    if bytes.len() < header {
        return Err(CorpError::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[HEADER_FIXED..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CorpError::Format(format!("dims {dims:?} overflow")))?;
    let expected = count
        .checked_mul(dtype.size())
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| CorpError::Format(format!("dims {dims:?} overflow")))?;
    if bytes.len() < expected {
        return Err(CorpError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CorpError::Format(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let payload = &bytes[header..];
    Ok(match dtype {
        Dtype::F32 => AnyTensor::F32(Tensor::new(
            dims,
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )?),
        Dtype::F64 => AnyTensor::F64(Tensor::new(
            dims,
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect(),
        )?),
    })
}

/// Writes through a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| CorpError::arg(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| CorpError::from(e).in_file(&tmp))?;
        f.write_all(bytes)
            .map_err(|e| CorpError::from(e).in_file(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(|e| CorpError::from(e).in_file(path))
}

pub fn read_tensor(path: &Path) -> Result<AnyTensor> {
    let bytes = fs::read(path).map_err(|e| CorpError::from(e).in_file(path))?;
    decode_tensor(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_tensor<T: CrptScalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_atomic(path, &encode_tensor(t)?)
}

/// Quantizes `[0, 1]` to a byte with round-half-up.
pub fn quantize(v: f32) -> u8 {
    (f64::from(v).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode_pgm(map: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = map.hw()?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(map.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CorpError::Format("malformed PGM header".into()))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor<f32>> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(CorpError::Format(
            "not a binary PGM (expected magic P5)".into(),
        ));
    }
    let mut pos = 2;
    let width = pgm_token(bytes, &mut pos)?;
    let height = pgm_token(bytes, &mut pos)?;
    let maxval = pgm_token(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(CorpError::Format(format!(
            "PGM maxval {maxval} unsupported, expected 255"
        )));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(CorpError::Format("malformed PGM header".into()));
    }
    pos += 1;
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(CorpError::Truncated {
            expected: pos + expected,
            actual: bytes.len(),
        });
    }
    Tensor::new(
        vec![height, width],
        raster[..expected]
            .iter()
            .map(|&b| f32::from(b) / 255.0)
            .collect(),
    )
}

pub fn read_map_pgm(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| CorpError::from(e).in_file(path))?;
    decode_pgm(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_map_pgm(path: &Path, map: &Tensor<f32>) -> Result<()> {
    write_atomic(path, &encode_pgm(map)?)
}
