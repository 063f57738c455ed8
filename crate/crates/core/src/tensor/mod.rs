//! The `.oodt` tensor container.
//!
//! Layout, all integers little-endian:
//!
//! | offset      | size        | field                              |
//! |-------------|-------------|------------------------------------|
//! | 0           | 4           | magic `b"OODT"`                    |
//! | 4           | 4           | version, `u32`, always 1           |
//! | 8           | 1           | dtype code (1 = `f32`, 2 = `u32`)  |
//! | 9           | 1           | ndim, 1 or 2                       |
//! | 10          | 8 × ndim    | dims, `u64` each                   |
//! | 10 + 8·ndim | rest        | row-major payload                  |
//!
//! The payload length must match the dims exactly. Float payloads are
//! rejected on load if they contain NaN or infinities.

mod matrix;

use std::fs;
use std::path::Path;

pub use matrix::{
    ClassifierHead, FeatureMatrix, Features, LabelVector, LogitMatrix, Logits, Matrix,
    ScoreVector,
};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"OODT";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "oodt";

const FIXED_HEADER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DType {
    F32 = 1,
    U32 = 2,
}

impl DType {
    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U32),
            other => Err(Error::UnsupportedDtype(other)),
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn size(self) -> usize {
        4
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::U32 => "u32",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U32(Vec<u32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U32(_) => DType::U32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A validated 1-D or 2-D tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<u64>,
    data: TensorData,
}

fn element_count(shape: &[u64]) -> Result<u64> {
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::UnsupportedRank(shape.len().min(u8::MAX as usize) as u8));
    }
    let mut count: u64 = 1;
    for (axis, &d) in shape.iter().enumerate() {
        if d == 0 {
            return Err(Error::ZeroDimension { axis });
        }
        count = count.checked_mul(d).ok_or(Error::SizeOverflow)?;
    }
    Ok(count)
}

fn check_finite(values: &[f32]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

impl Tensor {
    pub fn new(shape: Vec<u64>, data: TensorData) -> Result<Self> {
        let expected = element_count(&shape)?;
        if expected != data.len() as u64 {
            return Err(Error::ShapeMismatch {
                shape,
                expected,
                found: data.len(),
            });
        }
        if let TensorData::F32(values) = &data {
            check_finite(values)?;
        }
        Ok(Tensor { shape, data })
    }

    pub fn f32(shape: Vec<u64>, values: Vec<f32>) -> Result<Self> {
        Self::new(shape, TensorData::F32(values))
    }

    pub fn u32(shape: Vec<u64>, values: Vec<u32>) -> Result<Self> {
        Self::new(shape, TensorData::U32(values))
    }

    pub fn shape(&self) -> &[u64] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_parts(self) -> (Vec<u64>, TensorData) {
        (self.shape, self.data)
    }

    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER + 8 * self.shape.len() + self.data.len() * self.dtype().size()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype().code());
        out.push(self.shape.len() as u8);
        for d in &self.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        match &self.data {
            TensorData::F32(values) => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            TensorData::U32(values) => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    /// Parses a complete `.oodt` image. Every length is checked against the
    /// buffer before anything is allocated.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let found = bytes.len() as u64;
        if bytes.len() < FIXED_HEADER {
            // Report a bad magic first when the bytes we do have already disagree.
            if bytes.len() >= 4 && bytes[..4] != MAGIC {
                return Err(Error::BadMagic(bytes[..4].try_into().unwrap()));
            }
            return Err(Error::Truncated {
                expected: FIXED_HEADER as u64,
                found,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dtype = DType::from_code(bytes[8])?;
        let ndim = bytes[9];
        if !(1..=2).contains(&ndim) {
            return Err(Error::UnsupportedRank(ndim));
        }
        let header_len = FIXED_HEADER + 8 * ndim as usize;
        if bytes.len() < header_len {
            return Err(Error::Truncated {
                expected: header_len as u64,
                found,
            });
        }
        let shape: Vec<u64> = bytes[FIXED_HEADER..header_len]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let count = element_count(&shape)?;
        let payload_len = count
            .checked_mul(dtype.size() as u64)
            .and_then(|p| p.checked_add(header_len as u64))
            .ok_or(Error::SizeOverflow)?;
        if found < payload_len {
            return Err(Error::Truncated {
                expected: payload_len,
                found,
            });
        }
        if found > payload_len {
            return Err(Error::TrailingBytes(found - payload_len));
        }

        let payload = &bytes[header_len..];
        let data = match dtype {
            DType::F32 => TensorData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            DType::U32 => TensorData::U32(
                payload
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
        };
        Tensor::new(shape, data)
    }
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, tensor.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(dtype: u8, dims: &[u64]) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"OODT");
        b.extend_from_slice(&1u32.to_le_bytes());
        b.push(dtype);
        b.push(dims.len() as u8);
        for d in dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        b
    }

    #[test]
    fn two_by_three_is_fifty_bytes_and_round_trips() {
        let t = Tensor::f32(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), 50);
        assert_eq!(&bytes[0..4], b"OODT");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], 1);
        assert_eq!(bytes[9], 2);
        assert_eq!(&bytes[10..18], &2u64.to_le_bytes());
        assert_eq!(&bytes[18..26], &3u64.to_le_bytes());
        assert_eq!(&bytes[26..30], &1.0f32.to_le_bytes());
        assert_eq!(Tensor::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn minimal_u32_tensor() {
        let t = Tensor::u32(vec![1], vec![0]).unwrap();
        let bytes = t.encode();
        assert_eq!(bytes.len(), 4 + 4 + 1 + 1 + 8 + 4);
        assert_eq!(Tensor::decode(&bytes).unwrap(), t);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = Tensor::f32(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { expected: 6, found: 5, .. }));
    }

    #[test]
    fn rank_and_zero_dims_are_rejected() {
        assert!(matches!(Tensor::f32(vec![], vec![]), Err(Error::UnsupportedRank(0))));
        assert!(matches!(
            Tensor::f32(vec![1, 1, 1], vec![0.0]),
            Err(Error::UnsupportedRank(3))
        ));
        assert!(matches!(
            Tensor::f32(vec![2, 0], vec![]),
            Err(Error::ZeroDimension { axis: 1 })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = Tensor::u32(vec![1], vec![7]).unwrap().encode();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(Tensor::decode(&bytes), Err(Error::BadMagic(m)) if &m == b"XXXX"));
        assert!(matches!(Tensor::decode(b"XXXX"), Err(Error::BadMagic(_))));
    }

    #[test]
    fn version_and_dtype_are_checked() {
        let mut bytes = Tensor::u32(vec![1], vec![7]).unwrap().encode();
        bytes[4] = 2;
        assert!(matches!(Tensor::decode(&bytes), Err(Error::UnsupportedVersion(2))));
        let mut bytes = Tensor::u32(vec![1], vec![7]).unwrap().encode();
        bytes[8] = 9;
        assert!(matches!(Tensor::decode(&bytes), Err(Error::UnsupportedDtype(9))));
    }

    #[test]
    fn nan_in_payload_is_a_distinct_error() {
        let mut bytes = header(1, &[3]);
        for v in [1.0f32, f32::NAN, 2.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert!(matches!(Tensor::decode(&bytes), Err(Error::NonFinite { index: 1, .. })));

        let mut bytes = header(1, &[1]);
        bytes.extend_from_slice(&f32::NEG_INFINITY.to_le_bytes());
        assert!(matches!(Tensor::decode(&bytes), Err(Error::NonFinite { index: 0, .. })));
    }

    #[test]
    fn nan_bit_patterns_are_fine_in_u32_payloads() {
        let mut bytes = header(2, &[1]);
        bytes.extend_from_slice(&f32::NAN.to_bits().to_le_bytes());
        assert!(Tensor::decode(&bytes).is_ok());
    }

    #[test]
    fn truncated_and_trailing() {
        let bytes = Tensor::f32(vec![2, 2], vec![1.0; 4]).unwrap().encode();
        assert!(matches!(
            Tensor::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(Tensor::decode(&bytes[..12]), Err(Error::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Tensor::decode(&long), Err(Error::TrailingBytes(1))));
    }

    #[test]
    fn huge_dims_fail_before_allocation() {
        let bytes = header(1, &[u64::MAX, 2]);
        assert!(matches!(Tensor::decode(&bytes), Err(Error::SizeOverflow)));
        let bytes = header(1, &[1 << 40, 1 << 20]);
        assert!(matches!(Tensor::decode(&bytes), Err(Error::Truncated { .. })));
        // product fits in u64 but the byte length does not
        let bytes = header(2, &[1 << 62]);
        assert!(matches!(Tensor::decode(&bytes), Err(Error::SizeOverflow)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.oodt");
        let t = Tensor::f32(vec![3], vec![-0.0, 1.5e-42, 3.4e38]).unwrap();
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        match (back.data(), t.data()) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                let a: Vec<u32> = a.iter().map(|v| v.to_bits()).collect();
                let b: Vec<u32> = b.iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b);
            }
            _ => panic!("dtype changed"),
        }
        assert!(matches!(
            read_tensor(dir.path().join("missing.oodt")),
            Err(Error::Io { .. })
        ));
    }
}
