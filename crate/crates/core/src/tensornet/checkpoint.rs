//! Binary checkpoint serialization for named parameter tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   4 bytes  "RKLY"
//! version u32      currently 1
//! count   u32      number of tensor records
//! record: name_len u32, name (UTF-8), rank u32, dims u32 x rank,
//!         values f32 x product(dims)
//! ```

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use super::tensor::Tensor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RKLY";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Decoding failures; encoding cannot fail.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    /// Ran out of bytes while reading the named field.
    Truncated(&'static str),
    NameNotUtf8,
    /// Bytes left over after the declared records.
    TrailingBytes(usize),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a checkpoint: bad magic"),
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint version {v}")
            }
            CheckpointError::Truncated(what) => write!(f, "checkpoint truncated at {what}"),
            CheckpointError::NameNotUtf8 => write!(f, "tensor name is not valid UTF-8"),
            CheckpointError::TrailingBytes(n) => {
                write!(f, "{n} unexpected bytes after the last record")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CheckpointError {}

/// Serializes named tensors in their given order.
pub fn encode_params(params: &[(String, Tensor<f32>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(tensor.dims().len() as u32).to_le_bytes());
        for &d in tensor.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a checkpoint produced by [`encode_params`].
pub fn decode_params(bytes: &[u8]) -> Result<Vec<(String, Tensor<f32>)>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let count = r.u32("count")? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = core::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| CheckpointError::NameNotUtf8)?;
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dims")? as usize);
        }
        let volume: usize = dims.iter().product();
        let raw = r.take(volume * 4, "values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        params.push((
            String::from(name),
            Tensor::from_vec(&dims, data).expect("volume matches by construction"),
        ));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn sample_params() -> Vec<(String, Tensor<f32>)> {
        vec![
            (
                "enc.0.w".to_string(),
                Tensor::from_vec(&[2, 1, 1, 1], vec![0.5, -1.5]).unwrap(),
            ),
            ("enc.0.b".to_string(), Tensor::from_vec(&[2], vec![0.0, 3.25]).unwrap()),
            ("scalar".to_string(), Tensor::from_vec(&[], vec![7.0]).unwrap()),
        ]
    }

    #[test]
    fn round_trip_preserves_names_shapes_and_bits() {
        let params = sample_params();
        let bytes = encode_params(&params);
        assert_eq!(&bytes[..4], b"RKLY");
        let back = decode_params(&bytes).unwrap();
        assert_eq!(back.len(), params.len());
        for ((n0, t0), (n1, t1)) in params.iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.dims(), t1.dims());
            let bits0: Vec<u32> = t0.data().iter().map(|v| v.to_bits()).collect();
            let bits1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits0, bits1);
        }
    }

    #[test]
    fn empty_parameter_list_round_trips() {
        let bytes = encode_params(&[]);
        assert_eq!(decode_params(&bytes).unwrap(), vec![]);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let mut bytes = encode_params(&sample_params());
        bytes[0] = b'X';
        assert_eq!(decode_params(&bytes).unwrap_err(), CheckpointError::BadMagic);
    }

    #[test]
    fn unknown_version_is_rejected() {
        let mut bytes = encode_params(&sample_params());
        bytes[4] = 9;
        assert_eq!(
            decode_params(&bytes).unwrap_err(),
            CheckpointError::UnsupportedVersion(9)
        );
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = encode_params(&sample_params());
        for cut in [3, 7, 11, bytes.len() - 1] {
            assert!(
                matches!(
                    decode_params(&bytes[..cut]).unwrap_err(),
                    CheckpointError::Truncated(_)
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn trailing_garbage_is_detected() {
        let mut bytes = encode_params(&sample_params());
        bytes.extend_from_slice(&[0, 1, 2]);
        assert_eq!(
            decode_params(&bytes).unwrap_err(),
            CheckpointError::TrailingBytes(3)
        );
    }

    #[test]
    fn non_utf8_name_is_rejected() {
        let params = vec![("ab".to_string(), Tensor::<f32>::zeros(&[1]))];
        let mut bytes = encode_params(&params);
        // The name starts right after magic, version, count, name_len.
        bytes[16] = 0xFF;
        assert_eq!(decode_params(&bytes).unwrap_err(), CheckpointError::NameNotUtf8);
    }
}
