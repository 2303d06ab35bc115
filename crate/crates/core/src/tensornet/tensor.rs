//! Dense row-major tensors and the error type shared by all tensor ops.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use super::scalar::Real;

/// Dense tensor with row-major storage; the last dimension varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S: Real> {
    dims: Vec<usize>,
    data: Vec<S>,
}

impl<S: Real> Tensor<S> {
    /// Zero-filled tensor of the given shape.
    pub fn zeros(dims: &[usize]) -> Tensor<S> {
        Tensor { dims: dims.to_vec(), data: vec![S::ZERO; dims.iter().product()] }
    }

    /// Constant-filled tensor.
    pub fn full(dims: &[usize], value: S) -> Tensor<S> {
        Tensor { dims: dims.to_vec(), data: vec![value; dims.iter().product()] }
    }

    /// Wraps existing values; the length must match the shape.
    pub fn from_vec(dims: &[usize], data: Vec<S>) -> Result<Tensor<S>, TensorError> {
        let want: usize = dims.iter().product();
        if data.len() != want {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {:?} needs {} values, got {}", dims, want, data.len()),
            });
        }
        Ok(Tensor { dims: dims.to_vec(), data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Reinterprets the values under a new shape of equal volume.
    pub fn reshaped(&self, dims: &[usize]) -> Result<Tensor<S>, TensorError> {
        let want: usize = dims.iter().product();
        if want != self.data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: format!(
                    "cannot view {:?} ({} values) as {:?} ({} values)",
                    self.dims,
                    self.data.len(),
                    dims,
                    want
                ),
            });
        }
        Ok(Tensor { dims: dims.to_vec(), data: self.data.clone() })
    }

    /// Converts element-wise to another scalar type through f64.
    pub fn cast<T: Real>(&self) -> Tensor<T> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn iter(&self) -> core::slice::Iter<'_, S> {
        self.data.iter()
    }
}

/// Errors raised by tensor construction and graph operations. Shape
/// mismatches carry the full offending shapes in the message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TensorError {
    ShapeMismatch { op: &'static str, detail: String },
    /// A cross-entropy label was outside `[0, K)`.
    LabelOutOfRange { label: u8, classes: usize },
    /// `backward` was called on a non-scalar node.
    NonScalarRoot { dims: Vec<usize> },
    /// A loss came out NaN or infinite.
    NonFiniteLoss { which: &'static str },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, detail } => {
                write!(f, "{op}: shape mismatch: {detail}")
            }
            TensorError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} outside [0, {classes})")
            }
            TensorError::NonScalarRoot { dims } => {
                write!(f, "backward root must be a scalar, got shape {dims:?}")
            }
            TensorError::NonFiniteLoss { which } => {
                write!(f, "non-finite loss in {which}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TensorError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_volume() {
        let t = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).unwrap();
        assert_eq!(t.dims(), &[2, 3]);
        assert_eq!(t.len(), 6);
        let err = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("[2, 3]") && msg.contains('5'), "{msg}");
    }

    #[test]
    fn reshape_preserves_data_and_checks_volume() {
        let t = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = t.reshaped(&[4]).unwrap();
        assert_eq!(r.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(t.reshaped(&[3]).is_err());
    }

    #[test]
    fn cast_round_trips_representable_values() {
        let t = Tensor::<f32>::from_vec(&[3], vec![0.5, -1.25, 3.0]).unwrap();
        let d: Tensor<f64> = t.cast();
        assert_eq!(d.data(), &[0.5, -1.25, 3.0]);
        let back: Tensor<f32> = d.cast();
        assert_eq!(back, t);
    }
}
