//! Dense row-major tensors with optional gradient buffers.

use crate::error::AafError;
use crate::scalar::Scalar;

/// Dense N-dimensional array of scalars in row-major order.
///
/// Invariants: `product(shape) == data.len()`, every extent is positive, and
/// `grad`, when present, has the same length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    pub requires_grad: bool,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self, AafError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(AafError::ZeroExtent { shape });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(AafError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::zero(); numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: Vec<usize>, value: S) -> Self {
        let numel: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// n-by-n identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut data = vec![S::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = S::one();
        }
        Tensor {
            shape: vec![n, n],
            data,
            requires_grad: false,
            grad: None,
        }
    }

    /// Builds a rank-2 tensor from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self, AafError> {
        let m = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if m == 0 || d == 0 {
            return Err(AafError::ZeroExtent {
                shape: vec![m, d],
            });
        }
        let mut data = Vec::with_capacity(m * d);
        for row in rows {
            if row.len() != d {
                return Err(AafError::ShapeMismatch {
                    op: "from_rows",
                    lhs: vec![1, d],
                    rhs: vec![1, row.len()],
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![m, d], data)
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Option<Vec<S>>) -> Result<(), AafError> {
        if let Some(g) = &grad {
            if g.len() != self.data.len() {
                return Err(AafError::GradShape {
                    len: g.len(),
                    shape: self.shape.clone(),
                });
            }
        }
        self.grad = grad;
        Ok(())
    }

    /// Adds `delta` into the gradient buffer, allocating zeros if absent.
    pub fn accumulate_grad(&mut self, delta: &[S]) -> Result<(), AafError> {
        if delta.len() != self.data.len() {
            return Err(AafError::GradShape {
                len: delta.len(),
                shape: self.shape.clone(),
            });
        }
        let grad = self
            .grad
            .get_or_insert_with(|| vec![S::zero(); self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d;
        }
        Ok(())
    }

    /// Element at a rank-2 position.
    pub fn at2(&self, row: usize, col: usize) -> S {
        debug_assert_eq!(self.rank(), 2);
        self.data[row * self.shape[1] + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Maximum absolute elementwise difference; shapes must match.
    pub fn max_abs_diff(&self, other: &Tensor<S>) -> Result<S, AafError> {
        if self.shape != other.shape {
            return Err(AafError::ShapeMismatch {
                op: "max_abs_diff",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let mut worst = S::zero();
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = (*a - *b).abs();
            if d > worst {
                worst = d;
            }
        }
        Ok(worst)
    }
}
