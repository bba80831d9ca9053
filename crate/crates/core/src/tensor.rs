//! Dense row-major tensors of `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense, row-major, multi-dimensional array of reals.
///
/// `shape.iter().product() == data.len()` always holds; every constructor
/// checks it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Builds a tensor from owned data. Fails on a length mismatch or on
    /// non-finite entries.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} holds {} elements but {} were given",
                shape,
                len,
                data.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "shape {shape:?} has a zero-sized axis"
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "tensor construction (element {pos} = {})",
                data[pos]
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Unchecked construction for internal kernels whose output shape is
    /// known to be consistent.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data, new shape. The element count must not change.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Leading axis size, i.e. the batch dimension for activations.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of elements per leading-axis slice.
    pub fn row_len(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Rows `indices` of the leading axis, stacked in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let row = self.row_len();
        let mut data = Vec::with_capacity(row * indices.len());
        for &i in indices {
            data.extend_from_slice(&self.data[i * row..(i + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = indices.len();
        Self::from_parts(shape, data)
    }
}

const SMALL_M: usize = 8;

/// `c = op(a) op(b) + beta c` for row-major matrices, where
/// `op` optionally transposes. `a` is `m x k` after `op`, `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // Packing the whole of `b` dominates when `a` has only a few rows.
    if m <= SMALL_M && !trans_a && !trans_b {
        for (c_row, a_row) in c.chunks_exact_mut(n).zip(a.chunks_exact(k)) {
            if beta == 0.0 {
                c_row.fill(0.0);
            } else if beta != 1.0 {
                c_row.iter_mut().for_each(|v| *v *= beta);
            }
            for (&a_il, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
                if a_il != 0.0 {
                    c_row.iter_mut().zip(b_row).for_each(|(cv, &bv)| *cv += a_il * bv);
                }
            }
        }
        return;
    }
    // Row-major strides: a[i, l] at i * rsa + l * csa.
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover exactly the index ranges implied by the
    // dimensions and strides above (checked by the debug asserts).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
