//! Dense tensors, multi-indices and matrix unfoldings.
//!
//! Flat storage is column-major over axes: axis 0 varies fastest. Every
//! unfolding in the crate is defined relative to that order, so the row index
//! of a [`DimGroupMatrix`] enumerates its row axes with the first listed axis
//! fastest, and likewise for columns.

use crate::error::{Result, TrError};
use crate::oracle::BlackBox;
use crate::skeleton::SkeletonSet;
use crate::Matrix;

/// A point of `[n]^d` with 1-based entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<usize>,
}

impl MultiIndex {
    /// Builds a multi-index from 1-based entries, validating them against `n`.
    pub fn new(entries: Vec<usize>, n: usize) -> Result<Self> {
        for (position, &value) in entries.iter().enumerate() {
            if value == 0 || value > n {
                return Err(TrError::IndexOutOfRange { position, value, n });
            }
        }
        Ok(Self { entries })
    }

    pub fn from_zero_based(x: &[usize]) -> Self {
        Self {
            entries: x.iter().map(|&v| v + 1).collect(),
        }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_zero_based(&self) -> Vec<usize> {
        self.entries.iter().map(|&v| v - 1).collect()
    }

    /// Checks the index against an ambient `(d, n)`.
    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        if self.entries.len() != d {
            return Err(TrError::LengthMismatch {
                expected: d,
                got: self.entries.len(),
            });
        }
        for (position, &value) in self.entries.iter().enumerate() {
            if value == 0 || value > n {
                return Err(TrError::IndexOutOfRange { position, value, n });
            }
        }
        Ok(())
    }
}

/// Cyclic position lookup: returns `x` at 1-based position `((i - 1) mod d) + 1`.
///
/// `i` may be any integer; the modulus is taken non-negative, so `i = 0`
/// addresses position `d` and `i = d + 1` addresses position 1.
pub fn mod_index(x: &MultiIndex, i: i64, d: usize) -> usize {
    x.entries()[cyclic(i - 1, d)]
}

/// Non-negative remainder of `i` modulo `d`, as a 0-based position.
pub fn cyclic(i: i64, d: usize) -> usize {
    i.rem_euclid(d as i64) as usize
}

/// A dense real tensor stored with axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() || shape.contains(&0) {
            return Err(TrError::ShapeMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    /// Fills a tensor from a function of the 0-based index tuple.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        let mut stride = 1;
        for (&i, &s) in idx.iter().zip(&self.shape) {
            lin += i * stride;
            stride *= s;
        }
        lin
    }

    /// Entry at a 0-based index tuple.
    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }
}

/// Advances a 0-based odometer with axis 0 fastest. Returns `false` on wrap.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) -> bool {
    for (i, &s) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < s {
            return true;
        }
        *i = 0;
    }
    false
}

/// `sqrt(sum of squares)` over every entry.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A tensor unfolded into a matrix with `rows_dims` as rows and `cols_dims` as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DimGroupMatrix {
    pub rows_dims: Vec<usize>,
    pub cols_dims: Vec<usize>,
    shape: Vec<usize>,
    pub matrix: Matrix,
}

impl DimGroupMatrix {
    /// Folds the matrix back into the original tensor.
    pub fn to_tensor(&self) -> DenseTensor {
        let mut t = DenseTensor::zeros(self.shape.clone());
        let row_shape: Vec<usize> = self.rows_dims.iter().map(|&a| self.shape[a]).collect();
        let col_shape: Vec<usize> = self.cols_dims.iter().map(|&a| self.shape[a]).collect();
        let mut idx = vec![0usize; self.shape.len()];
        for lin in 0..t.data.len() {
            let row = group_linear(&idx, &self.rows_dims, &row_shape);
            let col = group_linear(&idx, &self.cols_dims, &col_shape);
            t.data[lin] = self.matrix[(row, col)];
            increment(&mut idx, &self.shape);
        }
        t
    }
}

fn group_linear(idx: &[usize], dims: &[usize], shape: &[usize]) -> usize {
    let mut lin = 0;
    let mut stride = 1;
    for (&a, &s) in dims.iter().zip(shape) {
        lin += idx[a] * stride;
        stride *= s;
    }
    lin
}

fn check_split(order: usize, rows: &[usize], cols: &[usize]) -> Result<()> {
    let mut seen = vec![false; order];
    for &a in rows.iter().chain(cols) {
        if a >= order {
            return Err(TrError::InvalidSplit(format!(
                "axis {a} out of range for order {order}"
            )));
        }
        if seen[a] {
            return Err(TrError::InvalidSplit(format!("axis {a} listed twice")));
        }
        seen[a] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(TrError::InvalidSplit(format!("axis {missing} not covered")));
    }
    Ok(())
}

/// Unfolds `t` with axes `rows` (first listed fastest) as rows and `cols` as columns.
///
/// An empty `rows` yields a single-row matrix, i.e. the transposed vectorisation.
pub fn reshape_group(t: &DenseTensor, rows: &[usize], cols: &[usize]) -> Result<DimGroupMatrix> {
    check_split(t.order(), rows, cols)?;
    let row_shape: Vec<usize> = rows.iter().map(|&a| t.shape[a]).collect();
    let col_shape: Vec<usize> = cols.iter().map(|&a| t.shape[a]).collect();
    let m: usize = row_shape.iter().product();
    let k: usize = col_shape.iter().product();
    let mut matrix = Matrix::zeros(m, k);
    let mut idx = vec![0usize; t.order()];
    for &v in &t.data {
        let row = group_linear(&idx, rows, &row_shape);
        let col = group_linear(&idx, cols, &col_shape);
        matrix[(row, col)] = v;
        increment(&mut idx, &t.shape);
    }
    Ok(DimGroupMatrix {
        rows_dims: rows.to_vec(),
        cols_dims: cols.to_vec(),
        shape: t.shape.clone(),
        matrix,
    })
}

/// `f(rows; cols)`: oracle values on the product grid of two partial index sets.
///
/// The two sets must assign disjoint axes that together cover all `d` axes.
pub fn subsample(oracle: &BlackBox, rows: &SkeletonSet, cols: &SkeletonSet) -> Result<Matrix> {
    let d = oracle.dims();
    let n = oracle.size();
    check_split(d, rows.dims(), cols.dims())?;
    for set in [rows, cols] {
        for elem in set.elements() {
            for (pos, &v) in elem.iter().enumerate() {
                if v >= n {
                    return Err(TrError::IndexOutOfRange {
                        position: set.dims()[pos],
                        value: v + 1,
                        n,
                    });
                }
            }
        }
    }
    let mut out = Matrix::zeros(rows.len(), cols.len());
    let mut x = vec![0usize; d];
    let mut points = Vec::with_capacity(rows.len() * cols.len());
    for j in 0..cols.len() {
        cols.fill(j, &mut x);
        for i in 0..rows.len() {
            rows.fill(i, &mut x);
            points.push(x.clone());
        }
    }
    let values = oracle.eval_many(&points);
    for j in 0..cols.len() {
        for i in 0..rows.len() {
            out[(i, j)] = values[i + j * rows.len()];
        }
    }
    Ok(out)
}
