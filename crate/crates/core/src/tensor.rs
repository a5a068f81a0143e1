//! Dense row-major `f64` tensors and the numeric kernels shared by the tape
//! and the tape-free forward passes.

use std::fmt;

use crate::error::{Error, Result};

/// Immutable dense tensor. Every entry is finite.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape(
                "tensor",
                format!("zero-sized dimension in {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {shape:?} needs {expected} entries, got {}",
                    data.len()
                ),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction"));
        }
        Ok(Tensor { shape, data })
    }

    pub(crate) fn checked(op: &'static str, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(op));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Tensor::new(Vec::new(), vec![value])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Tensor::matrix(n, n, data)
    }

    /// Builds an `n × 2` matrix from 2-D points.
    pub fn from_points(points: &[[f64; 2]]) -> Result<Self> {
        let data = points.iter().flat_map(|p| p.iter().copied()).collect();
        Tensor::matrix(points.len(), 2, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Rows and columns of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::shape(
                "dims2",
                format!("expected a matrix, got shape {s:?}"),
            )),
        }
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[i * cols..(i + 1) * cols]
    }

    /// Rows of an `n × 2` matrix as points.
    pub fn to_points(&self) -> Result<Vec<[f64; 2]>> {
        let (_, c) = self.dims2()?;
        if c != 2 {
            return Err(Error::shape(
                "to_points",
                format!("expected 2 columns, got {c}"),
            ));
        }
        Ok(self.data.chunks_exact(2).map(|r| [r[0], r[1]]).collect())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::checked("transpose", vec![c, r], out)
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// `out = a · b` for row-major `a: m×k`, `b: k×n`. Accumulates over the
/// inner index in ascending order.
pub(crate) fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `out = aᵀ · b` for `a: m×k`, `b: m×n`, giving `k×n`.
pub(crate) fn matmul_tn_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `out = a · bᵀ` for `a: m×n`, `b: k×n`, giving `m×k`.
pub(crate) fn matmul_nt_kernel(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

pub(crate) fn add_bias_kernel(x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    x.chunks_exact(n)
        .flat_map(|row| row.iter().zip(b).map(|(v, bv)| v + bv))
        .collect()
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(Error::shape("matmul", format!("{m}×{k} · {k2}×{n}")));
    }
    Tensor::checked(
        "matmul",
        vec![m, n],
        matmul_kernel(&a.data, &b.data, m, k, n),
    )
}

pub fn add_bias(x: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n) = x.dims2()?;
    if b.shape() != [n] {
        return Err(Error::shape(
            "add_bias",
            format!("rows of width {n} with bias of shape {:?}", b.shape()),
        ));
    }
    Tensor::checked("add_bias", vec![m, n], add_bias_kernel(&x.data, &b.data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_lengths() {
        assert!(Tensor::vector(vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::vector(vec![f64::INFINITY]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::scalar(3.0).unwrap().is_scalar());
    }

    #[test]
    fn identity_matmul() {
        let i2 = Tensor::identity(2).unwrap();
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(matmul(&i2, &a).unwrap(), a);
    }

    #[test]
    fn row_times_column() {
        let a = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(vec![2, 3]).unwrap();
        let b = Tensor::zeros(vec![2, 3]).unwrap();
        assert!(matches!(matmul(&a, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn bias_broadcasts_over_rows() {
        let x = Tensor::zeros(vec![3, 2]).unwrap();
        let b = Tensor::vector(vec![1.5, -2.0]).unwrap();
        let y = add_bias(&x, &b).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &[1.5, -2.0]);
        }
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = Tensor::zeros(vec![2]).unwrap();
        assert_eq!(add_bias(&x, &z).unwrap(), x);
        assert!(add_bias(&x, &Tensor::zeros(vec![3]).unwrap()).is_err());
    }

    #[test]
    fn transposed_kernels_agree_with_explicit_transpose() {
        let a = Tensor::matrix(3, 2, vec![1.0, -2.0, 0.5, 4.0, 3.0, 1.0]).unwrap();
        let b = Tensor::matrix(3, 4, (0..12).map(|v| v as f64 * 0.25).collect()).unwrap();
        let at = a.transpose().unwrap();
        let expect = matmul(&at, &b).unwrap();
        assert_eq!(matmul_tn_kernel(a.data(), b.data(), 3, 2, 4), expect.data());
        let c = Tensor::matrix(4, 2, (0..8).map(|v| v as f64 - 3.0).collect()).unwrap();
        let expect = matmul(&a, &c.transpose().unwrap()).unwrap();
        assert_eq!(matmul_nt_kernel(a.data(), c.data(), 3, 2, 4), expect.data());
    }
}
