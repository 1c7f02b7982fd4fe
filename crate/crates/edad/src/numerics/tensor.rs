use crate::{Error, Result};

use super::Real;

/// Dense row-major tensor.
///
/// Rank is arbitrary for storage (checkpoints carry rank + extents) but the
/// arithmetic in this crate is rank-2: scalars are `[1,1]`, row vectors
/// `[1,n]`, column vectors `[n,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<Real>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<Real>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Dimension {
                op: "Tensor::new",
                detail: format!("zero extent in shape {shape:?}"),
            });
        }
        if numel != data.len() {
            return Err(Error::Dimension {
                op: "Tensor::new",
                detail: format!("shape {shape:?} implies {numel} values, got {}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn full(shape: Vec<usize>, value: Real) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![value; numel] }
    }

    pub fn scalar(value: Real) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    /// Column vector `[n,1]` from a slice.
    pub fn col(values: &[Real]) -> Self {
        Tensor { shape: vec![values.len(), 1], data: values.to_vec() }
    }

    /// Row vector `[1,n]` from a slice.
    pub fn row(values: &[Real]) -> Self {
        Tensor { shape: vec![1, values.len()], data: values.to_vec() }
    }

    /// Uniform(-1/sqrt(rows), +1/sqrt(rows)) initialization: `rows` is the
    /// fan-in under the row-vector convention `x * W`.
    pub fn uniform_fan_in(rng: &mut impl rand::Rng, rows: usize, cols: usize) -> Tensor {
        let bound = 1.0 / (rows as Real).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        Tensor { shape: vec![rows, cols], data }
    }

    pub fn from_rows(rows: &[Vec<Real>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map(|v| v.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::Dimension {
                    op: "Tensor::from_rows",
                    detail: "ragged rows".into(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::new(vec![r, c], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[Real] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Real] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Real> {
        self.data
    }

    /// Rows under the rank-2 view.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Columns under the rank-2 view.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn at(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols() + c]
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn scalar_value(&self) -> Result<Real> {
        if self.is_scalar() {
            Ok(self.data[0])
        } else {
            Err(Error::Contract(format!(
                "expected scalar tensor, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    /// Row-wise softmax with max subtraction. Each output row is
    /// non-negative and sums to 1.
    pub fn softmax_rows(&self) -> Tensor {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        softmax_rows_kernel(&self.data, &mut out, r, c);
        Tensor { shape: vec![r, c], data: out }
    }
}

// ── flat kernels shared by forward and backward passes ──────────────────

pub(crate) fn softmax_rows_kernel(x: &[Real], out: &mut [Real], r: usize, c: usize) {
    for i in 0..r {
        let row = &x[i * c..(i + 1) * c];
        let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            out[i * c + j] = e;
            sum += e;
        }
        for j in 0..c {
            out[i * c + j] /= sum;
        }
    }
}

/// out[m,n] = a[m,k] * b[k,n], accumulating into `out` (caller zeroes).
pub(crate) fn matmul_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// out[m,n] = a[m,k] * b[n,k]^T, accumulating into `out`.
pub(crate) fn matmul_nt_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] += acc;
        }
    }
}

/// out[k,n] = a[m,k]^T * b[m,n], accumulating into `out`.
pub(crate) fn matmul_tn_acc(a: &[Real], b: &[Real], out: &mut [Real], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// Numerically stable softplus: ln(1 + e^x).
pub(crate) fn softplus(x: Real) -> Real {
    x.max(0.0) + (-(x.abs())).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_data_length_must_agree() {
        assert!(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::new(vec![2, 2], vec![0.0; 4]).is_ok());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn softmax_uniform_row() {
        let t = Tensor::row(&[0.0, 0.0, 0.0]).softmax_rows();
        for &v in t.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_large_logit_no_overflow() {
        let t = Tensor::row(&[1000.0, 0.0]).softmax_rows();
        assert!(t.data()[0] > 1.0 - 1e-12);
        assert!(t.data()[1] < 1e-12);
        assert!(t.is_finite());
    }

    #[test]
    fn softmax_hand_value() {
        let t = Tensor::row(&[(2.0 as Real).ln(), 0.0]).softmax_rows();
        assert!((t.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.data()[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_matches_naive_in_safe_range() {
        for &x in &[-5.0, -1.0, 0.0, 1.0, 5.0] {
            let naive = ((x as Real).exp() + 1.0).ln();
            assert!((softplus(x) - naive).abs() < 1e-12);
        }
        assert!(softplus(800.0).is_finite());
    }
}
