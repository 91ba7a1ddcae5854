use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::scalar::Scalar;

// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 15;

/// Row-major dense matrix. Rows are batch items or nodes; columns are channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return param_err(format!(
                "matrix data length {} does not match {rows}x{cols}",
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Single-column matrix.
    pub fn column(values: Vec<T>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| U::lit(x.to_f64_lossy())).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return param_err(format!(
                "{what}: shape {:?} vs {:?}",
                self.shape(),
                other.shape()
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "add")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sub")?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self * w^T` where `w` is `out x in`: the usual dense-layer product.
    pub fn matmul_nt(&self, w: &Self) -> Result<Self> {
        if self.cols != w.cols {
            return param_err(format!(
                "matmul_nt: input width {} vs weight width {}",
                self.cols, w.cols
            ));
        }
        let (k, out) = (self.cols, w.rows);
        let mut res = Self::zeros(self.rows, out);
        let kernel = |(xr, yr): (&[T], &mut [T])| {
            for (o, y) in yr.iter_mut().enumerate() {
                let wr = &w.data[o * k..(o + 1) * k];
                *y = dot(xr, wr);
            }
        };
        if out == 0 {
            return Ok(res);
        }
        if self.rows * k * out >= PAR_THRESHOLD {
            self.data
                .par_chunks(k.max(1))
                .zip(res.data.par_chunks_mut(out))
                .for_each(kernel);
        } else {
            self.data
                .chunks(k.max(1))
                .zip(res.data.chunks_mut(out))
                .for_each(kernel);
        }
        if k == 0 {
            res.data.iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(res)
    }

    /// `self * w` where `w` is `k x out`.
    pub fn matmul_nn(&self, w: &Self) -> Result<Self> {
        if self.cols != w.rows {
            return param_err(format!(
                "matmul_nn: inner dims {} vs {}",
                self.cols, w.rows
            ));
        }
        let (k, out) = (self.cols, w.cols);
        let mut res = Self::zeros(self.rows, out);
        if out == 0 || k == 0 {
            return Ok(res);
        }
        let kernel = |(xr, yr): (&[T], &mut [T])| {
            for (p, &a) in xr.iter().enumerate() {
                if a != T::zero() {
                    axpy(a, &w.data[p * out..(p + 1) * out], yr);
                }
            }
        };
        if self.rows * k * out >= PAR_THRESHOLD {
            self.data
                .par_chunks(k)
                .zip(res.data.par_chunks_mut(out))
                .for_each(kernel);
        } else {
            self.data.chunks(k).zip(res.data.chunks_mut(out)).for_each(kernel);
        }
        Ok(res)
    }

    /// `self^T * x`: with `self` = `B x out` and `x` = `B x in`, returns `out x in`.
    pub fn matmul_tn(&self, x: &Self) -> Result<Self> {
        if self.rows != x.rows {
            return param_err(format!(
                "matmul_tn: batch sizes {} vs {}",
                self.rows, x.rows
            ));
        }
        let (out, k) = (self.cols, x.cols);
        let mut res = Self::zeros(out, k);
        if out == 0 || k == 0 {
            return Ok(res);
        }
        let kernel = |(o, rr): (usize, &mut [T])| {
            for b in 0..self.rows {
                let a = self.data[b * out + o];
                if a != T::zero() {
                    axpy(a, &x.data[b * k..(b + 1) * k], rr);
                }
            }
        };
        if self.rows * k * out >= PAR_THRESHOLD {
            res.data.par_chunks_mut(k).enumerate().for_each(kernel);
        } else {
            res.data.chunks_mut(k).enumerate().for_each(kernel);
        }
        Ok(res)
    }

    /// Column sums, as a row vector.
    pub fn col_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.cols];
        for r in self.data.chunks(self.cols.max(1)) {
            for (a, &b) in s.iter_mut().zip(r) {
                *a += b;
            }
        }
        s
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[T]) {
        for r in self.data.chunks_mut(self.cols.max(1)) {
            for (a, &b) in r.iter_mut().zip(bias) {
                *a += b;
            }
        }
    }

    /// Horizontal concatenation; all parts need the same row count.
    pub fn hcat(parts: &[&Self]) -> Result<Self> {
        let rows = parts.first().map_or(0, |p| p.rows);
        if parts.iter().any(|p| p.rows != rows) {
            return param_err("hcat: row counts differ");
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { rows, cols, data })
    }

    /// Splits columns into consecutive blocks of the given widths.
    pub fn hsplit(&self, widths: &[usize]) -> Result<Vec<Self>> {
        if widths.iter().sum::<usize>() != self.cols {
            return param_err("hsplit: widths do not sum to column count");
        }
        let mut out: Vec<Self> = widths.iter().map(|&w| Self::zeros(self.rows, w)).collect();
        for i in 0..self.rows {
            let row = self.row(i);
            let mut off = 0;
            for (m, &w) in out.iter_mut().zip(widths) {
                m.row_mut(i).copy_from_slice(&row[off..off + w]);
                off += w;
            }
        }
        Ok(out)
    }

    /// Rows selected by index (with repetition allowed).
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Vertical concatenation.
    pub fn vcat(parts: &[&Self]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.cols);
        if parts.iter().any(|p| p.cols != cols) {
            return param_err("vcat: column counts differ");
        }
        let mut data = Vec::with_capacity(parts.iter().map(|p| p.data.len()).sum());
        let mut rows = 0;
        for p in parts {
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(Self { rows, cols, data })
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Four accumulators let the compiler vectorize without changing results run to run.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_nt(x: &DenseMatrix<f64>, w: &DenseMatrix<f64>) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(x.rows(), w.rows(), |i, o| {
            (0..x.cols()).map(|k| x.get(i, k) * w.get(o, k)).sum()
        })
    }

    fn filled(r: usize, c: usize, s: f64) -> DenseMatrix<f64> {
        DenseMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 * s).sin())
    }

    #[test]
    fn products_match_naive_loops() {
        for &(b, k, o) in &[(3, 5, 2), (70, 40, 33), (1, 1, 1)] {
            let x = filled(b, k, 0.37);
            let w = filled(o, k, 0.91);
            assert!(x.matmul_nt(&w).unwrap().max_abs_diff(&naive_nt(&x, &w)) < 1e-12);
            let dy = filled(b, o, 0.13);
            let tn = dy.matmul_tn(&x).unwrap();
            let want = DenseMatrix::from_fn(o, k, |p, q| (0..b).map(|i| dy.get(i, p) * x.get(i, q)).sum());
            assert!(tn.max_abs_diff(&want) < 1e-12);
            let nn = dy.matmul_nn(&w).unwrap();
            let want = DenseMatrix::from_fn(b, k, |i, q| (0..o).map(|p| dy.get(i, p) * w.get(p, q)).sum());
            assert!(nn.max_abs_diff(&want) < 1e-12);
        }
    }

    #[test]
    fn zero_width_input() {
        let x = DenseMatrix::<f64>::zeros(4, 0);
        let w = DenseMatrix::<f64>::zeros(3, 0);
        assert_eq!(x.matmul_nt(&w).unwrap(), DenseMatrix::zeros(4, 3));
    }

    #[test]
    fn shape_errors() {
        let x = filled(2, 3, 1.0);
        assert!(x.matmul_nt(&filled(2, 2, 1.0)).is_err());
        assert!(x.add(&filled(3, 2, 1.0)).is_err());
        assert!(DenseMatrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn hcat_hsplit_inverse() {
        let a = filled(4, 2, 0.3);
        let b = filled(4, 3, 0.7);
        let c = DenseMatrix::hcat(&[&a, &b]).unwrap();
        let parts = c.hsplit(&[2, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
