//! Dense row-major matrices, normalization, softmax, a seeded RNG and a
//! central-difference gradient oracle.
//!
//! Every reduction runs left to right over indices so results are
//! bit-reproducible for identical inputs.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector is treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Default central-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Rows of unit-norm joint-space embeddings (frames or texts).
pub type EmbeddingMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::DimMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows. An empty slice gives a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimMismatch(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::DimMismatch(format!(
                "t_matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, b) in dst.iter_mut().zip(b_row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · otherᵀ`, i.e. all pairwise row dot products.
    pub fn matmul_t(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimMismatch(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                out[(i, j)] = dot(self.row(i), other.row(j));
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimMismatch(format!(
                "add {:?} and {:?}",
                self.shape(),
                other.shape()
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    pub fn scaled(&self, factor: f64) -> Matrix {
        let mut out = self.clone();
        out.scale(factor);
        out
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[Matrix]) -> Result<Matrix> {
        let cols = parts.first().map_or(0, |m| m.cols);
        let mut data = Vec::new();
        let mut rows = 0;
        for m in parts {
            if m.cols != cols {
                return Err(Error::DimMismatch(format!(
                    "vstack {} columns onto {cols}",
                    m.cols
                )));
            }
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Copies out the listed rows in order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Splits into consecutive row blocks of the given sizes.
    pub fn split_rows(&self, sizes: &[usize]) -> Result<Vec<Matrix>> {
        let total: usize = sizes.iter().sum();
        if total != self.rows {
            return Err(Error::DimMismatch(format!(
                "split {} rows into blocks totalling {total}",
                self.rows
            )));
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &n in sizes {
            out.push(Matrix {
                rows: n,
                cols: self.cols,
                data: self.data[start * self.cols..(start + n) * self.cols].to_vec(),
            });
            start += n;
        }
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !n.is_finite() {
        return Err(Error::NonFinite("vector norm".into()));
    }
    if n < ZERO_NORM {
        return Err(Error::ZeroVector { norm: n });
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Normalizes every row; fails on the first zero row.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let r = l2_normalize(m.row(i))?;
        out.row_mut(i).copy_from_slice(&r);
    }
    Ok(out)
}

/// Pairwise dot products of unit-norm rows: `out[i][j] = a[i] · b[j]`.
pub fn cosine_similarity_matrix(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<Matrix> {
    a.matmul_t(b)
}

pub fn softmax_rows(m: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let mut out = m.clone();
    for i in 0..m.rows() {
        softmax_in_place(out.row_mut(i), temperature);
    }
    Ok(out)
}

/// `log Σⱼ exp(xⱼ / t)` with max subtraction.
pub fn log_sum_exp(xs: &[f64], temperature: f64) -> f64 {
    let max = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x / temperature));
    let sum = xs
        .iter()
        .fold(0.0, |acc, &x| acc + (x / temperature - max).exp());
    max + sum.ln()
}

fn softmax_in_place(row: &mut [f64], temperature: f64) {
    let max = row
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x / temperature));
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x / temperature - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::NonFinite(format!("step h = {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("function value near coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0, |acc, (x, y)| acc + (x - y) * (x - y))
        .sqrt();
    diff / norm(a).max(norm(b)).max(floor)
}

/// Seeded ChaCha8 generator. Identical seeds give identical draws on every
/// platform.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, keyed by `stream`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, scale: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| scale * self.normal()).collect();
        Matrix { rows, cols, data }
    }

    /// Random unit vector, uniform on the sphere.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            if let Ok(u) = l2_normalize(&v) {
                return u;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_unit_rows(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        let r: Vec<Vec<f64>> = (0..rows).map(|_| rng.unit_vector(cols)).collect();
        Matrix::from_rows(&r).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&[3.0, 4.0]).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let u = [0.0, 1.0, 0.0];
        assert_eq!(l2_normalize(&u).unwrap(), u.to_vec());
        assert!(matches!(
            l2_normalize(&[0.0, 0.0]),
            Err(Error::ZeroVector { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let id = Matrix::identity(4);
        assert_eq!(cosine_similarity_matrix(&id, &id).unwrap(), id);

        let single = Matrix::from_rows(&[l2_normalize(&[1.0, 2.0, 2.0]).unwrap()]).unwrap();
        let s = cosine_similarity_matrix(&single, &single).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);

        let mut rng = Rng::new(3);
        let a = random_unit_rows(&mut rng, 3, 4);
        let b = random_unit_rows(&mut rng, 3, 4);
        let s = cosine_similarity_matrix(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut brute = 0.0;
                for k in 0..4 {
                    brute += a[(i, k)] * b[(j, k)];
                }
                assert!((s[(i, j)] - brute).abs() < 1e-15);
                assert!(s[(i, j)].abs() <= 1.0 + 1e-9);
            }
        }
        assert!(matches!(
            cosine_similarity_matrix(&a, &Matrix::identity(3)),
            Err(Error::DimMismatch(_))
        ));
    }

    #[test]
    fn cosine_transpose_is_exact() {
        let mut rng = Rng::new(9);
        let a = random_unit_rows(&mut rng, 5, 7);
        let b = random_unit_rows(&mut rng, 4, 7);
        let ab = cosine_similarity_matrix(&a, &b).unwrap();
        let ba = cosine_similarity_matrix(&b, &a).unwrap();
        assert_eq!(ab, ba.transpose());
    }

    #[test]
    fn softmax_examples() {
        let m = Matrix::from_rows(&[[2.0, 2.0, 2.0]]).unwrap();
        for t in [0.01, 0.1, 1.0] {
            let s = softmax_rows(&m, t).unwrap();
            for &v in s.row(0) {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        let col = Matrix::from_rows(&[[5.0], [-3.0]]).unwrap();
        let s = softmax_rows(&col, 0.1).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 1.0]);

        let m = Matrix::from_rows(&[[0.0, 2f64.ln()]]).unwrap();
        let s = softmax_rows(&m, 1.0).unwrap();
        assert!((s[(0, 0)] - 1.0 / 3.0).abs() < 1e-12);
        assert!((s[(0, 1)] - 2.0 / 3.0).abs() < 1e-12);

        assert!(matches!(
            softmax_rows(&m, 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn softmax_large_logits_stay_finite() {
        let m = Matrix::from_rows(&[[1.0, -1.0, 0.5]]).unwrap();
        let s = softmax_rows(&m, 1e-3).unwrap();
        assert!(s.all_finite());
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_diff_examples() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);

        let g = finite_diff_grad(|_| 4.2, &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);

        let q = [[2.0, 0.5, -1.0], [0.5, 1.0, 0.25], [-1.0, 0.25, 3.0]];
        let quad = |x: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += x[i] * q[i][j] * x[j];
                }
            }
            s
        };
        let x = [0.3, -0.7, 1.1];
        let g = finite_diff_grad(quad, &x, 1e-5).unwrap();
        for i in 0..3 {
            let analytic: f64 = 2.0 * (0..3).map(|j| q[i][j] * x[j]).sum::<f64>();
            assert!((g[i] - analytic).abs() < 1e-8, "{} vs {analytic}", g[i]);
        }

        assert!(matches!(
            finite_diff_grad(|x| 1.0 / x[0], &[0.0], 1e-5).map(|g| g[0].is_finite()),
            Ok(true) | Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            finite_diff_grad(|_| f64::NAN, &[0.0], 1e-5),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rng_is_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
        let mut f1 = Rng::new(42).fork(3);
        let mut f2 = Rng::new(42).fork(3);
        let mut f3 = Rng::new(42).fork(4);
        let x = f1.next_u64();
        assert_eq!(x, f2.next_u64());
        assert_ne!(x, f3.next_u64());
    }

    #[test]
    fn rng_pinned_first_draws() {
        // Frozen so that a dependency bump that changes the stream is caught.
        let mut r = Rng::new(7);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(
            first,
            [2910824217569608635, 3098856782162503994, 12991601491111613745]
        );
    }
}
