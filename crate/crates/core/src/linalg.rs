//! Small dense square matrices.
//!
//! Design dimensions are small (`p` up to a few dozen), so a row-major
//! `Vec<f64>` with Cholesky and cyclic Jacobi is all that is needed.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

use libm::{fabs, log, sqrt};

/// Square `p x p` matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut list = f.debug_list();
        for i in 0..self.dim {
            list.entry(&self.row(i));
        }
        list.finish()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Matrix { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics unless
    /// `entries.len() == dim * dim`.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Self {
        assert_eq!(entries.len(), dim * dim, "row-major data has wrong length");
        Matrix { dim, data: entries.to_vec() }
    }

    /// `w f f^T`, upper triangle computed and mirrored.
    pub fn outer(f: &[f64], w: f64) -> Self {
        let mut m = Self::zeros(f.len());
        m.add_outer(f, w);
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let p = self.dim;
        let mut acc = 0.0;
        for i in 0..p {
            for j in 0..p {
                acc += self[(i, j)] * other[(j, i)];
            }
        }
        acc
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|v| v * v).sum())
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let p = self.dim;
        let mut worst = 0.0f64;
        for i in 0..p {
            for j in (i + 1)..p {
                worst = worst.max(fabs(self[(i, j)] - self[(j, i)]));
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(fabs(*v)))
    }

    /// Replaces the matrix by `(M + M^T) / 2`.
    pub fn symmetrize(&mut self) {
        let p = self.dim;
        for i in 0..p {
            for j in (i + 1)..p {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }

    /// Copies the upper triangle onto the lower one.
    pub fn mirror_upper(&mut self) {
        let p = self.dim;
        for i in 0..p {
            for j in (i + 1)..p {
                self[(j, i)] = self[(i, j)];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        let mut m = self.clone();
        m.scale(s);
        m
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Matrix, s: f64) {
        debug_assert_eq!(self.dim, other.dim);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += s * b);
    }

    /// `self += w f f^T`; symmetric by construction.
    pub fn add_outer(&mut self, f: &[f64], w: f64) {
        let p = self.dim;
        debug_assert_eq!(f.len(), p);
        for i in 0..p {
            let wi = w * f[i];
            for j in i..p {
                self[(i, j)] += wi * f[j];
            }
        }
        self.mirror_upper();
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut m = self.clone();
        m.add_scaled(other, -1.0);
        m
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let p = self.dim;
        debug_assert_eq!(p, other.dim);
        let mut out = Matrix::zeros(p);
        for i in 0..p {
            for k in 0..p {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..p {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let p = self.dim;
        debug_assert_eq!(v.len(), p);
        (0..p).map(|i| dot(self.row(i), v)).collect()
    }

    /// `v^T M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let p = self.dim;
        let mut acc = 0.0;
        for i in 0..p {
            acc += v[i] * dot(self.row(i), v);
        }
        acc
    }

    /// `u^T M v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let p = self.dim;
        let mut acc = 0.0;
        for i in 0..p {
            acc += u[i] * dot(self.row(i), v);
        }
        acc
    }

    pub fn cholesky(&self) -> Option<Cholesky> {
        Cholesky::factor(self)
    }

    /// Symmetric eigen-decomposition (cyclic Jacobi). Eigenvalues ascending.
    pub fn symmetric_eigen(&self) -> SymmetricEigen {
        SymmetricEigen::compute(self)
    }

    /// Reciprocal condition estimate from the Cholesky diagonal; `0.0`
    /// when the factorization fails.
    pub fn rcond_estimate(&self) -> f64 {
        self.cholesky().map_or(0.0, |c| c.rcond_estimate())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower-triangular Cholesky factor `M = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(m: &Matrix) -> Option<Cholesky> {
        let p = m.dim();
        let mut l = Matrix::zeros(p);
        for j in 0..p {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            let djj = sqrt(d);
            l[(j, j)] = djj;
            for i in (j + 1)..p {
                let mut s = m[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(Cholesky { l })
    }

    pub fn factor_l(&self) -> &Matrix {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.dim()).map(|i| log(self.l[(i, i)])).sum::<f64>()
    }

    /// `(min L_ii / max L_ii)^2`; a cheap lower-bound style estimate of the
    /// reciprocal 2-norm condition number.
    pub fn rcond_estimate(&self) -> f64 {
        let p = self.l.dim();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..p {
            let d = self.l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let r = lo / hi;
        r * r
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.l.dim();
        let mut y = b.to_vec();
        for i in 0..p {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..p).rev() {
            let mut s = y[i];
            for k in (i + 1)..p {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Symmetric inverse.
    pub fn inverse(&self) -> Matrix {
        let p = self.l.dim();
        // Invert L in place, then form L^-T L^-1 (upper triangle, mirrored).
        let mut linv = Matrix::zeros(p);
        for j in 0..p {
            linv[(j, j)] = 1.0 / self.l[(j, j)];
            for i in (j + 1)..p {
                let mut s = 0.0;
                for k in j..i {
                    s -= self.l[(i, k)] * linv[(k, j)];
                }
                linv[(i, j)] = s / self.l[(i, i)];
            }
        }
        let mut inv = Matrix::zeros(p);
        for i in 0..p {
            for j in i..p {
                let mut s = 0.0;
                for k in j..p {
                    s += linv[(k, i)] * linv[(k, j)];
                }
                inv[(i, j)] = s;
            }
        }
        inv.mirror_upper();
        inv
    }
}

/// Eigenpairs of a symmetric matrix; `vectors` holds eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    fn compute(m: &Matrix) -> SymmetricEigen {
        let p = m.dim();
        let mut a = m.clone();
        a.symmetrize();
        let mut v = Matrix::identity(p);
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..p {
                for j in (i + 1)..p {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if sqrt(off) <= 1e-15 * scale {
                break;
            }
            for i in 0..p {
                for j in (i + 1)..p {
                    let aij = a[(i, j)];
                    if aij == 0.0 {
                        continue;
                    }
                    let theta = (a[(j, j)] - a[(i, i)]) / (2.0 * aij);
                    let t = theta.signum() / (fabs(theta) + sqrt(theta * theta + 1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..p {
                        let akj = a[(k, j)];
                        let aki = a[(k, i)];
                        a[(k, i)] = c * aki - s * akj;
                        a[(k, j)] = s * aki + c * akj;
                    }
                    for k in 0..p {
                        let ajk = a[(j, k)];
                        let aik = a[(i, k)];
                        a[(i, k)] = c * aik - s * ajk;
                        a[(j, k)] = s * aik + c * ajk;
                    }
                    for k in 0..p {
                        let vki = v[(k, i)];
                        let vkj = v[(k, j)];
                        v[(k, i)] = c * vki - s * vkj;
                        v[(k, j)] = s * vki + c * vkj;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&x, &y| a[(x, x)].total_cmp(&a[(y, y)]));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Matrix::zeros(p);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..p {
                vectors[(k, col)] = v[(k, src)];
            }
        }
        SymmetricEigen { values, vectors }
    }

    /// `V diag(g(lambda)) V^T`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> Matrix {
        let p = self.values.len();
        let gl: Vec<f64> = self.values.iter().map(|&l| g(l)).collect();
        let mut out = Matrix::zeros(p);
        for i in 0..p {
            for j in i..p {
                let mut s = 0.0;
                for k in 0..p {
                    s += self.vectors[(i, k)] * gl[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        out.mirror_upper();
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::NAN)
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }
}
