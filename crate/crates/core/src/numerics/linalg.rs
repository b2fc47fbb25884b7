//! Small dense matrices. Every matrix in this crate is at most a few rows
//! (n ≤ 3 for the polytope, n + 1 for the space-time Hessian), so the
//! factorizations here are the textbook ones.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::Real;

/// Square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { n, data })
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `self += w · v vᵀ`
    pub fn add_outer(&mut self, v: &[T], w: T) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += w * v[i] * v[j];
            }
        }
    }

    /// `self + w · other`
    pub fn axpy(&self, w: T, other: &Matrix<T>) -> Matrix<T> {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + w * b).collect();
        Matrix { n: self.n, data }
    }

    pub fn scale(&self, w: T) -> Matrix<T> {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&a| a * w).collect(),
        }
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |acc, j| acc + self[(i, j)] * v[j]))
            .collect()
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix<T>) -> Matrix<T> {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    /// Largest `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        let half = T::lit(0.5);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let m = half * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> T {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            let p = a[pivot * n + col];
            if p == T::zero() {
                return T::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            det *= p;
            for i in (col + 1)..n {
                let f = a[i * n + col] / p;
                for j in col..n {
                    let v = a[col * n + j];
                    a[i * n + j] -= f * v;
                }
            }
        }
        det
    }

    /// Lower Cholesky factor, `None` unless the matrix is numerically
    /// positive definite.
    pub fn cholesky(&self) -> Option<Matrix<T>> {
        let n = self.n;
        let mut l = Self::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut v = self[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = v / djj;
            }
        }
        Some(l)
    }

    /// Solves `L z = b` for lower-triangular `self`.
    pub fn forward_solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = vec![T::zero(); n];
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self[(i, k)] * z[k];
            }
            z[i] = v / self[(i, i)];
        }
        z
    }

    /// Solves `Lᵀ z = b` for lower-triangular `self`.
    pub fn backward_solve_transposed(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut z = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= self[(k, i)] * z[k];
            }
            z[i] = v / self[(i, i)];
        }
        z
    }

    /// Solves `A z = b` for symmetric positive definite `A`.
    pub fn solve_spd(&self, b: &[T]) -> Option<Vec<T>> {
        let l = self.cholesky()?;
        Some(l.backward_solve_transposed(&l.forward_solve(b)))
    }

    /// Inverse of a symmetric positive definite matrix.
    pub fn inverse_spd(&self) -> Option<Matrix<T>> {
        let l = self.cholesky()?;
        let n = self.n;
        let mut inv = Self::zeros(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = l.backward_solve_transposed(&l.forward_solve(&e));
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Eigenvalues ascending; column `k` of the returned matrix is the
    /// eigenvector of eigenvalue `k`.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Matrix<T>) {
        let n = self.n;
        let mut a = self.clone();
        a.symmetrize();
        let mut v = Self::identity(n);
        let eps = T::epsilon();
        for _sweep in 0..64 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            let scale = a.max_abs();
            if off.sqrt() <= eps * scale || off == T::zero() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == T::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Self::zeros(n);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, col)] = v[(k, src)];
            }
        }
        (values, vectors)
    }

    pub fn symmetric_eigenvalues(&self) -> Vec<T> {
        self.symmetric_eigen().0
    }

    /// Largest eigenvalue `λ` of the pencil `B z = λ A z` with `A`
    /// symmetric positive definite, via `L⁻¹ B L⁻ᵀ` where `A = L Lᵀ`.
    pub fn generalized_max_eigenvalue(a: &Matrix<T>, b: &Matrix<T>) -> Option<T> {
        let l = a.cholesky()?;
        let n = a.n;
        // C = L⁻¹ B, then M = C L⁻ᵀ = (L⁻¹ Cᵀ)ᵀ
        let mut c = Self::zeros(n);
        for j in 0..n {
            let col: Vec<T> = (0..n).map(|i| b[(i, j)]).collect();
            let z = l.forward_solve(&col);
            for i in 0..n {
                c[(i, j)] = z[i];
            }
        }
        let ct = c.transpose();
        let mut m = Self::zeros(n);
        for j in 0..n {
            let col: Vec<T> = (0..n).map(|i| ct[(i, j)]).collect();
            let z = l.forward_solve(&col);
            for i in 0..n {
                m[(j, i)] = z[i];
            }
        }
        m.symmetric_eigenvalues().last().copied()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
        .sqrt()
}
