//! Dense square complex matrices at small dimension.
//!
//! Everything downstream works with m <= 8 fiber dimensions (block systems are
//! at most 16x16), so this is a plain row-major `Vec<Complex64>` with
//! textbook algorithms and no blocking.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        ComplexMatrix {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    /// Row-major entries; panics if the length is not dim*dim.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), dim * dim, "entry count must be dim^2");
        ComplexMatrix { dim, data }
    }

    pub fn diagonal(entries: &[Complex64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn scalar(value: Complex64) -> Self {
        Self::diagonal(&[value])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn validate_finite(&self, name: &'static str) -> Result<()> {
        if self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(LabError::invalid(name, "matrix has non-finite entries"))
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(i, j)].conj())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_fn(self.dim, |i, j| self[(i, j)] + other[(i, j)])
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self::from_fn(self.dim, |i, j| self[(i, j)] - other[(i, j)])
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_fn(self.dim, |i, j| self[(i, j)] * c)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        let n = self.dim;
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hermitian part (M + M*)/2.
    pub fn hermitian_part(&self) -> Self {
        let adj = self.adjoint();
        Self::from_fn(self.dim, |i, j| (self[(i, j)] + adj[(i, j)]) * 0.5)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.sub(&self.adjoint()).fro_norm() <= tol
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.sub(&self.transpose()).fro_norm() <= tol
    }

    pub fn is_skew_adjoint(&self, tol: f64) -> bool {
        self.add(&self.adjoint()).fro_norm() <= tol
    }

    /// Minimal eigenvalue of the Hermitian part.
    pub fn min_hermitian_eigenvalue(&self) -> f64 {
        let h = self.hermitian_part();
        let (vals, _) = crate::eigen::hermitian_eigen(&h);
        vals.first().copied().unwrap_or(0.0)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.min_hermitian_eigenvalue() > 0.0
    }

    /// Solves self * X = B for several right-hand sides via partial-pivot LU.
    pub fn solve_many(&self, rhs: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
        let n = self.dim;
        let mut lu = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut p = col;
            let mut best = lu[perm[col] * n + col].norm();
            for row in col + 1..n {
                let cand = lu[perm[row] * n + col].norm();
                if cand > best {
                    best = cand;
                    p = row;
                }
            }
            if best == 0.0 {
                return Err(LabError::invalid("matrix", "singular matrix in LU solve"));
            }
            perm.swap(col, p);
            let pivot = lu[perm[col] * n + col];
            for row in col + 1..n {
                let factor = lu[perm[row] * n + col] / pivot;
                lu[perm[row] * n + col] = factor;
                for j in col + 1..n {
                    let upper = lu[perm[col] * n + j];
                    lu[perm[row] * n + j] -= factor * upper;
                }
            }
        }
        let mut out = Vec::with_capacity(rhs.len());
        for b in rhs {
            assert_eq!(b.len(), n);
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..n {
                let mut acc = b[perm[i]];
                for j in 0..i {
                    acc -= lu[perm[i] * n + j] * y[j];
                }
                y[i] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = y[i];
                for j in i + 1..n {
                    acc -= lu[perm[i] * n + j] * y[j];
                }
                y[i] = acc / lu[perm[i] * n + i];
            }
            out.push(y);
        }
        Ok(out)
    }

    pub fn solve(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        Ok(self.solve_many(&[b.to_vec()])?.pop().unwrap())
    }

    pub fn inverse(&self) -> Result<Self> {
        let n = self.dim;
        let cols: Vec<Vec<Complex64>> = (0..n)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); n];
                e[j] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        let solved = self.solve_many(&cols)?;
        Ok(Self::from_fn(n, |i, j| solved[j][i]))
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

/// JSON shape: {"dim": m, "entries": [[re, im], ...]} row-major.
#[derive(Serialize, Deserialize)]
struct MatrixJson {
    dim: usize,
    entries: Vec<[f64; 2]>,
}

impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson {
            dim: self.dim,
            entries: self.data.iter().map(|z| [z.re, z.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        if raw.entries.len() != raw.dim * raw.dim {
            return Err(serde::de::Error::custom(format!(
                "matrix entry count {} does not match dim {}",
                raw.entries.len(),
                raw.dim
            )));
        }
        Ok(ComplexMatrix::from_row_major(
            raw.dim,
            raw.entries
                .into_iter()
                .map(|[re, im]| Complex64::new(re, im))
                .collect(),
        ))
    }
}

// Complex vector helpers shared across modules.

pub fn vec_norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn vec_sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn vec_add(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn vec_scale(a: &[Complex64], c: Complex64) -> Vec<Complex64> {
    a.iter().map(|x| x * c).collect()
}

pub fn vec_conj(a: &[Complex64]) -> Vec<Complex64> {
    a.iter().map(|x| x.conj()).collect()
}

/// Euclidean inner product, conjugate-linear in the first slot.
pub fn vec_dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
