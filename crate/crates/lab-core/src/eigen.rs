//! Dense eigensolvers for small complex matrices.
//!
//! Two routines cover every need in this crate:
//! - [`hermitian_eigen`]: cyclic complex Jacobi, for Hermitian inputs
//!   (positivity certificates, kernel directions, common-eigenbasis search);
//! - [`complex_eigen`]: Householder Hessenberg reduction followed by
//!   explicitly shifted QR, Schur vectors, and triangular back-substitution,
//!   for general complex inputs (block systems, obstruction matrices).
//!
//! Both are plain textbook implementations; dimensions never exceed 16, so
//! every consumer re-verifies results through residuals rather than trusting
//! the factorization path.

use num_complex::Complex64;

use crate::cmatrix::{vec_norm, vec_sub, ComplexMatrix};
use crate::error::{LabError, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the unitary matrix whose
/// columns are the matching eigenvectors. Only the Hermitian part of the
/// input participates.
pub fn hermitian_eigen(a: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let n = a.dim();
    let mut m = a.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    if n <= 1 {
        return (vec![if n == 1 { m[(0, 0)].re } else { 0.0 }], v);
    }
    let fro = m.fro_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * fro;
    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[(i, j)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let w = apq / mag;
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (2.0 * mag);
                // Smaller-magnitude root of t^2 - 2 tau t - 1 = 0.
                let t = if tau >= 0.0 {
                    -1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Columns p,q of M and V: right-multiplication by R.
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * c + mkq * s * w.conj();
                    m[(k, q)] = -mkp * s * w + mkq * c;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c + vkq * s * w.conj();
                    v[(k, q)] = -vkp * s * w + vkq * c;
                }
                // Rows p,q of M: left-multiplication by R^H.
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = mpk * c + mqk * s * w;
                    m[(q, k)] = -mpk * s * w.conj() + mqk * c;
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| v[(i, order[j])]);
    (values, vectors)
}

/// Result of a general dense eigendecomposition; entry k in each field
/// describes one eigenpair. Residuals are ||A x - lambda x||_2 for the
/// unit-norm eigenvector.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub residuals: Vec<f64>,
}

impl EigenDecomposition {
    /// Condition number (Frobenius estimate) of the eigenvector matrix.
    pub fn eigenvector_condition(&self) -> f64 {
        let n = self.values.len();
        let w = ComplexMatrix::from_fn(n, |i, j| self.vectors[j][i]);
        match w.inverse() {
            Ok(w_inv) => w.fro_norm() * w_inv.fro_norm(),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Eigenvalues and eigenvectors of a general complex matrix.
///
/// Pairs are sorted by (Re, Im) of the eigenvalue. Eigenvector phases are
/// fixed so the component of largest modulus is real positive. Defective
/// inputs still produce correct eigenvalues; the affected eigenvectors then
/// carry large residuals, which callers are expected to inspect.
pub fn complex_eigen(a: &ComplexMatrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
        });
    }
    if n == 1 {
        return Ok(EigenDecomposition {
            values: vec![a[(0, 0)]],
            vectors: vec![vec![ONE]],
            residuals: vec![0.0],
        });
    }

    let (mut t, mut z) = hessenberg(a);
    schur(&mut t, &mut z)?;

    let scale = t.fro_norm();
    let smin = (f64::EPSILON * scale).max(f64::MIN_POSITIVE);
    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    for i in 0..n {
        let lambda = t[(i, i)];
        // Back-substitute (T - lambda) w = 0 on the leading block.
        let mut w = vec![ZERO; n];
        w[i] = ONE;
        for k in (0..i).rev() {
            let mut rhs = ZERO;
            for j in k + 1..=i {
                rhs -= t[(k, j)] * w[j];
            }
            let d = t[(k, k)] - lambda;
            w[k] = if d.norm() < smin {
                // Near-multiple eigenvalue: clamp the pivot (real scalar
                // division avoids denormal-squared underflow).
                Complex64::new(rhs.re / smin, rhs.im / smin)
            } else {
                rhs / d
            };
        }
        let mut x = vec![ZERO; n];
        for r in 0..n {
            let mut acc = ZERO;
            for j in 0..=i {
                acc += z[(r, j)] * w[j];
            }
            x[r] = acc;
        }
        normalize_phase(&mut x);
        pairs.push((lambda, x));
    }

    pairs.sort_by(|p, q| {
        p.0.re
            .total_cmp(&q.0.re)
            .then_with(|| p.0.im.total_cmp(&q.0.im))
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    for (lambda, x) in pairs {
        let ax = a.matvec(&x);
        let lx: Vec<Complex64> = x.iter().map(|v| v * lambda).collect();
        residuals.push(vec_norm(&vec_sub(&ax, &lx)));
        values.push(lambda);
        vectors.push(x);
    }
    Ok(EigenDecomposition {
        values,
        vectors,
        residuals,
    })
}

/// Scale to unit norm and rotate so the largest-modulus component is real
/// positive (deterministic representative of the eigendirection).
pub fn normalize_phase(x: &mut [Complex64]) {
    let norm = vec_norm(x);
    if norm == 0.0 {
        return;
    }
    let mut pivot = ZERO;
    let mut best = -1.0f64;
    for &v in x.iter() {
        let m = v.norm();
        if m > best + 1e-15 * best.abs() {
            best = m;
            pivot = v;
        }
    }
    let phase = if pivot.norm() > 0.0 {
        pivot / pivot.norm()
    } else {
        ONE
    };
    let factor = phase.conj() / norm;
    for v in x.iter_mut() {
        *v *= factor;
    }
}

/// Householder reduction to upper Hessenberg form: A = Q H Q^H.
/// Returns (H, Q).
fn hessenberg(a: &ComplexMatrix) -> (ComplexMatrix, ComplexMatrix) {
    let n = a.dim();
    let mut h = a.clone();
    let mut q = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        // Reflect column k below the subdiagonal onto e_{k+1}.
        let mut x: Vec<Complex64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = vec_norm(&x);
        if xnorm <= 1e-300 {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * xnorm;
        x[0] -= alpha;
        let vnorm2: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        if vnorm2 <= 1e-300 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        let m = x.len();
        // H <- P H and H <- H P with P = I - beta v v^H on rows/cols k+1..n.
        for col in 0..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += x[i].conj() * h[(k + 1 + i, col)];
            }
            dot *= beta;
            for i in 0..m {
                let delta = x[i] * dot;
                h[(k + 1 + i, col)] -= delta;
            }
        }
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += h[(row, k + 1 + i)] * x[i];
            }
            dot *= beta;
            for i in 0..m {
                let delta = dot * x[i].conj();
                h[(row, k + 1 + i)] -= delta;
            }
        }
        for row in 0..n {
            let mut dot = ZERO;
            for i in 0..m {
                dot += q[(row, k + 1 + i)] * x[i];
            }
            dot *= beta;
            for i in 0..m {
                let delta = dot * x[i].conj();
                q[(row, k + 1 + i)] -= delta;
            }
        }
        h[(k + 1, k)] = alpha;
        for i in k + 2..n {
            h[(i, k)] = ZERO;
        }
    }
    (h, q)
}

/// Shifted QR iteration driving a Hessenberg matrix to upper triangular
/// (complex Schur) form. `t` is transformed in place; `z` accumulates the
/// unitary similarity so that A = Z T Z^H is preserved.
fn schur(t: &mut ComplexMatrix, z: &mut ComplexMatrix) -> Result<()> {
    let n = t.dim();
    let fro = t.fro_norm().max(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter_since_deflation = 0usize;
    let mut total_iter = 0usize;
    let max_iter = 60 * n;

    while hi > 0 {
        // Zero out negligible subdiagonals, then find the active block.
        for i in 0..hi {
            let bound = f64::EPSILON * (t[(i, i)].norm() + t[(i + 1, i + 1)].norm())
                + 1e-300 * fro;
            if t[(i + 1, i)].norm() <= bound {
                t[(i + 1, i)] = ZERO;
            }
        }
        if t[(hi, hi - 1)] == ZERO {
            hi -= 1;
            iter_since_deflation = 0;
            continue;
        }
        let mut lo = hi;
        while lo > 0 && t[(lo, lo - 1)] != ZERO {
            lo -= 1;
        }

        total_iter += 1;
        iter_since_deflation += 1;
        if total_iter > max_iter {
            return Err(LabError::ConvergenceFailure {
                dim: n,
                sweeps: total_iter,
            });
        }

        let mu = if iter_since_deflation % 12 == 0 {
            // Exceptional shift to break stagnation cycles.
            t[(hi, hi)] + Complex64::new(0.75 * t[(hi, hi - 1)].norm(), 0.0)
        } else {
            wilkinson_shift(t, hi)
        };

        // Explicit shifted QR step on the active block:
        // T - mu = Q R, then T <- R Q + mu (a unitary similarity).
        for i in lo..=hi {
            t[(i, i)] -= mu;
        }
        let mut rotations: Vec<(usize, Complex64, Complex64)> = Vec::with_capacity(hi - lo);
        for i in lo..hi {
            let (c, s) = givens(t[(i, i)], t[(i + 1, i)]);
            // Left-apply G_i to rows i, i+1.
            for col in 0..n {
                let a = t[(i, col)];
                let b = t[(i + 1, col)];
                t[(i, col)] = c.conj() * a + s.conj() * b;
                t[(i + 1, col)] = -s * a + c * b;
            }
            t[(i + 1, i)] = ZERO;
            rotations.push((i, c, s));
        }
        for &(i, c, s) in &rotations {
            // Right-apply G_i^H to columns i, i+1 of T and of Z.
            for row in 0..n {
                let a = t[(row, i)];
                let b = t[(row, i + 1)];
                t[(row, i)] = a * c + b * s;
                t[(row, i + 1)] = -a * s.conj() + b * c.conj();
            }
            for row in 0..n {
                let a = z[(row, i)];
                let b = z[(row, i + 1)];
                z[(row, i)] = a * c + b * s;
                z[(row, i + 1)] = -a * s.conj() + b * c.conj();
            }
        }
        for i in lo..=hi {
            t[(i, i)] += mu;
        }
        // Re-zero entries below the first subdiagonal introduced by rounding.
        for i in lo..hi {
            for r in i + 2..=hi {
                t[(r, i)] = ZERO;
            }
        }
    }
    Ok(())
}

/// Complex Givens rotation with |c|^2 + |s|^2 = 1 annihilating g:
/// [c^H s^H; -s c] [f; g] = [r; 0].
fn givens(f: Complex64, g: Complex64) -> (Complex64, Complex64) {
    let gn = g.norm();
    if gn == 0.0 {
        return (ONE, ZERO);
    }
    let fn_ = f.norm();
    let d = (fn_ * fn_ + gn * gn).sqrt();
    if fn_ == 0.0 {
        // Pure swap with phase.
        return (ZERO, (g / gn).conj());
    }
    let c = Complex64::new(fn_ / d, 0.0);
    let s = (f.conj() / fn_) * g / d;
    (c, s)
}

fn wilkinson_shift(t: &ComplexMatrix, hi: usize) -> Complex64 {
    let a = t[(hi - 1, hi - 1)];
    let b = t[(hi - 1, hi)];
    let c = t[(hi, hi - 1)];
    let d = t[(hi, hi)];
    let tr_half = (a + d) * 0.5;
    let disc = ((a - d) * (a - d) * 0.25 + b * c).sqrt();
    let l1 = tr_half + disc;
    let l2 = tr_half - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut SplitMix64, n: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, |_, _| rng.next_complex_normal())
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let mut rng = SplitMix64::new(3);
        for n in 1..=6 {
            let g = random_matrix(&mut rng, n);
            let h = g.hermitian_part();
            let (vals, v) = hermitian_eigen(&h);
            // H V = V diag(vals)
            let hv = h.matmul(&v);
            let vd = ComplexMatrix::from_fn(n, |i, j| v[(i, j)] * vals[j]);
            let err = hv.sub(&vd).fro_norm();
            assert!(err < 1e-12 * (1.0 + h.fro_norm()), "n={n} err={err}");
            // ascending order
            for k in 1..n {
                assert!(vals[k] >= vals[k - 1]);
            }
            // unitary
            let vv = v.adjoint().matmul(&v);
            assert!(vv.sub(&ComplexMatrix::identity(n)).fro_norm() < 1e-12);
        }
    }

    #[test]
    fn complex_eigen_known_2x2() {
        // [[0,1],[1,0]] -> +-1
        let m = ComplexMatrix::from_row_major(2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let e = complex_eigen(&m).unwrap();
        assert!((e.values[0] - c(-1., 0.)).norm() < 1e-13);
        assert!((e.values[1] - c(1., 0.)).norm() < 1e-13);
        assert!(e.residuals.iter().all(|&r| r < 1e-13));

        // diag(i, -i)
        let m = ComplexMatrix::from_row_major(2, vec![c(0., 1.), c(0., 0.), c(0., 0.), c(0., -1.)]);
        let e = complex_eigen(&m).unwrap();
        assert!((e.values[0] - c(0., -1.)).norm() < 1e-14);
        assert!((e.values[1] - c(0., 1.)).norm() < 1e-14);
    }

    #[test]
    fn complex_eigen_defective_eigenvalues_still_correct() {
        // [[i,1],[1,-i]] squares to zero: lambda = 0 twice, one true eigenvector.
        let m = ComplexMatrix::from_row_major(2, vec![c(0., 1.), c(1., 0.), c(1., 0.), c(0., -1.)]);
        let e = complex_eigen(&m).unwrap();
        assert!(e.values[0].norm() < 1e-8, "{:?}", e.values);
        assert!(e.values[1].norm() < 1e-8, "{:?}", e.values);
        assert!(e.eigenvector_condition() > 1e6);
    }

    #[test]
    fn complex_eigen_random_residuals() {
        let mut rng = SplitMix64::new(11);
        for n in [2usize, 3, 5, 8, 12, 16] {
            let m = random_matrix(&mut rng, n);
            let e = complex_eigen(&m).unwrap();
            let scale = m.fro_norm();
            for (k, &r) in e.residuals.iter().enumerate() {
                assert!(
                    r <= 1e-11 * scale.max(1.0),
                    "n={n} pair={k} residual={r:.3e}"
                );
            }
        }
    }

    #[test]
    fn complex_eigen_scaled_norms() {
        let mut rng = SplitMix64::new(17);
        for &scale in &[1e-3, 1.0, 1e3] {
            let m = random_matrix(&mut rng, 6).scale(c(scale, 0.0));
            let e = complex_eigen(&m).unwrap();
            for &r in &e.residuals {
                assert!(r <= 1e-10 * m.fro_norm(), "scale {scale}: residual {r:.3e}");
            }
        }
    }

    #[test]
    fn phase_convention_deterministic() {
        let mut x = vec![c(0.0, 0.5), c(-0.5, 0.0)];
        normalize_phase(&mut x);
        // Both components have equal modulus; the first is the pivot.
        assert!(x[0].im.abs() < 1e-15 && x[0].re > 0.0);
    }
}
