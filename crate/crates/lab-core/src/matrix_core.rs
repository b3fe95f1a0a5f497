//! Boundary Hessian pairs, block systems, and the matrix obstruction
//! certificate.
//!
//! The central object is the pair (P, Q) of fiber Hessian matrices at the
//! fixed point: P Hermitian positive definite, Q symmetric. When P and Q
//! have a common eigenbasis of real vectors and the eigenvalues of
//! R = (I + P^2 - Q conj(Q)) P^{-1} are simple and all < -2, no C^3 solution
//! of the geodesic boundary-value problem can have these boundary Hessians.
//! The certificate here decides that criterion numerically, and the block
//! system (A, B) with M = [A B; conj(B) conj(A)] carries the linearized leaf
//! dynamics whose eigenvector dichotomy backs the argument.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cmatrix::{vec_norm, ComplexMatrix};
use crate::eigen::{complex_eigen, hermitian_eigen};
use crate::error::{LabError, Result};
use crate::rng::SplitMix64;

/// Relative tolerance used by structural validation (Hermitian, symmetric).
pub const STRUCTURE_TOL: f64 = 1e-9;
/// P is treated as singular when its minimal eigenvalue falls at or below
/// this threshold.
pub const SINGULARITY_TOL: f64 = 1e-12;
/// Eigenvalues of R count as simple when pairwise gaps exceed
/// `SIMPLE_GAP_FACTOR * (1 + ||R||)`.
pub const SIMPLE_GAP_FACTOR: f64 = 1e-6;
/// Default residual tolerance for accepting a common real eigenbasis,
/// relative to 1 + ||P|| + ||Q||.
pub const COMMON_BASIS_TOL: f64 = 1e-8;
/// Default normalized tolerance for the eigenvector dichotomy.
pub const DICHOTOMY_TOL: f64 = 1e-8;

/// Boundary matrices of the linearized problem: P = I + v_zz̄(x0) Hermitian
/// positive definite, Q = v_zz(x0) symmetric.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianPair {
    pub p: ComplexMatrix,
    pub q: ComplexMatrix,
}

impl HessianPair {
    pub fn new(p: ComplexMatrix, q: ComplexMatrix) -> Result<Self> {
        if p.dim() != q.dim() {
            return Err(LabError::invalid("q", "P and Q must have equal dimension"));
        }
        p.validate_finite("p")?;
        q.validate_finite("q")?;
        let scale_p = 1.0 + p.fro_norm();
        if !p.is_hermitian(STRUCTURE_TOL * scale_p) {
            return Err(LabError::invalid("p", "P must be Hermitian"));
        }
        let min_eig = p.min_hermitian_eigenvalue();
        if min_eig <= 0.0 {
            return Err(LabError::invalid(
                "p",
                format!("P must be positive definite (min eigenvalue {min_eig:.3e})"),
            ));
        }
        let scale_q = 1.0 + q.fro_norm();
        if !q.is_symmetric(STRUCTURE_TOL * scale_q) {
            return Err(LabError::invalid("q", "Q must be symmetric"));
        }
        Ok(HessianPair { p, q })
    }

    /// Diagonal pair P = diag(p), Q = diag(q).
    pub fn diagonal(p: &[f64], q: &[Complex64]) -> Result<Self> {
        let pm = ComplexMatrix::diagonal(&p.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>());
        let qm = ComplexMatrix::diagonal(q);
        Self::new(pm, qm)
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }
}

/// Linearized leaf dynamics: A skew-adjoint, B symmetric, assembled into the
/// 2m x 2m block matrix M = [A B; conj(B) conj(A)].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockSystem {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

impl BlockSystem {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(LabError::invalid("b", "A and B must have equal dimension"));
        }
        a.validate_finite("a")?;
        b.validate_finite("b")?;
        if !a.is_skew_adjoint(STRUCTURE_TOL * (1.0 + a.fro_norm())) {
            return Err(LabError::invalid("a", "A must be skew-adjoint"));
        }
        if !b.is_symmetric(STRUCTURE_TOL * (1.0 + b.fro_norm())) {
            return Err(LabError::invalid("b", "B must be symmetric"));
        }
        Ok(BlockSystem { a, b })
    }

    pub fn zero(m: usize) -> Self {
        BlockSystem {
            a: ComplexMatrix::zeros(m),
            b: ComplexMatrix::zeros(m),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// The block matrix M = [A B; conj(B) conj(A)].
    pub fn block_matrix(&self) -> ComplexMatrix {
        let m = self.dim();
        ComplexMatrix::from_fn(2 * m, |i, j| match (i < m, j < m) {
            (true, true) => self.a[(i, j)],
            (true, false) => self.b[(i, j - m)],
            (false, true) => self.b[(i - m, j)].conj(),
            (false, false) => self.a[(i - m, j - m)].conj(),
        })
    }
}

/// One eigenpair of a block matrix M, split into the fiber halves x and y.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: Complex64,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub residual: f64,
}

/// Eigenpairs of M = [A B; conj(B) conj(A)], ordered by (Re, Im) of the
/// eigenvalue. Residuals are reported, not filtered: defective systems
/// surface as pairs with large residual.
pub fn block_eigen(bs: &BlockSystem) -> Result<Vec<EigenPair>> {
    let m = bs.dim();
    let decomp = complex_eigen(&bs.block_matrix())?;
    Ok(decomp
        .values
        .iter()
        .zip(&decomp.vectors)
        .zip(&decomp.residuals)
        .map(|((&lambda, v), &residual)| EigenPair {
            lambda,
            x: v[..m].to_vec(),
            y: v[m..].to_vec(),
            residual,
        })
        .collect())
}

/// Outcome of the eigenvector dichotomy: for every eigenpair of a valid
/// block system, lambda^2 is real or |x| = |y| (possibly both). `Violation`
/// is the event the randomized suites assert never happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DichotomyClass {
    LambdaSqReal,
    EqualNorms,
    Both,
    Violation,
}

pub fn dichotomy_check(ep: &EigenPair, tol: f64) -> DichotomyClass {
    let lam2 = ep.lambda * ep.lambda;
    let lambda_sq_real = lam2.im.abs() <= tol * (1.0 + lam2.norm());
    let nx = vec_norm(&ep.x);
    let ny = vec_norm(&ep.y);
    let total = (nx * nx + ny * ny).sqrt();
    let equal_norms = (nx - ny).abs() <= tol * total.max(f64::MIN_POSITIVE);
    match (lambda_sq_real, equal_norms) {
        (true, true) => DichotomyClass::Both,
        (true, false) => DichotomyClass::LambdaSqReal,
        (false, true) => DichotomyClass::EqualNorms,
        (false, false) => DichotomyClass::Violation,
    }
}

/// The obstruction matrix R = (I + P^2 - Q conj(Q)) P^{-1}.
pub fn compute_r(pq: &HessianPair) -> Result<ComplexMatrix> {
    let min_eig = pq.p.min_hermitian_eigenvalue();
    if min_eig <= SINGULARITY_TOL {
        return Err(LabError::SingularP {
            min_eig,
            tol: SINGULARITY_TOL,
        });
    }
    let m = pq.dim();
    let p_sq = pq.p.matmul(&pq.p);
    let qqbar = pq.q.matmul(&pq.q.conj());
    let inner = ComplexMatrix::identity(m).add(&p_sq).sub(&qqbar);
    let p_inv = pq.p.inverse()?;
    Ok(inner.matmul(&p_inv))
}

/// A common eigenbasis of real vectors for P and Q, with the per-vector
/// eigenvalues. Vectors are unit norm, first nonzero component positive,
/// ordered by (p, Re q, Im q).
#[derive(Debug, Clone, Serialize)]
pub struct RealEigenbasis {
    pub vectors: Vec<Vec<f64>>,
    pub p_values: Vec<f64>,
    pub q_values: Vec<Complex64>,
    pub residual: f64,
}

/// Searches for a simultaneous eigenbasis of real vectors.
///
/// P and Q commute with a real joint eigenbasis iff the real symmetric
/// matrices Re P, Re Q, Im Q share one (and Im P annihilates it). A generic
/// real combination T of the three is diagonalized instead; its eigenbasis
/// is then verified directly against P and Q. A few fixed combination
/// coefficients guard against accidental eigenvalue collisions in T.
pub fn common_real_eigenbasis(pq: &HessianPair, tol: f64) -> Option<RealEigenbasis> {
    let m = pq.dim();
    // Fixed generic coefficients; any pair separating the joint eigenspaces
    // works, extra draws only matter on collision.
    const COEFFS: [(f64, f64); 3] = [
        (0.731_058_578_63, 0.451_423_386_21),
        (0.291_736_410_47, 0.912_882_561_93),
        (0.655_047_731_19, 0.207_918_278_84),
    ];
    'outer: for &(c1, c2) in &COEFFS {
        let t = ComplexMatrix::from_fn(m, |i, j| {
            let re = pq.p[(i, j)].re + c1 * pq.q[(i, j)].re + c2 * pq.q[(i, j)].im;
            Complex64::new(re, 0.0)
        });
        let (_, v) = hermitian_eigen(&t);
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let col: Vec<f64> = (0..m).map(|i| v[(i, j)].re).collect();
            // Jacobi on a real matrix keeps vectors real; guard regardless.
            let im: f64 = (0..m).map(|i| v[(i, j)].im.abs()).sum();
            if im > 1e-12 {
                continue 'outer;
            }
            vectors.push(col);
        }
        let mut basis = Vec::with_capacity(m);
        let mut worst = 0.0f64;
        for col in vectors {
            let xi: Vec<Complex64> = col.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let p_xi = pq.p.matvec(&xi);
            let q_xi = pq.q.matvec(&xi);
            let p_val: Complex64 = xi.iter().zip(&p_xi).map(|(a, b)| a.conj() * b).sum();
            let q_val: Complex64 = xi.iter().zip(&q_xi).map(|(a, b)| a.conj() * b).sum();
            let res_p: f64 = p_xi
                .iter()
                .zip(&xi)
                .map(|(a, b)| (a - b * p_val).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let res_q: f64 = q_xi
                .iter()
                .zip(&xi)
                .map(|(a, b)| (a - b * q_val).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let res = res_p + res_q;
            if res > tol {
                continue 'outer;
            }
            worst = worst.max(res);
            basis.push((col, p_val.re, q_val));
        }
        basis.sort_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| a.2.re.total_cmp(&b.2.re))
                .then_with(|| a.2.im.total_cmp(&b.2.im))
        });
        let mut vectors = Vec::with_capacity(m);
        let mut p_values = Vec::with_capacity(m);
        let mut q_values = Vec::with_capacity(m);
        for (mut col, p_val, q_val) in basis {
            if let Some(first) = col.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    for x in col.iter_mut() {
                        *x = -*x;
                    }
                }
            }
            vectors.push(col);
            p_values.push(p_val);
            q_values.push(q_val);
        }
        return Some(RealEigenbasis {
            vectors,
            p_values,
            q_values,
            residual: worst,
        });
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Obstructed,
    NotObstructed,
    CriterionInapplicable,
}

/// Decision record for the obstruction criterion on one Hessian pair.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ObstructionReport {
    pub r: ComplexMatrix,
    /// Eigenvalues of R sorted by real part, ties broken by imaginary part.
    pub eigenvalues_of_r: Vec<[f64; 2]>,
    pub common_basis: Option<Vec<Vec<f64>>>,
    pub simple: bool,
    pub all_below_minus_two: bool,
    pub verdict: Verdict,
}

/// Full obstruction certificate: Obstructed iff a common real eigenbasis
/// exists, the eigenvalues of R are simple, and all lie strictly below -2.
/// Without a basis or without simplicity the criterion does not apply.
pub fn obstruction_certificate(pq: &HessianPair) -> Result<ObstructionReport> {
    let r = compute_r(pq)?;
    let decomp = complex_eigen(&r)?;
    let mut eigs = decomp.values.clone();
    eigs.sort_by(|a, b| a.re.total_cmp(&b.re).then_with(|| a.im.total_cmp(&b.im)));
    let gap_floor = SIMPLE_GAP_FACTOR * (1.0 + r.fro_norm());
    let mut simple = true;
    for i in 0..eigs.len() {
        for j in i + 1..eigs.len() {
            if (eigs[i] - eigs[j]).norm() <= gap_floor {
                simple = false;
            }
        }
    }
    let scale = 1.0 + pq.p.fro_norm() + pq.q.fro_norm();
    let basis = common_real_eigenbasis(pq, COMMON_BASIS_TOL * scale);
    let all_below = eigs.iter().all(|l| l.re < -2.0);
    let verdict = if basis.is_none() || !simple {
        Verdict::CriterionInapplicable
    } else if all_below {
        Verdict::Obstructed
    } else {
        Verdict::NotObstructed
    };
    Ok(ObstructionReport {
        r,
        eigenvalues_of_r: eigs.iter().map(|l| [l.re, l.im]).collect(),
        common_basis: basis.map(|b| b.vectors),
        simple,
        all_below_minus_two: all_below,
        verdict,
    })
}

/// Kinds of seeded structured random matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuredKind {
    SkewAdjoint,
    Symmetric,
    HermitianPd,
    CommonBasisPair,
}

#[derive(Debug, Clone)]
pub enum StructuredSample {
    Matrix(ComplexMatrix),
    Pair(HessianPair),
}

pub fn random_structured(seed: u64, m: usize, kind: StructuredKind) -> StructuredSample {
    let mut rng = SplitMix64::new(seed);
    match kind {
        StructuredKind::SkewAdjoint => StructuredSample::Matrix(random_skew_adjoint(&mut rng, m)),
        StructuredKind::Symmetric => StructuredSample::Matrix(random_symmetric(&mut rng, m)),
        StructuredKind::HermitianPd => StructuredSample::Matrix(random_hermitian_pd(&mut rng, m)),
        StructuredKind::CommonBasisPair => {
            StructuredSample::Pair(random_common_basis_pair(&mut rng, m))
        }
    }
}

pub fn random_skew_adjoint(rng: &mut SplitMix64, m: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(m, |_, _| rng.next_complex_normal());
    let adj = g.adjoint();
    ComplexMatrix::from_fn(m, |i, j| (g[(i, j)] - adj[(i, j)]) * 0.5)
}

pub fn random_symmetric(rng: &mut SplitMix64, m: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(m, |_, _| rng.next_complex_normal());
    ComplexMatrix::from_fn(m, |i, j| (g[(i, j)] + g[(j, i)]) * 0.5)
}

pub fn random_hermitian_pd(rng: &mut SplitMix64, m: usize) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(m, |_, _| rng.next_complex_normal());
    let gg = g.matmul(&g.adjoint());
    let norm = 1.0 / (2.0 * m as f64);
    ComplexMatrix::from_fn(m, |i, j| {
        gg[(i, j)] * norm
            + if i == j {
                Complex64::new(0.2, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
    })
}

/// A random real orthogonal matrix (QR of a Gaussian sample, diagonal of R
/// made positive so the draw is deterministic in the seed).
pub fn random_real_orthogonal(rng: &mut SplitMix64, m: usize) -> Vec<Vec<f64>> {
    loop {
        let g: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..m).map(|_| rng.next_normal()).collect())
            .collect();
        // Modified Gram-Schmidt on columns.
        let mut q: Vec<Vec<f64>> = vec![vec![0.0; m]; m]; // q[j] is column j
        let mut ok = true;
        for j in 0..m {
            let mut col: Vec<f64> = (0..m).map(|i| g[i][j]).collect();
            for prev in q.iter().take(j) {
                let dot: f64 = col.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (c, p) in col.iter_mut().zip(prev) {
                    *c -= dot * p;
                }
            }
            let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            for c in col.iter_mut() {
                *c /= norm;
            }
            q[j] = col;
        }
        if ok {
            return q;
        }
    }
}

/// P = V diag(p_j > 0) V^T, Q = V diag(q_j in C) V^T with V real orthogonal,
/// guaranteeing the common-real-eigenbasis hypothesis.
pub fn random_common_basis_pair(rng: &mut SplitMix64, m: usize) -> HessianPair {
    let v = random_real_orthogonal(rng, m);
    let p_diag: Vec<f64> = (0..m).map(|_| rng.uniform(0.25, 2.5)).collect();
    let q_diag: Vec<Complex64> = (0..m).map(|_| rng.next_complex_normal()).collect();
    let p = ComplexMatrix::from_fn(m, |i, j| {
        let mut acc = 0.0;
        for k in 0..m {
            acc += v[k][i] * p_diag[k] * v[k][j];
        }
        Complex64::new(acc, 0.0)
    });
    let q = ComplexMatrix::from_fn(m, |i, j| {
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..m {
            acc += q_diag[k] * v[k][i] * v[k][j];
        }
        acc
    });
    HessianPair::new(p, q).expect("constructed pair satisfies the invariants")
}

/// Random block system (A skew-adjoint, B symmetric) from one seed.
pub fn random_block_system(seed: u64, m: usize) -> BlockSystem {
    let mut rng = SplitMix64::new(seed);
    let a = random_skew_adjoint(&mut rng, m);
    let b = random_symmetric(&mut rng, m);
    BlockSystem::new(a, b).expect("constructed system satisfies the invariants")
}
