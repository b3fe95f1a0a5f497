//! Linearized foliation dynamics on the strip.
//!
//! The first-order behavior of leaves around the central one obeys the
//! conjugate-linear ODE phi'(s) = A phi(s) + B conj(phi(s)) on the real line,
//! with phi(0) = a. Realifying through Phi = (phi, conj phi) turns this into
//! Phi' = M Phi with the block matrix M of the parent system, so the solution
//! is a finite sum of eigenmode exponentials and extends to an entire
//! function of s. On the strip boundary the holomorphic partner psi must
//! satisfy psi = conj(phi) on Im s = 0 and P conj(phi) + Q phi = psi on
//! Im s = 1, which pins one algebraic constraint per eigenmode: a kernel
//! condition for real eigenvalues and an eigenvalue condition on R otherwise.
//! `compatibility_search` samples block systems and reports whether any of
//! them clears every constraint; for obstructed Hessian pairs none can.

use num_complex::Complex64;
use serde::Serialize;

use crate::cmatrix::{vec_norm, ComplexMatrix};
use crate::eigen::complex_eigen;
use crate::error::{LabError, Result};
use crate::matrix_core::{compute_r, BlockSystem, HessianPair};
use crate::rng::SplitMix64;

/// Condition-number cap on the eigenvector matrix of M; beyond it M is
/// reported as defective rather than silently regularized.
pub const DIAGONALIZABILITY_LIMIT: f64 = 1e8;
/// Default relative tolerance for boundary compatibility.
pub const COMPAT_TOL: f64 = 1e-7;
/// Tolerance for classifying an eigenvalue as real or imaginary.
pub const BRANCH_TOL: f64 = 1e-9;
/// Modes carrying less than this fraction of the total expansion weight are
/// ignored by boundary matching.
const ACTIVITY_FLOOR: f64 = 1e-10;

/// A linearized model problem: block system, boundary Hessian pair, and the
/// initial fiber direction.
#[derive(Debug, Clone, Serialize)]
pub struct ModelProblem {
    pub bs: BlockSystem,
    pub pq: HessianPair,
    pub a: Vec<Complex64>,
}

impl ModelProblem {
    pub fn new(bs: BlockSystem, pq: HessianPair, a: Vec<Complex64>) -> Result<Self> {
        if bs.dim() != pq.dim() || a.len() != bs.dim() {
            return Err(LabError::invalid("a", "component dimensions disagree"));
        }
        if vec_norm(&a) == 0.0 {
            return Err(LabError::invalid("a", "initial vector must be nonzero"));
        }
        Ok(ModelProblem { bs, pq, a })
    }

    /// Solves the initial-value problem and matches it against the strip
    /// boundary conditions in one step.
    pub fn solve_and_match(&self, tol: f64) -> Result<(StripSolution, CompatibilityReport)> {
        let sol = solve_ivp(&self.bs, &self.a)?;
        let report = boundary_match(&sol, &self.pq, tol)?;
        Ok((sol, report))
    }
}

/// One eigenmode of the expansion. The summand it contributes is
/// `c x e^{lambda s} + conj(c y) e^{conj(lambda) s}`, which is itself a
/// solution of the ODE (it is the mode of the eigenvector scaled by c).
#[derive(Debug, Clone, Serialize)]
pub struct Mode {
    pub coefficient: Complex64,
    pub lambda: Complex64,
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
}

/// Eigenmode expansion of the initial-value problem, valid on the whole
/// strip by analytic continuation.
#[derive(Debug, Clone, Serialize)]
pub struct StripSolution {
    pub dim: usize,
    pub modes: Vec<Mode>,
}

impl StripSolution {
    /// phi(s) = sum_k c_k x_k e^{lambda_k s} + conj(c_k y_k) e^{conj(lambda_k) s}.
    pub fn eval(&self, s: Complex64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for mode in &self.modes {
            let ep = (mode.lambda * s).exp();
            let ec = (mode.lambda.conj() * s).exp();
            for j in 0..self.dim {
                out[j] += mode.coefficient * mode.x[j] * ep
                    + (mode.coefficient * mode.y[j]).conj() * ec;
            }
        }
        out
    }

    /// d/ds of the expansion.
    pub fn eval_derivative(&self, s: Complex64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        for mode in &self.modes {
            let ep = (mode.lambda * s).exp() * mode.lambda;
            let ec = (mode.lambda.conj() * s).exp() * mode.lambda.conj();
            for j in 0..self.dim {
                out[j] += mode.coefficient * mode.x[j] * ep
                    + (mode.coefficient * mode.y[j]).conj() * ec;
            }
        }
        out
    }

    /// Residual of phi' = A phi + B conj(phi) at real s.
    pub fn ode_residual(&self, bs: &BlockSystem, s: f64) -> f64 {
        let sc = Complex64::new(s, 0.0);
        let phi = self.eval(sc);
        let dphi = self.eval_derivative(sc);
        let aphi = bs.a.matvec(&phi);
        let phibar: Vec<Complex64> = phi.iter().map(|z| z.conj()).collect();
        let bphi = bs.b.matvec(&phibar);
        let mut err = 0.0;
        for j in 0..self.dim {
            err += (dphi[j] - aphi[j] - bphi[j]).norm_sqr();
        }
        err.sqrt()
    }
}

/// Solves phi' = A phi + B conj(phi), phi(0) = a by eigenmode expansion of
/// the realified system Phi' = M Phi, Phi(0) = (a, conj a).
pub fn solve_ivp(bs: &BlockSystem, a: &[Complex64]) -> Result<StripSolution> {
    let m = bs.dim();
    if a.len() != m {
        return Err(LabError::invalid("a", "initial vector has wrong dimension"));
    }
    let big = bs.block_matrix();
    let decomp = complex_eigen(&big)?;
    let cond = decomp.eigenvector_condition();
    if !cond.is_finite() || cond > DIAGONALIZABILITY_LIMIT {
        return Err(LabError::DefectiveM {
            cond,
            limit: DIAGONALIZABILITY_LIMIT,
        });
    }
    let w = ComplexMatrix::from_fn(2 * m, |i, j| decomp.vectors[j][i]);
    let mut rhs = Vec::with_capacity(2 * m);
    rhs.extend_from_slice(a);
    rhs.extend(a.iter().map(|z| z.conj()));
    let gamma = w.solve(&rhs)?;
    let modes = decomp
        .values
        .iter()
        .zip(&decomp.vectors)
        .zip(&gamma)
        .map(|((&lambda, v), &g)| Mode {
            coefficient: g * 0.5,
            lambda,
            x: v[..m].to_vec(),
            y: v[m..].to_vec(),
        })
        .collect();
    Ok(StripSolution { dim: m, modes })
}

/// Evaluates the linearized flow phi(s) at real s through the matrix
/// exponential of the realified system: phi(s) = [e^{Ms} (a, conj a)]_top.
///
/// Unlike the eigenmode expansion this needs no diagonalizability, so it
/// also covers the measure-zero defective systems (x-only torus data lands
/// exactly on one). Scaling and squaring with a Taylor kernel; the matrices
/// here are tiny and of modest norm.
pub fn flow_on_real_axis(bs: &BlockSystem, a: &[Complex64], s: f64) -> Result<Vec<Complex64>> {
    let m = bs.dim();
    if a.len() != m {
        return Err(LabError::invalid("a", "initial vector has wrong dimension"));
    }
    let big = bs.block_matrix();
    let scaled = big.scale(Complex64::new(s, 0.0));
    let norm = scaled.fro_norm();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let base = scaled.scale(Complex64::new(1.0 / 2f64.powi(squarings as i32), 0.0));
    // Taylor series of exp(base); with ||base|| <= 1/2 twenty terms reach
    // machine precision.
    let mut expm = ComplexMatrix::identity(2 * m);
    let mut term = ComplexMatrix::identity(2 * m);
    for k in 1..=20 {
        term = term.matmul(&base).scale(Complex64::new(1.0 / k as f64, 0.0));
        expm = expm.add(&term);
    }
    for _ in 0..squarings {
        expm = expm.matmul(&expm);
    }
    let mut rhs = Vec::with_capacity(2 * m);
    rhs.extend_from_slice(a);
    rhs.extend(a.iter().map(|z| z.conj()));
    let full = expm.matvec(&rhs);
    Ok(full[..m].to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeBranch {
    RealLambda,
    ImaginaryLambda,
    MixedLambdaContradiction,
}

/// Constraint record for one eigenmode against a Hessian pair.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeConstraint {
    pub lambda: Complex64,
    pub branch: ModeBranch,
    /// Raw constraint residual: ||C a|| / ||a|| on the real branch,
    /// (||R x - mu x|| + ||R y - mu y||) / (||x|| + ||y||) otherwise.
    pub residual: f64,
    /// e^{-2i lambda} + e^{2i lambda} for the non-real branches.
    pub mu: Option<Complex64>,
    /// For mixed eigenvalues: whether |x| = |y| held, the first link of the
    /// contradiction chain that rules this branch out for actual solutions.
    pub norms_equal: Option<bool>,
    pub admissible: bool,
}

/// Tests the per-mode boundary constraint for an eigenpair (lambda, x, y).
///
/// Real branch: the combined kernel condition {(I-Q)(I-conj Q) - P^2} a = 0
/// on a = x + conj(y) (a multiple with a != 0 always exists). Non-real
/// branches: R x = mu x and R y = mu y with mu = e^{-2i lambda}+e^{2i lambda};
/// for purely imaginary lambda, mu = 2 cosh(2 Im lambda) >= 2. Eigenvalues
/// that are neither real nor imaginary cannot occur for actual solutions and
/// are flagged; their dichotomy norms are recorded.
pub fn eigenmode_constraints(
    lambda: Complex64,
    x: &[Complex64],
    y: &[Complex64],
    pq: &HessianPair,
    tol: f64,
) -> Result<ModeConstraint> {
    let scale = 1.0 + lambda.norm();
    let is_real = lambda.im.abs() <= BRANCH_TOL * scale;
    let is_imag = lambda.re.abs() <= BRANCH_TOL * scale;
    if is_real {
        let mut a: Vec<Complex64> = x.iter().zip(y).map(|(xi, yi)| xi + yi.conj()).collect();
        let xy_norm = vec_norm(x) + vec_norm(y);
        if vec_norm(&a) <= 1e-8 * xy_norm {
            // Rescale the eigenvector by i: the new initial value i(x - conj y)
            // cannot vanish as well.
            let i = Complex64::new(0.0, 1.0);
            a = x
                .iter()
                .zip(y)
                .map(|(xi, yi)| i * xi + (i * yi).conj())
                .collect();
        }
        let m = pq.dim();
        let iq = ComplexMatrix::identity(m).sub(&pq.q);
        let constraint = iq.matmul(&iq.conj()).sub(&pq.p.matmul(&pq.p));
        let ca = constraint.matvec(&a);
        let residual = vec_norm(&ca) / vec_norm(&a).max(f64::MIN_POSITIVE);
        let admissible = residual <= tol * (1.0 + constraint.fro_norm());
        return Ok(ModeConstraint {
            lambda,
            branch: ModeBranch::RealLambda,
            residual,
            mu: None,
            norms_equal: None,
            admissible,
        });
    }

    let two_i = Complex64::new(0.0, 2.0);
    let mu = (-two_i * lambda).exp() + (two_i * lambda).exp();
    let r = compute_r(pq)?;
    let rx = r.matvec(x);
    let ry = r.matvec(y);
    let res_x: f64 = rx
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b * mu).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let res_y: f64 = ry
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b * mu).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let denom = (vec_norm(x) + vec_norm(y)).max(f64::MIN_POSITIVE);
    let residual = (res_x + res_y) / denom;
    let admissible = residual <= tol * (1.0 + r.fro_norm() + mu.norm());
    if is_imag {
        Ok(ModeConstraint {
            lambda,
            branch: ModeBranch::ImaginaryLambda,
            residual,
            mu: Some(mu),
            norms_equal: None,
            admissible,
        })
    } else {
        let nx = vec_norm(x);
        let ny = vec_norm(y);
        let total = (nx * nx + ny * ny).sqrt().max(f64::MIN_POSITIVE);
        Ok(ModeConstraint {
            lambda,
            branch: ModeBranch::MixedLambdaContradiction,
            residual,
            mu: Some(mu),
            norms_equal: Some((nx - ny).abs() <= 1e-8 * total),
            admissible,
        })
    }
}

/// One mode's constraint annotated with its weight in a given expansion.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeCheck {
    #[serde(flatten)]
    pub constraint: ModeConstraint,
    pub weight: f64,
    pub active: bool,
}

/// Boundary-matching verdict for one strip solution against (P, Q).
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompatibilityReport {
    pub modes: Vec<ModeCheck>,
    pub compatible: bool,
    pub max_active_residual: f64,
}

/// Continues psi = conj(phi) from Im s = 0 across the strip (exact on the
/// mode expansion, exponentials being entire) and tests the Im s = 1
/// identity P conj(phi) + Q phi = psi mode by mode.
pub fn boundary_match(sol: &StripSolution, pq: &HessianPair, tol: f64) -> Result<CompatibilityReport> {
    let total_weight: f64 = sol
        .modes
        .iter()
        .map(|m| m.coefficient.norm() * (vec_norm(&m.x) + vec_norm(&m.y)))
        .sum();
    let floor = ACTIVITY_FLOOR * total_weight.max(f64::MIN_POSITIVE);
    let mut checks = Vec::with_capacity(sol.modes.len());
    let mut compatible = true;
    let mut max_res = 0.0f64;
    for mode in &sol.modes {
        let weight = mode.coefficient.norm() * (vec_norm(&mode.x) + vec_norm(&mode.y));
        let active = weight > floor;
        // The mode content is the eigenvector scaled by the coefficient;
        // on the real branch the kernel condition applies to that scaled
        // initial value, not to an arbitrary representative.
        let xs: Vec<Complex64> = mode.x.iter().map(|v| v * mode.coefficient).collect();
        let ys: Vec<Complex64> = mode.y.iter().map(|v| v * mode.coefficient).collect();
        let constraint = if active {
            eigenmode_constraints(mode.lambda, &xs, &ys, pq, tol)?
        } else {
            eigenmode_constraints(mode.lambda, &mode.x, &mode.y, pq, tol)?
        };
        if active {
            if !constraint.admissible {
                compatible = false;
            }
            max_res = max_res.max(constraint.residual);
        }
        checks.push(ModeCheck {
            constraint,
            weight,
            active,
        });
    }
    Ok(CompatibilityReport {
        modes: checks,
        compatible,
        max_active_residual: max_res,
    })
}

/// Statistics of a randomized compatibility search.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SearchReport {
    pub trials: usize,
    pub seed: u64,
    pub successes: usize,
    pub failures: usize,
    pub first_success: Option<usize>,
    pub compatible_found: bool,
}

/// Samples `trials` block systems (trial 0 is always A = B = 0, the constant
/// geodesic's linearization) and tests boundary matching over the spanning
/// initial values {e_j, i e_j}. For obstructed pairs the expected success
/// count is zero.
pub fn compatibility_search(pq: &HessianPair, trials: usize, seed: u64) -> Result<SearchReport> {
    if trials < 1 {
        return Err(LabError::invalid("trials", "must be at least 1"));
    }
    let m = pq.dim();
    let mut successes = 0;
    let mut failures = 0;
    let mut first_success = None;
    for trial in 0..trials {
        let bs = if trial == 0 {
            BlockSystem::zero(m)
        } else {
            let mut rng = SplitMix64::derive(seed, trial as u64);
            let a = crate::matrix_core::random_skew_adjoint(&mut rng, m);
            let b = crate::matrix_core::random_symmetric(&mut rng, m);
            BlockSystem::new(a, b).expect("construction preserves structure")
        };
        match system_compatible(&bs, pq) {
            Ok(true) => {
                successes += 1;
                if first_success.is_none() {
                    first_success = Some(trial);
                }
            }
            Ok(false) => {}
            Err(_) => failures += 1,
        }
    }
    Ok(SearchReport {
        trials,
        seed,
        successes,
        failures,
        first_success,
        compatible_found: successes > 0,
    })
}

/// Full compatibility of one block system: every spanning initial value must
/// produce a boundary-matched expansion.
pub fn system_compatible(bs: &BlockSystem, pq: &HessianPair) -> Result<bool> {
    let m = bs.dim();
    for j in 0..m {
        for &imag in &[false, true] {
            let mut a = vec![Complex64::new(0.0, 0.0); m];
            a[j] = if imag {
                Complex64::new(0.0, 1.0)
            } else {
                Complex64::new(1.0, 0.0)
            };
            let sol = solve_ivp(bs, &a)?;
            if !boundary_match(&sol, pq, COMPAT_TOL)?.compatible {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
