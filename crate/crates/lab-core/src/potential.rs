//! Construction of h-invariant strongly psh boundary potentials with
//! prescribed Hessian data at a fixed point.
//!
//! Given target Wirtinger Hessians a = v_zz̄(x0) (Hermitian, with I + a > 0)
//! and b = v_zz(x0) (symmetric), the local model
//! w(z) = sum a_jk z_j zbar_k + Re sum b_jk z_j z_k is glued into the torus
//! by the logarithmically tempered cutoff psi(t) = phi(eps log t):
//! v = psi(|z|^2) w inside the unit chart ball, 0 outside. The cutoff keeps
//! t|psi'| and t^2|psi''| of order eps, so for small eps the glued potential
//! stays strongly psh while the Hessian at x0 is exactly the prescribed
//! pair.

use num_complex::Complex64;
use serde::Serialize;

use crate::cmatrix::ComplexMatrix;
use crate::error::{LabError, Result};
use crate::matrix_core::{HessianPair, STRUCTURE_TOL};
use crate::torus::{ScalarField, TorusSpec, Wirt};

/// Prescribed Wirtinger Hessian targets at the fixed point:
/// a = v_zz̄(x0) = P - I and b = v_zz(x0) = Q.
#[derive(Debug, Clone, Serialize)]
pub struct QuadraticFormSpec {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

impl QuadraticFormSpec {
    pub fn new(a: ComplexMatrix, b: ComplexMatrix) -> Result<Self> {
        if a.dim() != b.dim() {
            return Err(LabError::invalid("b", "a and b must have equal dimension"));
        }
        a.validate_finite("a")?;
        b.validate_finite("b")?;
        if !a.is_hermitian(STRUCTURE_TOL * (1.0 + a.fro_norm())) {
            return Err(LabError::invalid("a", "a must be Hermitian"));
        }
        if !b.is_symmetric(STRUCTURE_TOL * (1.0 + b.fro_norm())) {
            return Err(LabError::invalid("b", "b must be symmetric"));
        }
        let min_eig = ComplexMatrix::identity(a.dim()).add(&a).min_hermitian_eigenvalue();
        if min_eig <= 0.0 {
            return Err(LabError::invalid(
                "a",
                format!("I + a must be positive definite (min eigenvalue {min_eig:.3e})"),
            ));
        }
        Ok(QuadraticFormSpec { a, b })
    }

    pub fn diagonal(m: usize, a: f64, b: f64) -> Result<Self> {
        let av = vec![Complex64::new(a, 0.0); m];
        let bv = vec![Complex64::new(b, 0.0); m];
        Self::new(ComplexMatrix::diagonal(&av), ComplexMatrix::diagonal(&bv))
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    /// The boundary Hessian pair this data induces: (P, Q) = (I + a, b).
    pub fn hessian_pair(&self) -> Result<HessianPair> {
        HessianPair::new(ComplexMatrix::identity(self.dim()).add(&self.a), self.b.clone())
    }

    /// Builds the targets from a real quadratic form: v carries Hessian form
    /// q, so the Wirtinger targets are half the form coefficients.
    pub fn from_real_form(sym: &RealQuadraticForm) -> Result<Self> {
        let (aq, bq) = sym.complex_coefficients();
        Self::new(
            aq.scale(Complex64::new(0.5, 0.0)),
            bq.scale(Complex64::new(0.5, 0.0)),
        )
    }

    /// min eigenvalue of I + a, the strict upper bound for usable psh margins.
    pub fn positivity_reserve(&self) -> f64 {
        ComplexMatrix::identity(self.dim()).add(&self.a).min_hermitian_eigenvalue()
    }

    /// Evaluates the local model w(z) = sum a z zbar + Re sum b z z.
    pub fn local_value(&self, z: &[Complex64]) -> f64 {
        let m = self.dim();
        let mut herm = Complex64::new(0.0, 0.0);
        let mut pure = Complex64::new(0.0, 0.0);
        for j in 0..m {
            for k in 0..m {
                herm += self.a[(j, k)] * z[j] * z[k].conj();
                pure += self.b[(j, k)] * z[j] * z[k];
            }
        }
        herm.re + pure.re
    }
}

/// A real quadratic form on R^{2m} in the real coordinates
/// (x_1, y_1, ..., x_m, y_m), stored as its symmetric matrix.
#[derive(Debug, Clone)]
pub struct RealQuadraticForm {
    pub m: usize,
    pub sym: Vec<Vec<f64>>,
}

impl RealQuadraticForm {
    pub fn new(m: usize, sym: Vec<Vec<f64>>) -> Result<Self> {
        let n = 2 * m;
        if sym.len() != n || sym.iter().any(|row| row.len() != n) {
            return Err(LabError::invalid("sym", "matrix must be 2m x 2m"));
        }
        for i in 0..n {
            for j in 0..n {
                if (sym[i][j] - sym[j][i]).abs() > 1e-12 * (1.0 + sym[i][j].abs()) {
                    return Err(LabError::invalid("sym", "matrix must be symmetric"));
                }
            }
        }
        Ok(RealQuadraticForm { m, sym })
    }

    pub fn eval(&self, xi: &[f64]) -> f64 {
        let n = 2 * self.m;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.sym[i][j] * xi[i] * xi[j];
            }
        }
        acc
    }

    /// Complex-coefficient decomposition q(xi) = sum aq_jk z_j zbar_k
    /// + Re sum bq_jk z_j z_k with z_j = xi_{2j} + i xi_{2j+1}.
    pub fn complex_coefficients(&self) -> (ComplexMatrix, ComplexMatrix) {
        let m = self.m;
        let s = |p: usize, q: usize| self.sym[p][q];
        let aq = ComplexMatrix::from_fn(m, |j, k| {
            Complex64::new(
                (s(2 * j, 2 * k) + s(2 * j + 1, 2 * k + 1)) / 2.0,
                (s(2 * j, 2 * k + 1) - s(2 * j + 1, 2 * k)) / 2.0,
            )
        });
        let bq = ComplexMatrix::from_fn(m, |j, k| {
            Complex64::new(
                (s(2 * j, 2 * k) - s(2 * j + 1, 2 * k + 1)) / 2.0,
                -(s(2 * j, 2 * k + 1) + s(2 * j + 1, 2 * k)) / 2.0,
            )
        });
        (aq, bq)
    }

    /// The J-invariant (1,1) part: (q(xi) + q(J xi))/2, returned through its
    /// Hermitian coefficient matrix. The pure part averages to zero under J.
    pub fn hermitian_part(&self) -> ComplexMatrix {
        self.complex_coefficients().0
    }
}

/// The logarithmically tempered cutoff psi(t) = phi(eps log t) built on a
/// C^2 monotone quintic smoothstep phi.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CutoffProfile {
    pub epsilon: f64,
    /// Measured sup of t |psi'(t)|.
    pub bound_t_psi1: f64,
    /// Measured sup of t^2 |psi''(t)|.
    pub bound_t2_psi2: f64,
}

fn smoothstep(t: f64) -> f64 {
    ((6.0 * t - 15.0) * t + 10.0) * t * t * t
}

fn smoothstep_d1(t: f64) -> f64 {
    30.0 * t * t * (t - 1.0) * (t - 1.0)
}

fn smoothstep_d2(t: f64) -> f64 {
    60.0 * t * (2.0 * t - 1.0) * (t - 1.0)
}

/// phi: 1 on (-inf, -1], quintic smoothstep down to 0 on [-1, 0], 0 beyond.
pub fn profile(x: f64) -> f64 {
    if x <= -1.0 {
        1.0
    } else if x >= 0.0 {
        0.0
    } else {
        smoothstep(-x)
    }
}

pub fn profile_d1(x: f64) -> f64 {
    if !(-1.0..0.0).contains(&x) {
        0.0
    } else {
        -smoothstep_d1(-x)
    }
}

pub fn profile_d2(x: f64) -> f64 {
    if !(-1.0..0.0).contains(&x) {
        0.0
    } else {
        smoothstep_d2(-x)
    }
}

impl CutoffProfile {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(LabError::invalid("epsilon", "must lie in (0, 1]"));
        }
        // Bounds are exact suprema over the transition region:
        // t psi' = eps phi'(tau), t^2 psi'' = eps^2 phi'' - eps phi'.
        let mut b1 = 0.0f64;
        let mut b2 = 0.0f64;
        let samples = 20_000;
        for i in 0..=samples {
            let tau = i as f64 / samples as f64; // tau = -eps log t in [0, 1]
            let d1 = smoothstep_d1(tau);
            let d2 = smoothstep_d2(tau);
            b1 = b1.max(epsilon * d1.abs());
            b2 = b2.max((epsilon * epsilon * d2 + epsilon * d1).abs());
        }
        Ok(CutoffProfile {
            epsilon,
            bound_t_psi1: b1,
            bound_t2_psi2: b2,
        })
    }

    /// psi(t) = phi(eps log t) for t > 0, psi(0) = 1; supported on [0, 1].
    pub fn psi(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        profile(self.epsilon * t.ln())
    }

    pub fn psi_d1(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        profile_d1(self.epsilon * t.ln()) * self.epsilon / t
    }

    pub fn psi_d2(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let x = self.epsilon * t.ln();
        (profile_d2(x) * self.epsilon * self.epsilon - profile_d1(x) * self.epsilon) / (t * t)
    }

    /// Radius below which psi(|z|^2) is identically 1.
    pub fn plateau_radius(&self) -> f64 {
        (-1.0 / (2.0 * self.epsilon)).exp()
    }
}

/// The assembled boundary potential with its certificates.
#[derive(Debug, Clone)]
pub struct BuiltPotential {
    pub field: ScalarField,
    pub data: QuadraticFormSpec,
    pub cutoff: CutoffProfile,
    pub origin: Vec<usize>,
    /// Min eigenvalue over the grid of the coefficients of omega_0 + i ddbar v.
    pub psh_margin: f64,
    /// Centered-difference Hessian deviation at x0, stencil spacing
    /// min(grid step, plateau/4) evaluated on the closed form.
    pub hessian_error: f64,
    /// Same verification pinned to the grid step; contaminated by the cutoff
    /// whenever the plateau is narrower than the stencil.
    pub grid_step_hessian_error: f64,
    /// Stencil spacing used for `hessian_error`.
    pub fd_spacing: f64,
}

impl BuiltPotential {
    /// Closed-form value of v at local chart coordinates z (relative to x0).
    pub fn analytic_value(&self, z: &[Complex64]) -> f64 {
        let t: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        if t >= 1.0 {
            return 0.0;
        }
        self.cutoff.psi(t) * self.data.local_value(z)
    }
}

/// Evaluates the local model w on the grid chart around x0 (zero outside
/// radius 1.5), mainly a diagnostic surface for the glue step.
pub fn local_quadratic(
    data: &QuadraticFormSpec,
    torus: &TorusSpec,
    x0: &[usize],
) -> Result<ScalarField> {
    if data.dim() != torus.m {
        return Err(LabError::invalid("data", "dimension does not match torus"));
    }
    let x0_coords = torus.coords(x0);
    let mut field = ScalarField::zeros(*torus);
    let spacing = torus.spacing();
    for idx in 0..torus.len() {
        let multi = torus.multi_index(idx);
        let z: Vec<Complex64> = (0..torus.m)
            .map(|j| {
                Complex64::new(
                    torus.wrap(multi[2 * j] as f64 * spacing - x0_coords[2 * j]),
                    torus.wrap(multi[2 * j + 1] as f64 * spacing - x0_coords[2 * j + 1]),
                )
            })
            .collect();
        let t: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        if t < 1.5 * 1.5 {
            field.values[idx] = data.local_value(&z);
        }
    }
    Ok(field)
}

fn validate_fixed_point(torus: &TorusSpec, x0: &[usize]) -> Result<()> {
    if x0.len() != torus.axes() {
        return Err(LabError::invalid("x0", "fixed point has wrong arity"));
    }
    if x0.iter().any(|&i| i != 0 && i != torus.n / 2) {
        return Err(LabError::invalid("x0", "not a half-lattice fixed point"));
    }
    Ok(())
}

/// Glues v = psi(|z|^2) w around x0 and certifies the result.
pub fn assemble_potential(
    data: &QuadraticFormSpec,
    cutoff: &CutoffProfile,
    torus: &TorusSpec,
    x0: &[usize],
) -> Result<BuiltPotential> {
    if data.dim() != torus.m {
        return Err(LabError::invalid("data", "dimension does not match torus"));
    }
    validate_fixed_point(torus, x0)?;
    if torus.period / 2.0 <= 1.0 {
        return Err(LabError::BallDoesNotFit {
            period: torus.period,
            radius: 1.0,
        });
    }

    let x0_coords = torus.coords(x0);
    let spacing = torus.spacing();
    let mut field = ScalarField::zeros(*torus);
    for idx in 0..torus.len() {
        let multi = torus.multi_index(idx);
        let z: Vec<Complex64> = (0..torus.m)
            .map(|j| {
                Complex64::new(
                    torus.wrap(multi[2 * j] as f64 * spacing - x0_coords[2 * j]),
                    torus.wrap(multi[2 * j + 1] as f64 * spacing - x0_coords[2 * j + 1]),
                )
            })
            .collect();
        let t: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        if t < 1.0 {
            field.values[idx] = cutoff.psi(t) * data.local_value(&z);
        }
    }

    let psh_margin = psh_margin(&field)?;
    if psh_margin <= 0.0 {
        return Err(LabError::NotPsh {
            margin: psh_margin,
            epsilon: cutoff.epsilon,
        });
    }

    let mut built = BuiltPotential {
        field,
        data: data.clone(),
        cutoff: cutoff.clone(),
        origin: x0.to_vec(),
        psh_margin,
        hessian_error: 0.0,
        grid_step_hessian_error: 0.0,
        fd_spacing: 0.0,
    };
    // Clamp the stencil above the f64 resolution floor; when the plateau is
    // narrower than that, the verification honestly reports the
    // contaminated value instead of dividing by an underflowed spacing.
    let adaptive = spacing.min((cutoff.plateau_radius() / 4.0).max(1e-8));
    built.fd_spacing = adaptive;
    built.hessian_error = fd_hessian_error(&built, adaptive);
    built.grid_step_hessian_error = fd_hessian_error(&built, spacing);
    Ok(built)
}

/// Min eigenvalue over the grid of the Hermitian coefficient field of
/// omega_0 + i ddbar v, computed with spectral fiber derivatives.
pub fn psh_margin(field: &ScalarField) -> Result<f64> {
    let spec = field.spec;
    let m = spec.m;
    let fft = spec.grid_fft();
    let values = field.to_complex();
    // Upper triangle of v_{z_j zbar_k}.
    let mut derivs: Vec<Vec<Complex64>> = Vec::new();
    for j in 0..m {
        for k in j..m {
            derivs.push(crate::torus::wirtinger_on_complex(
                &spec,
                &fft,
                &values,
                &[Wirt::z(j), Wirt::zbar(k)],
            )?);
        }
    }
    let tri_index = |j: usize, k: usize| -> usize {
        // j <= k assumed
        j * m - j * (j + 1) / 2 + k
    };
    let mut min_eig = f64::INFINITY;
    match m {
        1 => {
            for idx in 0..spec.len() {
                let e = 1.0 + derivs[0][idx].re;
                if e < min_eig {
                    min_eig = e;
                }
            }
        }
        2 => {
            for idx in 0..spec.len() {
                let h11 = 1.0 + derivs[tri_index(0, 0)][idx].re;
                let h22 = 1.0 + derivs[tri_index(1, 1)][idx].re;
                let h12 = derivs[tri_index(0, 1)][idx];
                let mid = (h11 + h22) / 2.0;
                let rad = ((h11 - h22) / 2.0).hypot(h12.norm());
                let e = mid - rad;
                if e < min_eig {
                    min_eig = e;
                }
            }
        }
        _ => unreachable!("TorusSpec enforces m <= 2"),
    }
    Ok(min_eig)
}

/// Max entrywise deviation of the centered-difference Wirtinger Hessian at
/// x0 from the prescribed (a, b), stencils evaluated on the closed form.
fn fd_hessian_error(built: &BuiltPotential, h: f64) -> f64 {
    let m = built.data.dim();
    let n = 2 * m;
    let v = |xi: &[f64]| -> f64 {
        let z: Vec<Complex64> = (0..m)
            .map(|j| Complex64::new(xi[2 * j], xi[2 * j + 1]))
            .collect();
        built.analytic_value(&z)
    };
    // Real symmetric second-difference matrix.
    let mut sym = vec![vec![0.0; n]; n];
    let origin = vec![0.0; n];
    let v0 = v(&origin);
    for p in 0..n {
        let mut xp = origin.clone();
        xp[p] = h;
        let mut xm = origin.clone();
        xm[p] = -h;
        sym[p][p] = (v(&xp) - 2.0 * v0 + v(&xm)) / (h * h);
    }
    for p in 0..n {
        for q in p + 1..n {
            let mut pp = origin.clone();
            pp[p] = h;
            pp[q] = h;
            let mut pm = origin.clone();
            pm[p] = h;
            pm[q] = -h;
            let mut mp = origin.clone();
            mp[p] = -h;
            mp[q] = h;
            let mut mm = origin.clone();
            mm[p] = -h;
            mm[q] = -h;
            let d = (v(&pp) - v(&pm) - v(&mp) + v(&mm)) / (4.0 * h * h);
            sym[p][q] = d;
            sym[q][p] = d;
        }
    }
    let s = |p: usize, q: usize| sym[p][q];
    let mut err = 0.0f64;
    for j in 0..m {
        for k in 0..m {
            let fd_mixed = Complex64::new(
                (s(2 * j, 2 * k) + s(2 * j + 1, 2 * k + 1)) / 4.0,
                (s(2 * j, 2 * k + 1) - s(2 * j + 1, 2 * k)) / 4.0,
            );
            let fd_pure = Complex64::new(
                (s(2 * j, 2 * k) - s(2 * j + 1, 2 * k + 1)) / 4.0,
                -(s(2 * j, 2 * k + 1) + s(2 * j + 1, 2 * k)) / 4.0,
            );
            err = err.max((fd_mixed - built.data.a[(j, k)]).norm());
            err = err.max((fd_pure - built.data.b[(j, k)]).norm());
        }
    }
    err
}

/// Halves epsilon from 0.5 until the assembled potential reaches the
/// requested psh margin.
pub fn select_epsilon(
    data: &QuadraticFormSpec,
    torus: &TorusSpec,
    x0: &[usize],
    margin: f64,
) -> Result<BuiltPotential> {
    let reserve = data.positivity_reserve();
    if !(margin > 0.0 && margin < reserve) {
        return Err(LabError::invalid(
            "margin",
            format!("margin must lie in (0, {reserve:.3e}), the positivity reserve of I + a"),
        ));
    }
    let mut last_margin = f64::NEG_INFINITY;
    for halving in 0..20 {
        let epsilon = 0.5 / (1u64 << halving) as f64;
        let cutoff = CutoffProfile::new(epsilon)?;
        match assemble_potential(data, &cutoff, torus, x0) {
            Ok(built) => {
                if built.psh_margin >= margin {
                    return Ok(built);
                }
                last_margin = built.psh_margin;
            }
            Err(LabError::NotPsh { margin: got, .. }) => last_margin = got,
            Err(e) => return Err(e),
        }
    }
    Err(LabError::NoEpsilonFound {
        halvings: 20,
        last_margin,
    })
}
