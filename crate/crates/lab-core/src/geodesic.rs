//! The epsilon-regularized geodesic boundary-value solver.
//!
//! For m = 1 and Im-s invariant data, the homogeneous Monge-Ampere equation
//! on strip x torus reduces to the scalar problem
//!
//! ```text
//! udd (1 + u_zz̄) - |ud_z|^2 = eps,    u(0, .) = 0,  u(1, .) = v
//! ```
//!
//! with udd the second time derivative and spatial derivatives along the
//! fiber; eps = 0 is the geodesic equation itself and eps > 0 the elliptic
//! regularization whose eps -> 0 behavior diagnoses it. Time is discretized
//! by centered differences on nt interior levels, space spectrally. The
//! nonlinear system is solved by damped Newton with epsilon continuation;
//! each Newton step runs matrix-free GMRES preconditioned by the
//! constant-coefficient operator kappa d_tt + mu dz dz̄, which is exactly
//! invertible per Fourier mode by a tridiagonal solve.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cmatrix::ComplexMatrix;
use crate::error::{LabError, Result};
use crate::fft::{freq, GridFft};
use crate::krylov::{gmres, GmresOptions};
use crate::parallel::par_map;
use crate::potential::psh_margin;
use crate::torus::{involution_pullback, ScalarField, TorusSpec};

/// Positivity floor for 1 + u_zz̄ along accepted iterates.
pub const POSITIVITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct GeodesicProblem {
    pub torus: TorusSpec,
    /// Boundary potential at t = 1 (t = 0 boundary is 0).
    pub boundary: ScalarField,
    pub epsilon: f64,
    /// Interior time levels.
    pub nt: usize,
}

impl GeodesicProblem {
    pub fn new(boundary: ScalarField, epsilon: f64, nt: usize) -> Result<Self> {
        let torus = boundary.spec;
        if torus.m != 1 {
            return Err(LabError::invalid("boundary", "solver requires m = 1"));
        }
        if !(epsilon > 0.0) {
            return Err(LabError::invalid("epsilon", "must be positive"));
        }
        if nt < 8 {
            return Err(LabError::invalid("nt", "need at least 8 interior levels"));
        }
        let margin = psh_margin(&boundary)?;
        if margin <= 0.0 {
            return Err(LabError::invalid(
                "boundary",
                format!("boundary must be strongly psh (margin {margin:.3e})"),
            ));
        }
        Ok(GeodesicProblem {
            torus,
            boundary,
            epsilon,
            nt,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Max-norm residual tolerance.
    pub newton_tol: f64,
    /// Newton iterations per continuation level.
    pub max_iters: usize,
    pub continuation_start: f64,
    pub continuation_ratio: f64,
    pub gmres: GmresOptions,
    /// Smallest admissible line-search step.
    pub min_step: f64,
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton_tol: 1e-10,
            max_iters: 50,
            continuation_start: 0.5,
            continuation_ratio: 0.5,
            gmres: GmresOptions {
                restart: 60,
                max_iters: 800,
                rel_tol: 1e-8,
            },
            min_step: 1e-8,
            threads: 1,
        }
    }
}

/// Mixed sup norms of the discrete solution: c_l is the max of
/// sup |d_t^j D_x^k u| over j + k <= l, with spectral space derivatives and
/// second-order time stencils.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormLadder {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Per (time order, space order) suprema for j + k <= 3.
    pub components: Vec<(usize, usize, f64)>,
}

impl NormLadder {
    pub fn component(&self, j: usize, k: usize) -> f64 {
        self.components
            .iter()
            .find(|&&(tj, tk, _)| tj == j && tk == k)
            .map(|&(_, _, v)| v)
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub torus: TorusSpec,
    pub nt: usize,
    pub epsilon: f64,
    /// Level-major values: (nt + 2) blocks of the spatial grid, t ascending.
    pub u: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub norm_ladder: NormLadder,
    /// Sup of third mixed derivatives near (t = 1, x0).
    pub third_deriv_diagnostic: f64,
}

impl GeodesicSolution {
    pub fn grid(&self) -> usize {
        self.torus.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.nt + 1) as f64
    }

    pub fn level(&self, i: usize) -> &[f64] {
        let g = self.grid();
        &self.u[i * g..(i + 1) * g]
    }

    pub fn level_field(&self, i: usize) -> ScalarField {
        ScalarField {
            spec: self.torus,
            values: self.level(i).to_vec(),
        }
    }

    pub fn levels(&self) -> usize {
        self.nt + 2
    }
}

/// Spectral scaffolding for one N x N fiber grid (m = 1).
pub(crate) struct FiberSpectral {
    pub fft: GridFft,
    pub grid: usize,
    /// Symbol of d/dz with Nyquist zeroed.
    pub sym_z: Vec<Complex64>,
    /// Symbol of dz dz̄ (product of the zeroed first-order symbols).
    pub sym_lap: Vec<f64>,
    n: usize,
    two_pi_over_l: f64,
}

impl FiberSpectral {
    pub fn new(torus: &TorusSpec) -> Self {
        assert_eq!(torus.m, 1);
        let n = torus.n;
        let grid = n * n;
        let two_pi_over_l = 2.0 * std::f64::consts::PI / torus.period;
        let mut sym_z = Vec::with_capacity(grid);
        let mut sym_lap = Vec::with_capacity(grid);
        for ix in 0..n {
            let kx = if ix == n / 2 {
                0.0
            } else {
                freq(ix, n) as f64 * two_pi_over_l
            };
            for iy in 0..n {
                let ky = if iy == n / 2 {
                    0.0
                } else {
                    freq(iy, n) as f64 * two_pi_over_l
                };
                sym_z.push(Complex64::new(ky, kx) * 0.5);
                sym_lap.push(-(kx * kx + ky * ky) / 4.0);
            }
        }
        FiberSpectral {
            fft: torus.grid_fft(),
            grid,
            sym_z,
            sym_lap,
            n,
            two_pi_over_l,
        }
    }

    pub fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.forward(&mut data);
        data
    }

    /// Inverse transform of spectrum * complex symbol.
    pub fn apply_symbol(&self, spectrum: &[Complex64], symbol: &[Complex64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = spectrum.iter().zip(symbol).map(|(s, m)| s * m).collect();
        self.fft.inverse(&mut data);
        data
    }

    /// Inverse transform of spectrum * real symbol, real part.
    pub fn apply_real_symbol(&self, spectrum: &[Complex64], symbol: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex64> = spectrum.iter().zip(symbol).map(|(s, &m)| s * m).collect();
        self.fft.inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Symbol of d_x^p d_y^q (i k)^p (i k)^q with Nyquist zeroed on
    /// differentiated axes.
    pub fn power_symbol(&self, p: usize, q: usize) -> Vec<Complex64> {
        let n = self.n;
        let mut sym = Vec::with_capacity(self.grid);
        for ix in 0..n {
            let kx = if p >= 1 && ix == n / 2 {
                0.0
            } else {
                freq(ix, n) as f64 * self.two_pi_over_l
            };
            for iy in 0..n {
                let ky = if q >= 1 && iy == n / 2 {
                    0.0
                } else {
                    freq(iy, n) as f64 * self.two_pi_over_l
                };
                let sx = Complex64::new(0.0, kx).powu(p as u32);
                let sy = Complex64::new(0.0, ky).powu(q as u32);
                sym.push(sx * sy);
            }
        }
        sym
    }
}

/// Derivative fields of the current iterate at the interior levels.
struct IterateCache {
    /// u_zz̄ per interior level.
    uzzbar: Vec<Vec<f64>>,
    /// d/dt u_z per interior level (centered).
    udotz: Vec<Vec<Complex64>>,
    /// d^2/dt^2 u per interior level (centered).
    uddot: Vec<Vec<f64>>,
    min_fiber: f64,
}

struct Discretization<'a> {
    spectral: &'a FiberSpectral,
    nt: usize,
    dt: f64,
    grid: usize,
    threads: usize,
}

impl<'a> Discretization<'a> {
    fn cache(&self, u: &[f64]) -> IterateCache {
        let g = self.grid;
        let nt = self.nt;
        let spectra = par_map(self.threads, nt + 2, |l| {
            self.spectral.spectrum(&u[l * g..(l + 1) * g])
        });
        let fields = par_map(self.threads, nt, |i| {
            let l = i + 1;
            let uzzbar = self.spectral.apply_real_symbol(&spectra[l], &self.spectral.sym_lap);
            let diff: Vec<Complex64> = spectra[l + 1]
                .iter()
                .zip(&spectra[l - 1])
                .map(|(a, b)| (a - b) / (2.0 * self.dt))
                .collect();
            let udotz = self.spectral.apply_symbol(&diff, &self.spectral.sym_z);
            (uzzbar, udotz)
        });
        let mut uzzbar = Vec::with_capacity(nt);
        let mut udotz = Vec::with_capacity(nt);
        let mut min_fiber = f64::INFINITY;
        for (zz, dz) in fields {
            for &v in &zz {
                let fiber = 1.0 + v;
                if fiber < min_fiber {
                    min_fiber = fiber;
                }
            }
            uzzbar.push(zz);
            udotz.push(dz);
        }
        let dt2 = self.dt * self.dt;
        let uddot = (0..nt)
            .map(|i| {
                let l = i + 1;
                (0..g)
                    .map(|p| (u[(l - 1) * g + p] - 2.0 * u[l * g + p] + u[(l + 1) * g + p]) / dt2)
                    .collect()
            })
            .collect();
        IterateCache {
            uzzbar,
            udotz,
            uddot,
            min_fiber,
        }
    }

    /// r_i = udd (1 + u_zz̄) - |ud_z|^2 - eps on the interior levels.
    fn residual(&self, cache: &IterateCache, eps: f64) -> Vec<f64> {
        let g = self.grid;
        let mut r = vec![0.0; self.nt * g];
        for i in 0..self.nt {
            for p in 0..g {
                r[i * g + p] = cache.uddot[i][p] * (1.0 + cache.uzzbar[i][p])
                    - cache.udotz[i][p].norm_sqr()
                    - eps;
            }
        }
        r
    }

    /// Directional derivative of the residual at the cached iterate.
    fn jacobian_apply(&self, cache: &IterateCache, delta: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let nt = self.nt;
        let fields = par_map(self.threads, nt, |i| {
            let mut spec: Vec<Complex64> = delta[i * g..(i + 1) * g]
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            self.spectral.fft.forward(&mut spec);
            let dzz = self.spectral.apply_real_symbol(&spec, &self.spectral.sym_lap);
            let dz = self.spectral.apply_symbol(&spec, &self.spectral.sym_z);
            (dzz, dz)
        });
        let dt2 = self.dt * self.dt;
        let two_dt = 2.0 * self.dt;
        let zero = vec![Complex64::new(0.0, 0.0); g];
        for i in 0..nt {
            let below = if i == 0 { &zero } else { &fields[i - 1].1 };
            let above = if i + 1 == nt { &zero } else { &fields[i + 1].1 };
            for p in 0..g {
                let dd = (if i == 0 { 0.0 } else { delta[(i - 1) * g + p] }
                    - 2.0 * delta[i * g + p]
                    + if i + 1 == nt { 0.0 } else { delta[(i + 1) * g + p] })
                    / dt2;
                let ddotz = (above[p] - below[p]) / two_dt;
                out[i * g + p] = dd * (1.0 + cache.uzzbar[i][p])
                    + cache.uddot[i][p] * fields[i].0[p]
                    - 2.0 * (cache.udotz[i][p].conj() * ddotz).re;
            }
        }
    }

    /// Exact solve of kappa d_tt + mu dz dz̄ per Fourier mode (tridiagonal in
    /// time with Dirichlet ends).
    fn precondition(&self, kappa: f64, mu: f64, rhs: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let nt = self.nt;
        let spectra = par_map(self.threads, nt, |i| {
            let mut spec: Vec<Complex64> = rhs[i * g..(i + 1) * g]
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            self.spectral.fft.forward(&mut spec);
            spec
        });
        let dt2 = self.dt * self.dt;
        let off = kappa / dt2;
        // Thomas solve per mode across the nt levels.
        let mut per_mode: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); g]; nt];
        {
            let mode_sol = par_map(self.threads, g, |p| {
                let diag = -2.0 * kappa / dt2 + mu * self.spectral.sym_lap[p];
                let mut c = vec![0.0f64; nt];
                let mut d = vec![Complex64::new(0.0, 0.0); nt];
                let mut beta = diag;
                c[0] = off / beta;
                d[0] = spectra[0][p] / beta;
                for i in 1..nt {
                    beta = diag - off * c[i - 1];
                    c[i] = off / beta;
                    d[i] = (spectra[i][p] - off * d[i - 1]) / beta;
                }
                let mut x = vec![Complex64::new(0.0, 0.0); nt];
                x[nt - 1] = d[nt - 1];
                for i in (0..nt - 1).rev() {
                    x[i] = d[i] - c[i] * x[i + 1];
                }
                x
            });
            for p in 0..g {
                for i in 0..nt {
                    per_mode[i][p] = mode_sol[p][i];
                }
            }
        }
        for i in 0..nt {
            let mut spec = std::mem::take(&mut per_mode[i]);
            self.spectral.fft.inverse(&mut spec);
            for p in 0..g {
                out[i * g + p] = spec[p].re;
            }
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Standalone residual of a full space-time iterate (boundary rows included
/// in `u`), for tests and diagnostics.
pub fn geodesic_residual(torus: &TorusSpec, nt: usize, u: &[f64], eps: f64) -> Result<Vec<f64>> {
    if torus.m != 1 {
        return Err(LabError::invalid("torus", "residual requires m = 1"));
    }
    let g = torus.len();
    if u.len() != (nt + 2) * g {
        return Err(LabError::invalid("u", "iterate size mismatch"));
    }
    let spectral = FiberSpectral::new(torus);
    let disc = Discretization {
        spectral: &spectral,
        nt,
        dt: 1.0 / (nt + 1) as f64,
        grid: g,
        threads: 1,
    };
    let cache = disc.cache(u);
    Ok(disc.residual(&cache, eps))
}

/// Damped Newton with epsilon continuation. `warm` skips the continuation
/// ladder and polishes from the given solution at the target epsilon.
pub fn newton_solve(
    problem: &GeodesicProblem,
    config: &SolverConfig,
    warm: Option<&GeodesicSolution>,
) -> Result<GeodesicSolution> {
    let torus = problem.torus;
    let g = torus.len();
    let nt = problem.nt;
    let dt = 1.0 / (nt + 1) as f64;
    let spectral = FiberSpectral::new(&torus);
    let disc = Discretization {
        spectral: &spectral,
        nt,
        dt,
        grid: g,
        threads: config.threads.max(1),
    };

    // Initial iterate: linear in t, or the warm-start solution.
    let mut u = vec![0.0; (nt + 2) * g];
    for p in 0..g {
        u[(nt + 1) * g + p] = problem.boundary.values[p];
    }
    match warm {
        Some(prev) => {
            if prev.torus != torus || prev.nt != nt {
                return Err(LabError::invalid("warm", "warm start has mismatched grid"));
            }
            u.copy_from_slice(&prev.u);
            // Re-pin the boundary rows to the requested data.
            for p in 0..g {
                u[p] = 0.0;
                u[(nt + 1) * g + p] = problem.boundary.values[p];
            }
        }
        None => {}
    }

    // Continuation schedule down to the target epsilon.
    let mut schedule = Vec::new();
    if warm.is_some() || problem.epsilon >= config.continuation_start {
        schedule.push(problem.epsilon);
    } else {
        let mut eps = config.continuation_start;
        while eps > problem.epsilon * (1.0 + 1e-12) {
            schedule.push(eps);
            eps *= config.continuation_ratio;
        }
        schedule.push(problem.epsilon);
    }

    if warm.is_none() {
        // Linear interpolation plus the constant-data profile for the first
        // continuation level: the guess then has udd = eps everywhere, so
        // the linearization is elliptic from the start and matches the
        // preconditioner's spatial weight.
        let eps0 = schedule[0];
        for l in 1..=nt {
            let t = l as f64 * dt;
            let bump = 0.5 * eps0 * t * (t - 1.0);
            for p in 0..g {
                u[l * g + p] = t * problem.boundary.values[p] + bump;
            }
        }
    }

    let mut total_newton = 0usize;
    for &eps in &schedule {
        let mut iter = 0usize;
        loop {
            let cache = disc.cache(&u);
            if cache.min_fiber <= POSITIVITY_FLOOR {
                return Err(LabError::PositivityLoss);
            }
            let r = disc.residual(&cache, eps);
            let rmax = max_abs(&r);
            if rmax <= config.newton_tol {
                break;
            }
            if iter >= config.max_iters {
                return Err(LabError::NoConvergence {
                    residual: rmax,
                    iterations: total_newton,
                    epsilon: eps,
                });
            }
            iter += 1;
            total_newton += 1;

            // Preconditioner coefficients from the current iterate.
            let mut kappa = 0.0;
            let mut mu = 0.0;
            for i in 0..nt {
                for p in 0..g {
                    kappa += 1.0 + cache.uzzbar[i][p];
                    mu += cache.uddot[i][p];
                }
            }
            let count = (nt * g) as f64;
            kappa = (kappa / count).max(POSITIVITY_FLOOR);
            mu = (mu / count).max(0.5 * eps);

            let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            let mut delta = vec![0.0; nt * g];
            let outcome = gmres(
                |v, out| disc.jacobian_apply(&cache, v, out),
                |v, out| disc.precondition(kappa, mu, v, out),
                &rhs,
                &mut delta,
                &config.gmres,
            );
            if !outcome.converged && outcome.residual > 1e-3 * max_abs(&rhs).max(1e-300) {
                return Err(LabError::NoConvergence {
                    residual: rmax,
                    iterations: total_newton,
                    epsilon: eps,
                });
            }

            // Backtracking line search with fiberwise positivity guard.
            let mut alpha = 1.0f64;
            let mut accepted = false;
            let mut positivity_blocked = false;
            while alpha >= config.min_step {
                let mut trial = u.clone();
                for i in 0..nt {
                    for p in 0..g {
                        trial[(i + 1) * g + p] += alpha * delta[i * g + p];
                    }
                }
                let trial_cache = disc.cache(&trial);
                if trial_cache.min_fiber <= POSITIVITY_FLOOR {
                    positivity_blocked = true;
                    alpha *= 0.5;
                    continue;
                }
                let trial_res = max_abs(&disc.residual(&trial_cache, eps));
                if trial_res < rmax * (1.0 - 1e-4 * alpha) || trial_res <= config.newton_tol {
                    u = trial;
                    accepted = true;
                    break;
                }
                positivity_blocked = false;
                alpha *= 0.5;
            }
            if !accepted {
                return if positivity_blocked {
                    Err(LabError::PositivityLoss)
                } else {
                    Err(LabError::NoConvergence {
                        residual: rmax,
                        iterations: total_newton,
                        epsilon: eps,
                    })
                };
            }
        }
    }

    let cache = disc.cache(&u);
    let residual_norm = max_abs(&disc.residual(&cache, problem.epsilon));
    let ladder = norm_ladder_raw(&spectral, nt, dt, &u, config.threads.max(1));
    let diagnostic = third_derivative_diagnostic(&spectral, &torus, nt, dt, &u);
    Ok(GeodesicSolution {
        torus,
        nt,
        epsilon: problem.epsilon,
        u,
        residual_norm,
        newton_iterations: total_newton,
        norm_ladder: ladder,
        third_deriv_diagnostic: diagnostic,
    })
}

/// Time-difference of per-level scalars at level `l` with order `j`,
/// second-order stencils (centered where they fit, one-sided at the ends).
pub(crate) fn time_stencil(j: usize, l: usize, levels: usize, dt: f64) -> Vec<(usize, f64)> {
    let last = levels - 1;
    match j {
        0 => vec![(l, 1.0)],
        1 => {
            if l == 0 {
                vec![(0, -1.5 / dt), (1, 2.0 / dt), (2, -0.5 / dt)]
            } else if l == last {
                vec![(last, 1.5 / dt), (last - 1, -2.0 / dt), (last - 2, 0.5 / dt)]
            } else {
                vec![(l - 1, -0.5 / dt), (l + 1, 0.5 / dt)]
            }
        }
        2 => {
            let dt2 = dt * dt;
            if l == 0 {
                vec![
                    (0, 2.0 / dt2),
                    (1, -5.0 / dt2),
                    (2, 4.0 / dt2),
                    (3, -1.0 / dt2),
                ]
            } else if l == last {
                vec![
                    (last, 2.0 / dt2),
                    (last - 1, -5.0 / dt2),
                    (last - 2, 4.0 / dt2),
                    (last - 3, -1.0 / dt2),
                ]
            } else {
                vec![(l - 1, 1.0 / dt2), (l, -2.0 / dt2), (l + 1, 1.0 / dt2)]
            }
        }
        3 => {
            let dt3 = dt * dt * dt;
            if l >= 2 && l + 2 <= last {
                vec![
                    (l - 2, -0.5 / dt3),
                    (l - 1, 1.0 / dt3),
                    (l + 1, -1.0 / dt3),
                    (l + 2, 0.5 / dt3),
                ]
            } else if l + 4 <= last && l < 2 {
                vec![
                    (l, -2.5 / dt3),
                    (l + 1, 9.0 / dt3),
                    (l + 2, -12.0 / dt3),
                    (l + 3, 7.0 / dt3),
                    (l + 4, -1.5 / dt3),
                ]
            } else {
                vec![
                    (l, 2.5 / dt3),
                    (l - 1, -9.0 / dt3),
                    (l - 2, 12.0 / dt3),
                    (l - 3, -7.0 / dt3),
                    (l - 4, 1.5 / dt3),
                ]
            }
        }
        _ => unreachable!("ladder orders stop at 3"),
    }
}

fn norm_ladder_raw(
    spectral: &FiberSpectral,
    nt: usize,
    dt: f64,
    u: &[f64],
    threads: usize,
) -> NormLadder {
    let g = spectral.grid;
    let levels = nt + 2;
    let spectra = par_map(threads, levels, |l| spectral.spectrum(&u[l * g..(l + 1) * g]));
    let mut components = Vec::new();
    for k in 0..=3usize {
        // Spatial derivative fields of total order k, all (p, q) splits.
        let words: Vec<(usize, usize)> = (0..=k).map(|p| (p, k - p)).collect();
        let mut space_fields: Vec<Vec<Vec<f64>>> = Vec::new(); // word -> level -> field
        for &(p, q) in &words {
            let sym = spectral.power_symbol(p, q);
            let fields = par_map(threads, levels, |l| {
                let mut data: Vec<Complex64> =
                    spectra[l].iter().zip(&sym).map(|(s, m)| s * m).collect();
                spectral.fft.inverse(&mut data);
                data.into_iter().map(|z| z.re).collect::<Vec<f64>>()
            });
            space_fields.push(fields);
        }
        for j in 0..=(3 - k) {
            let mut sup = 0.0f64;
            for fields in &space_fields {
                for l in 0..levels {
                    let stencil = time_stencil(j, l, levels, dt);
                    for p in 0..g {
                        let mut acc = 0.0;
                        for &(sl, w) in &stencil {
                            acc += w * fields[sl][p];
                        }
                        sup = sup.max(acc.abs());
                    }
                }
            }
            components.push((j, k, sup));
        }
    }
    let level_max = |l: usize| -> f64 {
        components
            .iter()
            .filter(|&&(j, k, _)| j + k <= l)
            .map(|&(_, _, v)| v)
            .fold(0.0, f64::max)
    };
    NormLadder {
        c0: level_max(0),
        c1: level_max(1),
        c2: level_max(2),
        c3: level_max(3),
        components,
    }
}

/// Norm ladder of a converged solution.
pub fn norm_ladder(sol: &GeodesicSolution) -> NormLadder {
    let spectral = FiberSpectral::new(&sol.torus);
    norm_ladder_raw(&spectral, sol.nt, sol.dt(), &sol.u, 1)
}

/// Sup of |third mixed derivatives| over grid points within coordinate
/// distance 1/4 of the origin fixed point and the last two interior levels
/// plus the t = 1 boundary; time stencils are one-sided from above.
///
/// Only time-involving combinations (j >= 1) enter: the pure spatial third
/// derivative of the fixed boundary datum is epsilon-independent and would
/// mask the regularity loss this diagnostic tracks. The (0,3) component
/// stays available through the norm ladder.
fn third_derivative_diagnostic(
    spectral: &FiberSpectral,
    torus: &TorusSpec,
    nt: usize,
    dt: f64,
    u: &[f64],
) -> f64 {
    let g = spectral.grid;
    let levels = nt + 2;
    let n = torus.n;
    let h = torus.spacing();
    let mut window = Vec::new();
    for ix in 0..n {
        for iy in 0..n {
            let dx = torus.wrap(ix as f64 * h);
            let dy = torus.wrap(iy as f64 * h);
            if (dx * dx + dy * dy).sqrt() <= 0.25 {
                window.push(ix * n + iy);
            }
        }
    }
    let spectra: Vec<Vec<Complex64>> = (0..levels)
        .map(|l| spectral.spectrum(&u[l * g..(l + 1) * g]))
        .collect();
    let eval_levels = [nt - 1, nt, nt + 1];
    let mut sup = 0.0f64;
    for j in 1..=3usize {
        let k = 3 - j;
        for p in 0..=k {
            let q = k - p;
            let sym = spectral.power_symbol(p, q);
            let fields: Vec<Vec<f64>> = (0..levels)
                .map(|l| {
                    let mut data: Vec<Complex64> =
                        spectra[l].iter().zip(&sym).map(|(s, m)| s * m).collect();
                    spectral.fft.inverse(&mut data);
                    data.into_iter().map(|z| z.re).collect()
                })
                .collect();
            for &l in &eval_levels {
                // One-sided from above so the stencil hugs the t = 1 boundary.
                let stencil: Vec<(usize, f64)> = match j {
                    0 => vec![(l, 1.0)],
                    1 => vec![(l, 1.5 / dt), (l - 1, -2.0 / dt), (l - 2, 0.5 / dt)],
                    2 => {
                        let dt2 = dt * dt;
                        vec![
                            (l, 2.0 / dt2),
                            (l - 1, -5.0 / dt2),
                            (l - 2, 4.0 / dt2),
                            (l - 3, -1.0 / dt2),
                        ]
                    }
                    _ => {
                        let dt3 = dt * dt * dt;
                        vec![
                            (l, 2.5 / dt3),
                            (l - 1, -9.0 / dt3),
                            (l - 2, 12.0 / dt3),
                            (l - 3, -7.0 / dt3),
                            (l - 4, 1.5 / dt3),
                        ]
                    }
                };
                for &idx in &window {
                    let mut acc = 0.0;
                    for &(sl, w) in &stencil {
                        acc += w * fields[sl][idx];
                    }
                    sup = sup.max(acc.abs());
                }
            }
        }
    }
    sup
}

/// Max over the space-time grid of |u(t, z) - u(t, -z)|. For h-invariant
/// boundary data this vanishes to solver tolerance by uniqueness, without
/// symmetry ever being imposed.
pub fn symmetry_check(sol: &GeodesicSolution) -> f64 {
    let mut worst = 0.0f64;
    for l in 0..sol.levels() {
        let field = sol.level_field(l);
        let pulled = involution_pullback(&field);
        for (a, b) in field.values.iter().zip(&pulled.values) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Discrete comparison: with v1 <= v2 pointwise and both problems solved at
/// the same epsilon, u1 must stay below u2 up to solver slack.
pub fn monotonicity_check(sol1: &GeodesicSolution, sol2: &GeodesicSolution, slack: f64) -> bool {
    assert_eq!(sol1.u.len(), sol2.u.len());
    sol1.u.iter().zip(&sol2.u).all(|(a, b)| *a <= *b + slack)
}

/// Pointwise squared length of a (1,0)-form in the metric with Hermitian
/// coefficient matrices `omega`: sum omega^{jk} f_j conj(f_k).
pub fn metric_length_sq(
    omega: &[ComplexMatrix],
    f: &[Vec<Complex64>],
    tol: f64,
) -> Result<Vec<f64>> {
    if omega.len() != f.len() {
        return Err(LabError::invalid("f", "field lengths differ"));
    }
    let mut out = Vec::with_capacity(f.len());
    for (om, fv) in omega.iter().zip(f) {
        let min_eig = om.min_hermitian_eigenvalue();
        if min_eig <= tol {
            return Err(LabError::DegenerateMetric { min_eig, tol });
        }
        let g = om.solve(fv)?;
        let val: Complex64 = fv.iter().zip(&g).map(|(fi, gi)| fi.conj() * gi).sum();
        out.push(val.re);
    }
    Ok(out)
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepRow {
    pub epsilon: f64,
    pub converged: bool,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub third_deriv_diagnostic: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

/// Solves the boundary problem along a decreasing epsilon schedule with
/// warm starts, recording the norm ladder and the third-derivative
/// diagnostic per level. Solver failures are recorded and the sweep
/// continues from the last good iterate.
pub fn epsilon_sweep(
    boundary: &ScalarField,
    nt: usize,
    schedule: &[f64],
    config: &SolverConfig,
) -> Result<SweepReport> {
    if schedule.is_empty() {
        return Err(LabError::invalid("schedule", "must be nonempty"));
    }
    for w in schedule.windows(2) {
        if w[1] >= w[0] {
            return Err(LabError::invalid("schedule", "must be strictly decreasing"));
        }
    }
    let mut rows = Vec::with_capacity(schedule.len());
    let mut prior: Option<GeodesicSolution> = None;
    for &eps in schedule {
        let problem = GeodesicProblem::new(boundary.clone(), eps, nt)?;
        let attempt = newton_solve(&problem, config, prior.as_ref());
        match attempt {
            Ok(sol) => {
                rows.push(SweepRow {
                    epsilon: eps,
                    converged: true,
                    residual_norm: sol.residual_norm,
                    newton_iterations: sol.newton_iterations,
                    c0: sol.norm_ladder.c0,
                    c1: sol.norm_ladder.c1,
                    c2: sol.norm_ladder.c2,
                    c3: sol.norm_ladder.c3,
                    third_deriv_diagnostic: sol.third_deriv_diagnostic,
                    error: None,
                });
                prior = Some(sol);
            }
            Err(e) => {
                rows.push(SweepRow {
                    epsilon: eps,
                    converged: false,
                    residual_norm: f64::NAN,
                    newton_iterations: 0,
                    c0: f64::NAN,
                    c1: f64::NAN,
                    c2: f64::NAN,
                    c3: f64::NAN,
                    third_deriv_diagnostic: f64::NAN,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(SweepReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = std::f64::consts::TAU;

    fn torus32() -> TorusSpec {
        TorusSpec::new(1, 4.0, 32).unwrap()
    }

    /// u(t) = eps t^2/2 + (c - eps/2) t, the exact solution for constant
    /// boundary c.
    fn closed_form(c: f64, eps: f64, t: f64) -> f64 {
        eps * t * t / 2.0 + (c - eps / 2.0) * t
    }

    fn fill_time_profile(torus: &TorusSpec, nt: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let g = torus.len();
        let dt = 1.0 / (nt + 1) as f64;
        let mut u = vec![0.0; (nt + 2) * g];
        for l in 0..nt + 2 {
            let val = f(l as f64 * dt);
            for p in 0..g {
                u[l * g + p] = val;
            }
        }
        u
    }

    #[test]
    fn residual_zero_solution() {
        let torus = torus32();
        let u = vec![0.0; 10 * torus.len()];
        let r = geodesic_residual(&torus, 8, &u, 0.0).unwrap();
        assert!(max_abs(&r) == 0.0);
    }

    #[test]
    fn residual_closed_form_is_exact() {
        let torus = torus32();
        let (c, eps) = (0.3, 0.01);
        let u = fill_time_profile(&torus, 8, |t| closed_form(c, eps, t));
        let r = geodesic_residual(&torus, 8, &u, eps).unwrap();
        assert!(max_abs(&r) < 1e-12, "residual {}", max_abs(&r));
    }

    #[test]
    fn residual_linear_guess_is_minus_speed() {
        // u = t v at eps = 0: residual = -|v_z|^2.
        let torus = torus32();
        let l = torus.period;
        let v = ScalarField::from_fn(torus, |c| 0.2 * (TAU * c[0] / l).cos());
        let nt = 8;
        let g = torus.len();
        let dt = 1.0 / (nt + 1) as f64;
        let mut u = vec![0.0; (nt + 2) * g];
        for lev in 0..nt + 2 {
            let t = lev as f64 * dt;
            for p in 0..g {
                u[lev * g + p] = t * v.values[p];
            }
        }
        let r = geodesic_residual(&torus, nt, &u, 0.0).unwrap();
        let vz = crate::torus::wirtinger_derivative(&v, &[crate::torus::Wirt::z(0)]).unwrap();
        for i in 0..nt {
            for p in 0..g {
                let expect = -vz[p].norm_sqr();
                assert!(
                    (r[i * g + p] - expect).abs() < 1e-12,
                    "i={i} p={p}: {} vs {expect}",
                    r[i * g + p]
                );
            }
        }
    }

    #[test]
    fn newton_matches_constant_closed_form() {
        let torus = torus32();
        let (c, eps) = (0.3, 0.01);
        let v = ScalarField::constant(torus, c);
        let problem = GeodesicProblem::new(v, eps, 16).unwrap();
        let config = SolverConfig::default();
        let sol = newton_solve(&problem, &config, None).unwrap();
        assert!(sol.residual_norm <= config.newton_tol);
        let dt = sol.dt();
        let mut worst = 0.0f64;
        for l in 0..sol.levels() {
            let expect = closed_form(c, eps, l as f64 * dt);
            for &val in sol.level(l) {
                worst = worst.max((val - expect).abs());
            }
        }
        assert!(worst <= 1e-8, "deviation {worst}");
    }

    #[test]
    fn newton_zero_boundary_closed_form() {
        // v = 0 still has the nonzero profile eps t (t - 1) / 2.
        let torus = torus32();
        let eps = 0.01;
        let v = ScalarField::constant(torus, 0.0);
        let problem = GeodesicProblem::new(v, eps, 16).unwrap();
        let sol = newton_solve(&problem, &SolverConfig::default(), None).unwrap();
        let dt = sol.dt();
        for l in 0..sol.levels() {
            let t = l as f64 * dt;
            let expect = eps * t * (t - 1.0) / 2.0;
            for &val in sol.level(l) {
                assert!((val - expect).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn newton_small_cosine_data() {
        let torus = torus32();
        let l = torus.period;
        let v = ScalarField::from_fn(torus, |c| 0.05 * (TAU * c[0] / l).cos());
        let problem = GeodesicProblem::new(v, 0.01, 8).unwrap();
        let config = SolverConfig::default();
        let sol = newton_solve(&problem, &config, None).unwrap();
        assert!(sol.residual_norm <= config.newton_tol);
        // Equivariant pipeline: symmetry without imposing it.
        assert!(symmetry_check(&sol) <= 10.0 * config.newton_tol);
        // Warm start at a smaller epsilon converges quickly.
        let problem2 = GeodesicProblem::new(sol_boundary(&sol), 0.005, 8).unwrap();
        let sol2 = newton_solve(&problem2, &config, Some(&sol)).unwrap();
        assert!(sol2.residual_norm <= config.newton_tol);
        assert!(sol2.newton_iterations <= 6, "iters {}", sol2.newton_iterations);
    }

    fn sol_boundary(sol: &GeodesicSolution) -> ScalarField {
        sol.level_field(sol.nt + 1)
    }

    #[test]
    fn monotone_comparison() {
        let torus = torus32();
        let eps = 0.01;
        let config = SolverConfig::default();
        let v1 = ScalarField::constant(torus, 0.0);
        let v2 = ScalarField::constant(torus, 0.3);
        let s1 = newton_solve(&GeodesicProblem::new(v1, eps, 8).unwrap(), &config, None).unwrap();
        let s2 = newton_solve(&GeodesicProblem::new(v2, eps, 8).unwrap(), &config, None).unwrap();
        let slack = 10.0 * 2.0 * config.newton_tol;
        assert!(monotonicity_check(&s1, &s2, slack));
        assert!(!monotonicity_check(&s2, &s1, slack));
        // Equal data: both orders hold within slack.
        assert!(monotonicity_check(&s1, &s1, slack));

        let l = torus.period;
        let w1 = ScalarField::from_fn(torus, |c| 0.05 * (TAU * c[0] / l).cos());
        let w2 = ScalarField::from_fn(torus, |c| 0.05 * (TAU * c[0] / l).cos() + 0.1);
        let t1 = newton_solve(&GeodesicProblem::new(w1, eps, 8).unwrap(), &config, None).unwrap();
        let t2 = newton_solve(&GeodesicProblem::new(w2, eps, 8).unwrap(), &config, None).unwrap();
        assert!(monotonicity_check(&t1, &t2, slack));
    }

    #[test]
    fn ladder_values_for_constant_boundary() {
        let torus = torus32();
        let (c, eps) = (0.3, 0.04);
        let v = ScalarField::constant(torus, c);
        let sol = newton_solve(
            &GeodesicProblem::new(v, eps, 16).unwrap(),
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let ladder = &sol.norm_ladder;
        // C0 = c: u increases to the boundary value.
        assert!((ladder.c0 - c).abs() < 1e-8, "c0 {}", ladder.c0);
        // Pure second time derivative is exactly eps.
        assert!((ladder.component(2, 0) - eps).abs() < 1e-7);
        // Quadratic in t: third time differences vanish.
        assert!(ladder.component(3, 0) < 1e-6);
        // Spatially constant: all mixed components vanish.
        for &(j, k, v) in &ladder.components {
            if k > 0 {
                assert!(v < 1e-8, "component ({j},{k}) = {v}");
            }
        }
        // Diagnostic near (1, x0) is zero for spatially constant data.
        assert!(sol.third_deriv_diagnostic < 1e-6);
    }

    #[test]
    fn ladder_zero_solution() {
        let torus = torus32();
        let spectral = FiberSpectral::new(&torus);
        let u = vec![0.0; 10 * torus.len()];
        let ladder = norm_ladder_raw(&spectral, 8, 0.1, &u, 1);
        assert_eq!(ladder.c3, 0.0);
    }

    #[test]
    fn metric_length_examples() {
        let one = ComplexMatrix::identity(1);
        let f = vec![vec![Complex64::new(0.3, 0.4)]];
        let out = metric_length_sq(&[one], &f, 1e-12).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-14);

        let two = ComplexMatrix::scalar(Complex64::new(2.0, 0.0));
        let out = metric_length_sq(&[two], &f, 1e-12).unwrap();
        assert!((out[0] - 0.125).abs() < 1e-14);

        let diag = ComplexMatrix::diagonal(&[Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)]);
        let f2 = vec![vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]];
        let out = metric_length_sq(&[diag], &f2, 1e-12).unwrap();
        assert!((out[0] - 1.5).abs() < 1e-14);

        let sing = ComplexMatrix::diagonal(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]);
        match metric_length_sq(&[sing], &f2, 1e-12) {
            Err(LabError::DegenerateMetric { .. }) => {}
            other => panic!("expected DegenerateMetric, got {other:?}"),
        }
    }

    #[test]
    fn sweep_constant_boundary() {
        let torus = torus32();
        let v = ScalarField::constant(torus, 0.3);
        let report = epsilon_sweep(&v, 8, &[0.1, 0.05], &SolverConfig::default()).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert!(row.converged);
            assert!(row.third_deriv_diagnostic < 1e-6);
        }
        // schedule validation
        assert!(epsilon_sweep(&v, 8, &[0.1, 0.2], &SolverConfig::default()).is_err());
        assert!(epsilon_sweep(&v, 8, &[], &SolverConfig::default()).is_err());
    }

    #[test]
    fn grid_refinement_second_order() {
        // Nested refinements: N doubles and dt halves (nt: 8 -> 17 -> 35
        // keeps the levels aligned). Spatial error is spectral for analytic
        // data, so the observed rate tracks the O(dt^2) time stencils.
        let eps = 0.05;
        let config = SolverConfig::default();
        let mut solutions = Vec::new();
        for (n, nt) in [(16usize, 8usize), (32, 17), (64, 35)] {
            let torus = TorusSpec::new(1, 4.0, n).unwrap();
            let l = torus.period;
            let v = ScalarField::from_fn(torus, |c| {
                0.05 * (TAU * c[0] / l).cos() + 0.03 * (TAU * c[1] / l).cos()
            });
            let sol = newton_solve(&GeodesicProblem::new(v, eps, nt).unwrap(), &config, None).unwrap();
            solutions.push(sol);
        }
        let diff = |coarse: &GeodesicSolution, fine: &GeodesicSolution| -> f64 {
            let nc = coarse.torus.n;
            let mut worst = 0.0f64;
            for lc in 0..coarse.levels() {
                let lf = 2 * lc;
                let cl = coarse.level(lc);
                let fl = fine.level(lf);
                for ix in 0..nc {
                    for iy in 0..nc {
                        let cv = cl[ix * nc + iy];
                        let fv = fl[(2 * ix) * fine.torus.n + 2 * iy];
                        worst = worst.max((cv - fv).abs());
                    }
                }
            }
            worst
        };
        let e1 = diff(&solutions[0], &solutions[1]);
        let e2 = diff(&solutions[1], &solutions[2]);
        let rate = e1 / e2;
        assert!(
            (2.5..=6.5).contains(&rate),
            "refinement rate {rate:.2} outside second-order band (e1 {e1:.3e}, e2 {e2:.3e})"
        );
    }

    #[test]
    fn threads_do_not_change_results() {
        let torus = torus32();
        let l = torus.period;
        let v = ScalarField::from_fn(torus, |c| 0.05 * (TAU * c[0] / l).cos());
        let mut config = SolverConfig::default();
        let s1 = newton_solve(&GeodesicProblem::new(v.clone(), 0.05, 8).unwrap(), &config, None).unwrap();
        config.threads = 4;
        let s4 = newton_solve(&GeodesicProblem::new(v, 0.05, 8).unwrap(), &config, None).unwrap();
        let diff: f64 = s1
            .u
            .iter()
            .zip(&s4.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert_eq!(diff, 0.0, "thread count changed the iterate path");
    }
}
