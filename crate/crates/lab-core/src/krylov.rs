//! Restarted GMRES with right preconditioning.
//!
//! Matrix-free: the caller provides the operator and preconditioner as
//! closures over flat `f64` vectors. Modified Gram-Schmidt Arnoldi with
//! Givens rotations on the Hessenberg least-squares problem.

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            restart: 60,
            max_iters: 600,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves A x = b with right preconditioning: A M^{-1} y = b, x = M^{-1} y.
/// `apply(v, out)` writes A v, `precond(v, out)` writes M^{-1} v. `x` holds
/// the initial guess on entry and the solution on exit.
pub fn gmres<A, P>(apply: A, precond: P, b: &[f64], x: &mut [f64], opts: &GmresOptions) -> GmresOutcome
where
    A: Fn(&[f64], &mut [f64]),
    P: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let tol = opts.rel_tol * b_norm;
    let mut total_iters = 0usize;

    let mut tmp = vec![0.0; n];
    let mut av = vec![0.0; n];
    let mut residual = {
        apply(x, &mut av);
        let r: Vec<f64> = b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect();
        r
    };
    let mut res_norm = norm(&residual);

    while res_norm > tol && total_iters < opts.max_iters {
        let m = opts.restart.min(opts.max_iters - total_iters).max(1);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        basis.push(residual.iter().map(|v| v / res_norm).collect());
        let mut h = vec![vec![0.0f64; m]; m + 1];
        let mut cs = vec![0.0f64; m];
        let mut sn = vec![0.0f64; m];
        let mut g = vec![0.0f64; m + 1];
        g[0] = res_norm;
        let mut k_used = 0;

        for k in 0..m {
            total_iters += 1;
            precond(&basis[k], &mut tmp);
            apply(&tmp, &mut av);
            // Modified Gram-Schmidt
            let mut w = av.clone();
            for (j, vj) in basis.iter().enumerate() {
                let dot: f64 = w.iter().zip(vj).map(|(a, b)| a * b).sum();
                h[j][k] = dot;
                for (wi, vi) in w.iter_mut().zip(vj) {
                    *wi -= dot * vi;
                }
            }
            let w_norm = norm(&w);
            h[k + 1][k] = w_norm;
            // Apply accumulated rotations to the new column.
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom > 0.0 {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
                h[k][k] = denom;
                h[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
            }
            k_used = k + 1;
            let approx_res = g[k + 1].abs();
            if w_norm <= 1e-14 * b_norm || approx_res <= tol {
                break;
            }
            basis.push(w.iter().map(|v| v / w_norm).collect());
        }

        // Back-substitute for the Krylov coefficients.
        let mut y = vec![0.0f64; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        // x += M^{-1} (V y)
        let mut update = vec![0.0f64; n];
        for (j, &yj) in y.iter().enumerate() {
            for (ui, vi) in update.iter_mut().zip(&basis[j]) {
                *ui += yj * vi;
            }
        }
        precond(&update, &mut tmp);
        for (xi, ti) in x.iter_mut().zip(&tmp) {
            *xi += ti;
        }

        apply(x, &mut av);
        residual = b.iter().zip(&av).map(|(bi, ai)| bi - ai).collect();
        res_norm = norm(&residual);
    }

    GmresOutcome {
        iterations: total_iters,
        residual: res_norm,
        converged: res_norm <= tol,
    }
}
