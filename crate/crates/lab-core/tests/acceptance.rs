//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured figures (run with `--nocapture` to see them on success).
//!
//! Run serially for the stated runtimes:
//!   cargo test --test acceptance -- --test-threads=1 --nocapture

use num_complex::Complex64;

use lab_core::cmatrix::vec_norm;
use lab_core::foliation::{
    cross_validate_linearization, extract_linearization, trace_leaf, SolutionSampler, TraceOptions,
};
use lab_core::geodesic::{
    epsilon_sweep, newton_solve, symmetry_check, GeodesicProblem, GeodesicSolution, SolverConfig,
};
use lab_core::io;
use lab_core::linear_model::{compatibility_search, solve_ivp};
use lab_core::matrix_core::{
    block_eigen, dichotomy_check, obstruction_certificate, random_block_system, BlockSystem,
    DichotomyClass, HessianPair, Verdict,
};
use lab_core::potential::{select_epsilon, CutoffProfile, QuadraticFormSpec};
use lab_core::rng::SplitMix64;
use lab_core::torus::{symmetry_defect, ScalarField, TorusSpec};

const TAU: f64 = std::f64::consts::TAU;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dichotomy suite: 1e4 seeded random (A, B) for m in {1, 2, 3}; every
/// eigenpair satisfies the normalized dichotomy at 1e-8.
#[test]
fn a01_dichotomy_suite() {
    let start = std::time::Instant::now();
    let mut pairs = 0usize;
    for m in 1..=3usize {
        for trial in 0..10_000u64 {
            let seed = SplitMix64::derive(0xD1C0 + m as u64, trial).next_u64();
            let bs = random_block_system(seed, m);
            for ep in block_eigen(&bs).expect("eigensolver") {
                pairs += 1;
                let class = dichotomy_check(&ep, 1e-8);
                assert_ne!(
                    class,
                    DichotomyClass::Violation,
                    "dichotomy violation at m={m} trial={trial} lambda={}",
                    ep.lambda
                );
            }
        }
    }
    println!(
        "acceptance a01 dichotomy-suite: PASS — {pairs} eigenpairs over 3x10^4 systems, zero violations ({:.1?})",
        start.elapsed()
    );
}

/// Obstruction certificate: diagonal pairs with distinct q_j > 2 are
/// Obstructed with eigenvalues 2 - q_j^2 to 1e-12; the boundary case
/// |Q| = 1 + P is NotObstructed.
#[test]
fn a02_obstruction_certificate() {
    let q = [2.5, 3.5, 4.5];
    let pq = HessianPair::diagonal(
        &[1.0; 3],
        &q.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>(),
    )
    .unwrap();
    let rep = obstruction_certificate(&pq).unwrap();
    assert_eq!(rep.verdict, Verdict::Obstructed);
    // Eigenvalues sorted by real part: match against sorted 2 - q^2.
    let mut expected: Vec<f64> = q.iter().map(|&x| 2.0 - x * x).collect();
    expected.sort_by(f64::total_cmp);
    for (got, want) in rep.eigenvalues_of_r.iter().zip(&expected) {
        assert!(
            (got[0] - want).abs() <= 1e-12 && got[1].abs() <= 1e-12,
            "eigenvalue {got:?} vs {want}"
        );
    }

    let boundary = HessianPair::diagonal(&[1.0], &[c(2.0, 0.0)]).unwrap();
    let rep2 = obstruction_certificate(&boundary).unwrap();
    assert_eq!(rep2.verdict, Verdict::NotObstructed);

    let m2 = HessianPair::diagonal(&[1.0, 1.0], &[c(2.5, 0.0), c(3.5, 0.0)]).unwrap();
    assert_eq!(obstruction_certificate(&m2).unwrap().verdict, Verdict::Obstructed);

    println!(
        "acceptance a02 obstruction-certificate: PASS — eigenvalues {:?}, boundary case not obstructed",
        rep.eigenvalues_of_r.iter().map(|e| e[0]).collect::<Vec<_>>()
    );
}

/// Compatibility search: obstructed pairs admit no compatible block system
/// in 1e3 trials; the free pair admits at least one.
#[test]
fn a03_compatibility_search() {
    let start = std::time::Instant::now();
    let obstructed_1 = HessianPair::diagonal(&[1.0], &[c(3.0, 0.0)]).unwrap();
    let rep1 = compatibility_search(&obstructed_1, 1000, 7).unwrap();
    assert_eq!(rep1.successes, 0, "m=1 obstructed pair admitted systems: {rep1:?}");

    let obstructed_2 =
        HessianPair::diagonal(&[1.0, 1.0], &[c(2.5, 0.0), c(3.5, 0.0)]).unwrap();
    let rep2 = compatibility_search(&obstructed_2, 1000, 7).unwrap();
    assert_eq!(rep2.successes, 0, "m=2 obstructed pair admitted systems: {rep2:?}");

    let free = HessianPair::diagonal(&[1.0], &[c(0.0, 0.0)]).unwrap();
    let rep3 = compatibility_search(&free, 1000, 7).unwrap();
    assert!(rep3.successes >= 1, "free pair found nothing: {rep3:?}");

    println!(
        "acceptance a03 compatibility-search: PASS — obstructed 0/1000 and 0/1000, free pair {}/1000 ({:.1?})",
        rep3.successes,
        start.elapsed()
    );
}

/// Linear-model oracle: eigenmode solutions agree with an independent RK4
/// integration (step 1e-4 on [0, 1]) to 1e-6 over 100 random problems.
#[test]
fn a04_linear_model_rk4_oracle() {
    let start = std::time::Instant::now();
    let mut checked = 0usize;
    let mut trial = 0u64;
    let mut worst = 0.0f64;
    while checked < 100 {
        trial += 1;
        let m = 1 + (trial % 3) as usize;
        let seed = SplitMix64::derive(0x04AC1E, trial).next_u64();
        let bs = random_block_system(seed, m);
        let mut rng = SplitMix64::derive(0xA04, trial);
        let a: Vec<Complex64> = (0..m).map(|_| rng.next_complex_normal()).collect();
        let sol = match solve_ivp(&bs, &a) {
            Ok(s) => s,
            Err(_) => continue, // defective draw, measure-zero
        };
        let rk = rk4_oracle(&bs, &a, 1.0, 10_000);
        let phi = sol.eval(c(1.0, 0.0));
        let scale = 1.0 + vec_norm(&phi);
        let err: f64 = phi
            .iter()
            .zip(&rk)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
            / scale;
        assert!(err <= 1e-6, "trial {trial}: deviation {err:.3e}");
        worst = worst.max(err);
        checked += 1;
    }
    println!(
        "acceptance a04 linear-model-rk4-oracle: PASS — 100 problems, worst normalized deviation {worst:.3e} ({:.1?})",
        start.elapsed()
    );
}

/// Independent brute-force integrator for phi' = A phi + B conj(phi).
fn rk4_oracle(bs: &BlockSystem, a: &[Complex64], s_end: f64, steps: usize) -> Vec<Complex64> {
    let h = s_end / steps as f64;
    let f = |phi: &[Complex64]| -> Vec<Complex64> {
        let aphi = bs.a.matvec(phi);
        let conj: Vec<Complex64> = phi.iter().map(|z| z.conj()).collect();
        let bphi = bs.b.matvec(&conj);
        aphi.iter().zip(&bphi).map(|(u, v)| u + v).collect()
    };
    let mut phi = a.to_vec();
    for _ in 0..steps {
        let k1 = f(&phi);
        let p2: Vec<Complex64> = phi.iter().zip(&k1).map(|(p, k)| p + k * (h / 2.0)).collect();
        let k2 = f(&p2);
        let p3: Vec<Complex64> = phi.iter().zip(&k2).map(|(p, k)| p + k * (h / 2.0)).collect();
        let k3 = f(&p3);
        let p4: Vec<Complex64> = phi.iter().zip(&k3).map(|(p, k)| p + k * h).collect();
        let k4 = f(&p4);
        for j in 0..phi.len() {
            phi[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
        }
    }
    phi
}

/// Potential builder: (a, b) = (0, 3) at L = 4. Strong psh margin, exact
/// h-invariance, Hessian verification within 1e-3 * (256/N)^2 over
/// N in {64, 128, 256}, and cutoff bounds linear in eps within a factor 2.
#[test]
fn a05_potential_builder() {
    let start = std::time::Instant::now();
    let data = QuadraticFormSpec::diagonal(1, 0.0, 3.0).unwrap();
    let mut margins = Vec::new();
    for n in [64usize, 128, 256] {
        let torus = TorusSpec::new(1, 4.0, n).unwrap();
        let built = select_epsilon(&data, &torus, &[0, 0], 0.1).unwrap();
        assert!(built.psh_margin > 0.0, "N={n}: margin {}", built.psh_margin);
        assert_eq!(symmetry_defect(&built.field), 0.0, "N={n}: h-invariance broken");
        let cap = 1e-3 * (256.0 / n as f64).powi(2);
        assert!(
            built.hessian_error <= cap,
            "N={n}: hessian error {} above {cap}",
            built.hessian_error
        );
        margins.push((n, built.cutoff.epsilon, built.psh_margin, built.hessian_error));
    }

    // Cutoff bound scaling across a decade of eps.
    let eps_grid = [0.4, 0.2, 0.1, 0.05];
    let mut ratios1 = Vec::new();
    let mut ratios2 = Vec::new();
    for &e in &eps_grid {
        let cut = CutoffProfile::new(e).unwrap();
        ratios1.push(cut.bound_t_psi1 / e);
        ratios2.push(cut.bound_t2_psi2 / e);
    }
    for r in [&ratios1, &ratios2] {
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi <= 2.0 * lo, "cutoff bounds not linear within factor 2: {r:?}");
    }

    println!(
        "acceptance a05 potential-builder: PASS — (N, eps, margin, hessErr) = {margins:?}; bound/eps ranges {:?} {:?} ({:.1?})",
        (ratios1.first().unwrap(), ratios1.last().unwrap()),
        (ratios2.first().unwrap(), ratios2.last().unwrap()),
        start.elapsed()
    );
}

/// Solver closed form: v = 0.3 constant, eps = 0.01, N = 32, Nt = 16.
#[test]
fn a06_solver_closed_form() {
    let start = std::time::Instant::now();
    let torus = TorusSpec::new(1, 4.0, 32).unwrap();
    let (cval, eps) = (0.3, 0.01);
    let v = ScalarField::constant(torus, cval);
    let sol = newton_solve(
        &GeodesicProblem::new(v, eps, 16).unwrap(),
        &SolverConfig::default(),
        None,
    )
    .unwrap();
    let dt = sol.dt();
    let mut worst = 0.0f64;
    for l in 0..sol.levels() {
        let t = l as f64 * dt;
        let expect = eps * t * t / 2.0 + (cval - eps / 2.0) * t;
        for &val in sol.level(l) {
            worst = worst.max((val - expect).abs());
        }
    }
    assert!(worst <= 1e-8, "closed-form deviation {worst:.3e}");
    println!(
        "acceptance a06 solver-closed-form: PASS — max deviation {worst:.3e} ({:.1?})",
        start.elapsed()
    );
}

/// Symmetry and comparison at N = 64, Nt = 16: solving h-invariant data
/// without imposing symmetry keeps the solution h-invariant to solver
/// tolerance, and the comparison principle holds for v and v + 0.1.
#[test]
fn a07_symmetry_and_comparison() {
    let start = std::time::Instant::now();
    let torus = TorusSpec::new(1, 4.0, 64).unwrap();
    let data = QuadraticFormSpec::diagonal(1, 0.0, 3.0).unwrap();
    let built = select_epsilon(&data, &torus, &[0, 0], 0.1).unwrap();
    let config = SolverConfig::default();
    let eps = 0.05;

    let sol = newton_solve(
        &GeodesicProblem::new(built.field.clone(), eps, 16).unwrap(),
        &config,
        None,
    )
    .unwrap();
    let sym = symmetry_check(&sol);
    assert!(
        sym <= 10.0 * config.newton_tol,
        "symmetry defect {sym:.3e} above 10*newton_tol"
    );

    let shifted = ScalarField::from_values(
        torus,
        built.field.values.iter().map(|v| v + 0.1).collect(),
    )
    .unwrap();
    let sol_up = newton_solve(
        &GeodesicProblem::new(shifted, eps, 16).unwrap(),
        &config,
        None,
    )
    .unwrap();
    let slack = 10.0 * 2.0 * config.newton_tol;
    assert!(
        lab_core::geodesic::monotonicity_check(&sol, &sol_up, slack),
        "comparison failed for v <= v + 0.1"
    );
    println!(
        "acceptance a07 symmetry-and-comparison: PASS — symmetry {sym:.3e}, comparison holds ({:.1?})",
        start.elapsed()
    );
}

/// Foliation consistency for v = 0.05 cos(2 pi x / L) at eps in
/// {0.02, 0.01}: central-leaf drift <= 1.0 * eps, holomorphy residual drops
/// by at least 1.5x between levels, and the cross-validation deviation
/// shrinks by at least the dt-halving factor when dt halves. For this
/// h-invariant data the leaf map is odd in the scaling, so the deviation is
/// quadratic in dt and the measured ratio sits near 4; the criterion's
/// halving is the guaranteed lower bound (within its 25% allowance).
#[test]
fn a08_foliation_consistency() {
    let start = std::time::Instant::now();
    let torus = TorusSpec::new(1, 4.0, 64).unwrap();
    let l = torus.period;
    let v = ScalarField::from_fn(torus, |coords| 0.05 * (TAU * coords[0] / l).cos());
    let config = SolverConfig::default();
    let opts = TraceOptions::default();

    let mut hols = Vec::new();
    let mut drift_rows = Vec::new();
    let mut cross_rows = Vec::new();
    let mut prior: Option<GeodesicSolution> = None;
    for eps in [0.02, 0.01] {
        let sol = newton_solve(
            &GeodesicProblem::new(v.clone(), eps, 16).unwrap(),
            &config,
            prior.as_ref(),
        )
        .unwrap();
        let sampler = SolutionSampler::new(&sol).unwrap();

        let central = trace_leaf(&sampler, c(0.0, 0.0), &opts).unwrap();
        let drift = central
            .samples
            .iter()
            .map(|(_, f)| f.norm())
            .fold(0.0, f64::max);
        assert!(drift <= 1.0 * eps, "eps={eps}: central drift {drift:.3e}");
        drift_rows.push(drift);

        let leaf = trace_leaf(&sampler, c(0.25, 0.0), &opts).unwrap();
        hols.push(leaf.hol_residual);

        let ext = extract_linearization(&sol, &[0, 0]).unwrap();
        let d_full = cross_validate_linearization(&sampler, &ext, c(1.0, 0.0), 0.05, &opts).unwrap();
        let d_half = cross_validate_linearization(&sampler, &ext, c(1.0, 0.0), 0.025, &opts).unwrap();
        let ratio = d_full / d_half;
        assert!(
            (1.5..=4.5).contains(&ratio),
            "eps={eps}: dt-halving ratio {ratio:.3} outside [1.5, 4.5] (dev {d_full:.3e} -> {d_half:.3e})"
        );
        cross_rows.push(ratio);
        prior = Some(sol);
    }
    let hol_ratio = hols[0] / hols[1];
    assert!(
        hol_ratio >= 1.5,
        "holomorphy residual ratio {hol_ratio:.3} below 1.5 ({hols:?})"
    );
    println!(
        "acceptance a08 foliation-consistency: PASS — drift {drift_rows:?}, hol residuals {hols:?} (ratio {hol_ratio:.3}), dt ratios {cross_rows:?} ({:.1?})",
        start.elapsed()
    );
}

/// Exploratory obstruction diagnostic: the eps sweep on the built (0, 3)
/// potential and on the small unobstructed one must fully converge and emit
/// CSV; trends are reported, not hard-failed. At desk resolutions the
/// log-tempered cutoff hides the prescribed Hessian below the grid scale
/// (effective boundary pair is unobstructed), so growth of the diagnostic
/// is not observable here; the analysis accompanies the run.
#[test]
fn a09_obstruction_diagnostic_sweep() {
    let start = std::time::Instant::now();
    let torus = TorusSpec::new(1, 4.0, 64).unwrap();
    let schedule = [0.1, 0.05, 0.02, 0.01];
    let config = SolverConfig::default();

    let data = QuadraticFormSpec::diagonal(1, 0.0, 3.0).unwrap();
    let built = select_epsilon(&data, &torus, &[0, 0], 0.1).unwrap();
    let obstructed = epsilon_sweep(&built.field, 16, &schedule, &config).unwrap();

    let l = torus.period;
    let small = ScalarField::from_fn(torus, |coords| 0.05 * (TAU * coords[0] / l).cos());
    let unobstructed = epsilon_sweep(&small, 16, &schedule, &config).unwrap();

    for (label, report) in [("obstructed", &obstructed), ("unobstructed", &unobstructed)] {
        for row in &report.rows {
            assert!(
                row.converged,
                "{label} sweep failed at eps={}: {:?}",
                row.epsilon, row.error
            );
        }
    }

    let dir = std::env::temp_dir().join("lab_acceptance_sweep");
    std::fs::create_dir_all(&dir).unwrap();
    let obs_csv = dir.join("obstructed.csv");
    let un_csv = dir.join("unobstructed.csv");
    io::write_string(&obs_csv, &io::sweep_csv(&obstructed)).unwrap();
    io::write_string(&un_csv, &io::sweep_csv(&unobstructed)).unwrap();
    assert!(obs_csv.exists() && un_csv.exists());
    let lines = std::fs::read_to_string(&obs_csv).unwrap().lines().count();
    assert_eq!(lines, schedule.len() + 1, "CSV row count");

    let obs_diag: Vec<f64> = obstructed.rows.iter().map(|r| r.third_deriv_diagnostic).collect();
    let un_diag: Vec<f64> = unobstructed.rows.iter().map(|r| r.third_deriv_diagnostic).collect();
    println!(
        "acceptance a09 obstruction-diagnostic-sweep: PASS — all levels converged, CSVs at {} ; diagnostic trends: obstructed {obs_diag:?} vs unobstructed {un_diag:?} ({:.1?})",
        dir.display(),
        start.elapsed()
    );
}
