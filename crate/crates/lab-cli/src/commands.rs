//! Subcommand implementations.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;

use lab_core::cmatrix::ComplexMatrix;
use lab_core::foliation::{
    cross_validate_linearization, extract_linearization, trace_leaf, LinearizationExtract,
    SolutionSampler, TraceOptions,
};
use lab_core::geodesic::{
    epsilon_sweep, newton_solve, symmetry_check, GeodesicProblem, NormLadder, SolverConfig,
    SweepReport,
};
use lab_core::io;
use lab_core::linear_model::{compatibility_search, SearchReport};
use lab_core::matrix_core::{
    block_eigen, dichotomy_check, obstruction_certificate, random_block_system,
    random_common_basis_pair, DichotomyClass, HessianPair, ObstructionReport, DICHOTOMY_TOL,
};
use lab_core::potential::{select_epsilon, QuadraticFormSpec};
use lab_core::rng::SplitMix64;
use lab_core::torus::TorusSpec;
use lab_core::{LabError, Result};

use crate::args::Args;

pub fn dispatch(argv: &[String]) -> Result<()> {
    let args = Args::parse(argv)?;
    match args.command.as_str() {
        "obstruction" => cmd_obstruction(&args),
        "lemmas" => cmd_lemmas(&args),
        "build-potential" => cmd_build_potential(&args),
        "solve" => cmd_solve(&args),
        "sweep" => cmd_sweep(&args),
        "foliate" => cmd_foliate(&args),
        "report" => cmd_report(&args),
        other => Err(LabError::invalid(
            "command",
            format!("unknown command `{other}`; expected one of obstruction, lemmas, build-potential, solve, sweep, foliate, report"),
        )),
    }
}

fn diag_list(args: &Args, key: &'static str, m: usize, default: f64) -> Result<Vec<f64>> {
    let list = args.f64_list(key)?.unwrap_or_else(|| vec![default]);
    if list.len() == 1 {
        return Ok(vec![list[0]; m]);
    }
    if list.len() != m {
        return Err(LabError::invalid(
            key,
            format!("expected 1 or {m} comma-separated entries, got {}", list.len()),
        ));
    }
    Ok(list)
}

fn open_field(args: &Args, key: &'static str) -> Result<lab_core::torus::ScalarField> {
    let path = args.require(key)?;
    io::read_field(Path::new(&path))
        .map_err(|e| LabError::invalid(key, format!("cannot read field `{path}`: {e}")))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ObstructionCmdReport {
    schema: u32,
    m: usize,
    p_diag: Vec<f64>,
    q_diag: Vec<f64>,
    #[serde(flatten)]
    report: ObstructionReport,
}

fn cmd_obstruction(args: &Args) -> Result<()> {
    let m = args.usize_or("m", 1)?;
    if m == 0 || m > 8 {
        return Err(LabError::invalid("m", "dimension must lie in 1..=8"));
    }
    let p = diag_list(args, "p", m, 1.0)?;
    let q = diag_list(args, "q", m, 0.0)?;
    let out = args.string("out");
    args.finish()?;
    let pair = HessianPair::diagonal(
        &p,
        &q.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(),
    )?;
    let report = obstruction_certificate(&pair)?;
    let verdict = serde_json::to_string(&report.verdict)?;
    println!(
        "obstruction: m={m} verdict={} eigenvalues={:?}",
        verdict.trim_matches('"'),
        report.eigenvalues_of_r.iter().map(|e| e[0]).collect::<Vec<_>>()
    );
    if let Some(path) = out {
        io::write_json(
            Path::new(&path),
            &ObstructionCmdReport {
                schema: 1,
                m,
                p_diag: p,
                q_diag: q,
                report,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DichotomyStats {
    trials: usize,
    eigenpairs: usize,
    violations: usize,
    lambda_sq_real: usize,
    equal_norms: usize,
    both: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RSpectrumStats {
    samples: usize,
    min_eigenvalue: f64,
    below_minus_two: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LemmasReport {
    schema: u32,
    m: usize,
    seed: u64,
    dichotomy: DichotomyStats,
    free_pair_search: SearchReport,
    obstructed_q_diag: Vec<f64>,
    obstructed_pair_search: SearchReport,
    /// Empirical record for the spectrum of R on random common-eigenbasis
    /// pairs; no bound is asserted.
    r_spectrum: RSpectrumStats,
}

fn cmd_lemmas(args: &Args) -> Result<()> {
    let m = args.usize_or("m", 1)?;
    if m == 0 || m > 4 {
        return Err(LabError::invalid("m", "dimension must lie in 1..=4"));
    }
    let trials = args.usize_or("trials", 1000)?;
    if trials == 0 {
        return Err(LabError::invalid("trials", "must be positive"));
    }
    let seed = args.u64_or("seed", 1)?;
    let q_default: Vec<f64> = (0..m).map(|j| 2.5 + j as f64).collect();
    let q = match args.f64_list("q")? {
        Some(list) if list.len() == m => list,
        Some(list) => {
            return Err(LabError::invalid(
                "q",
                format!("expected {m} entries, got {}", list.len()),
            ))
        }
        None => q_default,
    };
    let out = args.string("out");
    args.finish()?;

    // Eigenvector dichotomy suite over seeded random block systems.
    let mut stats = DichotomyStats {
        trials,
        eigenpairs: 0,
        violations: 0,
        lambda_sq_real: 0,
        equal_norms: 0,
        both: 0,
    };
    for trial in 0..trials {
        let trial_seed = SplitMix64::derive(seed, trial as u64).next_u64();
        let bs = random_block_system(trial_seed, m);
        for ep in block_eigen(&bs)? {
            stats.eigenpairs += 1;
            match dichotomy_check(&ep, DICHOTOMY_TOL) {
                DichotomyClass::Violation => stats.violations += 1,
                DichotomyClass::LambdaSqReal => stats.lambda_sq_real += 1,
                DichotomyClass::EqualNorms => stats.equal_norms += 1,
                DichotomyClass::Both => stats.both += 1,
            }
        }
    }

    // Compatibility searches: the free pair admits systems, the obstructed
    // pair must admit none.
    let free = HessianPair::diagonal(&vec![1.0; m], &vec![Complex64::new(0.0, 0.0); m])?;
    let free_search = compatibility_search(&free, trials, seed)?;
    let obstructed = HessianPair::diagonal(
        &vec![1.0; m],
        &q.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>(),
    )?;
    let obstructed_search = compatibility_search(&obstructed, trials, seed.wrapping_add(1))?;

    // Spectrum of R over random common-basis pairs (recorded, not asserted).
    let r_samples = trials.min(2000);
    let mut min_eig = f64::INFINITY;
    let mut below = 0usize;
    for k in 0..r_samples {
        let mut rng = SplitMix64::derive(seed.wrapping_add(2), k as u64);
        let pair = random_common_basis_pair(&mut rng, m);
        let rep = obstruction_certificate(&pair)?;
        let lo = rep
            .eigenvalues_of_r
            .iter()
            .map(|e| e[0])
            .fold(f64::INFINITY, f64::min);
        if lo < min_eig {
            min_eig = lo;
        }
        if lo < -2.0 - 1e-9 {
            below += 1;
        }
    }

    println!(
        "lemmas: m={m} trials={trials} eigenpairs={} violations={} | free successes={} obstructed successes={} | min eig(R) over {} pairs = {:.6}",
        stats.eigenpairs,
        stats.violations,
        free_search.successes,
        obstructed_search.successes,
        r_samples,
        min_eig
    );

    let violations = stats.violations;
    if let Some(path) = out {
        io::write_json(
            Path::new(&path),
            &LemmasReport {
                schema: 1,
                m,
                seed,
                dichotomy: stats,
                free_pair_search: free_search,
                obstructed_q_diag: q,
                obstructed_pair_search: obstructed_search,
                r_spectrum: RSpectrumStats {
                    samples: r_samples,
                    min_eigenvalue: min_eig,
                    below_minus_two: below,
                },
            },
        )?;
    }
    if violations > 0 {
        return Err(LabError::PropertyViolated {
            what: "eigenvector dichotomy",
            count: violations,
        });
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BuildReport {
    schema: u32,
    epsilon: f64,
    psh_margin: f64,
    hessian_error: f64,
    grid_step_hessian_error: f64,
    fd_spacing: f64,
    cutoff_bound_t_psi1: f64,
    cutoff_bound_t2_psi2: f64,
    p: ComplexMatrix,
    q: ComplexMatrix,
    verdict: lab_core::matrix_core::Verdict,
    /// Boundary pair seen by the grid (spectral extraction at x0): differs
    /// from the prescribed one whenever the cutoff plateau is narrower than
    /// the grid spacing, and its verdict governs what solves at this
    /// resolution can exhibit.
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_effective_p: Option<ComplexMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_effective_q: Option<ComplexMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_effective_verdict: Option<lab_core::matrix_core::Verdict>,
}

fn cmd_build_potential(args: &Args) -> Result<()> {
    let m = args.usize_or("m", 1)?;
    let l = args.f64_or("l", 4.0)?;
    let n = args.usize_or("n", 256)?;
    let margin = args.f64_or("margin", 0.1)?;
    let a = diag_list(args, "a", m, 0.0)?;
    let b = diag_list(args, "b", m, 0.0)?;
    let out = args.require("out")?;
    let report_path = args.string("report");
    let csv_path = args.string("csv");
    args.finish()?;

    let torus = TorusSpec::new(m, l, n)?;
    let a_m = ComplexMatrix::diagonal(&a.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>());
    let b_m = ComplexMatrix::diagonal(&b.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>());
    let data = QuadraticFormSpec::new(a_m, b_m)?;
    let x0 = vec![0usize; torus.axes()];
    let built = select_epsilon(&data, &torus, &x0, margin)?;
    io::write_field(Path::new(&out), &built.field)?;
    if let Some(path) = csv_path {
        io::write_string(Path::new(&path), &io::field_csv(&built.field))?;
    }

    let pair = built.data.hessian_pair()?;
    let cert = obstruction_certificate(&pair)?;
    let effective = if m == 1 {
        let eff = lab_core::foliation::extract_boundary_pair(&built.field, &x0)?;
        let eff_cert = obstruction_certificate(&eff)?;
        Some((eff.p, eff.q, eff_cert.verdict))
    } else {
        None
    };
    println!(
        "build-potential: epsilon={} pshMargin={:.6} hessianError={:.3e} verdict={}",
        built.cutoff.epsilon,
        built.psh_margin,
        built.hessian_error,
        serde_json::to_string(&cert.verdict)?.trim_matches('"'),
    );
    if let Some(path) = report_path {
        io::write_json(
            Path::new(&path),
            &BuildReport {
                schema: 1,
                epsilon: built.cutoff.epsilon,
                psh_margin: built.psh_margin,
                hessian_error: built.hessian_error,
                grid_step_hessian_error: built.grid_step_hessian_error,
                fd_spacing: built.fd_spacing,
                cutoff_bound_t_psi1: built.cutoff.bound_t_psi1,
                cutoff_bound_t2_psi2: built.cutoff.bound_t2_psi2,
                p: pair.p,
                q: pair.q,
                verdict: cert.verdict,
                grid_effective_p: effective.as_ref().map(|(p, _, _)| p.clone()),
                grid_effective_q: effective.as_ref().map(|(_, q, _)| q.clone()),
                grid_effective_verdict: effective.as_ref().map(|(_, _, v)| *v),
            },
        )?;
    }
    Ok(())
}

fn solver_config(args: &Args) -> Result<SolverConfig> {
    let mut config = SolverConfig::default();
    config.newton_tol = args.f64_or("newton-tol", config.newton_tol)?;
    config.threads = args.threads()?;
    Ok(config)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SolveReport {
    schema: u32,
    epsilon: f64,
    n: usize,
    nt: usize,
    period: f64,
    residual_norm: f64,
    newton_iterations: usize,
    norm_ladder: NormLadder,
    third_deriv_diagnostic: f64,
    symmetry_check: f64,
}

fn cmd_solve(args: &Args) -> Result<()> {
    let boundary = open_field(args, "v")?;
    let epsilon = args.f64_req("epsilon")?;
    let nt = args.usize_or("nt", 16)?;
    let out = args.string("out");
    let report_path = args.string("report");
    let config = solver_config(args)?;
    args.finish()?;

    let problem = GeodesicProblem::new(boundary, epsilon, nt)?;
    let sol = newton_solve(&problem, &config, None)?;
    let symmetry = symmetry_check(&sol);
    println!(
        "solve: epsilon={epsilon} residual={:.3e} iterations={} C3={:.6} diagnostic={:.6} symmetry={:.3e}",
        sol.residual_norm,
        sol.newton_iterations,
        sol.norm_ladder.c3,
        sol.third_deriv_diagnostic,
        symmetry
    );
    if let Some(path) = out {
        io::write_solution(Path::new(&path), &sol)?;
    }
    if let Some(path) = report_path {
        io::write_json(
            Path::new(&path),
            &SolveReport {
                schema: 1,
                epsilon,
                n: sol.torus.n,
                nt,
                period: sol.torus.period,
                residual_norm: sol.residual_norm,
                newton_iterations: sol.newton_iterations,
                norm_ladder: sol.norm_ladder.clone(),
                third_deriv_diagnostic: sol.third_deriv_diagnostic,
                symmetry_check: symmetry,
            },
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SweepCmdReport {
    schema: u32,
    nt: usize,
    #[serde(flatten)]
    report: SweepReport,
}

fn cmd_sweep(args: &Args) -> Result<()> {
    let boundary = open_field(args, "v")?;
    let schedule = args
        .f64_list("schedule")?
        .ok_or_else(|| LabError::invalid("schedule", "required flag missing"))?;
    let nt = args.usize_or("nt", 16)?;
    let csv_path = args.string("csv");
    let report_path = args.string("report");
    let config = solver_config(args)?;
    args.finish()?;

    let report = epsilon_sweep(&boundary, nt, &schedule, &config)?;
    for row in &report.rows {
        match &row.error {
            None => println!(
                "sweep: epsilon={} C3={:.6} diagnostic={:.6}",
                row.epsilon, row.c3, row.third_deriv_diagnostic
            ),
            Some(e) => println!("sweep: epsilon={} FAILED: {e}", row.epsilon),
        }
    }
    if let Some(path) = csv_path {
        io::write_string(Path::new(&path), &io::sweep_csv(&report))?;
    }
    let all_failed = report.rows.iter().all(|r| !r.converged);
    if let Some(path) = report_path {
        io::write_json(Path::new(&path), &SweepCmdReport { schema: 1, nt, report })?;
    }
    if all_failed {
        return Err(LabError::PropertyViolated {
            what: "every sweep level failed",
            count: 0,
        });
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TraceEntry {
    start: [f64; 2],
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<Vec<([f64; 2], [f64; 2])>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hol_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kernel_residual_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_fiber_block: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_validation_deviation: Option<f64>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FoliateReport {
    schema: u32,
    epsilon: f64,
    dt_scale: f64,
    traces: Vec<TraceEntry>,
    extraction: LinearizationExtract,
}

fn cmd_foliate(args: &Args) -> Result<()> {
    let sol_path = args.require("sol")?;
    let sol = io::read_solution(Path::new(&sol_path))
        .map_err(|e| LabError::invalid("sol", format!("cannot read solution `{sol_path}`: {e}")))?;
    let starts_path = args.require("starts")?;
    let starts_text = std::fs::read_to_string(&starts_path)
        .map_err(|e| LabError::invalid("starts", format!("cannot read `{starts_path}`: {e}")))?;
    let starts: Vec<[f64; 2]> = serde_json::from_str(&starts_text)
        .map_err(|e| LabError::invalid("starts", format!("bad starts file: {e}")))?;
    let out = args.require("out")?;
    let opts = TraceOptions {
        half_width: args.f64_or("half-width", 0.5)?,
        step: args.f64_or("step", 0.01)?,
        chart_radius: args.f64_or("chart-radius", 1.4)?,
    };
    let dt_scale = args.f64_or("dt", 0.05)?;
    args.finish()?;

    let sampler = SolutionSampler::new(&sol)?;
    let x0 = vec![0usize; sol.torus.axes()];
    let extraction = extract_linearization(&sol, &x0)?;
    let mut traces = Vec::new();
    let mut ok_count = 0usize;
    for &[re, im] in &starts {
        let a = Complex64::new(re, im);
        match trace_leaf(&sampler, a, &opts) {
            Ok(trace) => {
                let cross = cross_validate_linearization(&sampler, &extraction, a, dt_scale, &opts)
                    .ok();
                ok_count += 1;
                traces.push(TraceEntry {
                    start: [re, im],
                    ok: true,
                    error: None,
                    samples: Some(
                        trace
                            .samples
                            .iter()
                            .map(|(s, f)| ([s.re, s.im], [f.re, f.im]))
                            .collect(),
                    ),
                    hol_residual: Some(trace.hol_residual),
                    kernel_residual_max: Some(trace.kernel_residual_max),
                    min_fiber_block: Some(trace.min_fiber_block),
                    cross_validation_deviation: cross,
                });
            }
            Err(e) => traces.push(TraceEntry {
                start: [re, im],
                ok: false,
                error: Some(e.to_string()),
                samples: None,
                hol_residual: None,
                kernel_residual_max: None,
                min_fiber_block: None,
                cross_validation_deviation: None,
            }),
        }
    }
    println!(
        "foliate: traced {}/{} starts (epsilon={})",
        ok_count,
        starts.len(),
        sol.epsilon
    );
    io::write_json(
        Path::new(&out),
        &FoliateReport {
            schema: 1,
            epsilon: sol.epsilon,
            dt_scale,
            traces,
            extraction,
        },
    )?;
    if ok_count == 0 && !starts.is_empty() {
        return Err(LabError::PropertyViolated {
            what: "no leaf could be traced",
            count: starts.len(),
        });
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct SweepJson {
    #[serde(rename = "rows")]
    rows: Vec<lab_core::geodesic::SweepRow>,
}

fn cmd_report(args: &Args) -> Result<()> {
    let sweeps = args.require("sweeps")?;
    let out_dir = PathBuf::from(args.require("out-dir")?);
    args.finish()?;
    std::fs::create_dir_all(&out_dir)?;
    let mut runs = Vec::new();
    for path in sweeps.split(',') {
        let path = path.trim();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::invalid("sweeps", format!("cannot read `{path}`: {e}")))?;
        let parsed: SweepJson = serde_json::from_str(&text)
            .map_err(|e| LabError::invalid("sweeps", format!("bad sweep report `{path}`: {e}")))?;
        let label = Path::new(path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        runs.push((label, SweepReport { rows: parsed.rows }));
    }
    for (label, report) in &runs {
        io::write_string(&out_dir.join(format!("{label}.csv")), &io::sweep_csv(report))?;
    }
    io::write_string(&out_dir.join("combined.csv"), &io::combined_sweep_csv(&runs))?;
    println!("report: wrote {} per-run CSVs plus combined.csv", runs.len());
    Ok(())
}
