//! Binary and CSV formats for fields, solutions, and sweep reports.
//!
//! Field binary: header {m: u32 LE, L: f64 LE, N: u32 LE}, then the values
//! row-major as f64 LE. Solution binary: header {m: u32, L: f64, N: u32,
//! Nt: u32, epsilon: f64}, then the nt + 2 time levels in t-order, each in
//! the field value layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{LabError, Result};
use crate::geodesic::{geodesic_residual, norm_ladder, GeodesicSolution, NormLadder, SweepReport};
use crate::torus::{ScalarField, TorusSpec};

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_u32(&mut w, field.spec.m as u32)?;
    write_f64(&mut w, field.spec.period)?;
    write_u32(&mut w, field.spec.n as u32)?;
    for &v in &field.values {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_u32(&mut r)? as usize;
    let period = read_f64(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    let spec = TorusSpec::new(m, period, n)?;
    let mut values = Vec::with_capacity(spec.len());
    for _ in 0..spec.len() {
        values.push(read_f64(&mut r)?);
    }
    ScalarField::from_values(spec, values)
}

pub fn write_solution(path: &Path, sol: &GeodesicSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_u32(&mut w, sol.torus.m as u32)?;
    write_f64(&mut w, sol.torus.period)?;
    write_u32(&mut w, sol.torus.n as u32)?;
    write_u32(&mut w, sol.nt as u32)?;
    write_f64(&mut w, sol.epsilon)?;
    for &v in &sol.u {
        write_f64(&mut w, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a solution and recomputes its derived certificates (residual norm,
/// norm ladder, third-derivative diagnostic) from the stored levels.
pub fn read_solution(path: &Path) -> Result<GeodesicSolution> {
    let mut r = BufReader::new(File::open(path)?);
    let m = read_u32(&mut r)? as usize;
    let period = read_f64(&mut r)?;
    let n = read_u32(&mut r)? as usize;
    let nt = read_u32(&mut r)? as usize;
    let epsilon = read_f64(&mut r)?;
    let torus = TorusSpec::new(m, period, n)?;
    if nt < 8 {
        return Err(LabError::invalid("nt", "stored solution has nt < 8"));
    }
    let total = (nt + 2) * torus.len();
    let mut u = Vec::with_capacity(total);
    for _ in 0..total {
        u.push(read_f64(&mut r)?);
    }
    let residual = geodesic_residual(&torus, nt, &u, epsilon)?;
    let residual_norm = residual.iter().fold(0.0f64, |mx, &v| mx.max(v.abs()));
    let mut sol = GeodesicSolution {
        torus,
        nt,
        epsilon,
        u,
        residual_norm,
        newton_iterations: 0,
        norm_ladder: NormLadder {
            c0: 0.0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            components: vec![],
        },
        third_deriv_diagnostic: 0.0,
    };
    sol.norm_ladder = norm_ladder(&sol);
    Ok(sol)
}

/// Tidy CSV of a sweep: one row per epsilon level, deterministic column
/// order. Failed levels carry NaN diagnostics.
pub fn sweep_csv(report: &SweepReport) -> String {
    let mut out = String::from("epsilon,C0,C1,C2,C3,thirdDerivDiagnostic\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.epsilon, row.c0, row.c1, row.c2, row.c3, row.third_deriv_diagnostic
        ));
    }
    out
}

/// Combined comparison CSV across labeled sweeps.
pub fn combined_sweep_csv(runs: &[(String, SweepReport)]) -> String {
    let mut out = String::from("run,epsilon,C0,C1,C2,C3,thirdDerivDiagnostic\n");
    for (label, report) in runs {
        for row in &report.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                label, row.epsilon, row.c0, row.c1, row.c2, row.c3, row.third_deriv_diagnostic
            ));
        }
    }
    out
}

/// CSV export of a field for plotting: one row per grid point with the real
/// coordinates first.
pub fn field_csv(field: &ScalarField) -> String {
    let spec = field.spec;
    let axes = spec.axes();
    let mut out = String::new();
    for j in 0..spec.m {
        out.push_str(&format!("x{},y{},", j + 1, j + 1));
    }
    out.pop();
    out.push_str(",value\n");
    for (idx, &v) in field.values.iter().enumerate() {
        let multi = spec.multi_index(idx);
        for a in 0..axes {
            out.push_str(&format!("{},", multi[a] as f64 * spec.spacing()));
        }
        out.push_str(&format!("{v}\n"));
    }
    out
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(contents.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_string(path, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{newton_solve, GeodesicProblem, SolverConfig};
    use proptest::prelude::*;

    #[test]
    fn field_roundtrip() {
        let spec = TorusSpec::new(1, 4.0, 16).unwrap();
        let mut rng = crate::rng::SplitMix64::new(9);
        let field = ScalarField::from_values(
            spec,
            (0..spec.len()).map(|_| rng.next_normal()).collect(),
        )
        .unwrap();
        let dir = std::env::temp_dir().join("lab_io_test_field.field");
        write_field(&dir, &field).unwrap();
        let back = read_field(&dir).unwrap();
        assert_eq!(back.values, field.values);
        assert_eq!(back.spec, field.spec);
        std::fs::remove_file(&dir).ok();
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn field_roundtrip_bitexact(seed in 0u64..200) {
            let spec = TorusSpec::new(1, 2.5, 16).unwrap();
            let mut rng = crate::rng::SplitMix64::new(seed);
            let field = ScalarField::from_values(
                spec,
                (0..spec.len()).map(|_| rng.next_normal() * 1e3).collect(),
            ).unwrap();
            let path = std::env::temp_dir().join(format!("lab_prop_{seed}.field"));
            write_field(&path, &field).unwrap();
            let back = read_field(&path).unwrap();
            std::fs::remove_file(&path).ok();
            prop_assert!(back.values.iter().zip(&field.values).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn solution_roundtrip() {
        let torus = TorusSpec::new(1, 4.0, 16).unwrap();
        let v = ScalarField::constant(torus, 0.2);
        let sol = newton_solve(
            &GeodesicProblem::new(v, 0.05, 8).unwrap(),
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        let path = std::env::temp_dir().join("lab_io_test_sol.bin");
        write_solution(&path, &sol).unwrap();
        let back = read_solution(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(back.u, sol.u);
        assert_eq!(back.nt, sol.nt);
        assert!((back.residual_norm - sol.residual_norm).abs() < 1e-14);
        assert!((back.norm_ladder.c2 - sol.norm_ladder.c2).abs() < 1e-12);
    }

    #[test]
    fn csv_shapes() {
        let report = SweepReport { rows: vec![] };
        assert_eq!(sweep_csv(&report), "epsilon,C0,C1,C2,C3,thirdDerivDiagnostic\n");
    }
}
