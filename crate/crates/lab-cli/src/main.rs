//! `lab`: numerical laboratory for torus Kahler-potential geodesics,
//! Monge-Ampere foliation tracing, and matrix obstruction certificates.
//!
//! Exit codes: 0 success, 2 validation error (bad flags or files),
//! 3 numerical failure (no convergence, positivity loss, property
//! violations).

mod args;
mod commands;

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match commands::dispatch(&argv) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_validation() { 2 } else { 3 });
        }
    }
}
