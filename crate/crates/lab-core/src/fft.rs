//! Multi-axis FFT passes over row-major periodic grids.
//!
//! Thin layer over rustfft: plans are built once per grid shape and reused;
//! the inverse pass carries the 1/len normalization so forward/inverse
//! round-trips are the identity.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct GridFft {
    shape: Vec<usize>,
    total: usize,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    scratch_len: usize,
}

impl GridFft {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = shape
            .iter()
            .map(|&n| planner.plan_fft_forward(n))
            .collect();
        let inverse: Vec<_> = shape
            .iter()
            .map(|&n| planner.plan_fft_inverse(n))
            .collect();
        let scratch_len = forward
            .iter()
            .chain(&inverse)
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0)
            .max(shape.iter().copied().max().unwrap_or(0));
        GridFft {
            shape: shape.to_vec(),
            total: shape.iter().product(),
            forward,
            inverse,
            scratch_len,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Forward transform along every axis (unnormalized).
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.total);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        for axis in 0..self.shape.len() {
            self.axis_pass(data, axis, true, &mut scratch);
        }
    }

    /// Inverse transform along every axis, normalized by 1/total.
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.total);
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        for axis in 0..self.shape.len() {
            self.axis_pass(data, axis, false, &mut scratch);
        }
        let scale = 1.0 / self.total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn axis_pass(&self, data: &mut [Complex64], axis: usize, fwd: bool, scratch: &mut [Complex64]) {
        let n = self.shape[axis];
        let plan = if fwd {
            &self.forward[axis]
        } else {
            &self.inverse[axis]
        };
        let stride: usize = self.shape[axis + 1..].iter().product();
        let block = n * stride;
        if stride == 1 {
            for chunk in data.chunks_exact_mut(n) {
                plan.process_with_scratch(chunk, scratch);
            }
            return;
        }
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for base in (0..self.total).step_by(block) {
            for off in 0..stride {
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + off + k * stride];
                }
                plan.process_with_scratch(&mut line, scratch);
                for (k, &v) in line.iter().enumerate() {
                    data[base + off + k * stride] = v;
                }
            }
        }
    }
}

/// Signed integer frequency for index i on an axis of length n:
/// 0, 1, ..., n/2, -n/2+1, ..., -1 (the Nyquist index n/2 maps to +n/2 and
/// is zeroed separately by derivative symbols).
pub fn freq(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}
