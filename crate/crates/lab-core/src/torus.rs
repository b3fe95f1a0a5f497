//! Flat torus geometry and spectral calculus.
//!
//! The torus is C^m / L(Z + iZ)^m with the translation-invariant form
//! omega_0 = i sum dz_j ^ dconj(z_j). Real grid axes are ordered
//! (x_1, y_1, ..., x_m, y_m), row major with the last axis fastest. The
//! involution h(z) = -z is an exact grid symmetry for even N, and its 4^m
//! fixed points are the half-lattice points.

use num_complex::Complex64;

use crate::cmatrix::ComplexMatrix;
use crate::error::{LabError, Result};
use crate::fft::{freq, GridFft};

/// Grid description: complex dimension m, period L, and N grid points per
/// real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusSpec {
    pub m: usize,
    pub period: f64,
    pub n: usize,
}

impl TorusSpec {
    pub fn new(m: usize, period: f64, n: usize) -> Result<Self> {
        if m == 0 || m > 2 {
            return Err(LabError::invalid("m", "complex dimension must be 1 or 2"));
        }
        if !(period > 2.2) {
            return Err(LabError::invalid(
                "period",
                format!("period {period} must exceed 2.2 so the unit chart ball embeds"),
            ));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(LabError::invalid(
                "n",
                format!("grid size {n} must be a power of two >= 16"),
            ));
        }
        Ok(TorusSpec { m, period, n })
    }

    /// Number of real axes (2m).
    pub fn axes(&self) -> usize {
        2 * self.m
    }

    /// Total number of grid points N^(2m).
    pub fn len(&self) -> usize {
        self.n.pow(self.axes() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid spacing L/N.
    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.n; self.axes()]
    }

    pub fn grid_fft(&self) -> GridFft {
        GridFft::new(&self.shape())
    }

    /// Row-major linear index of a multi-index.
    pub fn index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.axes());
        let mut idx = 0;
        for &i in multi {
            debug_assert!(i < self.n);
            idx = idx * self.n + i;
        }
        idx
    }

    /// Multi-index of a row-major linear index.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut multi = vec![0usize; self.axes()];
        for a in (0..self.axes()).rev() {
            multi[a] = idx % self.n;
            idx /= self.n;
        }
        multi
    }

    /// Real coordinates of a grid multi-index, in [0, L) per axis.
    pub fn coords(&self, multi: &[usize]) -> Vec<f64> {
        multi.iter().map(|&i| i as f64 * self.spacing()).collect()
    }

    /// Complex coordinates (z_1, ..., z_m) of a grid multi-index.
    pub fn complex_coords(&self, multi: &[usize]) -> Vec<Complex64> {
        let c = self.coords(multi);
        (0..self.m)
            .map(|j| Complex64::new(c[2 * j], c[2 * j + 1]))
            .collect()
    }

    /// Wraps a coordinate difference into [-L/2, L/2).
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.period;
        let mut y = x % l;
        if y < -l / 2.0 {
            y += l;
        } else if y >= l / 2.0 {
            y -= l;
        }
        y
    }
}

/// Real scalar field over the periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub spec: TorusSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(spec: TorusSpec) -> Self {
        ScalarField {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    pub fn constant(spec: TorusSpec, c: f64) -> Self {
        ScalarField {
            spec,
            values: vec![c; spec.len()],
        }
    }

    pub fn from_values(spec: TorusSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(LabError::invalid("values", "length does not match grid"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LabError::invalid("values", "field has non-finite entries"));
        }
        Ok(ScalarField { spec, values })
    }

    /// Evaluates f over the grid from real coordinates.
    pub fn from_fn(spec: TorusSpec, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let mut values = vec![0.0; spec.len()];
        let mut multi = vec![0usize; spec.axes()];
        for (idx, slot) in values.iter_mut().enumerate() {
            let mut rem = idx;
            for a in (0..spec.axes()).rev() {
                multi[a] = rem % spec.n;
                rem /= spec.n;
            }
            let coords: Vec<f64> = multi.iter().map(|&i| i as f64 * spec.spacing()).collect();
            *slot = f(&coords);
        }
        ScalarField { spec, values }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }
}

/// The 4^m half-lattice fixed points of h(z) = -z, origin first,
/// lexicographic in the axis offsets {0, L/2}.
#[derive(Debug, Clone)]
pub struct FixedPointSet {
    pub grid_indices: Vec<Vec<usize>>,
    pub coords: Vec<Vec<f64>>,
}

pub fn fixed_points(spec: &TorusSpec) -> FixedPointSet {
    let axes = spec.axes();
    let count = 1usize << axes;
    let mut grid_indices = Vec::with_capacity(count);
    let mut coords = Vec::with_capacity(count);
    for mask in 0..count {
        let multi: Vec<usize> = (0..axes)
            .map(|a| if mask >> (axes - 1 - a) & 1 == 1 { spec.n / 2 } else { 0 })
            .collect();
        coords.push(spec.coords(&multi));
        grid_indices.push(multi);
    }
    FixedPointSet {
        grid_indices,
        coords,
    }
}

/// Pullback by the involution: (h^* f)(z) = f(-z), an exact grid
/// permutation (index i -> (N - i) mod N on every axis).
pub fn involution_pullback(f: &ScalarField) -> ScalarField {
    let spec = f.spec;
    let n = spec.n;
    let axes = spec.axes();
    let mut out = vec![0.0; f.values.len()];
    let mut multi = vec![0usize; axes];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rem = idx;
        for a in (0..axes).rev() {
            multi[a] = rem % n;
            rem /= n;
        }
        let mut src = 0usize;
        for &i in &multi {
            let neg = (n - i) % n;
            src = src * n + neg;
        }
        *slot = f.values[src];
    }
    ScalarField {
        spec,
        values: out,
    }
}

/// Max-norm deviation from h-invariance.
pub fn symmetry_defect(f: &ScalarField) -> f64 {
    let pulled = involution_pullback(f);
    f.values
        .iter()
        .zip(&pulled.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// One Wirtinger letter: d/dz_j or d/dconj(z_j).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wirt {
    pub axis: usize,
    pub conj: bool,
}

impl Wirt {
    pub fn z(axis: usize) -> Self {
        Wirt { axis, conj: false }
    }
    pub fn zbar(axis: usize) -> Self {
        Wirt { axis, conj: true }
    }
}

/// Spectral Wirtinger derivative of a complex grid function for a word of
/// up to three letters. Exact on band-limited data; Nyquist modes are
/// zeroed per differentiated axis (the standard odd-derivative convention).
pub fn wirtinger_on_complex(
    spec: &TorusSpec,
    fft: &GridFft,
    values: &[Complex64],
    word: &[Wirt],
) -> Result<Vec<Complex64>> {
    if word.len() > 3 {
        return Err(LabError::invalid("word", "derivative order must be <= 3"));
    }
    for w in word {
        if w.axis >= spec.m {
            return Err(LabError::invalid("word", "complex axis out of range"));
        }
    }
    let mut data = values.to_vec();
    fft.forward(&mut data);
    let n = spec.n;
    let axes = spec.axes();
    let two_pi_over_l = 2.0 * std::f64::consts::PI / spec.period;
    let mut multi = vec![0usize; axes];
    for (idx, v) in data.iter_mut().enumerate() {
        let mut rem = idx;
        for a in (0..axes).rev() {
            multi[a] = rem % n;
            rem /= n;
        }
        let mut symbol = Complex64::new(1.0, 0.0);
        for w in word {
            let ix = multi[2 * w.axis];
            let iy = multi[2 * w.axis + 1];
            // Nyquist modes carry no usable sign information for odd
            // derivative factors; zero them.
            let kx = if ix == n / 2 { 0.0 } else { freq(ix, n) as f64 * two_pi_over_l };
            let ky = if iy == n / 2 { 0.0 } else { freq(iy, n) as f64 * two_pi_over_l };
            // d/dz = (d/dx - i d/dy)/2 has symbol (i kx + ky)/2;
            // d/dzbar = (d/dx + i d/dy)/2 has symbol (i kx - ky)/2.
            let s = if w.conj {
                Complex64::new(-ky, kx) * 0.5
            } else {
                Complex64::new(ky, kx) * 0.5
            };
            symbol *= s;
        }
        *v *= symbol;
    }
    fft.inverse(&mut data);
    Ok(data)
}

/// Spectral Wirtinger derivative of a real scalar field.
pub fn wirtinger_derivative(f: &ScalarField, word: &[Wirt]) -> Result<Vec<Complex64>> {
    let fft = f.spec.grid_fft();
    wirtinger_on_complex(&f.spec, &fft, &f.to_complex(), word)
}

/// Coefficient matrix of omega_0 in the standard coordinates: the identity,
/// globally (the form is translation invariant). The associated local
/// potential on a chart is w_0(z) = sum |z_j|^2.
pub fn omega0_matrix(spec: &TorusSpec) -> ComplexMatrix {
    ComplexMatrix::identity(spec.m)
}

pub fn omega0_potential(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.norm_sqr()).sum()
}
