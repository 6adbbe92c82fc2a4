//! Periodic grids on the unit torus and the spectral calculus built on them.
//!
//! Points are stored row-major with axis 0 varying slowest. Frequencies are
//! `2πk`, so `cos(2πx₁)` is a single resolved mode. The Laplacian uses the
//! geometer sign `Δf = −Σ ∂²f/∂x_k²`, which makes it positive semidefinite.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 4;

/// Uniform periodic discretization of `[0,1)^d`.
///
/// `n_complex` is the complex dimension `n` that enters every exponent of the
/// curvature equation. It is independent of `dim`: fields are allowed to be
/// constant along the real directions that are not represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    dim: usize,
    n_pts: usize,
    n_complex: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n_pts: usize, n_complex: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=4")));
        }
        if n_pts < 8 || !n_pts.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= 8, got {n_pts}"
            )));
        }
        if n_complex < 2 {
            return Err(Error::InvalidGrid(format!(
                "complex dimension must be >= 2, got {n_complex}"
            )));
        }
        Ok(Self {
            dim,
            n_pts,
            n_complex,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_pts(&self) -> usize {
        self.n_pts
    }

    /// Complex dimension `n`.
    pub fn n(&self) -> usize {
        self.n_complex
    }

    pub fn n_f64(&self) -> f64 {
        self.n_complex as f64
    }

    /// Total number of grid points, `N^d`.
    pub fn len(&self) -> usize {
        self.n_pts.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_pts as f64
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.n_pts.pow((self.dim - 1 - axis) as u32)
    }

    /// Multi-index of a flat index.
    pub fn multi_index(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n_pts;
            idx /= self.n_pts;
        }
        out
    }

    /// Coordinates of a grid point in `[0,1)^d`; unused axes are zero.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let mi = self.multi_index(idx);
        let h = self.spacing();
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = mi[axis] as f64 * h;
        }
        x
    }

    /// Signed wavenumber of an FFT index along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n_pts / 2 {
            i as i64
        } else {
            i as i64 - self.n_pts as i64
        }
    }

    pub fn is_nyquist(&self, i: usize) -> bool {
        i == self.n_pts / 2
    }

    pub(crate) fn check_same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Real values on every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value {bad}")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values already known to have the right length.
    pub(crate) fn raw(grid: TorusGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: f64) -> Self {
        Self::raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.point(i)[..grid.dim()]))
            .collect();
        Self::raw(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination. Panics if the grids differ.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "zip_map across different grids");
        Self::raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn shift(&self, s: f64) -> Self {
        self.map(|v| v + s)
    }

    pub fn exp_scaled(&self, s: f64) -> Self {
        self.map(|v| (s * v).exp())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Flat mean, equal to the integral over the unit torus.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete L² norm on the unit torus, `sqrt(∫ f²)`.
    pub fn l2(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Flat L² inner product `∫ a b`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        assert_eq!(self.grid, other.grid);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / self.values.len() as f64
    }

    pub fn minus_mean(&self) -> Self {
        self.shift(-self.mean())
    }
}

/// A one-form stored by its `d` flat components.
#[derive(Debug, Clone, PartialEq)]
pub struct OneFormField {
    grid: TorusGrid,
    components: Vec<ScalarField>,
}

impl OneFormField {
    pub fn new(grid: TorusGrid, components: Vec<ScalarField>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::InvalidGrid(format!(
                "one-form needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            grid.check_same(c.grid())?;
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            components: vec![ScalarField::zeros(grid); grid.dim()],
        }
    }

    /// Constant one-form with the given components.
    pub fn constant(grid: TorusGrid, comps: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            comps
                .iter()
                .map(|&c| ScalarField::constant(grid, c))
                .collect(),
        )
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    pub fn add(&self, other: &OneFormField) -> Self {
        Self {
            grid: self.grid,
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            components: self.components.iter().map(|c| c.scale(s)).collect(),
        }
    }

    /// Multiplies every component by a scalar field.
    pub fn weighted(&self, w: &ScalarField) -> Self {
        Self {
            grid: self.grid,
            components: self.components.iter().map(|c| c.mul(w)).collect(),
        }
    }

    /// Largest component magnitude over the grid.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }
}

type PlanCache = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

thread_local! {
    static PLANNER: RefCell<(FftPlanner<f64>, PlanCache)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let (planner, cache) = &mut *p;
        cache
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

fn transform(grid: &TorusGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n_pts();
    let fft = plan(n, inverse);
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let total = grid.len();
    for axis in 0..grid.dim() {
        let stride = grid.stride(axis);
        if stride == 1 {
            fft.process(data);
            continue;
        }
        let block = stride * n;
        for start in (0..total).step_by(block) {
            for offset in 0..stride {
                let base = start + offset;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                fft.process(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }
}

/// Fourier coefficients of a real field (unnormalized forward DFT).
#[derive(Debug, Clone)]
pub(crate) struct Spectrum {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub(crate) fn of(f: &ScalarField) -> Self {
        let mut coeffs: Vec<Complex64> =
            f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transform(f.grid(), &mut coeffs, false);
        Self {
            grid: *f.grid(),
            coeffs,
        }
    }

    /// Applies a Fourier multiplier and returns the real part of the result.
    pub(crate) fn apply(&self, symbol: impl Fn(&[usize]) -> Complex64) -> ScalarField {
        let g = self.grid;
        let mut data: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(&g.multi_index(i)[..g.dim()]))
            .collect();
        transform(&g, &mut data, true);
        let scale = 1.0 / g.len() as f64;
        ScalarField::raw(g, data.iter().map(|c| c.re * scale).collect())
    }

    pub(crate) fn derivative(&self, axis: usize) -> ScalarField {
        let g = self.grid;
        self.apply(|mi| {
            if g.is_nyquist(mi[axis]) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, 2.0 * PI * g.wavenumber(mi[axis]) as f64)
            }
        })
    }

    pub(crate) fn laplacian(&self) -> ScalarField {
        let g = self.grid;
        self.apply(|mi| Complex64::new(laplacian_symbol(&g, mi), 0.0))
    }

    pub(crate) fn gradient(&self) -> OneFormField {
        OneFormField {
            grid: self.grid,
            components: (0..self.grid.dim()).map(|a| self.derivative(a)).collect(),
        }
    }
}

/// Eigenvalue of the flat Laplacian on the mode with the given FFT indices.
pub(crate) fn laplacian_symbol(g: &TorusGrid, mi: &[usize]) -> f64 {
    mi.iter()
        .map(|&i| {
            let k = 2.0 * PI * g.wavenumber(i) as f64;
            k * k
        })
        .sum()
}

/// Spectral derivative along one axis. The Nyquist mode is dropped.
pub fn partial_derivative(f: &ScalarField, axis: usize) -> Result<ScalarField> {
    if axis >= f.grid().dim() {
        return Err(Error::AxisOutOfRange {
            axis,
            dim: f.grid().dim(),
        });
    }
    Ok(Spectrum::of(f).derivative(axis))
}

/// `df` as a one-form.
pub fn gradient(f: &ScalarField) -> OneFormField {
    Spectrum::of(f).gradient()
}

/// Flat Laplacian with the geometer sign, `−Σ ∂²f/∂x_k²`.
pub fn laplacian_flat(f: &ScalarField) -> ScalarField {
    Spectrum::of(f).laplacian()
}

/// Flat divergence `Σ ∂_k θ_k`. The codifferential is its negative.
pub fn divergence(theta: &OneFormField) -> ScalarField {
    let g = *theta.grid();
    let mut out = ScalarField::zeros(g);
    for (axis, comp) in theta.components().iter().enumerate() {
        out = out.add(&Spectrum::of(comp).derivative(axis));
    }
    out
}

/// `∫ f · density` over the unit torus; without a density this is the plain mean.
pub fn integrate(f: &ScalarField, density: Option<&ScalarField>) -> Result<f64> {
    match density {
        None => Ok(f.mean()),
        Some(rho) => {
            f.grid().check_same(rho.grid())?;
            let min = rho.min();
            if min <= 0.0 {
                return Err(Error::NonPositiveDensity { min });
            }
            Ok(f.dot(rho))
        }
    }
}

/// Pointwise `Σ_k a_k b_k`, optionally multiplied by a weight.
pub fn pairing(
    a: &OneFormField,
    b: &OneFormField,
    weight: Option<&ScalarField>,
) -> Result<ScalarField> {
    a.grid().check_same(b.grid())?;
    if let Some(w) = weight {
        a.grid().check_same(w.grid())?;
    }
    let g = *a.grid();
    let mut acc = vec![0.0; g.len()];
    for (ca, cb) in a.components().iter().zip(b.components()) {
        for ((s, x), y) in acc.iter_mut().zip(ca.values()).zip(cb.values()) {
            *s += x * y;
        }
    }
    if let Some(w) = weight {
        for (s, wv) in acc.iter_mut().zip(w.values()) {
            *s *= wv;
        }
    }
    Ok(ScalarField::raw(g, acc))
}
