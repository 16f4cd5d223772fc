//! Fourier discretization of the 2π-periodic torus T².
//!
//! Coefficients follow the analyst's convention
//!
//! ```text
//! f̂(k) = ∫ f(x) e^{-ik·x} dx,        f(x) = (2π)^{-2} Σ_k f̂(k) e^{ik·x}
//! ```
//!
//! so that Parseval reads `‖f‖₂² = (2π)^{-2} Σ_k |f̂(k)|²`. A spectral field is
//! stored on an `M × M` array in standard DFT layout, index `(i, j)` holding the
//! wavenumber `k = (freq(i), freq(j))` with `freq(i) ∈ (-M/2, M/2]`. Physical
//! samples live at `x_ij = (2πi/M, 2πj/M)`, `i` running along `x₁`.
//!
//! The retained band `X_N` is selected by a [`Cutoff`]. Grids are required to
//! satisfy `M ≥ 4N + 2`, which makes every product of up to four `X_N` fields
//! exactly integrable by the grid quadrature and keeps the cubic nonlinearities
//! free of aliasing inside the retained band.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI: f64 = 2.0 * PI;
/// Relative tolerance for the Hermitian-symmetry check on inverse transforms.
const SYMMETRY_TOL: f64 = 1e-12;
/// Row-FFT batches are split across threads once the grid is at least this wide.
const PAR_MIN_M: usize = 256;

/// Shape of the retained mode set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    /// `|k| ≤ N`.
    #[default]
    EuclideanBall,
    /// `max(|k₁|, |k₂|) ≤ N`.
    Square,
}

impl Cutoff {
    #[inline]
    pub fn contains(self, k: [i64; 2], n: usize) -> bool {
        let n = n as i64;
        match self {
            Cutoff::EuclideanBall => k[0] * k[0] + k[1] * k[1] <= n * n,
            Cutoff::Square => k[0].abs() <= n && k[1].abs() <= n,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::EuclideanBall => write!(f, "ball"),
            Cutoff::Square => write!(f, "square"),
        }
    }
}

/// Mode cutoff `N`, grid size `M` and cutoff shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub m: usize,
    pub cutoff: Cutoff,
}

impl GridSpec {
    pub fn new(n: usize, m: usize, cutoff: Cutoff) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        if !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("M = {m} must be even")));
        }
        if m < 4 * n + 2 {
            return Err(Error::InvalidGrid(format!(
                "M = {m} is below the dealiasing bound 4N+2 = {}",
                4 * n + 2
            )));
        }
        Ok(Self { n, m, cutoff })
    }

    /// Grid with `M` chosen by [`GridSpec::default_size`].
    pub fn with_default_size(n: usize, cutoff: Cutoff) -> Result<Self> {
        Self::new(n, Self::default_size(n), cutoff)
    }

    /// Smallest even 5-smooth integer `≥ 4N + 4`.
    pub fn default_size(n: usize) -> usize {
        next_even_smooth(4 * n + 4)
    }

    #[inline]
    pub fn in_cutoff(&self, k: [i64; 2]) -> bool {
        self.cutoff.contains(k, self.n)
    }
}

/// Smallest even integer `≥ target` whose only prime factors are 2, 3 and 5.
pub fn next_even_smooth(target: usize) -> usize {
    let mut m = target.max(2);
    if m % 2 == 1 {
        m += 1;
    }
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}

/// A grid together with its transform plans. Shared between fields via `Arc`.
pub struct Grid {
    spec: GridSpec,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    freqs: Vec<i64>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Arc<Self> {
        let mut planner = FftPlanner::new();
        let m = spec.m;
        let freqs = (0..m)
            .map(|i| if i <= m / 2 { i as i64 } else { i as i64 - m as i64 })
            .collect();
        Arc::new(Self {
            spec,
            fwd: planner.plan_fft_forward(m),
            inv: planner.plan_fft_inverse(m),
            freqs,
        })
    }

    /// Convenience: default-sized grid for cutoff `n`.
    pub fn with_cutoff(n: usize, cutoff: Cutoff) -> Result<Arc<Self>> {
        Ok(Self::new(GridSpec::with_default_size(n, cutoff)?))
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.spec.n
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.spec.m
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.spec.m * self.spec.m
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Wavenumber stored at flat index `idx`.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> [i64; 2] {
        let m = self.spec.m;
        [self.freqs[idx / m], self.freqs[idx % m]]
    }

    /// `|k|²` at flat index `idx`.
    #[inline]
    pub fn k2(&self, idx: usize) -> f64 {
        let [a, b] = self.wavenumber(idx);
        (a * a + b * b) as f64
    }

    /// Flat index of wavenumber `k`, if representable on this grid.
    pub fn index_of(&self, k: [i64; 2]) -> Option<usize> {
        let m = self.spec.m as i64;
        let wrap = |q: i64| -> Option<usize> {
            if q > m / 2 || q <= -m / 2 {
                None
            } else {
                Some(q.rem_euclid(m) as usize)
            }
        };
        Some(wrap(k[0])? * self.spec.m + wrap(k[1])?)
    }

    /// Flat index of `-k` for the mode stored at `idx`.
    #[inline]
    fn neg_index(&self, idx: usize) -> usize {
        let m = self.spec.m;
        let (i, j) = (idx / m, idx % m);
        ((m - i) % m) * m + (m - j) % m
    }

    /// Physical coordinates of node `(i, j)`.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        let h = TWO_PI / self.spec.m as f64;
        (h * i as f64, h * j as f64)
    }

    /// Quadrature weight `(2π/M)²`.
    #[inline]
    pub fn cell_area(&self) -> f64 {
        let h = TWO_PI / self.spec.m as f64;
        h * h
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.spec == other.spec
    }

    /// Unnormalized 2D DFT in place (`inverse` selects the sign of the exponent).
    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let m = self.spec.m;
        let fft = if inverse { &self.inv } else { &self.fwd };
        fft_rows(fft, data, m);
        transpose(data, m);
        fft_rows(fft, data, m);
        transpose(data, m);
    }
}

fn fft_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], m: usize) {
    if m >= PAR_MIN_M && rayon::current_num_threads() > 1 {
        let rows_per_task = 16;
        data.par_chunks_mut(m * rows_per_task).for_each(|chunk| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(chunk, &mut scratch);
        });
    } else {
        fft.process(data);
    }
}

fn transpose(data: &mut [Complex64], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

/// Norms available on spectral fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Norm {
    L2,
    /// Max over physical grid samples.
    Linf,
    /// `‖∇f‖₂`.
    Hdot1,
    /// `(2π)^{-2} Σ (1 + |k|^{2s}) |f̂|²`, square-rooted.
    Hs(f64),
    /// `(2π)^{-2} Σ |k|^{2s} |f̂|²`, square-rooted; `k = 0` is excluded for `s ≠ 0`.
    Hdots(f64),
}

/// Real field on the torus represented by its Fourier coefficients.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    /// Wrap raw DFT-layout coefficients. Symmetry is not checked here; see
    /// [`SpectralField::hermitian_defect`].
    pub fn from_coeffs(grid: &Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::LengthMismatch {
                needed: grid.len(),
                got: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("spectral coefficients"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            coeffs,
        })
    }

    /// Projection onto `X_N` of a function sampled on a finer auxiliary grid.
    ///
    /// The function is evaluated on a grid of roughly twice the resolution of
    /// `grid`, transformed, and truncated to the cutoff of `grid`. For analytic
    /// data the aliasing error of the auxiliary transform is far below round-off.
    pub fn sample_projected(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let spec = grid.spec();
        let fine = Grid::new(GridSpec::new(spec.n, next_even_smooth(2 * spec.m), spec.cutoff)?);
        let hi = PhysicalField::from_fn(&fine, f).to_spectral()?;
        Ok(hi.resample(grid).project_to_cutoff())
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient at `k`, zero if `k` is not representable.
    pub fn coeff(&self, k: [i64; 2]) -> Complex64 {
        self.grid
            .index_of(k)
            .map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// Sets `coeff(k) = c` and `coeff(-k) = conj(c)`.
    pub fn set_mode(&mut self, k: [i64; 2], c: Complex64) -> Result<()> {
        let idx = self
            .grid
            .index_of(k)
            .ok_or_else(|| Error::InvalidArgument(format!("mode {k:?} not representable")))?;
        let neg = self.grid.neg_index(idx);
        if neg == idx {
            self.coeffs[idx] = Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[idx] = c;
            self.coeffs[neg] = c.conj();
        }
        Ok(())
    }

    /// `coeff(0)`, i.e. `∫ f dx`.
    #[inline]
    pub fn mean_coeff(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Zeroes the `k = 0` mode.
    pub fn remove_mean(&mut self) {
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    /// `max_k |coeff(k) - conj(coeff(-k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.grid.neg_index(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Whether every nonzero coefficient lies inside the grid's cutoff set.
    pub fn is_in_cutoff(&self) -> bool {
        let spec = self.grid.spec();
        self.coeffs
            .iter()
            .enumerate()
            .all(|(i, c)| spec.in_cutoff(self.grid.wavenumber(i)) || (c.re == 0.0 && c.im == 0.0))
    }

    /// Samples on the physical grid.
    pub fn to_physical(&self) -> Result<PhysicalField> {
        let defect = self.hermitian_defect();
        let scale = self.max_abs_coeff();
        if defect > SYMMETRY_TOL * scale {
            return Err(Error::SymmetryViolation { defect });
        }
        Ok(self.to_physical_unchecked())
    }

    /// Inverse transform keeping the real part, without the symmetry check.
    pub(crate) fn to_physical_unchecked(&self) -> PhysicalField {
        let mut buf = self.coeffs.clone();
        self.grid.fft2(&mut buf, true);
        let s = 1.0 / (TWO_PI * TWO_PI);
        PhysicalField {
            grid: Arc::clone(&self.grid),
            values: buf.into_iter().map(|c| c.re * s).collect(),
        }
    }

    /// `Π_N` for an explicit cutoff `n` and shape.
    pub fn project(&self, n: usize, cutoff: Cutoff) -> Result<Self> {
        let m = self.grid.m();
        if 2 * n >= m {
            return Err(Error::Capacity { n, m });
        }
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if !cutoff.contains(self.grid.wavenumber(i), n) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Ok(out)
    }

    /// `Π_N` with the grid's own cutoff.
    pub fn project_to_cutoff(&self) -> Self {
        let spec = self.grid.spec();
        self.project(spec.n, spec.cutoff)
            .expect("grid invariant M >= 4N+2 guarantees capacity")
    }

    /// Scales `coeff(k)` by `sigma(k)`.
    pub fn apply_multiplier(&self, sigma: impl Fn([i64; 2]) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * sigma(self.grid.wavenumber(i)))
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// Scales `coeff(k)` by a complex symbol, e.g. `i k_j` for a derivative.
    pub fn apply_complex_multiplier(&self, sigma: impl Fn([i64; 2]) -> Complex64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * sigma(self.grid.wavenumber(i)))
            .collect();
        Self {
            grid: Arc::clone(&self.grid),
            coeffs,
        }
    }

    /// `Δf`, symbol `-|k|²`.
    pub fn laplacian(&self) -> Self {
        self.apply_multiplier(|k| -((k[0] * k[0] + k[1] * k[1]) as f64))
    }

    /// `Δ²f`, symbol `|k|⁴`.
    pub fn bilaplacian(&self) -> Self {
        self.apply_multiplier(|k| {
            let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
            k2 * k2
        })
    }

    /// `|∇|^s f`, symbol `|k|^s`. For `s < 0` the field must be mean-zero and
    /// the `k = 0` coefficient of the result is zero.
    pub fn frac_laplacian(&self, s: f64) -> Result<Self> {
        if s < 0.0 && self.coeffs[0].norm() != 0.0 {
            return Err(Error::MeanNonZero {
                coeff0: self.coeffs[0].re,
            });
        }
        Ok(self.apply_multiplier(|k| symbol_abs_k_pow(k, s)))
    }

    /// `∂f/∂x_axis`, symbol `i k_axis`.
    pub fn partial(&self, axis: usize) -> Self {
        assert!(axis < 2, "axis must be 0 or 1");
        self.apply_complex_multiplier(|k| Complex64::new(0.0, k[axis] as f64))
    }

    /// Physical samples of `(∂₁f, ∂₂f)`.
    pub fn gradient_physical(&self) -> [PhysicalField; 2] {
        [
            self.partial(0).to_physical_unchecked(),
            self.partial(1).to_physical_unchecked(),
        ]
    }

    /// `max_x |∇f(x)|` over grid nodes (Euclidean length of the gradient).
    pub fn grad_sup_norm(&self) -> f64 {
        let [gx, gy] = self.gradient_physical();
        gx.values
            .iter()
            .zip(&gy.values)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    fn weighted_sum(&self, weight: impl Fn([i64; 2]) -> f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| weight(self.grid.wavenumber(i)) * c.norm_sqr())
            .sum::<f64>()
            / (TWO_PI * TWO_PI)
    }

    pub fn norm(&self, kind: Norm) -> f64 {
        match kind {
            Norm::L2 => self.weighted_sum(|_| 1.0).sqrt(),
            Norm::Linf => self.to_physical_unchecked().max_abs(),
            Norm::Hdot1 => self
                .weighted_sum(|k| (k[0] * k[0] + k[1] * k[1]) as f64)
                .sqrt(),
            Norm::Hdots(s) => self
                .weighted_sum(|k| sobolev_weight(k, s))
                .sqrt(),
            Norm::Hs(s) => self
                .weighted_sum(|k| 1.0 + sobolev_weight(k, s))
                .sqrt(),
        }
    }

    /// `(f, g) = (2π)^{-2} Re Σ f̂(k) conj(ĝ(k))`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        Ok(s / (TWO_PI * TWO_PI))
    }

    /// Copies the modes representable on both grids into a field on `grid`.
    pub fn resample(&self, grid: &Arc<Grid>) -> Self {
        let mut out = Self::zeros(grid);
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let k = self.grid.wavenumber(i);
            // Nyquist modes are ambiguous across grid sizes; drop them.
            let nyq_src = (self.grid.m() / 2) as i64;
            let nyq_dst = (grid.m() / 2) as i64;
            if k.iter().any(|q| q.abs() == nyq_src || q.abs() == nyq_dst) {
                continue;
            }
            if let Some(j) = grid.index_of(k) {
                out.coeffs[j] = *c;
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    fn zip_with(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        assert!(
            self.grid.same_as(&other.grid),
            "spectral fields on different grids"
        );
        Self {
            grid: Arc::clone(&self.grid),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        }
    }
}

/// `|k|^s` with the `k = 0` value taken as 0 (or 1 for `s = 0`).
#[inline]
fn symbol_abs_k_pow(k: [i64; 2], s: f64) -> f64 {
    let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
    if k2 == 0.0 {
        if s == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        k2.powf(0.5 * s)
    }
}

#[inline]
fn sobolev_weight(k: [i64; 2], s: f64) -> f64 {
    symbol_abs_k_pow(k, 2.0 * s)
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: Self) -> SpectralField {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: Self) -> SpectralField {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scaled(rhs)
    }
}

/// Real samples on the `M × M` grid, row-major in `x₁`.
#[derive(Clone, Debug)]
pub struct PhysicalField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for PhysicalField {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl PhysicalField {
    pub fn new(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                needed: grid.len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("physical samples"));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    pub(crate) fn from_values_unchecked(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let m = grid.m();
        let values = (0..m * m)
            .map(|idx| {
                let (x, y) = grid.node(idx / m, idx % m);
                f(x, y)
            })
            .collect();
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    #[inline]
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Pointwise map.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Trapezoidal rule `(2π/M)² Σ v_ij`, exact for trig polynomials of degree `< M`.
    pub fn quadrature(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// DFT quadrature of `∫ v e^{-ik·x} dx`; Hermitian symmetry is enforced.
    pub fn to_spectral(&self) -> Result<SpectralField> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("physical samples"));
        }
        let mut buf: Vec<Complex64> = self
            .values
            .iter()
            .map(|v| Complex64::new(*v, 0.0))
            .collect();
        self.grid.fft2(&mut buf, false);
        let area = self.grid.cell_area();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); buf.len()];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let j = self.grid.neg_index(i);
            *c = 0.5 * area * (buf[i] + buf[j].conj());
        }
        Ok(SpectralField {
            grid: Arc::clone(&self.grid),
            coeffs,
        })
    }
}
