//! Periodic grid functions on `[0, 2π)` and Fourier multipliers.
//!
//! Coefficients use the normalization `f(x) = Σ_k c_k e^{ikx}` with
//! `c_k = (1/N) Σ_j f(x_j) e^{-ikx_j}`. Every operator in the crate acts on
//! the modes `|k| < N/2`; the Nyquist coefficient is dropped by all
//! multipliers.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{precondition, Error, Result};
use crate::scalar::Real;

/// Uniform periodic grid with its FFT plans, plus the 3/2-padded grid used
/// to dealias nonlinear products.
pub struct Grid<T: Real> {
    n: usize,
    padded: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    fwd_padded: Arc<dyn Fft<T>>,
    inv_padded: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("padded", &self.padded).finish()
    }
}

impl<T: Real> Grid<T> {
    /// `n` must be a power of two, at least 8.
    pub fn new(n: usize) -> Result<Arc<Self>> {
        if n < 8 || !n.is_power_of_two() {
            return Err(precondition(format!("grid size must be a power of two >= 8, got {n}")));
        }
        let padded = 3 * n / 2;
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            n,
            padded,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            fwd_padded: planner.plan_fft_forward(padded),
            inv_padded: planner.plan_fft_inverse(padded),
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Size of the dealiasing grid (3n/2).
    pub fn padded_len(&self) -> usize {
        self.padded
    }

    /// Largest resolved wavenumber, `n/2 - 1`.
    pub fn kmax(&self) -> usize {
        self.n / 2 - 1
    }

    pub fn spacing(&self) -> T {
        T::TAU() / T::from_count(self.n)
    }

    pub fn x(&self, j: usize) -> T {
        self.spacing() * T::from_count(j)
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Wavenumber of FFT slot `idx`; the Nyquist slot maps to `-n/2`.
    pub fn wavenumber(&self, idx: usize) -> i64 {
        let n = self.n as i64;
        let i = idx as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT slot of wavenumber `k`, if representable.
    pub fn slot(&self, k: i64) -> Option<usize> {
        let n = self.n as i64;
        if k >= -n / 2 && k < n / 2 {
            Some(k.rem_euclid(n) as usize)
        } else {
            None
        }
    }

    pub(crate) fn forward(&self, values: &[T]) -> Vec<Complex<T>> {
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fwd.process(&mut buf);
        let inv_n = T::one() / T::from_count(self.n);
        buf.iter_mut().for_each(|c| *c = *c * inv_n);
        buf
    }

    /// Inverse transform of a full spectrum; returns values and the largest
    /// imaginary magnitude encountered.
    pub(crate) fn inverse(&self, spectrum: &[Complex<T>]) -> (Vec<T>, T) {
        let mut buf = spectrum.to_vec();
        self.inv.process(&mut buf);
        let residue = buf.iter().fold(T::zero(), |m, c| m.max(c.im.abs()));
        (buf.into_iter().map(|c| c.re).collect(), residue)
    }

    /// Evaluates `count` real functions given by half spectra (modes
    /// `0..=kmax`, stored contiguously) on the padded grid.
    pub(crate) fn half_to_padded(&self, half: &[Complex<T>], count: usize, out: &mut [T]) {
        let kh = self.kmax() + 1;
        let m = self.padded;
        debug_assert_eq!(half.len(), kh * count);
        debug_assert_eq!(out.len(), m * count);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); m * count];
        for c in 0..count {
            let src = &half[c * kh..(c + 1) * kh];
            let dst = &mut buf[c * m..(c + 1) * m];
            dst[0] = Complex::new(src[0].re, T::zero());
            for k in 1..kh {
                dst[k] = src[k];
                dst[m - k] = src[k].conj();
            }
        }
        self.inv_padded.process(&mut buf);
        for (o, b) in out.iter_mut().zip(&buf) {
            *o = b.re;
        }
    }

    /// Inverse of [`Grid::half_to_padded`] followed by truncation to the
    /// resolved modes.
    pub(crate) fn padded_to_half(&self, values: &[T], count: usize, out: &mut [Complex<T>]) {
        let kh = self.kmax() + 1;
        let m = self.padded;
        debug_assert_eq!(values.len(), m * count);
        debug_assert_eq!(out.len(), kh * count);
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fwd_padded.process(&mut buf);
        let inv_m = T::one() / T::from_count(m);
        for c in 0..count {
            for k in 0..kh {
                out[c * kh + k] = buf[c * m + k] * inv_m;
            }
            out[c * kh] = Complex::new(out[c * kh].re, T::zero());
        }
    }
}

/// Real periodic function sampled on a [`Grid`], with a lazily computed
/// spectrum.
pub struct GridFunction<T: Real> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
    spectrum: OnceLock<Vec<Complex<T>>>,
    mean_zero: bool,
}

impl<T: Real> Clone for GridFunction<T> {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.clone(),
            spectrum: self.spectrum.clone(),
            mean_zero: self.mean_zero,
        }
    }
}

impl<T: Real> fmt::Debug for GridFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("n", &self.grid.n)
            .field("mean_zero", &self.mean_zero)
            .field("sup", &self.sup_norm())
            .finish()
    }
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch { expected: grid.n, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(precondition("grid function values must be finite"));
        }
        Ok(Self { grid, values, spectrum: OnceLock::new(), mean_zero: false })
    }

    pub fn from_fn(grid: &Arc<Grid<T>>, f: impl Fn(T) -> T) -> Self {
        let values = (0..grid.n).map(|j| f(grid.x(j))).collect();
        Self { grid: grid.clone(), values, spectrum: OnceLock::new(), mean_zero: false }
    }

    pub fn zeros(grid: &Arc<Grid<T>>) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![T::zero(); grid.n],
            spectrum: OnceLock::new(),
            mean_zero: true,
        }
    }

    /// Builds a real function from modes `0..=kmax`; the imaginary part of
    /// the zero mode is discarded.
    pub fn from_half_spectrum(grid: &Arc<Grid<T>>, half: &[Complex<T>]) -> Self {
        let n = grid.n;
        let mut full = vec![Complex::new(T::zero(), T::zero()); n];
        full[0] = Complex::new(half.first().map_or(T::zero(), |c| c.re), T::zero());
        for k in 1..half.len().min(grid.kmax() + 1) {
            full[k] = half[k];
            full[n - k] = half[k].conj();
        }
        let (values, _) = grid.inverse(&full);
        let mean_zero = full[0].re == T::zero();
        let spectrum = OnceLock::new();
        let _ = spectrum.set(full);
        Self { grid: grid.clone(), values, spectrum, mean_zero }
    }

    pub(crate) fn with_mean_zero_flag(mut self, flag: bool) -> Self {
        self.mean_zero = flag;
        self
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Full spectrum in FFT order (computed at most once).
    pub fn spectrum(&self) -> &[Complex<T>] {
        self.spectrum.get_or_init(|| self.grid.forward(&self.values))
    }

    /// Coefficient of wavenumber `k` (zero when not representable).
    pub fn coefficient(&self, k: i64) -> Complex<T> {
        self.grid
            .slot(k)
            .map(|s| self.spectrum()[s])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    /// Modes `0..=kmax`.
    pub fn half_spectrum(&self) -> Vec<Complex<T>> {
        self.spectrum()[..=self.grid.kmax()].to_vec()
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_count(self.n())
    }

    /// Whether the function was produced as mean-zero by construction.
    pub fn flagged_mean_zero(&self) -> bool {
        self.mean_zero
    }

    /// Numerical mean-zero test: `|mean| <= tol * max(1, sup|f|)`.
    pub fn is_mean_zero(&self, tol: T) -> bool {
        self.mean().abs() <= tol * self.sup_norm().max(T::one())
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    /// Quadrature `∫ f g dx` over the torus.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.n(), other.n(), "grid mismatch in dot product");
        self.values.iter().zip(&other.values).fold(T::zero(), |s, (&a, &b)| s + a * b) * self.grid.spacing()
    }

    pub fn l2_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_fn_values(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn from_fn_values(grid: &Arc<Grid<T>>, values: Vec<T>) -> Self {
        Self { grid: grid.clone(), values, spectrum: OnceLock::new(), mean_zero: false }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.map(|v| a * v);
        out.mean_zero = self.mean_zero;
        out
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: T, other: &Self) -> Self {
        assert_eq!(self.n(), other.n(), "grid mismatch in axpy");
        let values = self.values.iter().zip(&other.values).map(|(&x, &y)| x + a * y).collect();
        Self {
            grid: self.grid.clone(),
            values,
            spectrum: OnceLock::new(),
            mean_zero: self.mean_zero && other.mean_zero,
        }
    }

    /// Values on the 3/2-padded grid (Nyquist mode dropped).
    pub fn padded_values(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.padded];
        self.grid.half_to_padded(&self.half_spectrum(), 1, &mut out);
        out
    }
}

impl<T: Real> std::ops::Add for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn add(self, rhs: Self) -> GridFunction<T> {
        self.axpy(T::one(), rhs)
    }
}

impl<T: Real> std::ops::Sub for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn sub(self, rhs: Self) -> GridFunction<T> {
        self.axpy(-T::one(), rhs)
    }
}

impl<T: Real> std::ops::Neg for &GridFunction<T> {
    type Output = GridFunction<T>;
    fn neg(self) -> GridFunction<T> {
        self.scaled(-T::one())
    }
}

/// Fluid layer below the surface.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Depth<T> {
    /// Flat bottom at `y = -b`.
    Finite { b: T },
    /// Deep fluid, realized numerically on a strip of depth `truncation`.
    Infinite { truncation: T },
}

impl<T: Real> Depth<T> {
    pub fn finite_depth(&self) -> Option<T> {
        match *self {
            Depth::Finite { b } => Some(b),
            Depth::Infinite { .. } => None,
        }
    }

    /// Depth of the computational strip (`b` or the truncation depth).
    pub fn strip_depth(&self) -> T {
        match *self {
            Depth::Finite { b } => b,
            Depth::Infinite { truncation } => truncation,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Depth::Finite { b } if !(b > T::zero() && b.is_finite()) => {
                Err(precondition("finite depth b must be positive"))
            }
            Depth::Infinite { truncation } if !(truncation > T::zero() && truncation.is_finite()) => {
                Err(precondition("truncation depth must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Physical parameters: surface tension, gravity, wave speed and depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FluidParams<T> {
    pub sigma: T,
    pub gravity: T,
    pub speed: T,
    pub depth: Depth<T>,
}

impl<T: Real> FluidParams<T> {
    pub fn new(sigma: T, gravity: T, speed: T, depth: Depth<T>) -> Result<Self> {
        let p = Self { sigma, gravity, speed, depth };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= T::zero()) || !self.sigma.is_finite() {
            return Err(precondition("surface tension must be >= 0"));
        }
        if !(self.gravity >= T::zero()) || !self.gravity.is_finite() {
            return Err(precondition("gravity must be >= 0"));
        }
        if !(self.sigma + self.gravity > T::zero()) {
            return Err(precondition("sigma + gravity must be positive"));
        }
        if self.speed == T::zero() || !self.speed.is_finite() {
            return Err(precondition("speed must be nonzero"));
        }
        self.depth.validate()
    }

    pub fn with_sigma(&self, sigma: T) -> Self {
        Self { sigma, ..*self }
    }
}

/// `m(k) = |k| tanh(b|k|)` for finite depth, `|k|` for infinite depth.
pub fn multiplier_m<T: Real>(k: i64, depth: &Depth<T>) -> T {
    let ak = T::from_i64(k.abs()).expect("wavenumber representable");
    match *depth {
        Depth::Finite { b } => ak * (b * ak).tanh(),
        Depth::Infinite { .. } => ak,
    }
}

/// Inverse symbol of the linear traveling-wave operator,
/// `1 / (-iγk + m(k)(σk² + g))`, defined for `k != 0`.
pub fn multiplier_m1<T: Real>(k: i64, params: &FluidParams<T>) -> Result<Complex<T>> {
    if k == 0 {
        return Err(Error::Domain("m1 is undefined at k = 0 (mean-zero functions only)".into()));
    }
    Ok(linear_symbol(k, params).inv())
}

/// `-iγk + m(k)(σk² + g)`: symbol of `-γ∂₁ + m(D)(-σΔ + g)`.
pub fn linear_symbol<T: Real>(k: i64, params: &FluidParams<T>) -> Complex<T> {
    let kf = T::from_i64(k).expect("wavenumber representable");
    let m = multiplier_m(k, &params.depth);
    Complex::new(m * (params.sigma * kf * kf + params.gravity), -params.speed * kf)
}

type SymbolFn<T> = dyn Fn(i64) -> Complex<T> + Send + Sync;

/// A Fourier multiplier `a(D)` given by its symbol on integer wavenumbers.
#[derive(Clone)]
pub struct MultiplierSymbol<T: Real> {
    eval: Arc<SymbolFn<T>>,
    tag: String,
    singular_at_zero: bool,
}

impl<T: Real> fmt::Debug for MultiplierSymbol<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSymbol")
            .field("tag", &self.tag)
            .field("singular_at_zero", &self.singular_at_zero)
            .finish()
    }
}

impl<T: Real> MultiplierSymbol<T> {
    /// `singular_at_zero` marks symbols that are only applied to mean-zero
    /// functions; `f` is then never evaluated at `k = 0`.
    pub fn new(
        tag: impl Into<String>,
        singular_at_zero: bool,
        f: impl Fn(i64) -> Complex<T> + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Arc::new(f), tag: tag.into(), singular_at_zero }
    }

    pub fn real(tag: impl Into<String>, f: impl Fn(i64) -> T + Send + Sync + 'static) -> Self {
        Self::new(tag, false, move |k| Complex::new(f(k), T::zero()))
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn singular_at_zero(&self) -> bool {
        self.singular_at_zero
    }

    /// Symbol value; `None` at `k = 0` for singular symbols.
    pub fn eval(&self, k: i64) -> Option<Complex<T>> {
        if k == 0 && self.singular_at_zero {
            None
        } else {
            Some((self.eval)(k))
        }
    }

    /// `m(D)`, the flat-surface DtN operator.
    pub fn dtn_flat(depth: Depth<T>) -> Self {
        Self::real("m(D)", move |k| multiplier_m(k, &depth))
    }

    /// `m(D)^{-1}` on mean-zero functions.
    pub fn dtn_flat_inverse(depth: Depth<T>) -> Self {
        Self::new("m(D)^-1", true, move |k| Complex::new(T::one() / multiplier_m(k, &depth), T::zero()))
    }

    /// `m₁(D)`, inverse of `-γ∂₁ + m(D)(-σΔ + g)` on mean-zero functions.
    pub fn m1(params: FluidParams<T>) -> Self {
        Self::new("m1(D)", true, move |k| linear_symbol(k, &params).inv())
    }

    /// `-γ∂₁ + m(D)(-σΔ + g)`.
    pub fn traveling_linear(params: FluidParams<T>) -> Self {
        Self::new("-γ∂₁+m(D)(-σΔ+g)", false, move |k| linear_symbol(k, &params))
    }

    /// `∂₁`.
    pub fn derivative() -> Self {
        Self::new("∂₁", false, |k| Complex::new(T::zero(), T::from_i64(k).expect("wavenumber")))
    }

    /// `-Δ`.
    pub fn neg_laplacian() -> Self {
        Self::real("-Δ", |k| {
            let kf = T::from_i64(k).expect("wavenumber");
            kf * kf
        })
    }

    /// `-σΔ + g`.
    pub fn capillary_gravity_linear(sigma: T, gravity: T) -> Self {
        Self::real("-σΔ+g", move |k| {
            let kf = T::from_i64(k).expect("wavenumber");
            sigma * kf * kf + gravity
        })
    }

    /// Translation `f ↦ f(· - s)`.
    pub fn shift(s: T) -> Self {
        Self::new("shift", false, move |k| {
            let phase = -T::from_i64(k).expect("wavenumber") * s;
            Complex::new(phase.cos(), phase.sin())
        })
    }
}

/// Applies a multiplier and reports the largest imaginary value produced by
/// the inverse transform (zero up to rounding for Hermitian symbols).
pub fn apply_multiplier_with_residue<T: Real>(
    f: &GridFunction<T>,
    sym: &MultiplierSymbol<T>,
) -> Result<(GridFunction<T>, T)> {
    let grid = f.grid().clone();
    if sym.singular_at_zero && !f.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition(format!(
            "multiplier {} is singular at k = 0 but the input has mean {:.3e}",
            sym.tag,
            f.mean().as_f64()
        )));
    }
    let n = grid.n();
    let spec = f.spectrum();
    let mut out = vec![Complex::new(T::zero(), T::zero()); n];
    for (idx, slot) in out.iter_mut().enumerate() {
        let k = grid.wavenumber(idx);
        if k == -(n as i64) / 2 {
            continue;
        }
        if let Some(a) = sym.eval(k) {
            *slot = a * spec[idx];
        }
    }
    let (values, residue) = grid.inverse(&out);
    let zero_mode = out[0].re == T::zero() && out[0].im == T::zero();
    let spectrum = OnceLock::new();
    let _ = spectrum.set(out);
    let g = GridFunction { grid, values, spectrum, mean_zero: zero_mode };
    Ok((g, residue))
}

/// Applies the multiplier `sym` to `f`.
pub fn apply_multiplier<T: Real>(f: &GridFunction<T>, sym: &MultiplierSymbol<T>) -> Result<GridFunction<T>> {
    apply_multiplier_with_residue(f, sym).map(|(g, _)| g)
}

/// Removes the mean; every other coefficient is unchanged.
pub fn project_mean_zero<T: Real>(f: &GridFunction<T>) -> GridFunction<T> {
    let mean = f.mean();
    let values = f.values().iter().map(|&v| v - mean).collect();
    GridFunction::from_fn_values(f.grid(), values).with_mean_zero_flag(true)
}

/// Spectral derivative `∂₁ f`.
pub fn derivative<T: Real>(f: &GridFunction<T>) -> GridFunction<T> {
    apply_multiplier(f, &MultiplierSymbol::derivative()).expect("derivative symbol is regular")
}

/// Spectral translation `f(· - s)`.
pub fn shift<T: Real>(f: &GridFunction<T>, s: T) -> GridFunction<T> {
    let mut out = apply_multiplier(f, &MultiplierSymbol::shift(s)).expect("shift symbol is regular");
    out.mean_zero = f.mean_zero;
    out
}

/// Spectral interpolation onto a grid of a different size (modes beyond the
/// target resolution are dropped).
pub fn resample<T: Real>(f: &GridFunction<T>, target: &Arc<Grid<T>>) -> GridFunction<T> {
    let half = f.half_spectrum();
    let keep = half.len().min(target.kmax() + 1);
    let mut out = vec![Complex::new(T::zero(), T::zero()); target.kmax() + 1];
    out[..keep].copy_from_slice(&half[..keep]);
    GridFunction::from_half_spectrum(target, &out).with_mean_zero_flag(f.mean_zero)
}

/// Evaluates a pointwise nonlinearity of several grid functions on the
/// 3/2-padded grid and projects the result back to the resolved modes.
pub fn dealiased_map<T: Real>(inputs: &[&GridFunction<T>], f: impl Fn(&[T]) -> T) -> GridFunction<T> {
    let grid = inputs[0].grid().clone();
    let padded: Vec<Vec<T>> = inputs.iter().map(|g| g.padded_values()).collect();
    let m = grid.padded_len();
    let mut args = vec![T::zero(); inputs.len()];
    let vals: Vec<T> = (0..m)
        .map(|i| {
            for (a, p) in args.iter_mut().zip(&padded) {
                *a = p[i];
            }
            f(&args)
        })
        .collect();
    let mut half = vec![Complex::new(T::zero(), T::zero()); grid.kmax() + 1];
    grid.padded_to_half(&vals, 1, &mut half);
    GridFunction::from_half_spectrum(&grid, &half).with_mean_zero_flag(false)
}

/// Grid surrogates for the sup, C¹, L² and C^{1,β} norms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscreteNorms<T> {
    pub sup_norm: T,
    pub c1_norm: T,
    pub l2_norm: T,
    /// Hölder seminorm of the derivative, `max |f'(x)-f'(y)| / dist(x,y)^β`.
    pub holder_seminorm: T,
    pub beta: T,
}

pub fn discrete_norms<T: Real>(f: &GridFunction<T>, beta: T) -> DiscreteNorms<T> {
    let grid = f.grid();
    let df = derivative(f);
    let d = df.values();
    let n = grid.n();
    let h = grid.spacing();
    let mut holder = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let gap = (j - i).min(n - (j - i));
            let dist = h * T::from_count(gap);
            let q = (d[i] - d[j]).abs() / dist.powf(beta);
            holder = holder.max(q);
        }
    }
    let sup = f.sup_norm();
    DiscreteNorms {
        sup_norm: sup,
        c1_norm: sup + df.sup_norm(),
        l2_norm: f.l2_norm(),
        holder_seminorm: holder,
        beta,
    }
}

/// Fraction of spectral energy carried by the upper half of the resolved
/// modes (`|k| > kmax/2`).
pub fn upper_spectrum_fraction<T: Real>(f: &GridFunction<T>) -> T {
    let half = f.half_spectrum();
    let cut = half.len() / 2;
    let total: T = half.iter().skip(1).map(|c| c.norm_sqr()).sum();
    if total == T::zero() {
        return T::zero();
    }
    let upper: T = half.iter().skip(cut.max(1)).map(|c| c.norm_sqr()).sum();
    upper / total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid<f64>> {
        Grid::new(n).unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid::<f64>::new(96).is_err());
        assert!(Grid::<f64>::new(4).is_err());
    }

    #[test]
    fn multiplier_m_values() {
        let inf = Depth::Infinite { truncation: 10.0 };
        assert_eq!(multiplier_m(0, &Depth::Finite { b: 1.0 }), 0.0);
        assert_eq!(multiplier_m(0, &inf), 0.0);
        assert_eq!(multiplier_m(2, &inf), 2.0);
        assert!((multiplier_m(1, &Depth::Finite { b: 1.0f64 }) - 0.761_594_155_955_764_9).abs() < 1e-15);
        assert_eq!(multiplier_m(-3, &inf), multiplier_m(3, &inf));
    }

    #[test]
    fn multiplier_m1_values() {
        let p = FluidParams::new(1.0f64, 0.0, 1.0, Depth::Infinite { truncation: 10.0 }).unwrap();
        let v = multiplier_m1(1, &p).unwrap();
        assert!((v.re - 0.5).abs() < 1e-15 && (v.im - 0.5).abs() < 1e-15);
        let w = multiplier_m1(-1, &p).unwrap();
        assert!((w - v.conj()).norm() < 1e-15);
        assert!(matches!(multiplier_m1(0, &p), Err(Error::Domain(_))));

        let q = FluidParams::new(1.0, 1.0, 2.0, Depth::Finite { b: 1.0 }).unwrap();
        let expected = Complex::new(2.0 * 2.0f64.tanh() * 5.0, -4.0).inv();
        assert!((multiplier_m1(2, &q).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn params_validation() {
        let d = Depth::Infinite { truncation: 10.0 };
        assert!(FluidParams::new(1.0, 1.0, 0.0, d).is_err());
        assert!(FluidParams::new(0.0, 0.0, 1.0, d).is_err());
        assert!(FluidParams::new(-1.0, 1.0, 1.0, d).is_err());
        assert!(FluidParams::new(1.0, 1.0, 1.0, Depth::Finite { b: 0.0 }).is_err());
    }

    #[test]
    fn multiplier_examples() {
        let g = grid(64);
        let cos = GridFunction::from_fn(&g, f64::cos);
        let m = MultiplierSymbol::dtn_flat(Depth::Infinite { truncation: 10.0 });
        let out = apply_multiplier(&cos, &m).unwrap();
        assert!((&out - &cos).sup_norm() < 1e-14);

        let c = GridFunction::from_fn(&g, |_| 3.5);
        assert!(derivative(&c).sup_norm() < 1e-14);

        let s2 = GridFunction::from_fn(&g, |x| (2.0 * x).sin());
        let lap = apply_multiplier(&s2, &MultiplierSymbol::neg_laplacian()).unwrap();
        let err = (&lap - &s2.scaled(4.0)).sup_norm();
        assert!(err < 1e-12, "err {err}");
    }

    #[test]
    fn singular_symbol_requires_mean_zero() {
        let g = grid(32);
        let f = GridFunction::from_fn(&g, |x| 1.0 + x.cos());
        let p = FluidParams::new(1.0, 1.0, 1.0, Depth::Infinite { truncation: 10.0 }).unwrap();
        assert!(matches!(apply_multiplier(&f, &MultiplierSymbol::m1(p)), Err(Error::Precondition(_))));
    }

    #[test]
    fn projection_examples() {
        let g = grid(32);
        let f = GridFunction::from_fn(&g, |x| 3.0 + x.cos());
        let p = project_mean_zero(&f);
        assert!((&p - &GridFunction::from_fn(&g, f64::cos)).sup_norm() < 1e-14);
        assert!(p.flagged_mean_zero());
        assert!(p.spectrum()[0].norm() <= 1e-12);
        let z = project_mean_zero(&GridFunction::zeros(&g));
        assert_eq!(z.sup_norm(), 0.0);
        let again = project_mean_zero(&p);
        assert!((&again - &p).sup_norm() < 1e-15);
    }

    #[test]
    fn norms_examples() {
        let g = grid(64);
        let z = discrete_norms(&GridFunction::zeros(&g), 0.5);
        assert_eq!((z.sup_norm, z.c1_norm, z.l2_norm, z.holder_seminorm), (0.0, 0.0, 0.0, 0.0));
        let cos = discrete_norms(&GridFunction::from_fn(&g, f64::cos), 0.5);
        assert!((cos.sup_norm - 1.0).abs() < 1e-14);
        assert!((cos.c1_norm - 2.0).abs() < 1e-13);
        let a = 0.25;
        let n = discrete_norms(&GridFunction::from_fn(&g, |x| a * x.cos()), 0.5);
        assert!((n.l2_norm.powi(2) - std::f64::consts::PI * a * a).abs() < 1e-14);
    }

    #[test]
    fn shift_and_resample() {
        let g = grid(32);
        let f = GridFunction::from_fn(&g, |x| (2.0 * x).sin() + 0.3 * x.cos());
        let s = shift(&f, 0.7);
        let expected = GridFunction::from_fn(&g, |x| (2.0 * (x - 0.7)).sin() + 0.3 * (x - 0.7).cos());
        assert!((&s - &expected).sup_norm() < 1e-13);
        let fine = grid(64);
        let r = resample(&f, &fine);
        let expected = GridFunction::from_fn(&fine, |x| (2.0 * x).sin() + 0.3 * x.cos());
        assert!((&r - &expected).sup_norm() < 1e-13);
    }

    #[test]
    fn dealiased_product_is_exact_for_quadratics() {
        let g = grid(16);
        // cos(7x)^2 aliases on the 16-grid; the padded product keeps only the mean
        let f = GridFunction::from_fn(&g, |x| (7.0 * x).cos());
        let sq = dealiased_map(&[&f], |a| a[0] * a[0]);
        assert!((sq.mean() - 0.5).abs() < 1e-14);
        let expected = GridFunction::from_fn(&g, |_| 0.5);
        assert!((&sq - &expected).sup_norm() < 1e-14);
    }

    #[test]
    fn f32_instantiation() {
        let g = Grid::<f32>::new(32).unwrap();
        let f = GridFunction::from_fn(&g, |x| (3.0 * x).sin());
        let lap = apply_multiplier(&f, &MultiplierSymbol::neg_laplacian()).unwrap();
        assert!((&lap - &f.scaled(9.0)).sup_norm() < 1e-4);
    }
}
