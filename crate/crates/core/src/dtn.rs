//! Dirichlet-to-Neumann operator of the periodic fluid layer below a graph.
//!
//! The layer is flattened with `y = ρ(x, z)`, `ρ = (z+b)/b·η + z` (finite
//! depth) or `ρ = η + z` (deep fluid on a truncated strip), which turns
//! Laplace's equation into `div(𝒜∇v) = 0` on the strip `z ∈ (-H, 0)` with
//!
//! ```text
//! 𝒜 = [ ρ_z      -ρ_x          ]
//!     [ -ρ_x  (1 + ρ_x²) / ρ_z ]
//! ```
//!
//! The strip is discretized with Fourier modes in `x` and Chebyshev
//! collocation in `z`; the Chebyshev nodes are stretched toward the surface.
//! Products with the coefficient field are formed on the 3/2-padded grid.
//! The coupled system is solved with GMRES, right-preconditioned by the
//! mode-diagonal operator obtained by averaging `𝒜` in `x`.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{precondition, Error, Result};
use crate::linalg::{gmres, DenseLu, GmresOptions};
use crate::scalar::Real;
use crate::spectral::{derivative, multiplier_m, project_mean_zero, Depth, Grid, GridFunction};

/// Discretization and solver settings for the elliptic problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtnConfig<T> {
    /// Chebyshev points in `z`; `None` picks 32 (finite) or 48 (infinite).
    pub nz: Option<usize>,
    /// Exponential stretching of the `z` nodes toward the surface; `None`
    /// picks 1 (finite) or 3 (infinite).
    pub stretch: Option<T>,
    /// Smallest admissible `min(η + b)`, as a fraction of `b`.
    pub clearance_floor: T,
    /// Relative GMRES tolerance of each elliptic solve.
    pub tol: T,
    pub max_iter: usize,
    pub restart: usize,
}

impl<T: Real> Default for DtnConfig<T> {
    fn default() -> Self {
        Self {
            nz: None,
            stretch: None,
            clearance_floor: T::lit(1e-3),
            tol: T::lit(1e-13),
            max_iter: 800,
            restart: 80,
        }
    }
}

impl<T: Real> DtnConfig<T> {
    pub fn with_nz(mut self, nz: usize) -> Self {
        self.nz = Some(nz);
        self
    }

    pub fn resolved_nz(&self, depth: &Depth<T>) -> usize {
        self.nz.unwrap_or(match depth {
            Depth::Finite { .. } => 32,
            Depth::Infinite { .. } => 48,
        })
    }

    pub fn resolved_stretch(&self, depth: &Depth<T>) -> T {
        self.stretch.unwrap_or_else(|| match depth {
            Depth::Finite { .. } => T::one(),
            Depth::Infinite { .. } => T::lit(3.0),
        })
    }
}

/// Chebyshev nodes mapped to `z ∈ [-H, 0]` (index 0 is the surface) and
/// the first-derivative matrix in `z`, row-major.
pub(crate) fn chebyshev_strip<T: Real>(nz: usize, depth: T, stretch: T) -> (Vec<T>, Vec<T>) {
    let n = nz - 1;
    let nf = T::from_count(n);
    let s: Vec<T> = (0..nz).map(|j| (T::PI() * T::from_count(j) / nf).cos()).collect();
    let c = |j: usize| -> T {
        let base = if j == 0 || j == n { T::lit(2.0) } else { T::one() };
        if j.is_multiple_of(2) {
            base
        } else {
            -base
        }
    };
    let mut ds = vec![T::zero(); nz * nz];
    for i in 0..nz {
        let mut row_sum = T::zero();
        for j in 0..nz {
            if i != j {
                let v = c(i) / c(j) / (s[i] - s[j]);
                ds[i * nz + j] = v;
                row_sum = row_sum + v;
            }
        }
        ds[i * nz + i] = -row_sum;
    }
    let half = T::lit(0.5);
    let (z, dzds): (Vec<T>, Vec<T>) = if stretch.abs() < T::lit(1e-12) {
        s.iter().map(|&si| (depth * (si - T::one()) * half, depth * half)).unzip()
    } else {
        let denom = stretch.exp() - T::one();
        s.iter()
            .map(|&si| {
                let e = (stretch * (T::one() - si) * half).exp();
                (-depth * (e - T::one()) / denom, depth * stretch * half * e / denom)
            })
            .unzip()
    };
    let mut dz = ds;
    for i in 0..nz {
        let inv = T::one() / dzds[i];
        for j in 0..nz {
            dz[i * nz + j] = dz[i * nz + j] * inv;
        }
    }
    // exact surface and bottom positions
    let mut z = z;
    z[0] = T::zero();
    z[nz - 1] = -depth;
    (z, dz)
}

/// Flattened-domain discretization for a fixed surface `η`, ready for
/// repeated Dirichlet-to-Neumann applications.
pub struct EllipticWorkspace<T: Real> {
    eta: GridFunction<T>,
    depth: Depth<T>,
    grid: Arc<Grid<T>>,
    nz: usize,
    z: Vec<T>,
    dz: Vec<T>,
    /// Coefficients on the padded grid, level-major (`l * padded + m`).
    a11: Vec<T>,
    a12: Vec<T>,
    a22: Vec<T>,
    jacobian_min: T,
    clearance: Option<T>,
    blocks: Vec<DenseLu<T>>,
    cfg: DtnConfig<T>,
}

impl<T: Real> std::fmt::Debug for EllipticWorkspace<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticWorkspace")
            .field("n", &self.grid.n())
            .field("nz", &self.nz)
            .field("depth", &self.depth)
            .field("clearance", &self.clearance)
            .finish()
    }
}

type Spec<T> = Vec<Complex<T>>;

impl<T: Real> EllipticWorkspace<T> {
    pub fn eta(&self) -> &GridFunction<T> {
        &self.eta
    }

    pub fn depth(&self) -> Depth<T> {
        self.depth
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    /// Collocation levels in the flattened variable, surface first.
    pub fn z_levels(&self) -> &[T] {
        &self.z
    }

    /// `min ∂_zρ` over the padded grid.
    pub fn jacobian_min(&self) -> T {
        self.jacobian_min
    }

    /// `min(η + b)` for finite depth.
    pub fn clearance(&self) -> Option<T> {
        self.clearance
    }

    /// Coefficient field `(𝒜₁₁, 𝒜₁₂, 𝒜₂₂)` at padded point `m`, level `l`.
    pub fn coefficient(&self, m: usize, l: usize) -> (T, T, T) {
        let i = l * self.grid.padded_len() + m;
        (self.a11[i], self.a12[i], self.a22[i])
    }

    /// `max |det 𝒜 - 1|` over the padded collocation grid.
    pub fn det_defect(&self) -> T {
        self.a11
            .iter()
            .zip(&self.a12)
            .zip(&self.a22)
            .fold(T::zero(), |m, ((&a, &b), &c)| m.max((a * c - b * b - T::one()).abs()))
    }

    fn kh(&self) -> usize {
        self.grid.kmax() + 1
    }

    fn dz_apply(&self, input: &[Complex<T>], out: &mut [Complex<T>]) {
        let (nz, kh) = (self.nz, self.kh());
        for l in 0..nz {
            let row = &self.dz[l * nz..(l + 1) * nz];
            let dst = &mut out[l * kh..(l + 1) * kh];
            dst.iter_mut().for_each(|c| *c = Complex::new(T::zero(), T::zero()));
            for (j, &d) in row.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                let src = &input[j * kh..(j + 1) * kh];
                for (o, &v) in dst.iter_mut().zip(src) {
                    *o = *o + v * d;
                }
            }
        }
    }

    /// Applies the discrete operator to the full field `v` (levels ×
    /// modes). Row 0 of the output is the conormal flux at the surface, rows
    /// `1..nz-1` the divergence, row `nz-1` the conormal flux at the bottom.
    fn operator(&self, v: &[Complex<T>]) -> Spec<T> {
        let (nz, kh, mp) = (self.nz, self.kh(), self.grid.padded_len());
        let zero = Complex::new(T::zero(), T::zero());
        let mut vx = vec![zero; nz * kh];
        for l in 0..nz {
            for k in 0..kh {
                vx[l * kh + k] = v[l * kh + k] * Complex::new(T::zero(), T::from_count(k));
            }
        }
        let mut vz = vec![zero; nz * kh];
        self.dz_apply(v, &mut vz);
        let mut px = vec![T::zero(); nz * mp];
        let mut pz = vec![T::zero(); nz * mp];
        self.grid.half_to_padded(&vx, nz, &mut px);
        self.grid.half_to_padded(&vz, nz, &mut pz);
        for i in 0..nz * mp {
            let (x, z) = (px[i], pz[i]);
            px[i] = self.a11[i] * x + self.a12[i] * z;
            pz[i] = self.a12[i] * x + self.a22[i] * z;
        }
        let mut f1 = vec![zero; nz * kh];
        let mut f2 = vec![zero; nz * kh];
        self.grid.padded_to_half(&px, nz, &mut f1);
        self.grid.padded_to_half(&pz, nz, &mut f2);
        let mut out = vec![zero; nz * kh];
        self.dz_apply(&f2, &mut out);
        for l in 0..nz {
            for k in 0..kh {
                let i = l * kh + k;
                out[i] = out[i] + f1[i] * Complex::new(T::zero(), T::from_count(k));
            }
        }
        for k in 0..kh {
            out[k] = f2[k];
            out[(nz - 1) * kh + k] = f2[(nz - 1) * kh + k];
        }
        out
    }

    fn packed_len(&self) -> usize {
        (self.nz - 1) * (2 * self.kh() - 1)
    }

    /// Packs rows `1..nz` into a real vector (real part only for `k = 0`).
    fn pack(&self, field: &[Complex<T>], out: &mut [T]) {
        let kh = self.kh();
        let mut p = 0;
        for l in 1..self.nz {
            let row = &field[l * kh..(l + 1) * kh];
            out[p] = row[0].re;
            p += 1;
            for c in &row[1..] {
                out[p] = c.re;
                out[p + 1] = c.im;
                p += 2;
            }
        }
    }

    fn unpack(&self, packed: &[T], field: &mut [Complex<T>]) {
        let kh = self.kh();
        let mut p = 0;
        for l in 1..self.nz {
            let row = &mut field[l * kh..(l + 1) * kh];
            row[0] = Complex::new(packed[p], T::zero());
            p += 1;
            for c in &mut row[1..] {
                *c = Complex::new(packed[p], packed[p + 1]);
                p += 2;
            }
        }
    }

    fn precondition_packed(&self, r: &[T], out: &mut [T]) {
        let (nz, kh) = (self.nz, self.kh());
        let zero = Complex::new(T::zero(), T::zero());
        let mut field = vec![zero; nz * kh];
        self.unpack(r, &mut field);
        let mut col = vec![zero; nz - 1];
        for (k, lu) in self.blocks.iter().enumerate() {
            for l in 1..nz {
                col[l - 1] = field[l * kh + k];
            }
            lu.solve_complex_in_place(&mut col);
            for l in 1..nz {
                field[l * kh + k] = col[l - 1];
            }
        }
        for k in 0..1 {
            for l in 1..nz {
                let c = field[l * kh + k];
                field[l * kh + k] = Complex::new(c.re, T::zero());
            }
        }
        self.pack(&field, out);
    }

    /// Solves for the flattened potential with surface data `f_half`
    /// (modes `0..=kmax`); returns the full field, levels × modes.
    fn solve_potential(&self, f_half: &[Complex<T>]) -> Result<Spec<T>> {
        let (nz, kh) = (self.nz, self.kh());
        let zero = Complex::new(T::zero(), T::zero());
        // Constant data extends as a constant; only the rest is solved for.
        let mean = f_half[0].re;
        let mut lift = vec![zero; nz * kh];
        lift[1..kh].copy_from_slice(&f_half[1..kh]);
        let lifted = self.operator(&lift);
        let len = self.packed_len();
        let mut b = vec![T::zero(); len];
        self.pack(&lifted, &mut b);
        b.iter_mut().for_each(|v| *v = -*v);

        let mut x = vec![T::zero(); len];
        self.precondition_packed(&b, &mut x);
        let mut field = vec![zero; nz * kh];
        let opts = GmresOptions {
            rel_tol: self.cfg.tol,
            abs_tol: T::min_positive_value(),
            restart: self.cfg.restart,
            max_iter: self.cfg.max_iter,
        };
        let outcome = gmres(
            |u, out| {
                let mut f = vec![zero; nz * kh];
                self.unpack(u, &mut f);
                let r = self.operator(&f);
                self.pack(&r, out);
                Ok(())
            },
            |r, out| {
                self.precondition_packed(r, out);
                Ok(())
            },
            &b,
            &mut x,
            &opts,
        )?;
        if !outcome.converged {
            return Err(Error::NonConvergence {
                what: "elliptic solve",
                iterations: outcome.iterations,
                residual: outcome.residual.as_f64(),
            });
        }
        self.unpack(&x, &mut field);
        field[..kh].copy_from_slice(&lift[..kh]);
        for l in 0..nz {
            field[l * kh].re = field[l * kh].re + mean;
        }
        Ok(field)
    }

    /// DtN on modes `0..=kmax`; the zero mode of the result is set to 0.
    pub(crate) fn apply_half(&self, f_half: &[Complex<T>]) -> Result<Spec<T>> {
        let mut g = self.trace_half(f_half)?;
        g[0] = Complex::new(T::zero(), T::zero());
        Ok(g)
    }

    fn trace_half(&self, f_half: &[Complex<T>]) -> Result<Spec<T>> {
        let field = self.solve_potential(f_half)?;
        let out = self.operator(&field);
        Ok(out[..self.kh()].to_vec())
    }

    fn check_grid(&self, f: &GridFunction<T>) -> Result<()> {
        if f.n() != self.grid.n() {
            return Err(Error::GridMismatch { expected: self.grid.n(), found: f.n() });
        }
        Ok(())
    }
}

/// Builds the flattened discretization for surface `eta`.
pub fn build_workspace<T: Real>(
    eta: &GridFunction<T>,
    depth: Depth<T>,
    cfg: &DtnConfig<T>,
) -> Result<EllipticWorkspace<T>> {
    if !eta.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition(format!("surface profile must have mean zero (mean {:.3e})", eta.mean().as_f64())));
    }
    let nz = cfg.resolved_nz(&depth);
    if nz < 4 {
        return Err(precondition("need at least 4 Chebyshev points"));
    }
    let grid = eta.grid().clone();
    let strip = depth.strip_depth();
    let stretch = cfg.resolved_stretch(&depth);
    let (z, dz) = chebyshev_strip(nz, strip, stretch);

    let eta_p = eta.padded_values();
    let deta_p = derivative(eta).padded_values();
    let mp = grid.padded_len();

    let clearance = match depth {
        Depth::Finite { b } => {
            let lowest = eta.min_value().min(eta_p.iter().fold(T::infinity(), |m, &v| m.min(v)));
            let c = lowest + b;
            let floor = cfg.clearance_floor * b;
            if !(c >= floor) {
                return Err(Error::BottomCollision { clearance: c.as_f64(), floor: floor.as_f64() });
            }
            Some(c)
        }
        Depth::Infinite { .. } => None,
    };

    let mut a11 = vec![T::zero(); nz * mp];
    let mut a12 = vec![T::zero(); nz * mp];
    let mut a22 = vec![T::zero(); nz * mp];
    let mut jacobian_min = T::infinity();
    for l in 0..nz {
        for m in 0..mp {
            let (rho_z, rho_x) = match depth {
                Depth::Finite { b } => ((eta_p[m] + b) / b, (z[l] + b) / b * deta_p[m]),
                Depth::Infinite { .. } => (T::one(), deta_p[m]),
            };
            jacobian_min = jacobian_min.min(rho_z);
            let i = l * mp + m;
            a11[i] = rho_z;
            a12[i] = -rho_x;
            a22[i] = (T::one() + rho_x * rho_x) / rho_z;
        }
    }

    // x-averaged coefficients for the mode-diagonal preconditioner
    let mpf = T::from_count(mp);
    let a11_bar = a11[..mp].iter().copied().sum::<T>() / mpf;
    let a22_bar: Vec<T> = (0..nz).map(|l| a22[l * mp..(l + 1) * mp].iter().copied().sum::<T>() / mpf).collect();
    let kh = grid.kmax() + 1;
    let inner = nz - 1;
    // mode-independent part: interior rows D·diag(ā₂₂)·D, bottom row ā₂₂·D
    let mut base = vec![T::zero(); inner * inner];
    for l in 1..nz - 1 {
        for c in 1..nz {
            let mut s = T::zero();
            for j in 0..nz {
                s = s + dz[l * nz + j] * a22_bar[j] * dz[j * nz + c];
            }
            base[(l - 1) * inner + (c - 1)] = s;
        }
    }
    let l = nz - 1;
    for c in 1..nz {
        base[(l - 1) * inner + (c - 1)] = a22_bar[l] * dz[l * nz + c];
    }
    let blocks: Vec<DenseLu<T>> = (0..kh)
        .into_par_iter()
        .map(|k| {
            let shift = T::from_count(k * k) * a11_bar;
            let mut mat = base.clone();
            for l in 1..nz - 1 {
                mat[(l - 1) * inner + (l - 1)] = mat[(l - 1) * inner + (l - 1)] - shift;
            }
            DenseLu::factor(inner, mat)
        })
        .collect::<Result<_>>()?;

    Ok(EllipticWorkspace {
        eta: eta.clone(),
        depth,
        grid,
        nz,
        z,
        dz,
        a11,
        a12,
        a22,
        jacobian_min,
        clearance,
        blocks,
        cfg: *cfg,
    })
}

/// `G[η] f`: conormal derivative at the surface of the harmonic extension of
/// `f`. Constants are annihilated; the output has mean zero.
pub fn apply_dtn<T: Real>(ws: &EllipticWorkspace<T>, f: &GridFunction<T>) -> Result<GridFunction<T>> {
    Ok(project_mean_zero(&conormal_trace(ws, f)?))
}

/// The conormal trace before mean projection. Its mean is the discrete
/// net flux through the surface, zero up to solver and quadrature error.
pub fn conormal_trace<T: Real>(ws: &EllipticWorkspace<T>, f: &GridFunction<T>) -> Result<GridFunction<T>> {
    ws.check_grid(f)?;
    let g = ws.trace_half(&f.half_spectrum())?;
    Ok(GridFunction::from_half_spectrum(ws.grid(), &g))
}

/// `R[η] f = G[η] f - m(D) f`.
pub fn dtn_remainder<T: Real>(ws: &EllipticWorkspace<T>, f: &GridFunction<T>) -> Result<GridFunction<T>> {
    ws.check_grid(f)?;
    let mut g = ws.apply_half(&f.half_spectrum())?;
    let fh = f.half_spectrum();
    for (k, (gk, fk)) in g.iter_mut().zip(&fh).enumerate().skip(1) {
        *gk = *gk - *fk * multiplier_m(k as i64, &ws.depth);
    }
    g[0] = Complex::new(T::zero(), T::zero());
    Ok(project_mean_zero(&GridFunction::from_half_spectrum(ws.grid(), &g)))
}

/// Mean-zero `f` with `G[η] f = h`, by GMRES on `G[η]` preconditioned with
/// `m(D)^{-1}`.
pub fn solve_neumann<T: Real>(ws: &EllipticWorkspace<T>, h: &GridFunction<T>) -> Result<GridFunction<T>> {
    ws.check_grid(h)?;
    if !h.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition(format!(
            "Neumann data must have mean zero (mean {:.3e})",
            h.mean().as_f64()
        )));
    }
    let kh = ws.kh();
    let hh = h.half_spectrum();
    let len = 2 * (kh - 1);
    let pack = |s: &[Complex<T>], out: &mut [T]| {
        for k in 1..kh {
            out[2 * (k - 1)] = s[k].re;
            out[2 * (k - 1) + 1] = s[k].im;
        }
    };
    let unpack = |p: &[T]| -> Spec<T> {
        let mut s = vec![Complex::new(T::zero(), T::zero()); kh];
        for k in 1..kh {
            s[k] = Complex::new(p[2 * (k - 1)], p[2 * (k - 1) + 1]);
        }
        s
    };
    let inv_m = |p: &[T], out: &mut [T]| {
        for k in 1..kh {
            let m = multiplier_m(k as i64, &ws.depth);
            out[2 * (k - 1)] = p[2 * (k - 1)] / m;
            out[2 * (k - 1) + 1] = p[2 * (k - 1) + 1] / m;
        }
    };
    let mut b = vec![T::zero(); len];
    pack(&hh, &mut b);
    let mut x = vec![T::zero(); len];
    if b.iter().all(|&v| v == T::zero()) {
        return Ok(GridFunction::zeros(ws.grid()));
    }
    let opts = GmresOptions {
        rel_tol: ws.cfg.tol * T::lit(10.0),
        abs_tol: T::min_positive_value(),
        restart: 60,
        max_iter: 300,
    };
    let outcome = gmres(
        |u, out| {
            let g = ws.apply_half(&unpack(u))?;
            pack(&g, out);
            Ok(())
        },
        |r, out| {
            inv_m(r, out);
            Ok(())
        },
        &b,
        &mut x,
        &opts,
    )?;
    if !outcome.converged {
        return Err(Error::NonConvergence {
            what: "Neumann solve",
            iterations: outcome.iterations,
            residual: outcome.residual.as_f64(),
        });
    }
    Ok(project_mean_zero(&GridFunction::from_half_spectrum(ws.grid(), &unpack(&x))))
}

/// Potential, velocity and pressure in the fluid, sampled on the flattened
/// collocation grid (`x_j`, level `l`) and mapped to `y = ρ(x_j, z_l)`.
/// Arrays are level-major: index `l * n + j`.
#[derive(Clone, Debug)]
pub struct BulkField<T> {
    pub n: usize,
    pub nz: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub q: Vec<T>,
    pub u_x: Vec<T>,
    pub u_y: Vec<T>,
    pub p: Vec<T>,
    /// `max |div u|` evaluated by differentiating the sampled velocity.
    pub max_divergence: T,
    /// `max |u|`.
    pub max_speed: T,
    /// `max |u_y|` on the bottom row (finite depth only).
    pub bottom_normal_velocity: Option<T>,
}

/// Reconstructs the bulk flow with surface potential `f`: `q` harmonic,
/// `u = -∇q`, `p = q - g y`.
pub fn reconstruct_bulk<T: Real>(
    ws: &EllipticWorkspace<T>,
    f: &GridFunction<T>,
    gravity: T,
) -> Result<BulkField<T>> {
    ws.check_grid(f)?;
    let (n, nz, kh) = (ws.grid.n(), ws.nz, ws.kh());
    let field = ws.solve_potential(&f.half_spectrum())?;
    let zero = Complex::new(T::zero(), T::zero());
    let mut vz_half = vec![zero; nz * kh];
    ws.dz_apply(&field, &mut vz_half);

    let level = |spec: &[Complex<T>], l: usize| -> GridFunction<T> {
        GridFunction::from_half_spectrum(&ws.grid, &spec[l * kh..(l + 1) * kh])
    };
    let eta = ws.eta.values().to_vec();
    let deta = derivative(&ws.eta);
    let xs = ws.grid.points();

    let mut out = BulkField {
        n,
        nz,
        x: Vec::with_capacity(n * nz),
        y: Vec::with_capacity(n * nz),
        q: Vec::with_capacity(n * nz),
        u_x: Vec::with_capacity(n * nz),
        u_y: Vec::with_capacity(n * nz),
        p: Vec::with_capacity(n * nz),
        max_divergence: T::zero(),
        max_speed: T::zero(),
        bottom_normal_velocity: None,
    };
    let mut rho_x = vec![T::zero(); n * nz];
    let mut rho_z = vec![T::zero(); n * nz];
    for l in 0..nz {
        let q = level(&field, l);
        let vx = derivative(&q);
        let vz = level(&vz_half, l);
        for j in 0..n {
            let (ry, rx, rz) = match ws.depth {
                Depth::Finite { b } => {
                    let w = (ws.z[l] + b) / b;
                    (w * eta[j] + ws.z[l], w * deta.values()[j], (eta[j] + b) / b)
                }
                Depth::Infinite { .. } => (eta[j] + ws.z[l], deta.values()[j], T::one()),
            };
            rho_x[l * n + j] = rx;
            rho_z[l * n + j] = rz;
            let qv = q.values()[j];
            let (dx, dzv) = (vx.values()[j], vz.values()[j]);
            let ux = -(dx - dzv * rx / rz);
            let uy = -dzv / rz;
            out.x.push(xs[j]);
            out.y.push(ry);
            out.q.push(qv);
            out.u_x.push(ux);
            out.u_y.push(uy);
            out.p.push(qv - gravity * ry);
            out.max_speed = out.max_speed.max((ux * ux + uy * uy).sqrt());
        }
    }

    // div u = ∂x u_x - (ρ_x/ρ_z) ∂z u_x + ∂z u_y / ρ_z
    let dz_real = |data: &[T]| -> Vec<T> {
        let mut d = vec![T::zero(); n * nz];
        for l in 0..nz {
            for j in 0..nz {
                let c = ws.dz[l * nz + j];
                for i in 0..n {
                    d[l * n + i] = d[l * n + i] + c * data[j * n + i];
                }
            }
        }
        d
    };
    let ux_z = dz_real(&out.u_x);
    let uy_z = dz_real(&out.u_y);
    for l in 0..nz {
        let ux_level = GridFunction::from_fn_values(&ws.grid, out.u_x[l * n..(l + 1) * n].to_vec());
        let ux_x = derivative(&ux_level);
        for j in 0..n {
            let i = l * n + j;
            let div = ux_x.values()[j] - rho_x[i] / rho_z[i] * ux_z[i] + uy_z[i] / rho_z[i];
            out.max_divergence = out.max_divergence.max(div.abs());
        }
    }
    if ws.depth.finite_depth().is_some() {
        let l = nz - 1;
        out.bottom_normal_velocity = Some(out.u_y[l * n..].iter().fold(T::zero(), |m, v| m.max(v.abs())));
    }
    Ok(out)
}
