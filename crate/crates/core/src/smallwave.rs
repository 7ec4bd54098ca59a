//! Small traveling waves by Picard iteration of the fixed-point map
//! `K(η) = m₁(D)[-σ m(D) R_H(η) - R[η](σH(η) + gη) - G[η]ψ]`.

use rayon::prelude::*;

use crate::continuation::traveling_residual;
use crate::curvature::{capillary_gravity, curvature_remainder};
use crate::dtn::{apply_dtn, build_workspace, DtnConfig};
use crate::error::{precondition, Error, Result};
use crate::scalar::Real;
use crate::spectral::{apply_multiplier, Depth, FluidParams, GridFunction, MultiplierSymbol};

#[derive(Clone, Debug)]
pub struct PicardReport<T: Real> {
    pub solution: GridFunction<T>,
    pub iterations: usize,
    /// `|η_{n+1} - η_n| / |η_n - η_{n-1}|` for every step after the first.
    pub contraction_ratios: Vec<T>,
    /// Sup norm of the traveling-wave residual at the returned profile.
    pub final_residual: T,
}

impl<T: Real> PicardReport<T> {
    pub fn terminal_ratio(&self) -> Option<T> {
        self.contraction_ratios.last().copied()
    }
}

fn check_mean_zero<T: Real>(f: &GridFunction<T>, what: &str) -> Result<()> {
    if f.is_mean_zero(T::lit(1e-10)) {
        Ok(())
    } else {
        Err(precondition(format!("{what} must have mean zero (mean {:.3e})", f.mean().as_f64())))
    }
}

/// One application of the fixed-point map.
pub fn fixed_point_map<T: Real>(
    eta: &GridFunction<T>,
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    params.validate()?;
    check_mean_zero(eta, "surface profile")?;
    check_mean_zero(psi, "forcing")?;
    if eta.n() != psi.n() {
        return Err(Error::GridMismatch { expected: eta.n(), found: psi.n() });
    }
    let ws = build_workspace(eta, params.depth, cfg)?;
    let flat = MultiplierSymbol::dtn_flat(params.depth);
    let s = capillary_gravity(eta, params.sigma, params.gravity);
    // R[η]s + G[η]ψ = G[η](s + ψ) - m(D)s
    let g_total = apply_dtn(&ws, &(&s + psi))?;
    let remainder_part = &g_total - &apply_multiplier(&s, &flat)?;
    let curvature_part = apply_multiplier(&curvature_remainder(eta), &flat)?.scaled(params.sigma);
    let inner = -&(&curvature_part + &remainder_part);
    let out = apply_multiplier(&crate::spectral::project_mean_zero(&inner), &MultiplierSymbol::m1(*params))?;
    Ok(crate::spectral::project_mean_zero(&out))
}

/// Picard iteration `η_{n+1} = K(η_n)` from `η₀ = 0`.
pub fn solve_small_wave<T: Real>(
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
    tol: T,
    max_iter: usize,
    cfg: &DtnConfig<T>,
) -> Result<PicardReport<T>> {
    solve_small_wave_from(&GridFunction::zeros(psi.grid()), psi, params, tol, max_iter, cfg)
}

/// Picard iteration from a given start. Stops when the sup norm of the
/// increment is at most `tol`; reports a contraction failure when the
/// increments keep growing or the iteration cap is reached.
pub fn solve_small_wave_from<T: Real>(
    start: &GridFunction<T>,
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
    tol: T,
    max_iter: usize,
    cfg: &DtnConfig<T>,
) -> Result<PicardReport<T>> {
    params.validate()?;
    if !(tol > T::zero()) || max_iter == 0 {
        return Err(precondition("need tol > 0 and max_iter >= 1"));
    }
    let mut eta = crate::spectral::project_mean_zero(start);
    let mut ratios = Vec::new();
    let mut last_step: Option<T> = None;
    let mut first_step = T::zero();
    let mut growing = 0usize;

    for it in 1..=max_iter {
        let next = fixed_point_map(&eta, psi, params, cfg).map_err(|e| match e {
            Error::BottomCollision { .. } => Error::ContractionFailure {
                iterations: it,
                last_ratio: ratios.last().map_or(f64::NAN, |r: &T| r.as_f64()),
            },
            other => other,
        })?;
        let step = (&next - &eta).sup_norm();
        eta = next;
        if let Some(prev) = last_step {
            let ratio = if prev > T::zero() { step / prev } else { T::zero() };
            ratios.push(ratio);
            growing = if ratio >= T::one() { growing + 1 } else { 0 };
        } else {
            first_step = step;
        }
        last_step = Some(step);
        if step <= tol {
            let final_residual = traveling_residual(&eta, psi, params, cfg)?.sup_norm();
            return Ok(PicardReport { solution: eta, iterations: it, contraction_ratios: ratios, final_residual });
        }
        let blown_up = !step.is_finite() || step > T::lit(1e3) * first_step.max(tol);
        if growing >= 5 || blown_up {
            return Err(Error::ContractionFailure {
                iterations: it,
                last_ratio: ratios.last().map_or(f64::NAN, |r| r.as_f64()),
            });
        }
    }
    Err(Error::ContractionFailure {
        iterations: max_iter,
        last_ratio: ratios.last().map_or(f64::NAN, |r| r.as_f64()),
    })
}

#[derive(Clone, Debug)]
pub struct SigmaRow<T: Real> {
    pub sigma: T,
    pub eta: GridFunction<T>,
    /// `|η_σ - η₀|_sup` against the pure gravity wave.
    pub difference: T,
}

#[derive(Clone, Debug)]
pub struct SigmaSweep<T: Real> {
    pub gravity_wave: GridFunction<T>,
    pub rows: Vec<SigmaRow<T>>,
    /// Whether the differences decrease strictly along the list.
    pub monotone: bool,
}

/// Solves for `η_σ` at each surface tension and for the gravity wave
/// `η₀`, in parallel, and compares them.
#[allow(clippy::too_many_arguments)]
pub fn surface_tension_limit<T: Real>(
    phi: &GridFunction<T>,
    kappa: T,
    gravity: T,
    speed: T,
    depth: Depth<T>,
    sigmas: &[T],
    tol: T,
    max_iter: usize,
    cfg: &DtnConfig<T>,
) -> Result<SigmaSweep<T>> {
    if !(gravity > T::zero()) {
        return Err(precondition("the zero surface tension limit needs g > 0"));
    }
    if sigmas.windows(2).any(|w| !(w[1] < w[0])) || sigmas.iter().any(|s| !(*s > T::zero())) {
        return Err(precondition("surface tensions must be positive and strictly decreasing"));
    }
    let psi = phi.scaled(kappa);
    let all: Vec<T> = std::iter::once(T::zero()).chain(sigmas.iter().copied()).collect();
    let solved: Vec<GridFunction<T>> = all
        .par_iter()
        .map(|&sigma| {
            let params = FluidParams::new(sigma, gravity, speed, depth)?;
            solve_small_wave(&psi, &params, tol, max_iter, cfg).map(|r| r.solution)
        })
        .collect::<Result<_>>()?;
    let gravity_wave = solved[0].clone();
    let rows: Vec<SigmaRow<T>> = sigmas
        .iter()
        .zip(&solved[1..])
        .map(|(&sigma, eta)| SigmaRow { sigma, eta: eta.clone(), difference: (eta - &gravity_wave).sup_norm() })
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].difference < w[0].difference);
    if !monotone {
        log::warn!("differences to the gravity wave are not strictly decreasing along the sigma list");
    }
    Ok(SigmaSweep { gravity_wave, rows, monotone })
}
