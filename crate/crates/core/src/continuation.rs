//! Traveling-wave residual, the compact formulation, and pseudo-arclength
//! continuation of the branch of forced waves through `(η, κ) = (0, 0)`.

use std::sync::Arc;

use num_complex::Complex;

use crate::curvature::{capillary_gravity, invert_capillary_gravity, quasilinear_coefficient, CurvatureConfig};
use crate::dtn::{apply_dtn, build_workspace, solve_neumann, DtnConfig, EllipticWorkspace};
use crate::error::{precondition, Error, Result};
use crate::linalg::{gmres, GmresOptions};
use crate::scalar::Real;
use crate::spectral::{
    apply_multiplier, derivative, discrete_norms, multiplier_m, project_mean_zero, resample,
    upper_spectrum_fraction, FluidParams, Grid, GridFunction, MultiplierSymbol,
};

fn check_mean_zero<T: Real>(f: &GridFunction<T>, what: &str) -> Result<()> {
    if f.is_mean_zero(T::lit(1e-10)) {
        Ok(())
    } else {
        Err(precondition(format!("{what} must have mean zero (mean {:.3e})", f.mean().as_f64())))
    }
}

fn residual_in<T: Real>(
    ws: &EllipticWorkspace<T>,
    eta: &GridFunction<T>,
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
) -> Result<GridFunction<T>> {
    let s = capillary_gravity(eta, params.sigma, params.gravity);
    let g = apply_dtn(ws, &(&s + psi))?;
    Ok(project_mean_zero(&derivative(eta).scaled(-params.speed).axpy(T::one(), &g)))
}

/// `-γ∂₁η + G[η](σH(η) + gη + ψ)` for a given pressure profile `ψ`.
pub fn traveling_residual<T: Real>(
    eta: &GridFunction<T>,
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    check_mean_zero(eta, "surface profile")?;
    if eta.n() != psi.n() {
        return Err(Error::GridMismatch { expected: eta.n(), found: psi.n() });
    }
    let ws = build_workspace(eta, params.depth, cfg)?;
    residual_in(&ws, eta, psi, params)
}

/// `-γ∂₁η + G[η](σH(η) + gη + κφ)`.
pub fn residual<T: Real>(
    eta: &GridFunction<T>,
    kappa: T,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    check_mean_zero(phi, "forcing profile")?;
    traveling_residual(eta, &phi.scaled(kappa), params, cfg)
}

/// `F(η, κ) = (σH + g)⁻¹(-γ G[η]⁻¹∂₁η + κφ)`; solutions are the zeros of
/// `η + F(η, κ)`.
pub fn compact_map<T: Real>(
    eta: &GridFunction<T>,
    kappa: T,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    dtn: &DtnConfig<T>,
    curvature: &CurvatureConfig<T>,
) -> Result<GridFunction<T>> {
    if !(params.sigma > T::zero()) {
        return Err(precondition("the compact formulation needs sigma > 0"));
    }
    check_mean_zero(eta, "surface profile")?;
    check_mean_zero(phi, "forcing profile")?;
    let ws = build_workspace(eta, params.depth, dtn)?;
    let potential = solve_neumann(&ws, &derivative(eta))?;
    let rhs = project_mean_zero(&potential.scaled(-params.speed).axpy(kappa, phi));
    invert_capillary_gravity(&rhs, params.sigma, params.gravity, curvature)
}

/// Symbol of the derivative of `η + F(η, κ)` in `η` at the origin,
/// `a(k) = 1 - iγk / ((σk² + g) m(k))`.
pub fn linearization_at_origin<T: Real>(params: &FluidParams<T>) -> Result<MultiplierSymbol<T>> {
    params.validate()?;
    if !(params.sigma > T::zero()) {
        return Err(precondition("the linearization at the origin needs sigma > 0"));
    }
    let p = *params;
    Ok(MultiplierSymbol::new("DF(0)", true, move |k| {
        let kf = T::from_i64(k).expect("wavenumber");
        let denom = (p.sigma * kf * kf + p.gravity) * multiplier_m(k, &p.depth);
        Complex::new(T::one(), -p.speed * kf / denom)
    }))
}

/// Central difference of the residual in direction `v` with step
/// `h = h0 (1 + |η|_sup) / |v|_sup`.
pub fn jacobian_action_with_step<T: Real>(
    eta: &GridFunction<T>,
    kappa: T,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    direction: &GridFunction<T>,
    h0: T,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    check_mean_zero(direction, "direction")?;
    let vs = direction.sup_norm();
    if vs == T::zero() {
        return Ok(GridFunction::zeros(eta.grid()));
    }
    let psi = phi.scaled(kappa);
    fd_jacobian(eta, &psi, params, direction, h0, cfg)
}

fn fd_jacobian<T: Real>(
    eta: &GridFunction<T>,
    psi: &GridFunction<T>,
    params: &FluidParams<T>,
    v: &GridFunction<T>,
    h0: T,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    let vs = v.sup_norm();
    if vs == T::zero() {
        return Ok(GridFunction::zeros(eta.grid()));
    }
    let h = h0 * (T::one() + eta.sup_norm()) / vs;
    let plus = traveling_residual(&project_mean_zero(&eta.axpy(h, v)), psi, params, cfg)?;
    let minus = traveling_residual(&project_mean_zero(&eta.axpy(-h, v)), psi, params, cfg)?;
    Ok((&plus - &minus).scaled(T::one() / (h + h)))
}

/// Directional derivative of the residual in `η` (step `h0 = 1e-5`).
pub fn jacobian_action<T: Real>(
    eta: &GridFunction<T>,
    kappa: T,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    direction: &GridFunction<T>,
    cfg: &DtnConfig<T>,
) -> Result<GridFunction<T>> {
    jacobian_action_with_step(eta, kappa, phi, params, direction, T::lit(1e-5), cfg)
}

/// `⟨s, G[η]s⟩` with `s = σH(η) + gη`; vanishes only at the flat state when
/// the forcing is zero.
pub fn energy_identity<T: Real>(eta: &GridFunction<T>, params: &FluidParams<T>, cfg: &DtnConfig<T>) -> Result<T> {
    let ws = build_workspace(eta, params.depth, cfg)?;
    let s = project_mean_zero(&capillary_gravity(eta, params.sigma, params.gravity));
    Ok(s.dot(&apply_dtn(&ws, &s)?))
}

/// Inner product used for arclength: normalized L² on `η`.
fn weighted_dot<T: Real>(a: &GridFunction<T>, b: &GridFunction<T>) -> T {
    a.values().iter().zip(b.values()).fold(T::zero(), |s, (&x, &y)| s + x * y) / T::from_count(a.n())
}

/// The hyperplane `⟨t_η, η - η_a⟩ + t_κ (κ - κ_a) = 0`.
#[derive(Clone, Debug)]
pub struct ArclengthPlane<T: Real> {
    pub tangent_eta: GridFunction<T>,
    pub tangent_kappa: T,
    pub anchor_eta: GridFunction<T>,
    pub anchor_kappa: T,
}

impl<T: Real> ArclengthPlane<T> {
    pub fn value(&self, eta: &GridFunction<T>, kappa: T) -> T {
        weighted_dot(&self.tangent_eta, &(eta - &self.anchor_eta)) + self.tangent_kappa * (kappa - self.anchor_kappa)
    }

    /// The plane `κ = level`.
    pub fn fixed_kappa(grid: &Arc<Grid<T>>, level: T) -> Self {
        Self {
            tangent_eta: GridFunction::zeros(grid),
            tangent_kappa: T::one(),
            anchor_eta: GridFunction::zeros(grid),
            anchor_kappa: level,
        }
    }

    fn resampled(&self, grid: &Arc<Grid<T>>) -> Self {
        Self {
            tangent_eta: resample(&self.tangent_eta, grid),
            tangent_kappa: self.tangent_kappa,
            anchor_eta: resample(&self.anchor_eta, grid),
            anchor_kappa: self.anchor_kappa,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepConfig<T> {
    pub initial: T,
    pub min: T,
    pub max: T,
    /// Step growth factor after fast corrector convergence.
    pub grow: T,
    pub max_newton: usize,
    /// Corrector iteration count regarded as fast.
    pub fast_newton: usize,
    /// Sup-norm residual accepted by the corrector.
    pub accept_tol: T,
    /// Relative tolerance of the inner linear solves.
    pub linear_tol: T,
    /// GMRES iteration budget per corrector step.
    pub max_linear: usize,
    /// Relative finite-difference step for Jacobian actions.
    pub fd_step: T,
    /// `+1` follows increasing `κ` from the origin, `-1` decreasing.
    pub direction: T,
}

impl<T: Real> Default for StepConfig<T> {
    fn default() -> Self {
        Self {
            initial: T::lit(0.05),
            min: T::lit(1e-10),
            max: T::lit(0.25),
            grow: T::lit(1.5),
            max_newton: 10,
            fast_newton: 3,
            accept_tol: T::lit(1e-8),
            linear_tol: T::lit(1e-7),
            max_linear: 120,
            fd_step: T::lit(1e-5),
            direction: T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopConfig<T> {
    /// Stop once `sup|η| + sup|η'|` reaches this value.
    pub max_c1: T,
    /// Stop once `min(η + b) <= clearance_fraction * b`.
    pub clearance_fraction: T,
    pub kappa_max: T,
    /// Point budget, counting the origin.
    pub max_points: usize,
    /// Double the grid when the upper half of the spectrum carries more
    /// than this fraction of the energy.
    pub refine_threshold: T,
    pub max_grid: usize,
    pub holder_beta: T,
}

impl<T: Real> Default for StopConfig<T> {
    fn default() -> Self {
        Self {
            max_c1: T::lit(10.0),
            clearance_fraction: T::lit(0.05),
            kappa_max: T::lit(100.0),
            max_points: 400,
            refine_threshold: T::lit(1e-8),
            max_grid: 512,
            holder_beta: T::lit(0.5),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointDiagnostics<T> {
    /// Sup norm of a fresh residual evaluation at the accepted point.
    pub residual_sup: T,
    pub sup_norm: T,
    pub c1_norm: T,
    pub holder_seminorm: T,
    pub bottom_clearance: Option<T>,
    pub newton_iterations: usize,
    pub grid_size: usize,
}

#[derive(Clone, Debug)]
pub struct BranchPoint<T: Real> {
    pub eta: GridFunction<T>,
    pub kappa: T,
    pub arclength: T,
    pub diagnostics: PointDiagnostics<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    NormGrowth,
    BottomApproach,
    KappaRangeExhausted,
    StepFailure,
    /// The configured point budget ran out first.
    MaxPoints,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::NormGrowth => "NormGrowth",
            Termination::BottomApproach => "BottomApproach",
            Termination::KappaRangeExhausted => "KappaRangeExhausted",
            Termination::StepFailure => "StepFailure",
            Termination::MaxPoints => "MaxPoints",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A solve at `κ = 0` made when the branch changes sign in `κ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaZeroCheck<T> {
    /// Index of the first point past the crossing.
    pub after_point: usize,
    /// `sup|η|` of the corrected `κ = 0` solution, if the corrector converged.
    pub eta_sup: Option<T>,
    pub anomalous: bool,
}

#[derive(Clone, Debug)]
pub struct BranchTrace<T: Real> {
    pub points: Vec<BranchPoint<T>>,
    pub termination: Termination,
    /// `(point index, new grid size)` for every refinement.
    pub refinements: Vec<(usize, usize)>,
    pub zero_crossings: Vec<KappaZeroCheck<T>>,
}

impl<T: Real> BranchTrace<T> {
    pub fn anomalous(&self) -> bool {
        self.zero_crossings.iter().any(|c| c.anomalous)
    }
}

/// Result of one corrector run.
#[derive(Clone, Debug)]
pub struct Corrected<T: Real> {
    pub eta: GridFunction<T>,
    pub kappa: T,
    pub iterations: usize,
    pub residual_sup: T,
}

/// Newton-Krylov solve of `{residual(η, κ) = 0, plane(η, κ) = 0}` from the
/// guess. Jacobian actions are finite differences; the linear solves use a
/// bordered constant-coefficient preconditioner.
#[allow(clippy::too_many_arguments)]
pub fn newton_correct<T: Real>(
    guess_eta: &GridFunction<T>,
    guess_kappa: T,
    plane: &ArclengthPlane<T>,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    step: &StepConfig<T>,
    cfg: &DtnConfig<T>,
) -> Result<Corrected<T>> {
    let grid = guess_eta.grid().clone();
    let n = grid.n();
    let mut eta = project_mean_zero(guess_eta);
    let mut kappa = guess_kappa;
    let mut previous = T::infinity();
    let failure = |iterations: usize, residual: T| Error::NonConvergence {
        what: "branch corrector",
        iterations,
        residual: residual.as_f64(),
    };

    for it in 0..=step.max_newton {
        let ws = build_workspace(&eta, params.depth, cfg)?;
        let psi = phi.scaled(kappa);
        let f = residual_in(&ws, &eta, &psi, params)?;
        let c = plane.value(&eta, kappa);
        let fnorm = f.sup_norm();
        if !fnorm.is_finite() {
            return Err(failure(it, fnorm));
        }
        if fnorm <= step.accept_tol && c.abs() <= step.accept_tol {
            return Ok(Corrected { eta, kappa, iterations: it, residual_sup: fnorm });
        }
        if it == step.max_newton || fnorm > previous * T::lit(2.0) {
            return Err(failure(it, fnorm));
        }
        previous = fnorm;

        let r_kappa = apply_dtn(&ws, phi)?;
        let slope = derivative(&eta).padded_values();
        let mean_coef = slope.iter().map(|&p| quasilinear_coefficient(p)).sum::<T>() / T::from_count(slope.len());
        let frozen = params.with_sigma(params.sigma * mean_coef);
        let precond_sym = MultiplierSymbol::m1(frozen);
        let x2 = apply_multiplier(&r_kappa, &precond_sym)?;
        let schur = plane.tangent_kappa - weighted_dot(&plane.tangent_eta, &x2);
        if schur == T::zero() || !schur.is_finite() {
            return Err(Error::Singular("bordered preconditioner"));
        }
        let to_fn = |v: &[T]| -> Result<GridFunction<T>> {
            Ok(project_mean_zero(&GridFunction::new(grid.clone(), v[..n].to_vec())?))
        };

        let mut b = vec![T::zero(); n + 1];
        for (bi, &fi) in b.iter_mut().zip(f.values()) {
            *bi = -fi;
        }
        b[n] = -c;
        let mut x = vec![T::zero(); n + 1];
        let opts = GmresOptions { rel_tol: step.linear_tol, abs_tol: T::zero(), restart: 60, max_iter: step.max_linear };
        let outcome = gmres(
            |u, out| {
                let v = to_fn(u)?;
                let jv = fd_jacobian(&eta, &psi, params, &v, step.fd_step, cfg)?;
                let row = jv.axpy(u[n], &r_kappa);
                out[..n].copy_from_slice(row.values());
                out[n] = weighted_dot(&plane.tangent_eta, &v) + plane.tangent_kappa * u[n];
                Ok(())
            },
            |r, out| {
                let y1 = apply_multiplier(&to_fn(r)?, &precond_sym)?;
                let dk = (r[n] - weighted_dot(&plane.tangent_eta, &y1)) / schur;
                out[..n].copy_from_slice(y1.axpy(-dk, &x2).values());
                out[n] = dk;
                Ok(())
            },
            &b,
            &mut x,
            &opts,
        )?;
        if !outcome.converged && outcome.residual > T::lit(1e-3) {
            return Err(failure(it, fnorm));
        }
        eta = project_mean_zero(&eta.axpy(T::one(), &to_fn(&x)?));
        kappa = kappa + x[n];
    }
    unreachable!("the loop returns on its last iteration")
}

fn diagnostics<T: Real>(
    eta: &GridFunction<T>,
    kappa: T,
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    newton_iterations: usize,
    stop: &StopConfig<T>,
    cfg: &DtnConfig<T>,
) -> Result<PointDiagnostics<T>> {
    let residual_sup = residual(eta, kappa, phi, params, cfg)?.sup_norm();
    let norms = discrete_norms(eta, stop.holder_beta);
    Ok(PointDiagnostics {
        residual_sup,
        sup_norm: norms.sup_norm,
        c1_norm: norms.c1_norm,
        holder_seminorm: norms.holder_seminorm,
        bottom_clearance: params.depth.finite_depth().map(|b| eta.min_value() + b),
        newton_iterations,
        grid_size: eta.n(),
    })
}

/// Pseudo-arclength continuation in `(η, κ)` from the flat state. The first
/// predictor follows the linear response `-m₁(D)m(D)φ`; later ones are
/// secants through the last two points.
pub fn continue_branch<T: Real>(
    phi: &GridFunction<T>,
    params: &FluidParams<T>,
    step: &StepConfig<T>,
    stop: &StopConfig<T>,
    cfg: &DtnConfig<T>,
) -> Result<BranchTrace<T>> {
    params.validate()?;
    if !(params.sigma > T::zero()) {
        return Err(precondition("continuation needs sigma > 0"));
    }
    check_mean_zero(phi, "forcing profile")?;
    if phi.sup_norm() == T::zero() {
        return Err(precondition("forcing profile is zero: the branch through the origin is trivial"));
    }
    if !(step.min > T::zero() && step.initial >= step.min && step.max >= step.initial) {
        return Err(precondition("need 0 < min step <= initial step <= max step"));
    }
    if step.direction == T::zero() {
        return Err(precondition("continuation direction must be nonzero"));
    }

    let mut phi = project_mean_zero(phi);
    let origin = GridFunction::zeros(phi.grid());
    let mut points = vec![BranchPoint {
        diagnostics: diagnostics(&origin, T::zero(), &phi, params, 0, stop, cfg)?,
        eta: origin,
        kappa: T::zero(),
        arclength: T::zero(),
    }];
    let response = apply_multiplier(
        &apply_multiplier(&phi, &MultiplierSymbol::dtn_flat(params.depth))?,
        &MultiplierSymbol::m1(*params),
    )?;
    let sign = step.direction.signum();
    let mut tangent_eta = response.scaled(-sign);
    let mut tangent_kappa = sign;
    let norm = (weighted_dot(&tangent_eta, &tangent_eta) + T::one()).sqrt();
    tangent_eta = tangent_eta.scaled(T::one() / norm);
    tangent_kappa = tangent_kappa / norm;

    let mut ds = step.initial;
    let mut refinements = Vec::new();
    let mut zero_crossings = Vec::new();

    let termination = loop {
        if points.len() >= stop.max_points {
            break Termination::MaxPoints;
        }
        let last = points.last().expect("origin is always present");
        let pred_eta = last.eta.axpy(ds, &tangent_eta);
        let pred_kappa = last.kappa + ds * tangent_kappa;
        let mut plane = ArclengthPlane {
            tangent_eta: tangent_eta.clone(),
            tangent_kappa,
            anchor_eta: pred_eta.clone(),
            anchor_kappa: pred_kappa,
        };
        let mut corrected = match newton_correct(&pred_eta, pred_kappa, &plane, &phi, params, step, cfg) {
            Ok(c) => c,
            Err(e) => {
                log::debug!("corrector failed at ds = {:.3e}: {e}", ds.as_f64());
                ds = ds * T::lit(0.5);
                if ds < step.min {
                    break Termination::StepFailure;
                }
                continue;
            }
        };

        // refine while the upper half of the spectrum is not negligible
        let mut refine_failed = false;
        while upper_spectrum_fraction(&corrected.eta) > stop.refine_threshold && phi.n() * 2 <= stop.max_grid {
            let fine = Grid::new(phi.n() * 2)?;
            log::info!("refining grid to N = {}", fine.n());
            phi = resample(&phi, &fine);
            plane = plane.resampled(&fine);
            tangent_eta = resample(&tangent_eta, &fine);
            for p in &mut points {
                p.eta = resample(&p.eta, &fine);
            }
            let guess = resample(&corrected.eta, &fine);
            match newton_correct(&guess, corrected.kappa, &plane, &phi, params, step, cfg) {
                Ok(c) => corrected = c,
                Err(e) => {
                    log::debug!("re-correction after refinement failed: {e}");
                    refine_failed = true;
                    break;
                }
            }
            refinements.push((points.len(), fine.n()));
        }
        if refine_failed {
            ds = ds * T::lit(0.5);
            if ds < step.min {
                break Termination::StepFailure;
            }
            continue;
        }

        let last = points.last().expect("origin is always present");
        let d_eta = &corrected.eta - &last.eta;
        let d_kappa = corrected.kappa - last.kappa;
        let dist = (weighted_dot(&d_eta, &d_eta) + d_kappa * d_kappa).sqrt();
        if dist == T::zero() {
            break Termination::StepFailure;
        }
        let crossed = last.kappa != T::zero() && (last.kappa > T::zero()) != (corrected.kappa > T::zero());
        let last_eta = last.eta.clone();
        let last_kappa = last.kappa;
        let arclength = last.arclength + dist;
        let diag = diagnostics(&corrected.eta, corrected.kappa, &phi, params, corrected.iterations, stop, cfg)?;
        points.push(BranchPoint { eta: corrected.eta.clone(), kappa: corrected.kappa, arclength, diagnostics: diag });

        if crossed {
            let t = last_kappa / (last_kappa - corrected.kappa);
            let guess = last_eta.axpy(t, &d_eta);
            let level = ArclengthPlane::fixed_kappa(phi.grid(), T::zero());
            let check = match newton_correct(&guess, T::zero(), &level, &phi, params, step, cfg) {
                Ok(c) => {
                    let sup = c.eta.sup_norm();
                    KappaZeroCheck {
                        after_point: points.len() - 1,
                        eta_sup: Some(sup),
                        anomalous: sup > T::lit(10.0) * step.accept_tol,
                    }
                }
                Err(e) => {
                    log::warn!("could not solve at kappa = 0 after the sign change: {e}");
                    KappaZeroCheck { after_point: points.len() - 1, eta_sup: None, anomalous: false }
                }
            };
            if check.anomalous {
                log::warn!("nontrivial solution found at kappa = 0; marking the run anomalous");
            }
            zero_crossings.push(check);
        }

        tangent_eta = d_eta.scaled(T::one() / dist);
        tangent_kappa = d_kappa / dist;
        if corrected.iterations <= step.fast_newton {
            ds = (ds * step.grow).min(step.max);
        }

        if let (Some(b), Some(c)) = (params.depth.finite_depth(), diag.bottom_clearance) {
            if c <= stop.clearance_fraction * b {
                break Termination::BottomApproach;
            }
        }
        if diag.c1_norm >= stop.max_c1 {
            break Termination::NormGrowth;
        }
        if corrected.kappa.abs() > stop.kappa_max {
            break Termination::KappaRangeExhausted;
        }
    };
    Ok(BranchTrace { points, termination, refinements, zero_crossings })
}
