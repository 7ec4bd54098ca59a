//! Time integration of `∂ₜη = -G[η](σH(η) + gη + Ψ)` with the traveling
//! pressure `Ψ(x, t) = κφ(x - γt)`.
//!
//! The stiff part `-m(D)(-σΔ + g)` is integrated exactly mode by mode and
//! the rest is treated explicitly (first-order exponential Euler). The
//! co-moving variant takes the explicit term as frozen in the frame moving
//! with the forcing, so traveling waves are fixed points of the scheme.

use std::sync::Arc;

use num_complex::Complex;

use crate::curvature::capillary_gravity;
use crate::dtn::{apply_dtn, build_workspace, DtnConfig};
use crate::error::{precondition, Error, Result};
use crate::scalar::Real;
use crate::spectral::{multiplier_m, project_mean_zero, shift, FluidParams, Grid, GridFunction};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Explicit term frozen in the lab frame over each step.
    Frozen,
    /// Explicit term frozen in the frame moving with the forcing.
    CoMoving,
}

#[derive(Clone, Debug)]
pub struct EvolutionConfig<T: Real> {
    pub dt: T,
    pub horizon: T,
    pub scheme: Scheme,
    /// Forcing amplitude `κ`; the forcing moves with `params.speed`.
    pub kappa: T,
    pub phi: GridFunction<T>,
    /// Time between stored samples (rounded to whole steps).
    pub sample_every: T,
    /// The run is declared unstable once `sup|η|` exceeds this multiple of
    /// `1 + sup|η₀|`.
    pub blowup_factor: T,
    pub dtn: DtnConfig<T>,
}

impl<T: Real> EvolutionConfig<T> {
    pub fn new(phi: GridFunction<T>, kappa: T, dt: T, horizon: T) -> Self {
        Self {
            dt,
            horizon,
            scheme: Scheme::CoMoving,
            kappa,
            phi,
            sample_every: horizon / T::lit(16.0),
            blowup_factor: T::lit(1e3),
            dtn: DtnConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(precondition("dt must be positive"));
        }
        if !(self.horizon >= self.dt) {
            return Err(precondition("the horizon must be at least one step"));
        }
        if !(self.sample_every > T::zero()) {
            return Err(precondition("sample interval must be positive"));
        }
        if !self.phi.is_mean_zero(T::lit(1e-10)) {
            return Err(precondition("forcing profile must have mean zero"));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1)
    }

    fn stride(&self) -> usize {
        (self.sample_every / self.dt).round().to_usize().unwrap_or(1).max(1)
    }
}

/// The pressure `κφ(x - γt)`.
pub fn forcing_at<T: Real>(cfg: &EvolutionConfig<T>, params: &FluidParams<T>, t: T) -> GridFunction<T> {
    shift(&cfg.phi, params.speed * t).scaled(cfg.kappa)
}

/// `-G[η](σH(η) + gη + Ψ(·, t))`.
pub fn rhs<T: Real>(
    eta: &GridFunction<T>,
    t: T,
    cfg: &EvolutionConfig<T>,
    params: &FluidParams<T>,
) -> Result<GridFunction<T>> {
    if !eta.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition("surface profile must have mean zero"));
    }
    let ws = build_workspace(eta, params.depth, &cfg.dtn)?;
    let s = capillary_gravity(eta, params.sigma, params.gravity);
    let g = apply_dtn(&ws, &(&s + &forcing_at(cfg, params, t)))?;
    Ok(-&g)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrajectoryStatus<T> {
    Completed,
    /// The state at `time` is below the clearance floor; the last sample is
    /// the admissible state one step earlier.
    BottomCollision { time: T },
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub samples: Vec<(T, GridFunction<T>)>,
    pub status: TrajectoryStatus<T>,
    pub steps: usize,
    /// Largest `|mean η|` over all steps.
    pub max_mean: T,
}

/// Per-mode update factors for one step.
struct Propagator<T> {
    decay: Vec<Complex<T>>,
    forcing: Vec<Complex<T>>,
    linear: Vec<T>,
}

fn propagator<T: Real>(grid: &Arc<Grid<T>>, params: &FluidParams<T>, dt: T, scheme: Scheme) -> Propagator<T> {
    let kh = grid.kmax() + 1;
    let mut decay = Vec::with_capacity(kh);
    let mut forcing = Vec::with_capacity(kh);
    let mut linear = Vec::with_capacity(kh);
    for k in 0..kh {
        let kf = T::from_count(k);
        let l = -multiplier_m(k as i64, &params.depth) * (params.sigma * kf * kf + params.gravity);
        let e = (l * dt).exp();
        linear.push(l);
        decay.push(Complex::new(e, T::zero()));
        let phi = match scheme {
            Scheme::Frozen => {
                if l == T::zero() {
                    Complex::new(dt, T::zero())
                } else {
                    Complex::new((e - T::one()) / l, T::zero())
                }
            }
            Scheme::CoMoving => {
                let a = Complex::new(l, params.speed * kf);
                if a.norm() == T::zero() {
                    Complex::new(dt, T::zero())
                } else {
                    // (e^{L dt} - e^{-iγk dt}) / (L + iγk)
                    let phase = Complex::new((params.speed * kf * dt).cos(), -(params.speed * kf * dt).sin());
                    (Complex::new(e, T::zero()) - phase) / a
                }
            }
        };
        forcing.push(phi);
    }
    Propagator { decay, forcing, linear }
}

/// Integrates from `eta0`; samples at multiples of `cfg.sample_every` and at
/// the final time.
pub fn evolve<T: Real>(eta0: &GridFunction<T>, cfg: &EvolutionConfig<T>, params: &FluidParams<T>) -> Result<Trajectory<T>> {
    evolve_with(eta0, cfg, params, |_, _| {})
}

/// [`evolve`] with a callback invoked after every step with `(t, η)`.
pub fn evolve_with<T: Real>(
    eta0: &GridFunction<T>,
    cfg: &EvolutionConfig<T>,
    params: &FluidParams<T>,
    mut observe: impl FnMut(T, &GridFunction<T>),
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    params.validate()?;
    if eta0.n() != cfg.phi.n() {
        return Err(Error::GridMismatch { expected: cfg.phi.n(), found: eta0.n() });
    }
    if !eta0.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition("initial profile must have mean zero"));
    }
    let grid = eta0.grid().clone();
    let prop = propagator(&grid, params, cfg.dt, cfg.scheme);
    let steps = cfg.steps();
    let stride = cfg.stride();
    let limit = cfg.blowup_factor * (T::one() + eta0.sup_norm());

    let mut eta = project_mean_zero(eta0);
    let mut samples = vec![(T::zero(), eta.clone())];
    let mut max_mean = eta.mean().abs();
    let mut admissible: Option<(T, GridFunction<T>)> = None;
    observe(T::zero(), &eta);

    for step in 0..steps {
        let t = T::from_count(step) * cfg.dt;
        let full = match rhs(&eta, t, cfg, params) {
            Ok(r) => r,
            Err(Error::BottomCollision { .. }) => {
                if let Some((tp, prev)) = admissible {
                    if samples.last().map(|s| s.0) != Some(tp) {
                        samples.push((tp, prev));
                    }
                }
                return Ok(Trajectory {
                    samples,
                    status: TrajectoryStatus::BottomCollision { time: t },
                    steps: step,
                    max_mean,
                });
            }
            Err(e) => return Err(e),
        };
        let eh = eta.half_spectrum();
        let rh = full.half_spectrum();
        let next: Vec<Complex<T>> = (0..eh.len())
            .map(|k| {
                if k == 0 {
                    return eh[0];
                }
                let explicit = rh[k] - eh[k] * prop.linear[k];
                prop.decay[k] * eh[k] + prop.forcing[k] * explicit
            })
            .collect();
        admissible = Some((t, std::mem::replace(&mut eta, GridFunction::from_half_spectrum(&grid, &next))));
        let now = T::from_count(step + 1) * cfg.dt;
        let norm = eta.sup_norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Instability { time: now.as_f64(), norm: norm.as_f64() });
        }
        max_mean = max_mean.max(eta.mean().abs());
        observe(now, &eta);
        if (step + 1) % stride == 0 || step + 1 == steps {
            samples.push((now, eta.clone()));
        }
    }
    Ok(Trajectory { samples, status: TrajectoryStatus::Completed, steps, max_mean })
}

#[derive(Clone, Debug)]
pub struct InvarianceReport<T: Real> {
    pub max_drift: T,
    /// `(t, drift)` at every step.
    pub drift: Vec<(T, T)>,
    pub trajectory: Trajectory<T>,
}

/// Evolves a traveling profile over one spatial period `2π/|γ|` and
/// measures `sup|η(· + γt, t) - η*|` at every step.
pub fn traveling_invariance<T: Real>(
    eta_star: &GridFunction<T>,
    cfg: &EvolutionConfig<T>,
    params: &FluidParams<T>,
) -> Result<InvarianceReport<T>> {
    let period = T::TAU() / params.speed.abs();
    let run = EvolutionConfig { horizon: period, ..cfg.clone() };
    let mut drift = Vec::new();
    let mut max_drift = T::zero();
    let trajectory = evolve_with(eta_star, &run, params, |t, eta| {
        let back = shift(eta, -params.speed * t);
        let d = (&back - eta_star).sup_norm();
        max_drift = max_drift.max(d);
        drift.push((t, d));
    })?;
    Ok(InvarianceReport { max_drift, drift, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Depth;

    fn grid(n: usize) -> Arc<Grid<f64>> {
        Grid::new(n).unwrap()
    }

    fn params() -> FluidParams<f64> {
        FluidParams::new(1.0, 1.0, 1.0, Depth::Infinite { truncation: 10.0 }).unwrap()
    }

    #[test]
    fn flat_state_is_an_equilibrium() {
        let g = grid(32);
        let z = GridFunction::zeros(&g);
        let cfg = EvolutionConfig::new(GridFunction::from_fn(&g, f64::cos), 0.0, 1e-2, 0.1);
        assert_eq!(rhs(&z, 0.3, &cfg, &params()).unwrap().sup_norm(), 0.0);
        let traj = evolve(&z, &cfg, &params()).unwrap();
        assert!(traj.samples.iter().all(|(_, e)| e.sup_norm() == 0.0));
        assert_eq!(traj.status, TrajectoryStatus::Completed);
        let rep = traveling_invariance(&z, &EvolutionConfig { dt: 0.05, ..cfg }, &params()).unwrap();
        assert_eq!(rep.max_drift, 0.0);
    }

    #[test]
    fn linear_rhs_and_decay() {
        let g = grid(32);
        let eps = 1e-6;
        let p = params();
        let eta = GridFunction::from_fn(&g, |x| eps * x.cos());
        let cfg = EvolutionConfig::new(GridFunction::zeros(&g), 0.0, 1e-2, 0.5);
        let r = rhs(&eta, 0.0, &cfg, &p).unwrap();
        assert!((&r - &eta.scaled(-2.0)).sup_norm() < 10.0 * eps * eps);

        let eta = GridFunction::from_fn(&g, |x| eps * (2.0 * x).cos());
        let traj = evolve(&eta, &cfg, &p).unwrap();
        let (t, last) = traj.samples.last().unwrap();
        let amp = last.half_spectrum()[2].re * 2.0;
        let exact = eps * (-2.0 * 5.0 * t).exp();
        assert!((amp - exact).abs() < 1e-3 * exact);
        assert!(traj.max_mean < 1e-20);
    }

    #[test]
    fn bottom_collision_keeps_pre_collision_state() {
        let g = grid(32);
        let p = FluidParams::new(0.01, 0.0, 1.0, Depth::Finite { b: 0.3 }).unwrap();
        let phi = GridFunction::from_fn(&g, f64::cos);
        let cfg = EvolutionConfig { sample_every: 1.0, ..EvolutionConfig::new(phi, 5.0, 1e-2, 2.0) };
        let traj = evolve(&GridFunction::zeros(&g), &cfg, &p).unwrap();
        match traj.status {
            TrajectoryStatus::BottomCollision { time } => {
                let (ts, eta) = traj.samples.last().unwrap();
                assert!((ts + cfg.dt - time).abs() < 1e-12);
                assert!(eta.min_value() + 0.3 > 0.0);
            }
            other => panic!("expected a collision, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configuration() {
        let g = grid(32);
        let cfg = EvolutionConfig::new(GridFunction::zeros(&g), 0.0, -1.0, 1.0);
        assert!(matches!(evolve(&GridFunction::zeros(&g), &cfg, &params()), Err(Error::Precondition(_))));
    }
}
