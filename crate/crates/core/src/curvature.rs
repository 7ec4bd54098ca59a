//! Mean curvature of a graph and the inverse of the capillary-gravity
//! operator `f ↦ σH(f) + g f`.

use num_complex::Complex;

use crate::error::{precondition, Error, Result};
use crate::linalg::{gmres, GmresOptions};
use crate::scalar::Real;
use crate::spectral::{apply_multiplier, dealiased_map, derivative, GridFunction, MultiplierSymbol};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureConfig<T> {
    /// Newton stops when `|σH(f) + g f - h|_sup <= newton_tol * max(1, |h|_sup)`.
    pub newton_tol: T,
    pub max_newton: usize,
    /// Halve the Newton step (up to 10 times) while the residual does not drop.
    pub damping: bool,
}

impl<T: Real> Default for CurvatureConfig<T> {
    fn default() -> Self {
        Self { newton_tol: T::lit(1e-11), max_newton: 50, damping: true }
    }
}

impl<T: Real> CurvatureConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > T::zero()) {
            return Err(precondition("newton_tol must be positive"));
        }
        if self.max_newton == 0 {
            return Err(precondition("max_newton must be at least 1"));
        }
        Ok(())
    }
}

/// `(1 + p²)^{-3/2}`, the coefficient of `-f''` in the linearized curvature.
pub fn quasilinear_coefficient<T: Real>(p: T) -> T {
    (T::one() + p * p).powf(T::lit(-1.5))
}

/// `(1 + p²)^{-1/2} - 1`, written to avoid cancellation for small slopes.
fn slope_correction<T: Real>(p: T) -> T {
    let s = (T::one() + p * p).sqrt();
    -p * p / (s * (T::one() + s))
}

/// `H(η) = -∂ₓ(η' / √(1 + η'²))`.
pub fn mean_curvature<T: Real>(eta: &GridFunction<T>) -> GridFunction<T> {
    let slope = derivative(eta);
    let flux = dealiased_map(&[&slope], |v| v[0] / (T::one() + v[0] * v[0]).sqrt());
    -&derivative(&flux)
}

/// `R_H(η) = H(η) + η''`, computed directly as `-∂ₓ(η' H₁(η'))`.
pub fn curvature_remainder<T: Real>(eta: &GridFunction<T>) -> GridFunction<T> {
    let slope = derivative(eta);
    let flux = dealiased_map(&[&slope], |v| v[0] * slope_correction(v[0]));
    -&derivative(&flux)
}

/// `σH(f) + g f`.
pub fn capillary_gravity<T: Real>(f: &GridFunction<T>, sigma: T, g: T) -> GridFunction<T> {
    mean_curvature(f).scaled(sigma).axpy(g, f)
}

/// Solves `σH(f) + g f = h` by damped Newton. The linearized problems
/// `-σ∂ₓ(a(f')w') + g w = r` are solved with GMRES preconditioned by the
/// constant-coefficient operator with `a` replaced by its mean.
pub fn invert_capillary_gravity<T: Real>(
    h: &GridFunction<T>,
    sigma: T,
    g: T,
    cfg: &CurvatureConfig<T>,
) -> Result<GridFunction<T>> {
    cfg.validate()?;
    if !(sigma > T::zero()) || g < T::zero() {
        return Err(precondition("need sigma > 0 and g >= 0"));
    }
    let pure_capillary = g == T::zero();
    if pure_capillary && !h.is_mean_zero(T::lit(1e-10)) {
        return Err(precondition(format!(
            "with g = 0 the data must have mean zero (mean {:.3e})",
            h.mean().as_f64()
        )));
    }
    let grid = h.grid().clone();
    let n = grid.n();
    let target = cfg.newton_tol * h.sup_norm().max(T::one());

    let linear_inverse = |coef: T| {
        MultiplierSymbol::new("(-σāΔ+g)^-1", pure_capillary, move |k| {
            let kf = T::from_i64(k).expect("wavenumber");
            Complex::new(T::one() / (sigma * coef * kf * kf + g), T::zero())
        })
    };
    let mut f = apply_multiplier(h, &linear_inverse(T::one()))?;
    let residual_of = |f: &GridFunction<T>| &capillary_gravity(f, sigma, g) - h;
    let mut r = residual_of(&f);
    let mut rnorm = r.sup_norm();

    for _ in 0..cfg.max_newton {
        if rnorm <= target {
            return Ok(f);
        }
        let slope = derivative(&f);
        let coef: Vec<T> = slope.padded_values().into_iter().map(quasilinear_coefficient).collect();
        let mean_coef = coef.iter().copied().sum::<T>() / T::from_count(coef.len());
        let coef_fn = dealiased_map(&[&slope], |v| quasilinear_coefficient(v[0]));
        let precond_sym = linear_inverse(mean_coef);

        let to_fn = |v: &[T]| GridFunction::new(grid.clone(), v.to_vec());
        let b: Vec<T> = r.values().iter().map(|&v| -v).collect();
        let mut x = vec![T::zero(); n];
        let opts = GmresOptions { rel_tol: T::lit(1e-13), abs_tol: target * T::lit(1e-3), restart: 60, max_iter: 600 };
        gmres(
            |v, out| {
                let w = to_fn(v)?;
                let dw = derivative(&w);
                let flux = dealiased_map(&[&coef_fn, &dw], |a| a[0] * a[1]);
                let jw = (-&derivative(&flux)).scaled(sigma).axpy(g, &w);
                out.copy_from_slice(jw.values());
                Ok(())
            },
            |v, out| {
                let mut w = to_fn(v)?;
                if pure_capillary {
                    w = crate::spectral::project_mean_zero(&w);
                }
                out.copy_from_slice(apply_multiplier(&w, &precond_sym)?.values());
                Ok(())
            },
            &b,
            &mut x,
            &opts,
        )?;
        let step = to_fn(&x)?;

        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..=10 {
            let trial = f.axpy(t, &step);
            let tr = residual_of(&trial);
            let tn = tr.sup_norm();
            if tn < rnorm || !cfg.damping {
                f = trial;
                r = tr;
                rnorm = tn;
                accepted = true;
                break;
            }
            t = t * T::lit(0.5);
        }
        if !accepted {
            break;
        }
    }
    if rnorm <= target {
        return Ok(f);
    }
    Err(Error::NonConvergence {
        what: "capillary-gravity Newton",
        iterations: cfg.max_newton,
        residual: rnorm.as_f64(),
    })
}
