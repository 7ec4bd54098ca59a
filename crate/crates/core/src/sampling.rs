//! Reproducible random smooth profiles for tests and the verify suite.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Real;
use crate::spectral::{discrete_norms, Grid, GridFunction};

/// Mean-zero profile with random modes `1..=band` (amplitudes decaying like
/// `k⁻²`), scaled so that `sup|f| + sup|f'|` equals `c1`.
pub fn random_profile<T: Real>(grid: &Arc<Grid<T>>, seed: u64, band: usize, c1: T) -> GridFunction<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let band = band.min(grid.kmax());
    let mut half = vec![Complex::new(T::zero(), T::zero()); grid.kmax() + 1];
    for (k, slot) in half.iter_mut().enumerate().take(band + 1).skip(1) {
        let scale = 1.0 / (k * k) as f64;
        let re: f64 = rng.gen_range(-1.0..1.0);
        let im: f64 = rng.gen_range(-1.0..1.0);
        *slot = Complex::new(T::lit(re * scale), T::lit(im * scale));
    }
    let f = GridFunction::from_half_spectrum(grid, &half);
    let norm = discrete_norms(&f, T::lit(0.5)).c1_norm;
    if norm == T::zero() {
        return f;
    }
    f.scaled(c1 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_is_scaled_and_reproducible() {
        let g = Grid::<f64>::new(64).unwrap();
        let a = random_profile(&g, 7, 8, 0.5);
        let b = random_profile(&g, 7, 8, 0.5);
        assert_eq!(a.values(), b.values());
        assert!(a.mean().abs() < 1e-15);
        assert!((discrete_norms(&a, 0.5).c1_norm - 0.5).abs() < 1e-12);
        assert!(a.half_spectrum()[9..].iter().all(|c| c.norm() < 1e-15));
    }
}
