//! Small dense LU factorization and a restarted GMRES.
//!
//! Both are generic over [`Real`]; the dense blocks here are at most a few
//! dozen rows (one Chebyshev column per Fourier mode), and every large
//! system in the crate is applied matrix-free.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// LU factorization with partial pivoting of a square row-major matrix.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(n: usize, mut a: Vec<T>) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_count(n.max(1));
        for col in 0..n {
            let (pivot_row, pivot_abs) = (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold((col, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pivot_abs > tiny) {
                return Err(Error::Singular("dense LU"));
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                perm.swap(col, pivot_row);
            }
            let pivot = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / pivot;
                a[r * n + col] = factor;
                if factor != T::zero() {
                    for j in col + 1..n {
                        let v = a[col * n + j];
                        a[r * n + j] = a[r * n + j] - factor * v;
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu[i * n + j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu[i * n + j] * y[j];
            }
            y[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&y);
    }

    /// Solves `A x = b` for a complex right-hand side with real `A`.
    pub fn solve_complex_in_place(&self, b: &mut [Complex<T>]) {
        let mut re: Vec<T> = b.iter().map(|c| c.re).collect();
        let mut im: Vec<T> = b.iter().map(|c| c.im).collect();
        self.solve_in_place(&mut re);
        self.solve_in_place(&mut im);
        for (c, (r, i)) in b.iter_mut().zip(re.into_iter().zip(im)) {
            *c = Complex::new(r, i);
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions<T> {
    /// Stop when `|b - A x| <= rel_tol * |b|`.
    pub rel_tol: T,
    /// Or when `|b - A x| <= abs_tol`.
    pub abs_tol: T,
    pub restart: usize,
    pub max_iter: usize,
}

impl<T: Real> Default for GmresOptions<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-12),
            abs_tol: T::zero(),
            restart: 60,
            max_iter: 600,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GmresOutcome<T> {
    pub iterations: usize,
    /// Final true residual norm, relative to `|b|` (absolute if `b = 0`).
    pub residual: T,
    pub converged: bool,
}

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Right-preconditioned restarted GMRES for `A x = b`.
///
/// `apply(v, out)` writes `A v`; `precond(v, out)` writes `P^{-1} v`.
/// `x` holds the initial guess on entry and the solution on exit. The
/// caller decides what to do with an unconverged outcome.
pub fn gmres<T, A, P>(
    mut apply: A,
    mut precond: P,
    b: &[T],
    x: &mut [T],
    opts: &GmresOptions<T>,
) -> Result<GmresOutcome<T>>
where
    T: Real,
    A: FnMut(&[T], &mut [T]) -> Result<()>,
    P: FnMut(&[T], &mut [T]) -> Result<()>,
{
    let n = b.len();
    assert_eq!(x.len(), n);
    let bnorm = norm2(b);
    let scale = if bnorm > T::zero() { bnorm } else { T::one() };
    let target = (opts.rel_tol * bnorm).max(opts.abs_tol);
    let m = opts.restart.max(1);

    let mut r = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut total = 0usize;

    loop {
        apply(x, &mut w)?;
        for i in 0..n {
            r[i] = b[i] - w[i];
        }
        let beta = norm2(&r);
        if beta <= target || bnorm == T::zero() && beta == T::zero() {
            return Ok(GmresOutcome { iterations: total, residual: beta / scale, converged: true });
        }
        if total >= opts.max_iter {
            return Ok(GmresOutcome { iterations: total, residual: beta / scale, converged: false });
        }

        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut h = vec![vec![T::zero(); m]; m + 1];
        let mut cs = vec![T::zero(); m];
        let mut sn = vec![T::zero(); m];
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for j in 0..m {
            precond(&basis[j], &mut z)?;
            apply(&z, &mut w)?;
            total += 1;
            // modified Gram-Schmidt, twice for stability
            for _pass in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let hij = dot(&w, vi);
                    h[i][j] = h[i][j] + hij;
                    for (wk, &vk) in w.iter_mut().zip(vi) {
                        *wk = *wk - hij * vk;
                    }
                }
            }
            let hnext = norm2(&w);
            h[j + 1][j] = hnext;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == T::zero() {
                cs[j] = T::one();
                sn[j] = T::zero();
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = T::zero();
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j] * g[j];
            k_used = j + 1;
            let breakdown = !(hnext > T::epsilon() * beta);
            if g[j + 1].abs() <= target || breakdown || total >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|&v| v / hnext).collect());
        }

        // back substitution for the least-squares coefficients
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s = s - h[i][l] * y[l];
            }
            y[i] = if h[i][i] != T::zero() { s / h[i][i] } else { T::zero() };
        }
        let mut update = vec![T::zero(); n];
        for (yi, vi) in y.iter().zip(&basis) {
            for (u, &v) in update.iter_mut().zip(vi) {
                *u = *u + *yi * v;
            }
        }
        precond(&update, &mut z)?;
        for i in 0..n {
            x[i] = x[i] + z[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_pivoting_system() {
        // needs a row swap at the first column
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = DenseLu::factor(3, a.clone()).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x_true[j]).sum()).collect();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(matches!(DenseLu::<f64>::factor(2, a), Err(Error::Singular(_))));
    }

    #[test]
    fn gmres_nonsymmetric_with_jacobi_preconditioner() {
        let n = 40;
        let a = |i: usize, j: usize| -> f64 {
            if i == j {
                4.0 + i as f64 * 0.1
            } else if j == i + 1 {
                -1.3
            } else if i == j + 1 {
                -0.7
            } else {
                0.0
            }
        };
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a(i, j) * x_true[j]).sum()).collect();
        let mut x = vec![0.0; n];
        let out = gmres(
            |v, o| {
                for i in 0..n {
                    o[i] = (0..n).map(|j| a(i, j) * v[j]).sum();
                }
                Ok(())
            },
            |v, o| {
                for i in 0..n {
                    o[i] = v[i] / a(i, i);
                }
                Ok(())
            },
            &b,
            &mut x,
            &GmresOptions { rel_tol: 1e-13, restart: 10, ..Default::default() },
        )
        .unwrap();
        assert!(out.converged);
        let err = x.iter().zip(&x_true).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(err < 1e-11, "err {err}");
    }
}
