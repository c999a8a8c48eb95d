//! Restarted GMRES with right preconditioning for complex systems.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// Target `||b - A x|| / ||b||`.
    pub tol: f64,
    /// A restart cycle that stops improving is accepted when the residual is
    /// already within this factor of `tol` (roundoff floor).
    pub stagnation_factor: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { restart: 60, max_iter: 3000, tol: 1e-12, stagnation_factor: 100.0 }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Solves `A x = b` with `apply(v, out)` computing `out = A v` and
/// `precond(v)` approximating `A^{-1} v`.
pub fn gmres<A, P>(mut apply: A, mut precond: P, b: &[Complex64], x0: Option<Vec<Complex64>>, opts: GmresOptions) -> Result<GmresOutcome>
where
    A: FnMut(&[Complex64], &mut [Complex64]),
    P: FnMut(&[Complex64]) -> Vec<Complex64>,
{
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let b_norm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![zero; n]);
    if b_norm == 0.0 {
        return Ok(GmresOutcome { x: vec![zero; n], iterations: 0, relative_residual: 0.0 });
    }
    let mut work = vec![zero; n];
    let mut iterations = 0;
    let m = opts.restart.max(1);
    let mut previous = f64::INFINITY;
    loop {
        apply(&x, &mut work);
        let r: Vec<Complex64> = b.iter().zip(&work).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / b_norm;
        if rel <= opts.tol || (rel > 0.5 * previous && rel <= opts.tol * opts.stagnation_factor) {
            return Ok(GmresOutcome { x, iterations, relative_residual: rel });
        }
        previous = rel;
        if iterations >= opts.max_iter {
            return Err(Error::Convergence(format!(
                "GMRES stalled at relative residual {rel:e} after {iterations} iterations"
            )));
        }
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(m + 1);
        let mut precond_basis: Vec<Vec<Complex64>> = Vec::with_capacity(m);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut h = vec![vec![zero; m]; m + 1];
        let mut cs = vec![zero; m];
        let mut sn = vec![zero; m];
        let mut g = vec![zero; m + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            let z = precond(&basis[k]);
            apply(&z, &mut work);
            precond_basis.push(z);
            let mut w = work.clone();
            for (i, q) in basis.iter().enumerate() {
                let hij = dot(q, &w);
                h[i][k] = hij;
                for (wj, qj) in w.iter_mut().zip(q) {
                    *wj -= hij * qj;
                }
            }
            // one reorthogonalization pass
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                h[i][k] += c;
                for (wj, qj) in w.iter_mut().zip(q) {
                    *wj -= c * qj;
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = Complex64::new(wn, 0.0);
            for i in 0..k {
                let t = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (a, bb) = (h[k][k], h[k + 1][k]);
            let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if r == 0.0 {
                cs[k] = Complex64::new(1.0, 0.0);
                sn[k] = zero;
            } else {
                cs[k] = a / r;
                sn[k] = bb / r;
            }
            h[k][k] = Complex64::new(r, 0.0);
            h[k + 1][k] = zero;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];
            iterations += 1;
            k_used = k + 1;
            if g[k + 1].norm() / b_norm <= opts.tol * 0.5 || wn == 0.0 || iterations >= opts.max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }
        // back substitution
        let mut y = vec![zero; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (yi, z) in y.iter().zip(&precond_basis) {
            for (xj, zj) in x.iter_mut().zip(z) {
                *xj += yi * zj;
            }
        }
        if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Convergence("GMRES produced non-finite iterate".into()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [
            [c(4.0, 1.0), c(1.0, 0.0), c(0.0, -0.5)],
            [c(0.2, 0.0), c(3.0, -1.0), c(1.0, 0.0)],
            [c(0.0, 1.0), c(0.5, 0.0), c(2.0, 0.0)],
        ];
        let x_true = [c(1.0, 2.0), c(-0.5, 0.0), c(0.3, -1.0)];
        let b: Vec<Complex64> = (0..3).map(|i| (0..3).map(|j| a[i][j] * x_true[j]).sum()).collect();
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            for i in 0..3 {
                out[i] = (0..3).map(|j| a[i][j] * v[j]).sum();
            }
        };
        let out = gmres(apply, |v| v.to_vec(), &b, None, GmresOptions::default()).unwrap();
        for i in 0..3 {
            assert!((out.x[i] - x_true[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn restarts_on_larger_system() {
        let n = 200;
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            for i in 0..n {
                let mut s = c(3.0 + i as f64 * 0.01, 0.1) * v[i];
                if i > 0 {
                    s -= v[i - 1];
                }
                if i + 1 < n {
                    s -= c(0.0, 0.5) * v[i + 1];
                }
                out[i] = s;
            }
        };
        let b: Vec<Complex64> = (0..n).map(|i| c((i as f64).sin(), 1.0)).collect();
        let opts = GmresOptions { restart: 10, ..GmresOptions::default() };
        let out = gmres(apply, |v| v.to_vec(), &b, None, opts).unwrap();
        let mut r = vec![c(0.0, 0.0); n];
        apply(&out.x, &mut r);
        let err: f64 = r.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn reports_stall() {
        // singular operator with b outside its range
        let apply = |v: &[Complex64], out: &mut [Complex64]| {
            out[0] = v[0];
            out[1] = c(0.0, 0.0);
        };
        let b = [c(1.0, 0.0), c(1.0, 0.0)];
        let opts = GmresOptions { max_iter: 20, ..GmresOptions::default() };
        assert!(matches!(gmres(apply, |v| v.to_vec(), &b, None, opts), Err(Error::Convergence(_))));
    }
}
