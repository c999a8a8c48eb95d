//! Full counting statistics of the emitted photons.
//!
//! Two routes to the mean flux and zero-frequency noise: finite differences
//! of the dominant eigenvalue of the tilted generator, and the group-inverse
//! formula `S = I - 2 1^T J D J v`.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dressed::RateMatrix;
use crate::error::{Error, Result};
use crate::linalg::{matvec, GroupInverse};
use crate::steady::stationary_populations;

/// Stencil widths of the eigenvalue differentiation.
pub const STENCIL: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
/// Minimal separation of the two leading real parts.
pub const GAP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingMethod {
    #[default]
    EigenDerivative,
    Pseudoinverse,
}

impl CountingMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::EigenDerivative => "eigen-derivative",
            Self::Pseudoinverse => "pseudoinverse",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CountingResult {
    pub flux: f64,
    pub noise: f64,
    pub fano: f64,
    pub method: CountingMethod,
    /// Estimated absolute error of `noise`.
    pub err_estimate: f64,
}

impl CountingResult {
    fn new(flux: f64, noise: f64, method: CountingMethod, err_estimate: f64) -> Self {
        let fano = if flux > 0.0 { noise / flux } else { f64::NAN };
        Self { flux, noise, fano, method, err_estimate }
    }

    /// Relative difference of flux and noise with another result.
    pub fn relative_gap(&self, other: &CountingResult) -> f64 {
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        rel(self.flux, other.flux).max(rel(self.noise, other.noise))
    }
}

/// The generator with every counted transition weighted by `exp(i chi)`.
pub struct TiltedGenerator<'a> {
    pub base: &'a RateMatrix,
    pub chi: f64,
}

impl<'a> TiltedGenerator<'a> {
    pub fn new(base: &'a RateMatrix, chi: f64) -> Self {
        Self { base, chi }
    }

    pub fn matrix(&self) -> Mat<Complex64> {
        let m = &self.base.generator;
        let mut out = Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0));
        if self.chi != 0.0 {
            let factor = expm1_i(self.chi);
            for t in &self.base.photon_mask {
                out[(t.to, t.from)] += factor * t.rate;
            }
        }
        out
    }
}

/// `exp(i chi) - 1` without cancellation in the real part.
fn expm1_i(chi: f64) -> Complex64 {
    let s = (0.5 * chi).sin();
    Complex64::new(-2.0 * s * s, chi.sin())
}

/// `lambda_0(chi)` together with the normalized right eigenvector.
struct Branch {
    value: Complex64,
    vector: Vec<Complex64>,
}

/// Newton polish of an eigenpair of `a` with the normalization `1^T v = 1`.
fn polish(a: &Mat<Complex64>, mut v: Vec<Complex64>, mut lambda: Complex64) -> Result<(Vec<Complex64>, Complex64)> {
    let dim = a.nrows();
    for _ in 0..8 {
        let mut residual = vec![Complex64::new(0.0, 0.0); dim + 1];
        for j in 0..dim {
            let vj = v[j];
            for i in 0..dim {
                residual[i] += a[(i, j)] * vj;
            }
        }
        for i in 0..dim {
            residual[i] -= lambda * v[i];
        }
        let sum: Complex64 = v.iter().sum();
        residual[dim] = sum - 1.0;
        let scale = v.iter().map(|x| x.norm()).fold(0.0, f64::max).max(1.0);
        let rnorm = residual.iter().map(|x| x.norm()).fold(0.0, f64::max);
        if rnorm < 1e-17 * scale {
            break;
        }
        let jac = Mat::from_fn(dim + 1, dim + 1, |i, j| match (i < dim, j < dim) {
            (true, true) => a[(i, j)] - if i == j { lambda } else { Complex64::new(0.0, 0.0) },
            (true, false) => -v[i],
            (false, true) => Complex64::new(1.0, 0.0),
            (false, false) => Complex64::new(0.0, 0.0),
        });
        let rhs = Col::from_fn(dim + 1, |i| -residual[i]);
        let step = jac.partial_piv_lu().solve(&rhs);
        if (0..=dim).any(|i| !step[i].re.is_finite() || !step[i].im.is_finite()) {
            return Err(Error::SingularSystem("eigenvector polish failed".into()));
        }
        for i in 0..dim {
            v[i] += step[i];
        }
        lambda += step[dim];
    }
    Ok((v, lambda))
}

fn leading_branch(m: &RateMatrix, stationary: &[f64], chi: f64) -> Result<Branch> {
    let a = TiltedGenerator::new(m, chi).matrix();
    let eig = a
        .eigenvalues()
        .map_err(|e| Error::SingularSystem(format!("eigenvalue solver failed: {e:?}")))?;
    let mut sorted = eig.clone();
    sorted.sort_by(|x, y| y.re.total_cmp(&x.re));
    if sorted.len() > 1 && (sorted[0].re - sorted[1].re).abs() < GAP_TOL {
        return Err(Error::BranchAmbiguity { chi, gap: (sorted[0].re - sorted[1].re).abs() });
    }
    let start: Vec<Complex64> = stationary.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let (vector, polished) = polish(&a, start, sorted[0])?;
    // the branch continued from chi = 0 must be the leading one
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    if (polished - sorted[0]).norm() > 1e-8 * scale {
        return Err(Error::BranchAmbiguity { chi, gap: (polished - sorted[0]).norm() });
    }
    // exact form using 1^T M = 0: lambda = (e^{i chi} - 1) 1^T J v / 1^T v
    let factor = expm1_i(chi);
    let mut counted = Complex64::new(0.0, 0.0);
    for t in &m.photon_mask {
        counted += t.rate * vector[t.from];
    }
    let total: Complex64 = vector.iter().sum();
    Ok(Branch { value: factor * counted / total, vector })
}

/// Dominant eigenvalue `lambda_0(chi)` of the tilted generator.
pub fn cgf_rate(m: &RateMatrix, chi: f64) -> Result<Complex64> {
    let stationary = stationary_populations(m)?;
    Ok(leading_branch(m, &stationary, chi)?.value)
}

fn richardson(values: &[f64]) -> (f64, f64) {
    // values at h, h/2, h/4 with O(h^2) leading error
    let r1: Vec<f64> = values.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
    let r2 = (16.0 * r1[1] - r1[0]) / 15.0;
    (r2, (r2 - r1[1]).abs())
}

/// Flux and noise from central differences of `lambda_0` in `i chi`.
pub fn flux_noise_eigen(m: &RateMatrix) -> Result<CountingResult> {
    let stationary = stationary_populations(m)?;
    let mut first = Vec::with_capacity(STENCIL.len());
    let mut second = Vec::with_capacity(STENCIL.len());
    let mut imag_defect = 0.0f64;
    for &h in &STENCIL {
        let plus = leading_branch(m, &stationary, h)?.value;
        let minus = leading_branch(m, &stationary, -h)?.value;
        // lambda(0) = 0 exactly by conservation
        let d1 = (plus - minus) / (2.0 * h);
        let d2 = (plus + minus) / (h * h);
        // I = -i f'(0), S = -f''(0)
        let flux = (Complex64::new(0.0, -1.0) * d1).re;
        first.push(flux);
        second.push(-d2.re);
        imag_defect = d2.im.abs();
    }
    let (flux, _) = richardson(&first);
    let (noise, err) = richardson(&second);
    Ok(CountingResult::new(flux, noise, CountingMethod::EigenDerivative, err + imag_defect))
}

/// Flux and noise from the stationary state and the group inverse.
pub fn flux_noise_pseudoinverse(m: &RateMatrix) -> Result<CountingResult> {
    let v = stationary_populations(m)?;
    let jump = m.jump_matrix();
    let jv = matvec(&jump, &v);
    let flux: f64 = jv.iter().sum();
    let group = GroupInverse::new(&m.generator, &v)?;
    let djv = group.apply(&jv)?;
    let jdjv: f64 = matvec(&jump, &djv).iter().sum();
    let noise = flux - 2.0 * jdjv;
    if !noise.is_finite() {
        return Err(Error::SingularSystem("noise is not finite".into()));
    }
    Ok(CountingResult::new(flux, noise, CountingMethod::Pseudoinverse, 0.0))
}

/// Leading eigenvector of the tilted generator, normalized to unit sum.
pub fn tilted_state(m: &RateMatrix, chi: f64) -> Result<Vec<Complex64>> {
    let stationary = stationary_populations(m)?;
    Ok(leading_branch(m, &stationary, chi)?.vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dressed::Transition;

    fn poisson(rate: f64) -> RateMatrix {
        let t = [Transition { from: 0, to: 0, rate, photon: Some(1) }];
        RateMatrix::from_transitions(1, &t, vec![vec![(0, 1.0)]], 1).unwrap()
    }

    /// Three states in a cycle with one counted link.
    fn three_state() -> RateMatrix {
        let t = [
            Transition { from: 0, to: 1, rate: 0.7, photon: None },
            Transition { from: 1, to: 0, rate: 0.2, photon: None },
            Transition { from: 1, to: 2, rate: 1.3, photon: None },
            Transition { from: 2, to: 1, rate: 0.4, photon: None },
            Transition { from: 2, to: 0, rate: 0.9, photon: Some(1) },
            Transition { from: 0, to: 2, rate: 0.1, photon: None },
        ];
        let w = vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]];
        RateMatrix::from_transitions(3, &t, w, 3).unwrap()
    }

    #[test]
    fn tilt_is_identity_at_zero() {
        let m = three_state();
        let a = TiltedGenerator::new(&m, 0.0).matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a[(i, j)], Complex64::new(m.generator[(i, j)], 0.0));
            }
        }
    }

    #[test]
    fn poisson_cgf() {
        let r = 0.37;
        let m = poisson(r);
        for &chi in &[0.0, 0.01, -0.05, 0.1] {
            let l = cgf_rate(&m, chi).unwrap();
            let exact = r * (Complex64::from_polar(1.0, chi) - 1.0);
            assert!((l - exact).norm() < 1e-15);
        }
    }

    #[test]
    fn poisson_fano_is_one() {
        let m = poisson(0.37);
        for res in [flux_noise_eigen(&m).unwrap(), flux_noise_pseudoinverse(&m).unwrap()] {
            assert!((res.flux - 0.37).abs() < 1e-12);
            assert!((res.fano - 1.0).abs() < 1e-9, "{res:?}");
        }
    }

    /// Closed form for the two-state telegraph with counting on one link:
    /// states a -> b at rate k (counted), b -> a at rate q.
    #[test]
    fn telegraph_closed_form() {
        let (k, q) = (0.8, 0.3);
        let t = [
            Transition { from: 0, to: 1, rate: k, photon: Some(1) },
            Transition { from: 1, to: 0, rate: q, photon: None },
        ];
        let m = RateMatrix::from_transitions(2, &t, vec![vec![(0, 1.0)], vec![(1, 1.0)]], 2).unwrap();
        let flux = k * q / (k + q);
        let fano = 1.0 - 2.0 * k * q / ((k + q) * (k + q));
        for res in [flux_noise_eigen(&m).unwrap(), flux_noise_pseudoinverse(&m).unwrap()] {
            assert!((res.flux - flux).abs() < 1e-10 * flux);
            assert!((res.fano - fano).abs() < 1e-8, "{res:?} vs {fano}");
        }
    }

    #[test]
    fn methods_agree_on_three_states() {
        let m = three_state();
        let a = flux_noise_eigen(&m).unwrap();
        let b = flux_noise_pseudoinverse(&m).unwrap();
        assert!(a.relative_gap(&b) < 1e-9, "{a:?} {b:?}");
    }

    #[test]
    fn cgf_conjugate_symmetry() {
        let m = three_state();
        let plus = cgf_rate(&m, 0.07).unwrap();
        let minus = cgf_rate(&m, -0.07).unwrap();
        assert!((plus - minus.conj()).norm() < 1e-14);
        assert!(cgf_rate(&m, 0.0).unwrap().norm() < 1e-12);
    }
}
