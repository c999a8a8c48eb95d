//! Zero- and finite-frequency noise of the phonon number and the photon
//! Fano-factor estimate built from it.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use serde::Serialize;

use crate::dressed::{rate_matrix_for, RateMatrix};
use crate::error::{Error, Result};
use crate::linalg::{matvec, GroupInverse};
use crate::model::SystemParams;
use crate::steady::stationary_populations;

/// Denominator guard of the Fano proxy.
pub const DIVISION_GUARD: f64 = 1e-12;

/// Phonon number as a diagonal observable over the dressed states, weighted
/// by the phonon content of each state.
#[derive(Debug, Clone)]
pub struct NumberObservable {
    pub values: Vec<f64>,
}

impl NumberObservable {
    pub fn new(m: &RateMatrix) -> Self {
        let values = m
            .phonon_weights
            .iter()
            .map(|ws| ws.iter().map(|&(n, w)| n as f64 * w).sum())
            .collect();
        Self { values }
    }

    pub fn mean(&self, populations: &[f64]) -> f64 {
        self.values.iter().zip(populations).map(|(n, p)| n * p).sum()
    }

    pub fn variance(&self, populations: &[f64]) -> f64 {
        let mean = self.mean(populations);
        self.values.iter().zip(populations).map(|(n, p)| (n - mean).powi(2) * p).sum()
    }
}

/// Spectral density `S(omega) = -2 (1, dn M / (M^2 + omega^2) dn v)`.
///
/// Reuses the stationary state and the factorization across frequencies.
pub struct NoiseSpectrum<'a> {
    m: &'a RateMatrix,
    delta: Vec<f64>,
    weighted: Vec<f64>,
    group: GroupInverse,
    square: Option<Mat<f64>>,
}

impl<'a> NoiseSpectrum<'a> {
    pub fn new(m: &'a RateMatrix, observable: &NumberObservable) -> Result<Self> {
        if observable.values.len() != m.dim {
            return Err(Error::InvalidParams(format!(
                "observable has {} entries for a generator of dimension {}",
                observable.values.len(),
                m.dim
            )));
        }
        let v = stationary_populations(m)?;
        let mean = observable.mean(&v);
        let delta: Vec<f64> = observable.values.iter().map(|n| n - mean).collect();
        let weighted: Vec<f64> = delta.iter().zip(&v).map(|(d, p)| d * p).collect();
        let group = GroupInverse::new(&m.generator, &v)?;
        Ok(Self { m, delta, weighted, group, square: None })
    }

    pub fn at(&mut self, omega: f64) -> Result<f64> {
        if !(omega >= 0.0) {
            return Err(Error::InvalidParams(format!("frequency must be >= 0, got {omega}")));
        }
        let x = if omega == 0.0 {
            self.group.apply(&self.weighted)?
        } else {
            let g = &self.m.generator;
            let sq = self.square.get_or_insert_with(|| g * g);
            let dim = self.m.dim;
            let a = Mat::from_fn(dim, dim, |i, j| sq[(i, j)] + if i == j { omega * omega } else { 0.0 });
            let rhs = matvec(g, &self.weighted);
            let sol = a.partial_piv_lu().solve(&Col::from_fn(dim, |i| rhs[i]));
            (0..dim).map(|i| sol[i]).collect()
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem(format!("noise solve at omega = {omega} failed")));
        }
        Ok(-2.0 * self.delta.iter().zip(&x).map(|(d, y)| d * y).sum::<f64>())
    }
}

/// `S_nn(omega)` for a single frequency.
pub fn s_nn(m: &RateMatrix, observable: &NumberObservable, omega: f64) -> Result<f64> {
    NoiseSpectrum::new(m, observable)?.at(omega)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FanoProxy {
    pub s_nn: f64,
    pub s_nn_thermal: f64,
    pub n_bar: f64,
    pub n_thermal: f64,
    /// `gamma (S_nn - S_nn^th) / (n_bar - n_B)`.
    pub proxy: f64,
}

/// Photon Fano-factor estimate from the excess phonon-number noise. The
/// thermal reference is the same model without drive.
pub fn fano_proxy(m: &RateMatrix, params: &SystemParams) -> Result<FanoProxy> {
    let obs = NumberObservable::new(m);
    let v = stationary_populations(m)?;
    let n_bar = obs.mean(&v);
    let n_thermal = params.bose();
    let excess = n_bar - n_thermal;
    if excess < DIVISION_GUARD {
        return Err(Error::DivisionGuard(format!(
            "n_bar - n_B = {excess:e} below {DIVISION_GUARD:e}"
        )));
    }
    let s = s_nn(m, &obs, 0.0)?;
    let thermal_params = SystemParams { drive: 0.0, ..params.clone() };
    let mt = rate_matrix_for(&thermal_params)?;
    let s_th = s_nn(&mt, &NumberObservable::new(&mt), 0.0)?;
    Ok(FanoProxy {
        s_nn: s,
        s_nn_thermal: s_th,
        n_bar,
        n_thermal,
        proxy: params.mech_damping * (s - s_th) / excess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::solve_stationary;

    #[test]
    fn observable_mean_matches_nbar() {
        let p = SystemParams { n_max: 80, ..SystemParams::limit_cycle(5e-3) };
        let m = rate_matrix_for(&p).unwrap();
        let s = solve_stationary(&m).unwrap();
        let obs = NumberObservable::new(&m);
        assert!((obs.mean(&s.populations) - s.n_bar).abs() < 1e-10);
    }

    #[test]
    fn thermal_value_without_drive() {
        let p = SystemParams { n_max: 80, ..SystemParams::limit_cycle(0.0) };
        let m = rate_matrix_for(&p).unwrap();
        let nb = p.bose();
        let expected = 2.0 * nb * (nb + 1.0) / p.mech_damping;
        let got = s_nn(&m, &NumberObservable::new(&m), 0.0).unwrap();
        assert!((got - 1.8413e4).abs() < 1.0, "{got}");
        assert!((got - expected).abs() < 1e-6 * expected, "{got} vs {expected}");
    }

    #[test]
    fn thermal_spectrum_is_lorentzian() {
        let p = SystemParams { n_max: 80, ..SystemParams::limit_cycle(0.0) };
        let m = rate_matrix_for(&p).unwrap();
        let obs = NumberObservable::new(&m);
        let mut spec = NoiseSpectrum::new(&m, &obs).unwrap();
        let nb = p.bose();
        let g = p.mech_damping;
        for &w in &[1e-5, 1e-4, 1e-3] {
            let expected = 2.0 * nb * (nb + 1.0) * g / (g * g + w * w);
            let got = spec.at(w).unwrap();
            assert!((got - expected).abs() < 1e-6 * expected, "w={w}: {got} vs {expected}");
        }
    }

    #[test]
    fn stronger_damping_shrinks_noise() {
        let mut last = f64::INFINITY;
        for &g in &[1e-4, 1e-2, 1.0, 100.0] {
            let p = SystemParams { n_max: 60, mech_damping: g, ..SystemParams::limit_cycle(0.0) };
            let m = rate_matrix_for(&p).unwrap();
            let s = s_nn(&m, &NumberObservable::new(&m), 0.0).unwrap();
            assert!(s < last);
            last = s;
        }
        assert!(last < 0.05);
    }

    #[test]
    fn proxy_guard_without_drive() {
        let p = SystemParams { n_max: 60, ..SystemParams::limit_cycle(0.0) };
        let m = rate_matrix_for(&p).unwrap();
        assert!(matches!(fano_proxy(&m, &p), Err(Error::DivisionGuard(_))));
    }

    #[test]
    fn rejects_negative_frequency() {
        let p = SystemParams { n_max: 20, ..SystemParams::limit_cycle(1e-3) };
        let m = rate_matrix_for(&p).unwrap();
        assert!(s_nn(&m, &NumberObservable::new(&m), -1.0).is_err());
    }
}
