//! Stationary state of the Pauli equation, phonon marginal, photon fluxes
//! resolved by phonon transfer, and the closed-form mean phonon number.

use faer::linalg::solvers::Solve;
use faer::{Col, Mat};
use serde::Serialize;

use crate::dressed::RateMatrix;
use crate::error::{Error, Result};
use crate::linalg::matvec;
use crate::model::SystemParams;

/// Flux channels resolved individually; larger `|p|` go to `remainder`.
pub const P_MAX: i64 = 5;

/// Entries below this are an error; between it and zero they are rounded to zero.
pub const NEGATIVE_TOL: f64 = 1e-12;

/// Limit on the probability held by the top 10% of phonon levels.
pub const TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct FluxDecomposition {
    /// Phonon transfer `p` for each entry of `resolved`.
    pub p: Vec<i64>,
    #[serde(rename = "I_p")]
    pub resolved: Vec<f64>,
    /// Flux from channels with `|p| > P_MAX`.
    pub remainder: f64,
    #[serde(rename = "I_bar")]
    pub total: f64,
    /// `sum_p p I^(p)`: phonons pumped into the oscillator per unit time.
    #[serde(rename = "Gamma_op")]
    pub gamma_op: f64,
}

impl FluxDecomposition {
    pub fn get(&self, p: i64) -> f64 {
        if p.abs() > P_MAX {
            return 0.0;
        }
        self.resolved[(p + P_MAX) as usize]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryState {
    pub populations: Vec<f64>,
    #[serde(rename = "P_n")]
    pub phonon_marginal: Vec<f64>,
    pub n_bar: f64,
    #[serde(flatten)]
    pub flux: FluxDecomposition,
    pub tail_mass: f64,
    pub residual: f64,
    pub diagnostics: Vec<String>,
}

impl StationaryState {
    pub fn flux_total(&self) -> f64 {
        self.flux.total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn pn_csv(&self) -> String {
        crate::io::pn_csv(&self.phonon_marginal)
    }
}

/// Unique normalized kernel vector of the generator.
///
/// One row of `M` is replaced by the normalization constraint and the
/// resulting system is solved by dense LU with one refinement step.
pub fn solve_stationary(m: &RateMatrix) -> Result<StationaryState> {
    let populations = stationary_populations(m)?;
    let mut diagnostics = Vec::new();
    let (populations, clipped) = clip_negative(populations)?;
    if clipped > 0 {
        diagnostics.push(format!("{clipped} round-off negative populations clipped to zero"));
    }
    let residual = matvec(&m.generator, &populations).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = m.max_abs();
    if residual > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem(format!(
            "stationary residual {residual:e} exceeds 1e-10 * max|M| = {:e}",
            1e-10 * scale
        )));
    }
    let phonon_marginal = phonon_marginal(m, &populations);
    let n_bar = phonon_marginal.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let tail_mass = tail_mass(&phonon_marginal);
    if tail_mass >= TAIL_TOL {
        return Err(Error::Truncation(format!(
            "stationary tail mass {tail_mass:e} above 90% of n_max = {}",
            phonon_marginal.len() - 1
        )));
    }
    let flux = flux_from_populations(m, &populations);
    Ok(StationaryState { populations, phonon_marginal, n_bar, flux, tail_mass, residual, diagnostics })
}

/// Solves for the kernel vector without any post-checks.
pub(crate) fn stationary_populations(m: &RateMatrix) -> Result<Vec<f64>> {
    let dim = m.dim;
    if dim == 1 {
        return Ok(vec![1.0]);
    }
    let pivot_row = dim - 1;
    let a = Mat::from_fn(dim, dim, |i, j| if i == pivot_row { 1.0 } else { m.generator[(i, j)] });
    let lu = a.partial_piv_lu();
    let b = Col::from_fn(dim, |i| if i == pivot_row { 1.0 } else { 0.0 });
    let mut x = lu.solve(&b);
    let ax = &a * &x;
    let r = Col::from_fn(dim, |i| b[i] - ax[i]);
    let dx = lu.solve(&r);
    x += &dx;
    let out: Vec<f64> = (0..dim).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("generator kernel is not one-dimensional".into()));
    }
    Ok(out)
}

fn clip_negative(mut p: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let mut clipped = 0;
    for v in p.iter_mut() {
        if *v < -NEGATIVE_TOL {
            return Err(Error::SingularSystem(format!("negative stationary population {v:e}")));
        }
        if *v < 0.0 {
            *v = 0.0;
            clipped += 1;
        }
    }
    let total: f64 = p.iter().sum();
    if !(total > 0.0) {
        return Err(Error::SingularSystem("stationary vector has zero mass".into()));
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok((p, clipped))
}

/// Phonon distribution `P_n` from populations over dressed states.
pub fn phonon_marginal(m: &RateMatrix, populations: &[f64]) -> Vec<f64> {
    let mut pn = vec![0.0; m.phonon_levels];
    for (weights, &pop) in m.phonon_weights.iter().zip(populations) {
        for &(n, w) in weights {
            pn[n] += pop * w;
        }
    }
    pn
}

/// Probability above 90% of the highest phonon level.
pub fn tail_mass(pn: &[f64]) -> f64 {
    let n_max = (pn.len() - 1) as f64;
    pn.iter().enumerate().filter(|(n, _)| *n as f64 > 0.9 * n_max).map(|(_, p)| p).sum()
}

/// Photon fluxes `I^(p)` of a solved state.
pub fn flux_resolved(state: &StationaryState, m: &RateMatrix) -> FluxDecomposition {
    flux_from_populations(m, &state.populations)
}

pub(crate) fn flux_from_populations(m: &RateMatrix, populations: &[f64]) -> FluxDecomposition {
    let mut resolved = vec![0.0; (2 * P_MAX + 1) as usize];
    let mut remainder = 0.0;
    let mut total = 0.0;
    let mut gamma_op = 0.0;
    for t in &m.photon_mask {
        let f = populations[t.from] * t.rate;
        total += f;
        gamma_op += t.p as f64 * f;
        if t.p.abs() <= P_MAX {
            resolved[(t.p + P_MAX) as usize] += f;
        } else {
            remainder += f;
        }
    }
    FluxDecomposition { p: (-P_MAX..=P_MAX).collect(), resolved, remainder, total, gamma_op }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MeanPhonon {
    Finite(f64),
    /// `gamma <= Gamma A`: the linear prediction diverges.
    AboveThreshold,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AnalyticPrediction {
    /// `A = (Omega g0 / (epsilon omega_m))^2`.
    pub a: f64,
    pub n_bar: MeanPhonon,
    /// Critical drive `|epsilon| omega_m sqrt(gamma) / (g0 sqrt(Gamma))`.
    pub omega_star: f64,
}

/// Small-coupling mean phonon number `(Gamma A + gamma n_B) / (gamma - Gamma A)`.
pub fn analytic_nbar(params: &SystemParams) -> AnalyticPrediction {
    let a = (params.drive * params.g0 / (params.detuning * params.omega_m)).powi(2);
    let gain = params.tls_decay * a;
    let gamma = params.mech_damping;
    let n_bar = if gamma > gain {
        MeanPhonon::Finite((gain + gamma * params.bose()) / (gamma - gain))
    } else {
        MeanPhonon::AboveThreshold
    };
    let omega_star = if params.g0 > 0.0 && params.tls_decay > 0.0 {
        params.detuning.abs() * params.omega_m * gamma.sqrt() / (params.g0 * params.tls_decay.sqrt())
    } else {
        f64::INFINITY
    };
    AnalyticPrediction { a, n_bar, omega_star }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dressed::{build_doublets, build_rate_matrix, Transition};
    use crate::model::build_fc_table;

    fn solve(p: &SystemParams) -> (RateMatrix, StationaryState) {
        let fc = build_fc_table(p).unwrap();
        let b = build_doublets(p, &fc).unwrap();
        let m = build_rate_matrix(p, &b, &fc).unwrap();
        let s = solve_stationary(&m).unwrap();
        (m, s)
    }

    #[test]
    fn boltzmann_without_drive() {
        let p = SystemParams { n_max: 60, ..SystemParams::limit_cycle(0.0) };
        let (_, s) = solve(&p);
        let z: f64 = (0..=60).map(|n| (-(n as f64)).exp()).sum();
        for n in 0..=60 {
            let boltzmann = (-(n as f64)).exp() / z;
            assert!((s.phonon_marginal[n] - boltzmann).abs() < 1e-10, "n={n}");
        }
        for n in 0..8 {
            let ratio = s.phonon_marginal[n + 1] / s.phonon_marginal[n];
            assert!((ratio - 0.367879).abs() < 1e-6);
        }
        // excited states only hold round-off
        assert!(s.flux.total.abs() < 1e-16);
        assert!(s.flux.resolved.iter().all(|v| v.abs() < 1e-16));
    }

    #[test]
    fn normalization_and_residual() {
        let p = SystemParams::limit_cycle(0.005);
        let (m, s) = solve(&p);
        assert!((s.populations.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!((s.phonon_marginal.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(s.residual < 1e-10 * m.max_abs());
    }

    #[test]
    fn analytic_values() {
        let a = analytic_nbar(&SystemParams::limit_cycle(0.0));
        assert_eq!(a.a, 0.0);
        match a.n_bar {
            MeanPhonon::Finite(v) => assert!((v - 0.5819767).abs() < 1e-6),
            _ => panic!(),
        }
        let a = analytic_nbar(&SystemParams::limit_cycle(0.005));
        assert!((a.a - 0.0025).abs() < 1e-15);
        assert!((a.omega_star - 0.01).abs() < 1e-15);
        match a.n_bar {
            MeanPhonon::Finite(v) => assert!((v - 1.109302).abs() < 1e-5),
            _ => panic!(),
        }
        let a = analytic_nbar(&SystemParams::limit_cycle(0.02));
        assert_eq!(a.n_bar, MeanPhonon::AboveThreshold);
    }

    #[test]
    fn disconnected_generator_is_singular() {
        let t = [
            Transition { from: 0, to: 1, rate: 1.0, photon: None },
            Transition { from: 1, to: 0, rate: 1.0, photon: None },
            Transition { from: 2, to: 3, rate: 1.0, photon: None },
            Transition { from: 3, to: 2, rate: 1.0, photon: None },
        ];
        let m = RateMatrix::from_transitions(4, &t, vec![vec![(0, 1.0)]; 4], 1).unwrap();
        assert!(matches!(solve_stationary(&m), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn tail_mass_triggers_truncation() {
        // strong drive far above threshold pushes weight to the top levels
        let p = SystemParams { n_max: 20, ..SystemParams::limit_cycle(0.05) };
        let fc = build_fc_table(&p).unwrap();
        let b = build_doublets(&p, &fc).unwrap();
        let m = build_rate_matrix(&p, &b, &fc).unwrap();
        assert!(matches!(solve_stationary(&m), Err(Error::Truncation(_))));
    }

    #[test]
    fn json_has_expected_keys() {
        let p = SystemParams { n_max: 40, ..SystemParams::limit_cycle(0.003) };
        let (_, s) = solve(&p);
        let v: serde_json::Value = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        for key in ["populations", "P_n", "n_bar", "I_p", "I_bar", "Gamma_op"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}
