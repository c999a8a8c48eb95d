//! Driven optomechanical cavity in the photon-blockade regime, mapped onto
//! the dressed-state machinery of the two-level system.
//!
//! The drive is tuned to `delta = omega_m - K + epsilon` with the Kerr shift
//! `K = g_O^2 / omega_m`, so `|0, n>` and `|1, n + 1>` form the doublets. In
//! the doublet notation the one-photon state plays the excited level and the
//! empty cavity the ground level.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dressed::{assemble, build_doublets_with_coupling, RateMatrix};
use crate::error::{Error, Result};
use crate::lindblad::{
    annihilation, displacement, identity, kron, stationary_dm, Collapse, Liouvillian, LindbladOptions,
    StationaryDm, C64,
};
use crate::model::{bose_occupation, build_fc_table_with_tol, FC_TAIL_TOL};

/// Largest stationary two-photon population compatible with the mapping.
pub const BLOCKADE_TOL: f64 = 1e-3;

/// Photon states kept by the master equation (0, 1 and 2).
pub const PHOTON_LEVELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityParams {
    /// Single-photon optomechanical coupling.
    #[serde(rename = "g_O")]
    pub coupling: f64,
    #[serde(rename = "Omega")]
    pub drive: f64,
    #[serde(rename = "kappa")]
    pub cavity_decay: f64,
    #[serde(rename = "gamma")]
    pub mech_damping: f64,
    #[serde(rename = "epsilon")]
    pub detuning: f64,
    #[serde(rename = "kT")]
    pub kt: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
}

fn default_n_max() -> usize {
    60
}

impl CavityParams {
    /// `g_O = 0.8`, `kappa = 0.01`, `gamma = 1e-4`, `epsilon = 0.05`, `kT = 1`.
    pub fn blockade(drive: f64) -> Self {
        Self {
            coupling: 0.8,
            drive,
            cavity_decay: 0.01,
            mech_damping: 1e-4,
            detuning: 0.05,
            kt: 1.0,
            n_max: 60,
        }
    }

    pub fn kerr(&self) -> f64 {
        self.coupling * self.coupling
    }

    /// Drive detuning from the cavity resonance.
    pub fn cavity_detuning(&self) -> f64 {
        1.0 - self.kerr() + self.detuning
    }

    pub fn bose(&self) -> f64 {
        bose_occupation(self.kt, 1.0)
    }

    pub fn validate(&self) -> Result<Vec<String>> {
        let values = [self.coupling, self.drive, self.cavity_decay, self.mech_damping, self.detuning, self.kt];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("cavity parameters must be finite".into()));
        }
        if self.coupling < 0.0 || self.drive < 0.0 || self.kt < 0.0 {
            return Err(Error::InvalidParams("g_O, Omega and kT must be >= 0".into()));
        }
        if !(self.cavity_decay > 0.0) || !(self.mech_damping > 0.0) {
            return Err(Error::InvalidParams("kappa and gamma must be > 0".into()));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidParams(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        let mut warnings = Vec::new();
        if self.kerr() <= 5.0 * self.cavity_decay {
            warnings.push(format!(
                "Kerr shift {} not above 5 kappa = {}; photon blockade is doubtful",
                self.kerr(),
                5.0 * self.cavity_decay
            ));
        }
        Ok(warnings)
    }
}

/// Doublet splittings over the larger of the two damping rates; values well
/// above one put the run on the secular side.
pub fn secular_ratio(params: &CavityParams) -> Result<f64> {
    let fc = build_fc_table_with_tol(params.coupling, params.n_max, FC_TAIL_TOL)?;
    let basis = build_doublets_with_coupling(params.drive, params.detuning, params.n_max, &fc)?;
    let min_split = basis.rabi[1..].iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(min_split / params.cavity_decay.max(params.mech_damping))
}

/// Pauli generator over the cavity doublets. Emission is cavity decay.
pub fn cavity_rate_matrix(params: &CavityParams) -> Result<RateMatrix> {
    let warnings = params.validate()?;
    let fc = build_fc_table_with_tol(params.coupling, params.n_max, FC_TAIL_TOL)?;
    // off-diagonal element Omega W, split sqrt(eps^2 + 4 (Omega W)^2)
    let basis = build_doublets_with_coupling(params.drive, params.detuning, params.n_max, &fc)?;
    let mut m = assemble(params.cavity_decay, params.mech_damping, params.bose(), &basis, &fc)?;
    m.notes.extend(basis.warnings.iter().cloned());
    m.notes.extend(warnings);
    Ok(m)
}

/// Master equation in the polaron frame rotating at the drive, photons
/// truncated at two.
///
/// `H = -delta N - K N^2 + b^dag b + Omega (a^dag D(g_O) + h.c.)`, jumps
/// `sqrt(kappa) a D(-g_O)`, `sqrt(gamma (n_B+1)) b`, `sqrt(gamma n_B) b^dag`.
/// The Hilbert index is `N * (n_max + 1) + n`.
pub fn cavity_liouvillian(params: &CavityParams, options: LindbladOptions) -> Result<Liouvillian> {
    params.validate()?;
    let levels = params.n_max + 1;
    let d = PHOTON_LEVELS * levels;
    if d * d > options.max_superop_dim {
        return Err(Error::Dimension { dim: d * d, budget: options.max_superop_dim });
    }
    let photon = annihilation(PHOTON_LEVELS);
    let photon_adj = Mat::from_fn(PHOTON_LEVELS, PHOTON_LEVELS, |i, j| photon[(j, i)].conj());
    let phonon = annihilation(levels);
    let phonon_adj = Mat::from_fn(levels, levels, |i, j| phonon[(j, i)].conj());
    let eye_c = identity(PHOTON_LEVELS);
    let eye_m = identity(levels);

    let delta = params.cavity_detuning();
    let k = params.kerr();
    let cavity_energy = Mat::from_fn(PHOTON_LEVELS, PHOTON_LEVELS, |i, j| {
        if i == j {
            let n = i as f64;
            C64::new(-delta * n - k * n * n, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let mut h = kron(&cavity_energy, &eye_m);
    h += kron(&eye_c, &(&phonon_adj * &phonon));
    let drive = kron(&photon_adj, &displacement(levels, params.coupling)?);
    let drive_adj = Mat::from_fn(d, d, |i, j| drive[(j, i)].conj());
    h += (&drive + &drive_adj) * faer::Scale(C64::new(params.drive, 0.0));

    let nb = params.bose();
    let mut collapse = vec![Collapse {
        rate: params.cavity_decay,
        op: kron(&photon, &displacement(levels, -params.coupling)?),
        label: "cavity decay",
    }];
    collapse.push(Collapse {
        rate: params.mech_damping * (nb + 1.0),
        op: kron(&eye_c, &phonon),
        label: "phonon loss",
    });
    if nb > 0.0 {
        collapse.push(Collapse { rate: params.mech_damping * nb, op: kron(&eye_c, &phonon_adj), label: "phonon gain" });
    }
    // |1, n + 1> and |0, n> share a doublet
    let sectors = (0..d).map(|i| (i % levels) as i64 - (i / levels) as i64).collect();
    Liouvillian::new(h, collapse, 0, sectors, PHOTON_LEVELS, options)
}

#[derive(Debug, Clone)]
pub struct CavityStationary {
    pub state: StationaryDm,
    /// Populations of 0, 1 and 2 photons.
    pub photon_populations: [f64; PHOTON_LEVELS],
}

impl CavityStationary {
    pub fn check_blockade(&self) -> Result<()> {
        if self.photon_populations[2] >= BLOCKADE_TOL {
            return Err(Error::BlockadeViolation(self.photon_populations[2]));
        }
        Ok(())
    }
}

/// Stationary state of the cavity master equation with its photon-number
/// populations, without the blockade check.
pub fn cavity_state(l: &Liouvillian) -> Result<CavityStationary> {
    if l.internal_levels != PHOTON_LEVELS {
        return Err(Error::InvalidParams("not a cavity Liouvillian".into()));
    }
    let state = stationary_dm(l)?;
    let levels = l.n_levels;
    let mut photon_populations = [0.0; PHOTON_LEVELS];
    for (k, p) in photon_populations.iter_mut().enumerate() {
        *p = (0..levels).map(|n| state.rho[(k * levels + n, k * levels + n)].re).sum();
    }
    Ok(CavityStationary { state, photon_populations })
}

/// Stationary state of the cavity master equation with the blockade check.
pub fn cavity_stationary(l: &Liouvillian) -> Result<CavityStationary> {
    let s = cavity_state(l)?;
    s.check_blockade()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::solve_stationary;

    fn small(drive: f64) -> CavityParams {
        CavityParams { n_max: 30, kt: 0.3, ..CavityParams::blockade(drive) }
    }

    #[test]
    fn undriven_pauli_is_thermal_and_empty() {
        let p = small(0.0);
        let m = cavity_rate_matrix(&p).unwrap();
        let s = solve_stationary(&m).unwrap();
        let nb = p.bose();
        for (n, pn) in s.phonon_marginal.iter().enumerate().take(15) {
            let expected = nb.powi(n as i32) / (nb + 1.0).powi(n as i32 + 1);
            assert!((pn - expected).abs() < 1e-10, "n={n}");
        }
        assert_eq!(s.flux_total(), 0.0);
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        let m = cavity_rate_matrix(&small(0.1)).unwrap();
        assert!(m.column_sum_defect() < 1e-12 * m.max_abs());
    }

    #[test]
    fn undriven_master_equation_is_empty_cavity() {
        let p = small(0.0);
        let l = cavity_liouvillian(&p, LindbladOptions::default()).unwrap();
        assert!(l.trace_defect() < 1e-10);
        let s = cavity_stationary(&l).unwrap();
        assert!((s.photon_populations[0] - 1.0).abs() < 1e-9);
        let nb = p.bose();
        for n in 0..10 {
            let expected = nb.powi(n as i32) / (nb + 1.0).powi(n as i32 + 1);
            assert!((s.state.pn[n] - expected).abs() < 1e-8, "n={n}");
        }
    }

    #[test]
    fn decoupled_off_resonant_drive_leaves_cavity_empty() {
        // without coupling the drive is detuned by ~1 from the bare cavity
        let p = CavityParams { coupling: 0.0, drive: 0.01, ..small(0.0) };
        let l = cavity_liouvillian(&p, LindbladOptions::default()).unwrap();
        let s = cavity_stationary(&l).unwrap();
        assert!(s.photon_populations[1] < 1e-3);
        let nb = p.bose();
        let thermal0 = 1.0 / (nb + 1.0);
        assert!((s.state.pn[0] - thermal0).abs() < 1e-3);
    }

    #[test]
    fn weak_drive_pauli_matches_master_equation() {
        let p = CavityParams { drive: 0.01, cavity_decay: 5e-4, n_max: 30, ..CavityParams::blockade(0.0) };
        let pauli = solve_stationary(&cavity_rate_matrix(&p).unwrap()).unwrap();
        let l = cavity_liouvillian(&p, LindbladOptions::default()).unwrap();
        let full = cavity_stationary(&l).unwrap();
        assert!(full.photon_populations[2] < 1e-4);
        for (n, (a, b)) in pauli.phonon_marginal.iter().zip(&full.state.pn).enumerate() {
            if *a > 1e-3 {
                assert!((a - b).abs() < 0.05 * a, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn weak_kerr_warns() {
        let p = CavityParams { coupling: 0.1, ..small(0.01) };
        let w = p.validate().unwrap();
        assert!(w.iter().any(|s| s.contains("blockade")));
    }

    #[test]
    fn json_keys() {
        let p: CavityParams = serde_json::from_str(
            r#"{"g_O":0.8,"Omega":0.1,"kappa":0.01,"gamma":1e-4,"epsilon":0.05,"kT":1.0}"#,
        )
        .unwrap();
        assert_eq!(p, CavityParams::blockade(0.1));
    }
}
