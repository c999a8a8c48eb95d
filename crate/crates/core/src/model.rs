//! Physical parameters, thermal occupation and Franck–Condon factors.
//!
//! Every frequency and rate is measured in units of the mechanical frequency
//! `omega_m`, which is therefore fixed to 1. Temperatures are given as
//! `k_B T` in units of `hbar omega_m`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for the row-completeness check of a
/// Franck–Condon table.
pub const FC_TAIL_TOL: f64 = 1e-8;

/// Parameters of the driven two-level system coupled to one mechanical mode.
///
/// JSON keys match the field names used throughout the documentation
/// (`Gamma`, `gamma`, `gamma_phi`, `epsilon`, `Omega`, `kT`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    #[serde(default = "one")]
    pub omega_m: f64,
    pub g0: f64,
    /// TLS radiative decay rate.
    #[serde(rename = "Gamma")]
    pub tls_decay: f64,
    /// Mechanical damping rate.
    #[serde(rename = "gamma")]
    pub mech_damping: f64,
    /// Pure dephasing rate of the TLS.
    #[serde(rename = "gamma_phi", default)]
    pub dephasing: f64,
    /// Drive detuning from the first blue sideband.
    #[serde(rename = "epsilon")]
    pub detuning: f64,
    /// Drive (Rabi) intensity.
    #[serde(rename = "Omega")]
    pub drive: f64,
    #[serde(rename = "kT")]
    pub kt: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Displacement of the Franck–Condon factors entering the drive and the
    /// dressed-state rates, in units of `g0 / omega_m`.
    #[serde(default = "two")]
    pub fc_displacement_multiplier: f64,
    /// Displacement attached to the emission jump operator of the full
    /// master equation, in units of `g0 / omega_m`.
    #[serde(default = "one")]
    pub jump_displacement_multiplier: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_n_max() -> usize {
    150
}

impl SystemParams {
    /// Parameter set of the limit-cycle figures: `g0 = 0.1`, `Gamma = 0.01`,
    /// `gamma = gamma_phi = 1e-4`, `epsilon = 0.01`, `kT = 1`.
    pub fn limit_cycle(drive: f64) -> Self {
        Self {
            omega_m: 1.0,
            g0: 0.1,
            tls_decay: 0.01,
            mech_damping: 1e-4,
            dephasing: 1e-4,
            detuning: 0.01,
            drive,
            kt: 1.0,
            n_max: 150,
            fc_displacement_multiplier: 2.0,
            jump_displacement_multiplier: 1.0,
        }
    }

    /// Strong-coupling parameter set with sharp phonon peaks:
    /// `epsilon = 0.05`, other rates as in [`SystemParams::limit_cycle`].
    pub fn strong_coupling(g0: f64, drive: f64) -> Self {
        Self {
            g0,
            detuning: 0.05,
            drive,
            ..Self::limit_cycle(drive)
        }
    }

    /// Non-secular parameter set (`Gamma = 0.1`, `epsilon = 0.05`).
    pub fn non_secular(g0: f64, drive: f64) -> Self {
        Self {
            g0,
            tls_decay: 0.1,
            detuning: 0.05,
            drive,
            n_max: 60,
            ..Self::limit_cycle(drive)
        }
    }

    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let finite = [
            self.omega_m,
            self.g0,
            self.tls_decay,
            self.mech_damping,
            self.dephasing,
            self.detuning,
            self.drive,
            self.kt,
            self.fc_displacement_multiplier,
            self.jump_displacement_multiplier,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if (self.omega_m - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "omega_m is the unit of frequency and must equal 1, got {}",
                self.omega_m
            )));
        }
        for (name, value) in [
            ("Gamma", self.tls_decay),
            ("gamma", self.mech_damping),
            ("gamma_phi", self.dephasing),
            ("Omega", self.drive),
            ("kT", self.kt),
            ("g0", self.g0),
        ] {
            if value < 0.0 {
                return Err(Error::InvalidParams(format!("{name} must be >= 0, got {value}")));
            }
        }
        if self.n_max < 2 {
            return Err(Error::InvalidParams(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        if self.fc_displacement_multiplier < 0.0 || self.jump_displacement_multiplier < 0.0 {
            return Err(Error::InvalidParams("displacement multipliers must be >= 0".into()));
        }
        let mut warnings = Vec::new();
        if self.tls_decay >= 0.1 * self.omega_m {
            warnings.push(format!(
                "resolved-sideband condition violated: Gamma = {} >= 0.1 omega_m",
                self.tls_decay
            ));
        }
        if self.mech_damping >= 0.1 * self.omega_m {
            warnings.push(format!(
                "resolved-sideband condition violated: gamma = {} >= 0.1 omega_m",
                self.mech_damping
            ));
        }
        Ok(warnings)
    }

    pub fn bose(&self) -> f64 {
        bose_occupation(self.kt, self.omega_m)
    }

    /// Displacement used by the drive and the dressed-state rates.
    pub fn fc_lambda(&self) -> f64 {
        self.fc_displacement_multiplier * self.g0 / self.omega_m
    }

    /// Displacement used by the emission jump operator of the master equation.
    pub fn jump_lambda(&self) -> f64 {
        self.jump_displacement_multiplier * self.g0 / self.omega_m
    }
}

/// Bose occupation `1 / (exp(omega / kT) - 1)`, zero at `kT = 0`.
pub fn bose_occupation(kt: f64, omega: f64) -> f64 {
    if kt <= 0.0 {
        return 0.0;
    }
    1.0 / (omega / kt).exp_m1()
}

const LN_FACT_CACHE: usize = 1024;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_CACHE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..LN_FACT_CACHE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    let table = ln_factorial_table();
    if n < table.len() {
        return table[n];
    }
    let mut acc = table[table.len() - 1];
    for k in table.len()..=n {
        acc += (k as f64).ln();
    }
    acc
}

/// Generalized Laguerre polynomial `L_n^(alpha)(x)` by upward recurrence in
/// the degree.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Matrix element `<n| exp(lambda (a^dag - a)) |m>` of a real displacement.
///
/// Uses the closed Laguerre form with log-factorial prefactors:
/// `sign * sqrt(N!/M!) * lambda^(M-N) * exp(-lambda^2/2) * L_N^(M-N)(lambda^2)`
/// with `M = max(n, m)`, `N = min(n, m)` and `sign = (-1)^(m-n)` when `m > n`.
pub fn franck_condon(n: usize, m: usize, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParams(format!("displacement must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(if n == m { 1.0 } else { 0.0 });
    }
    let (big, small) = if n >= m { (n, m) } else { (m, n) };
    let diff = big - small;
    let x = lambda * lambda;
    let lag = laguerre(small, diff as f64, x);
    if !lag.is_finite() {
        return Err(Error::Overflow { n, m, lambda });
    }
    if lag == 0.0 {
        return Ok(0.0);
    }
    let ln_mag = 0.5 * (ln_factorial(small) - ln_factorial(big)) + diff as f64 * lambda.ln()
        - 0.5 * x
        + lag.abs().ln();
    if ln_mag > 700.0 {
        return Err(Error::Overflow { n, m, lambda });
    }
    let mut value = ln_mag.exp() * lag.signum();
    if m > n && diff % 2 == 1 {
        value = -value;
    }
    Ok(value)
}

/// Table of Franck–Condon factors `W[n][m]` for `0 <= n, m <= n_max`.
#[derive(Debug, Clone)]
pub struct FranckCondonTable {
    pub lambda: f64,
    pub n_max: usize,
    entries: Vec<f64>,
    /// `sum_m W[n][m]^2` over the truncated range, one value per row.
    pub row_norms: Vec<f64>,
    pub tail_tol: f64,
}

impl FranckCondonTable {
    pub fn new(lambda: f64, n_max: usize, tail_tol: f64) -> Result<Self> {
        let dim = n_max + 1;
        let mut entries = vec![0.0; dim * dim];
        for n in 0..dim {
            for m in n..dim {
                let w = franck_condon(n, m, lambda)?;
                entries[n * dim + m] = w;
                // <m|D|n> = (-1)^(m-n) <n|D|m> for a real displacement
                entries[m * dim + n] = if (m - n) % 2 == 1 { -w } else { w };
            }
        }
        let row_norms = (0..dim)
            .map(|n| entries[n * dim..(n + 1) * dim].iter().map(|w| w * w).sum())
            .collect();
        Ok(Self { lambda, n_max, entries, row_norms, tail_tol })
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.entries[n * (self.n_max + 1) + m]
    }

    /// Largest row index whose completeness is required.
    pub fn checked_rows(&self) -> usize {
        self.n_max / 2
    }

    /// Rows up to [`FranckCondonTable::checked_rows`] must satisfy
    /// `sum_m W^2 >= 1 - tail_tol`; rows above may leak into the truncated
    /// tail.
    pub fn check_unitarity(&self) -> Result<()> {
        for n in 0..=self.checked_rows() {
            let defect = 1.0 - self.row_norms[n];
            if defect > self.tail_tol || defect < -1e-10 {
                return Err(Error::Truncation(format!(
                    "Franck-Condon row {n} has norm defect {defect:e} at lambda = {} with n_max = {}",
                    self.lambda, self.n_max
                )));
            }
        }
        Ok(())
    }
}

/// Franck–Condon table for the drive displacement of `params`, with the
/// completeness check applied.
pub fn build_fc_table(params: &SystemParams) -> Result<FranckCondonTable> {
    build_fc_table_with_tol(params.fc_lambda(), params.n_max, FC_TAIL_TOL)
}

pub fn build_fc_table_with_tol(lambda: f64, n_max: usize, tail_tol: f64) -> Result<FranckCondonTable> {
    let table = FranckCondonTable::new(lambda, n_max, tail_tol)?;
    table.check_unitarity()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bose_values() {
        assert_eq!(bose_occupation(0.0, 1.0), 0.0);
        assert!((bose_occupation(1.0, 1.0) - 0.581977).abs() < 1e-6);
        assert!((bose_occupation(1.0, 2.0) - 0.156518).abs() < 1e-6);
    }

    #[test]
    fn bose_detailed_balance() {
        for &kt in &[0.1, 0.5, 1.0, 3.0, 20.0] {
            let nb = bose_occupation(kt, 1.0);
            let lhs = nb * (1.0 / kt).exp();
            assert!((lhs - (nb + 1.0)).abs() < 1e-12 * (nb + 1.0));
        }
    }

    #[test]
    fn fc_small_values() {
        assert!((franck_condon(0, 0, 0.2).unwrap() - 0.980199).abs() < 1e-6);
        assert!((franck_condon(1, 0, 0.2).unwrap() - 0.196040).abs() < 1e-6);
        assert!((franck_condon(0, 1, 0.2).unwrap() + 0.196040).abs() < 1e-6);
        for n in 0..6 {
            for m in 0..6 {
                let w = franck_condon(n, m, 0.0).unwrap();
                assert_eq!(w, if n == m { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn fc_rejects_negative_lambda() {
        assert!(franck_condon(1, 1, -0.1).is_err());
    }

    #[test]
    fn table_identity_at_zero_coupling() {
        let p = SystemParams { g0: 0.0, n_max: 20, ..SystemParams::limit_cycle(0.0) };
        let t = build_fc_table(&p).unwrap();
        for n in 0..=20 {
            for m in 0..=20 {
                assert_eq!(t.get(n, m), if n == m { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn table_row_zero_complete() {
        let p = SystemParams { n_max: 60, ..SystemParams::limit_cycle(0.0) };
        let t = build_fc_table(&p).unwrap();
        assert!((t.row_norms[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_too_small_for_strong_coupling() {
        let p = SystemParams { n_max: 8, ..SystemParams::strong_coupling(0.58, 0.16) };
        assert!(matches!(build_fc_table(&p), Err(Error::Truncation(_))));
    }

    #[test]
    fn validate_rejects_bad_values() {
        let mut p = SystemParams::limit_cycle(0.01);
        p.tls_decay = -1.0;
        assert!(p.validate().is_err());
        let mut p = SystemParams::limit_cycle(0.01);
        p.n_max = 1;
        assert!(p.validate().is_err());
        let mut p = SystemParams::limit_cycle(0.01);
        p.omega_m = 2.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn validate_warns_outside_resolved_sidebands() {
        let p = SystemParams::non_secular(0.5, 0.05);
        let w = p.validate().unwrap();
        assert_eq!(w.len(), 1);
        assert!(SystemParams::limit_cycle(0.01).validate().unwrap().is_empty());
    }

    #[test]
    fn json_defaults() {
        let p: SystemParams = serde_json::from_str(
            r#"{"g0":0.1,"Gamma":0.01,"gamma":1e-4,"epsilon":0.01,"Omega":0.005,"kT":1}"#,
        )
        .unwrap();
        assert_eq!(p.n_max, 150);
        assert_eq!(p.fc_displacement_multiplier, 2.0);
        assert_eq!(p.omega_m, 1.0);
        assert_eq!(p.dephasing, 0.0);
    }
}
