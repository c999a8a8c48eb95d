//! Dressed doublets of the first blue sideband and the Pauli rate matrix
//! over them.
//!
//! For each phonon index `n >= 1` the drive hybridizes `|e, n>` with
//! `|g, n-1>` (one drive photon absorbed). The two dressed states are
//! `|mu, n> = alpha_mu(n) |e, n> + beta_mu(n) |g, n-1>` with splitting
//! `Omega_n = sqrt((Omega W[n][n-1])^2 + epsilon^2)`. The state `|e, 0>` has
//! no partner and is kept as a separate "lone" state.

use std::fmt::Write as _;

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{FranckCondonTable, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];
}

/// A state of the Pauli description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DressedState {
    /// `|e, 0>`.
    Lone,
    Doublet { branch: Branch, n: usize },
}

impl DressedState {
    pub fn index(self) -> usize {
        match self {
            DressedState::Lone => 0,
            DressedState::Doublet { branch: Branch::Plus, n } => 2 * n - 1,
            DressedState::Doublet { branch: Branch::Minus, n } => 2 * n,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            DressedState::Lone
        } else if i % 2 == 1 {
            DressedState::Doublet { branch: Branch::Plus, n: i.div_ceil(2) }
        } else {
            DressedState::Doublet { branch: Branch::Minus, n: i / 2 }
        }
    }

    /// Doublet index: phonon number of the excited component.
    pub fn level(self) -> usize {
        match self {
            DressedState::Lone => 0,
            DressedState::Doublet { n, .. } => n,
        }
    }
}

/// Dressed coefficients for `n = 1..=n_max`; slot 0 holds the lone state.
#[derive(Debug, Clone)]
pub struct DoubletBasis {
    pub n_max: usize,
    pub alpha_plus: Vec<f64>,
    pub alpha_minus: Vec<f64>,
    pub beta_plus: Vec<f64>,
    pub beta_minus: Vec<f64>,
    pub rabi: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DoubletBasis {
    pub fn alpha(&self, branch: Branch, n: usize) -> f64 {
        match branch {
            Branch::Plus => self.alpha_plus[n],
            Branch::Minus => self.alpha_minus[n],
        }
    }

    pub fn beta(&self, branch: Branch, n: usize) -> f64 {
        match branch {
            Branch::Plus => self.beta_plus[n],
            Branch::Minus => self.beta_minus[n],
        }
    }

    /// Excited-state amplitude of any state; 1 for the lone state.
    pub fn alpha_of(&self, s: DressedState) -> f64 {
        match s {
            DressedState::Lone => 1.0,
            DressedState::Doublet { branch, n } => self.alpha(branch, n),
        }
    }

    pub fn beta_of(&self, s: DressedState) -> f64 {
        match s {
            DressedState::Lone => 0.0,
            DressedState::Doublet { branch, n } => self.beta(branch, n),
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }
}

/// Diagonalizes each `{|e,n>, |g,n-1>}` block.
///
/// With `s = sign(Omega W[n][n-1])` (taken as +1 when the coupling vanishes):
/// `alpha_+ = sqrt((Omega_n - eps) / 2 Omega_n)`, `beta_+ = s sqrt((Omega_n + eps) / 2 Omega_n)`,
/// `alpha_- = s sqrt((Omega_n + eps) / 2 Omega_n)`, `beta_- = -sqrt((Omega_n - eps) / 2 Omega_n)`,
/// so that `alpha_+ = -beta_-` and `alpha_- = beta_+` hold exactly.
pub fn build_doublets(params: &SystemParams, fc: &FranckCondonTable) -> Result<DoubletBasis> {
    build_doublets_with_coupling(params.drive / 2.0, params.detuning, params.n_max, fc)
}

/// Same as [`build_doublets`] with an explicit off-diagonal coupling
/// `coupling * W[n][n-1]` of each 2x2 block (`Omega / 2` for the TLS).
pub(crate) fn build_doublets_with_coupling(
    coupling: f64,
    detuning: f64,
    n_max: usize,
    fc: &FranckCondonTable,
) -> Result<DoubletBasis> {
    if fc.n_max < n_max {
        return Err(Error::IndexOutOfRange(format!(
            "Franck-Condon table has n_max {} < {}",
            fc.n_max, n_max
        )));
    }
    let len = n_max + 1;
    let mut basis = DoubletBasis {
        n_max,
        alpha_plus: vec![1.0; len],
        alpha_minus: vec![1.0; len],
        beta_plus: vec![0.0; len],
        beta_minus: vec![0.0; len],
        rabi: vec![detuning.abs(); len],
        warnings: Vec::new(),
    };
    let eps = detuning;
    let mut max_rabi = 0.0f64;
    for n in 1..=n_max {
        let off = 2.0 * coupling * fc.get(n, n - 1);
        let rabi = off.hypot(eps);
        if rabi == 0.0 {
            return Err(Error::DegenerateDetuning { n });
        }
        let s = if off < 0.0 { -1.0 } else { 1.0 };
        let lower = ((rabi - eps) / (2.0 * rabi)).max(0.0).sqrt();
        let upper = ((rabi + eps) / (2.0 * rabi)).max(0.0).sqrt();
        basis.alpha_plus[n] = lower;
        basis.beta_plus[n] = s * upper;
        basis.alpha_minus[n] = s * upper;
        basis.beta_minus[n] = -lower;
        basis.rabi[n] = rabi;
        max_rabi = max_rabi.max(rabi);
    }
    if max_rabi > 0.2 {
        basis.warnings.push(format!(
            "largest Rabi splitting {max_rabi:.4} exceeds 0.2 omega_m; neighbouring doublets may mix"
        ));
    }
    Ok(basis)
}

fn check_level(n: usize, n_max: usize, what: &str) -> Result<()> {
    if n == 0 || n > n_max {
        return Err(Error::IndexOutOfRange(format!("{what} = {n} outside 1..={n_max}")));
    }
    Ok(())
}

/// Photon-emission rate `|mu, n> -> |mu', n'>`:
/// `Gamma |alpha_mu(n) beta_mu'(n') W[n][n'-1]|^2`.
pub fn optical_rate(
    mu: Branch,
    n: usize,
    mu_p: Branch,
    n_p: usize,
    params: &SystemParams,
    basis: &DoubletBasis,
    fc: &FranckCondonTable,
) -> Result<f64> {
    check_level(n, basis.n_max, "n")?;
    check_level(n_p, basis.n_max, "n'")?;
    let amp = basis.alpha(mu, n) * basis.beta(mu_p, n_p) * fc.get(n, n_p - 1);
    Ok(params.tls_decay * amp * amp)
}

/// Phonon-bath transition `|mu, n> -> |mu', n + direction>`.
pub fn mechanical_rate(
    mu: Branch,
    n: usize,
    mu_p: Branch,
    direction: i32,
    params: &SystemParams,
    basis: &DoubletBasis,
) -> Result<f64> {
    if direction != 1 && direction != -1 {
        return Err(Error::IndexOutOfRange(format!("direction must be +-1, got {direction}")));
    }
    check_level(n, basis.n_max, "n")?;
    let target = n as i64 + direction as i64;
    if target < 1 || target as usize > basis.n_max {
        return Err(Error::IndexOutOfRange(format!("target level {target} outside 1..={}", basis.n_max)));
    }
    let from = DressedState::Doublet { branch: mu, n };
    let to = DressedState::Doublet { branch: mu_p, n: target as usize };
    Ok(mech_rate_between(from, to, params.bose(), params.mech_damping, basis))
}

/// `|<to| a^dag |from>|^2 gamma n_B` (upward) or `|<to| a |from>|^2 gamma (n_B + 1)`
/// (downward), with the lone state treated as `alpha = 1, beta = 0`.
fn mech_rate_between(from: DressedState, to: DressedState, nb: f64, gamma: f64, basis: &DoubletBasis) -> f64 {
    let n = from.level() as f64;
    let (xi_p, xi_m) = if to.level() > from.level() { (1.0, 0.0) } else { (0.0, 1.0) };
    let e_part = basis.alpha_of(to) * basis.alpha_of(from) * (n + xi_p).sqrt();
    let g_part = if n - xi_m >= 0.0 {
        basis.beta_of(to) * basis.beta_of(from) * (n - xi_m).max(0.0).sqrt()
    } else {
        0.0
    };
    let amp = e_part + g_part;
    amp * amp * (xi_m + nb) * gamma
}

/// A counted (photon-emitting) transition of the rate matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonTransition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    /// Change of the doublet index (phonons transferred to the oscillator).
    pub p: i64,
}

/// One transition used to assemble a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
    /// `Some(p)` when the transition emits a photon.
    pub photon: Option<i64>,
}

/// Generator of the Pauli dynamics, `dP/dt = M P`, with columns summing to zero.
#[derive(Debug, Clone)]
pub struct RateMatrix {
    pub dim: usize,
    pub generator: Mat<f64>,
    pub photon_mask: Vec<PhotonTransition>,
    /// Phonon content `(n, weight)` of each state, used for the phonon
    /// marginal: a state contributes `weight` to `P_n` for each entry.
    pub phonon_weights: Vec<Vec<(usize, f64)>>,
    /// Number of phonon levels covered by the marginal (`n_max + 1`).
    pub phonon_levels: usize,
    pub notes: Vec<String>,
}

impl RateMatrix {
    /// Assembles a generator from a transition list. Self-transitions are
    /// allowed and only contribute to the photon mask.
    pub fn from_transitions(
        dim: usize,
        transitions: &[Transition],
        phonon_weights: Vec<Vec<(usize, f64)>>,
        phonon_levels: usize,
    ) -> Result<Self> {
        let mut generator = Mat::<f64>::zeros(dim, dim);
        let mut photon_mask = Vec::new();
        for t in transitions {
            if t.from >= dim || t.to >= dim {
                return Err(Error::IndexOutOfRange(format!(
                    "transition {} -> {} outside dimension {dim}",
                    t.from, t.to
                )));
            }
            if !(t.rate >= 0.0) {
                return Err(Error::InvalidParams(format!("negative or NaN rate {}", t.rate)));
            }
            if t.rate == 0.0 {
                continue;
            }
            if t.from != t.to {
                generator[(t.to, t.from)] += t.rate;
                generator[(t.from, t.from)] -= t.rate;
            }
            if let Some(p) = t.photon {
                photon_mask.push(PhotonTransition { from: t.from, to: t.to, rate: t.rate, p });
            }
        }
        Ok(Self { dim, generator, photon_mask, phonon_weights, phonon_levels, notes: Vec::new() })
    }

    /// Largest absolute generator entry.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for j in 0..self.dim {
            for i in 0..self.dim {
                m = m.max(self.generator[(i, j)].abs());
            }
        }
        m
    }

    /// Largest `|sum_i M[i][j]|` relative to the largest entry of column `j`.
    pub fn column_sum_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dim {
            let mut sum = 0.0;
            let mut scale = 0.0f64;
            for i in 0..self.dim {
                sum += self.generator[(i, j)];
                scale = scale.max(self.generator[(i, j)].abs());
            }
            if scale > 0.0 {
                worst = worst.max(sum.abs() / scale);
            }
        }
        worst
    }

    /// Dense photon-jump matrix `J` with `J[to][from] = rate`.
    pub fn jump_matrix(&self) -> Mat<f64> {
        let mut j = Mat::<f64>::zeros(self.dim, self.dim);
        for t in &self.photon_mask {
            j[(t.to, t.from)] += t.rate;
        }
        j
    }

    /// Sparse triplet dump `row,col,value,p`. Generator entries carry an
    /// empty `p`; photon entries repeat the counted part with their `p`.
    pub fn to_triplet_csv(&self) -> String {
        let mut out = format!("{}\nrow,col,value,p\n", crate::io::CSV_SCHEMA);
        for j in 0..self.dim {
            for i in 0..self.dim {
                let v = self.generator[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "{i},{j},{},", crate::io::fmt_num(v));
                }
            }
        }
        for t in &self.photon_mask {
            let _ = writeln!(out, "{},{},{},{}", t.to, t.from, crate::io::fmt_num(t.rate), t.p);
        }
        out
    }
}

/// Assembles the optical and mechanical rates into a generator.
///
/// Pure dephasing does not enter: it is diagonal in the bare TLS basis and
/// only damps coherences, which the population description drops.
pub fn build_rate_matrix(
    params: &SystemParams,
    basis: &DoubletBasis,
    fc: &FranckCondonTable,
) -> Result<RateMatrix> {
    let mut rm = assemble(params.tls_decay, params.mech_damping, params.bose(), basis, fc)?;
    if params.dephasing > 0.0 {
        rm.notes.push(format!(
            "gamma_phi = {} ignored in the population dynamics (acts on coherences only)",
            params.dephasing
        ));
    }
    rm.notes.extend(basis.warnings.iter().cloned());
    Ok(rm)
}

/// Franck–Condon table, doublets and generator for one parameter set.
pub fn rate_matrix_for(params: &SystemParams) -> Result<RateMatrix> {
    let warnings = params.validate()?;
    let fc = crate::model::build_fc_table(params)?;
    let basis = build_doublets(params, &fc)?;
    let mut m = build_rate_matrix(params, &basis, &fc)?;
    m.notes.extend(warnings);
    Ok(m)
}

pub(crate) fn assemble(
    emission_rate: f64,
    gamma: f64,
    nb: f64,
    basis: &DoubletBasis,
    fc: &FranckCondonTable,
) -> Result<RateMatrix> {
    let n_max = basis.n_max;
    let dim = basis.dim();
    let mut transitions = Vec::with_capacity(4 * dim * n_max);

    let states: Vec<DressedState> = (0..dim).map(DressedState::from_index).collect();

    // optical: excited component of `from` decays into the ground component of `to`
    for &from in &states {
        let a = basis.alpha_of(from);
        if a == 0.0 {
            continue;
        }
        let n = from.level();
        for n_p in 1..=n_max {
            let w = fc.get(n, n_p - 1);
            for branch in Branch::BOTH {
                let to = DressedState::Doublet { branch, n: n_p };
                let amp = a * basis.beta_of(to) * w;
                transitions.push(Transition {
                    from: from.index(),
                    to: to.index(),
                    rate: emission_rate * amp * amp,
                    photon: Some(n_p as i64 - n as i64),
                });
            }
        }
    }

    // mechanical: neighbouring doublets, lone state at level 0
    for &from in &states {
        let n = from.level();
        let mut targets = Vec::with_capacity(4);
        if n < n_max {
            for branch in Branch::BOTH {
                targets.push(DressedState::Doublet { branch, n: n + 1 });
            }
        }
        if n == 1 {
            targets.push(DressedState::Lone);
        } else if n > 1 {
            for branch in Branch::BOTH {
                targets.push(DressedState::Doublet { branch, n: n - 1 });
            }
        }
        for to in targets {
            transitions.push(Transition {
                from: from.index(),
                to: to.index(),
                rate: mech_rate_between(from, to, nb, gamma, basis),
                photon: None,
            });
        }
    }

    let phonon_weights = states
        .iter()
        .map(|&s| match s {
            DressedState::Lone => vec![(0, 1.0)],
            DressedState::Doublet { n, .. } => {
                let a = basis.alpha_of(s);
                let b = basis.beta_of(s);
                vec![(n, a * a), (n - 1, b * b)]
            }
        })
        .collect();

    RateMatrix::from_transitions(dim, &transitions, phonon_weights, n_max + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_fc_table;

    fn setup(p: &SystemParams) -> (FranckCondonTable, DoubletBasis) {
        let fc = build_fc_table(p).unwrap();
        let b = build_doublets(p, &fc).unwrap();
        (fc, b)
    }

    #[test]
    fn index_roundtrip() {
        for i in 0..41 {
            assert_eq!(DressedState::from_index(i).index(), i);
        }
    }

    #[test]
    fn zero_drive_has_no_mixing() {
        let p = SystemParams { n_max: 30, ..SystemParams::limit_cycle(0.0) };
        let (_, b) = setup(&p);
        for n in 1..=30 {
            assert_eq!(b.alpha_plus[n], 0.0);
            assert!((b.beta_plus[n] - 1.0).abs() < 1e-15);
            assert!((b.alpha_minus[n] - 1.0).abs() < 1e-15);
            assert!((b.rabi[n] - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn first_rabi_splitting() {
        let p = SystemParams { n_max: 30, ..SystemParams::limit_cycle(0.01) };
        let (_, b) = setup(&p);
        assert!((b.rabi[1] - 0.0101904).abs() < 1e-7);
    }

    #[test]
    fn coefficients_orthonormal() {
        let p = SystemParams { n_max: 60, ..SystemParams::strong_coupling(0.58, 0.16) };
        let (_, b) = setup(&p);
        for n in 1..=60 {
            for br in Branch::BOTH {
                let norm = b.alpha(br, n).powi(2) + b.beta(br, n).powi(2);
                assert!((norm - 1.0).abs() < 1e-12);
            }
            let overlap = b.alpha_plus[n] * b.alpha_minus[n] + b.beta_plus[n] * b.beta_minus[n];
            assert!(overlap.abs() < 1e-12);
            assert_eq!(b.alpha_plus[n], -b.beta_minus[n]);
            assert_eq!(b.alpha_minus[n], b.beta_plus[n]);
            assert!(b.rabi[n] >= 0.05);
        }
    }

    #[test]
    fn degenerate_doublet_rejected() {
        let p = SystemParams { detuning: 0.0, n_max: 10, ..SystemParams::limit_cycle(0.0) };
        let fc = build_fc_table(&p).unwrap();
        assert!(matches!(build_doublets(&p, &fc), Err(Error::DegenerateDetuning { .. })));
    }

    #[test]
    fn rates_vanish_without_baths() {
        let p = SystemParams { tls_decay: 0.0, mech_damping: 0.0, n_max: 20, ..SystemParams::limit_cycle(0.01) };
        let (fc, b) = setup(&p);
        assert_eq!(optical_rate(Branch::Minus, 3, Branch::Plus, 4, &p, &b, &fc).unwrap(), 0.0);
        assert_eq!(mechanical_rate(Branch::Plus, 3, Branch::Plus, 1, &p, &b).unwrap(), 0.0);
    }

    #[test]
    fn thermal_birth_death_at_zero_drive() {
        let p = SystemParams { n_max: 20, ..SystemParams::limit_cycle(0.0) };
        let (_, b) = setup(&p);
        let nb = p.bose();
        let g = p.mech_damping;
        for n in 1..20 {
            // excited branch: phonon number n
            let up = mechanical_rate(Branch::Minus, n, Branch::Minus, 1, &p, &b).unwrap();
            assert!((up - g * nb * (n as f64 + 1.0)).abs() < 1e-18);
            // ground branch: phonon number n - 1
            if n > 1 {
                let down = mechanical_rate(Branch::Plus, n, Branch::Plus, -1, &p, &b).unwrap();
                assert!((down - g * (nb + 1.0) * (n as f64 - 1.0)).abs() < 1e-18);
            }
            let cross = mechanical_rate(Branch::Plus, n, Branch::Minus, 1, &p, &b).unwrap();
            assert_eq!(cross, 0.0);
        }
    }

    #[test]
    fn index_errors() {
        let p = SystemParams { n_max: 10, ..SystemParams::limit_cycle(0.01) };
        let (fc, b) = setup(&p);
        assert!(optical_rate(Branch::Plus, 0, Branch::Plus, 1, &p, &b, &fc).is_err());
        assert!(optical_rate(Branch::Plus, 1, Branch::Plus, 11, &p, &b, &fc).is_err());
        assert!(mechanical_rate(Branch::Plus, 10, Branch::Plus, 1, &p, &b).is_err());
        assert!(mechanical_rate(Branch::Plus, 1, Branch::Plus, -1, &p, &b).is_err());
        assert!(mechanical_rate(Branch::Plus, 2, Branch::Plus, 2, &p, &b).is_err());
    }

    #[test]
    fn generator_properties() {
        let p = SystemParams::limit_cycle(0.005);
        let (fc, b) = setup(&p);
        let m = build_rate_matrix(&p, &b, &fc).unwrap();
        assert_eq!(m.dim, 301);
        assert!(m.column_sum_defect() < 1e-12);
        for j in 0..m.dim {
            for i in 0..m.dim {
                if i != j {
                    assert!(m.generator[(i, j)] >= 0.0);
                }
            }
        }
        for t in &m.photon_mask {
            assert!(t.p.unsigned_abs() as usize <= p.n_max);
        }
        assert!(m.notes.iter().any(|n| n.contains("gamma_phi")));
    }

    #[test]
    fn self_transitions_only_in_mask() {
        let t = [
            Transition { from: 0, to: 0, rate: 2.0, photon: Some(0) },
            Transition { from: 0, to: 1, rate: 1.0, photon: None },
            Transition { from: 1, to: 0, rate: 3.0, photon: Some(1) },
        ];
        let m = RateMatrix::from_transitions(2, &t, vec![vec![(0, 1.0)]; 2], 1).unwrap();
        assert_eq!(m.generator[(0, 0)], -1.0);
        assert_eq!(m.generator[(1, 0)], 1.0);
        assert_eq!(m.generator[(0, 1)], 3.0);
        assert_eq!(m.photon_mask.len(), 2);
        let csv = m.to_triplet_csv();
        assert!(csv.starts_with(&format!("{}\nrow,col,value,p\n", crate::io::CSV_SCHEMA)));
        assert!(csv.lines().any(|l| l.ends_with(",0")));
    }
}
