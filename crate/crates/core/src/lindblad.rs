//! Full master equation in the polaron frame rotating at the drive
//! frequency, without the secular approximation.
//!
//! Density matrices are `d x d` with the Hilbert index
//! `internal * (n_max + 1) + n`. The superoperator is never formed; it is
//! applied with dense products and inverted with preconditioned GMRES.

use std::collections::HashMap;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Col, Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions};
use crate::model::{franck_condon, SystemParams};
use crate::steady::{tail_mass, TAIL_TOL};

pub type C64 = Complex64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Smallest eigenvalue of the stationary state tolerated without a warning.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Negative eigenvalues smaller than this are round-off and left alone.
const CLIP_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LindbladOptions {
    /// Largest admissible `d^2`.
    pub max_superop_dim: usize,
    pub gmres_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for LindbladOptions {
    fn default() -> Self {
        Self { max_superop_dim: 40_000, gmres_tol: 1e-12, restart: 60, max_iter: 3000 }
    }
}

impl LindbladOptions {
    fn gmres(&self) -> GmresOptions {
        GmresOptions { restart: self.restart, max_iter: self.max_iter, tol: self.gmres_tol, ..GmresOptions::default() }
    }
}

/// A dissipator `rate * D[op]`.
#[derive(Debug, Clone)]
pub struct Collapse {
    pub rate: f64,
    pub op: Mat<C64>,
    pub label: &'static str,
}

/// Liouvillian of an internal degree of freedom coupled to one oscillator.
pub struct Liouvillian {
    pub dim: usize,
    pub n_levels: usize,
    pub internal_levels: usize,
    pub hamiltonian: Mat<C64>,
    pub collapse: Vec<Collapse>,
    /// Index into `collapse` of the counted emission channel.
    pub emission: usize,
    /// Near-conserved excitation label of every basis state, used to build
    /// the preconditioner.
    pub sectors: Vec<i64>,
    pub options: LindbladOptions,
    h_eff: Mat<C64>,
    h_eff_adj: Mat<C64>,
    collapse_adj: Vec<Mat<C64>>,
}

/// Displacement `<n| D(lambda) |m>` on `levels` Fock states, any sign of
/// `lambda`.
pub fn displacement(levels: usize, lambda: f64) -> Result<Mat<C64>> {
    let mut out = Mat::<C64>::zeros(levels, levels);
    for n in 0..levels {
        for m in 0..levels {
            let v = if lambda >= 0.0 { franck_condon(n, m, lambda)? } else { franck_condon(m, n, -lambda)? };
            out[(n, m)] = C64::new(v, 0.0);
        }
    }
    Ok(out)
}

/// Annihilation operator on `levels` Fock states.
pub fn annihilation(levels: usize) -> Mat<C64> {
    let mut a = Mat::<C64>::zeros(levels, levels);
    for n in 1..levels {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// `A (x) B` with `A` acting on the internal label.
pub fn kron(a: &Mat<C64>, b: &Mat<C64>) -> Mat<C64> {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    Mat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

pub fn identity(n: usize) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

fn adjoint(m: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

fn to_mat(v: &[C64], d: usize) -> Mat<C64> {
    Mat::from_fn(d, d, |i, j| v[i + d * j])
}

fn to_vec(m: &Mat<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut out = vec![ZERO; d * d];
    for j in 0..d {
        for i in 0..d {
            out[i + d * j] = m[(i, j)];
        }
    }
    out
}

pub fn trace(m: &Mat<C64>) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &Mat<C64>, b: &Mat<C64>) -> C64 {
    let mut acc = ZERO;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

impl Liouvillian {
    pub fn new(
        hamiltonian: Mat<C64>,
        collapse: Vec<Collapse>,
        emission: usize,
        sectors: Vec<i64>,
        internal_levels: usize,
        options: LindbladOptions,
    ) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim * dim > options.max_superop_dim {
            return Err(Error::Dimension { dim: dim * dim, budget: options.max_superop_dim });
        }
        if !dim.is_multiple_of(internal_levels) || sectors.len() != dim || emission >= collapse.len() {
            return Err(Error::InvalidParams("inconsistent Liouvillian layout".into()));
        }
        let mut h_eff = hamiltonian.clone();
        let mut collapse_adj = Vec::with_capacity(collapse.len());
        for c in &collapse {
            let adj = adjoint(&c.op);
            let cdc = &adj * &c.op;
            for j in 0..dim {
                for i in 0..dim {
                    h_eff[(i, j)] -= I * (0.5 * c.rate) * cdc[(i, j)];
                }
            }
            collapse_adj.push(adj);
        }
        let h_eff_adj = adjoint(&h_eff);
        Ok(Self {
            dim,
            n_levels: dim / internal_levels,
            internal_levels,
            hamiltonian,
            collapse,
            emission,
            sectors,
            options,
            h_eff,
            h_eff_adj,
            collapse_adj,
        })
    }

    /// `L rho = -i (H_eff rho - rho H_eff^dag) + sum_c r_c C rho C^dag`.
    pub fn apply_mat(&self, rho: &Mat<C64>) -> Mat<C64> {
        let mut out = (&self.h_eff * rho - rho * &self.h_eff_adj) * faer::Scale(-I);
        for (c, adj) in self.collapse.iter().zip(&self.collapse_adj) {
            let t = &c.op * rho;
            out += (&t * adj) * faer::Scale(C64::new(c.rate, 0.0));
        }
        out
    }

    fn apply_vec(&self, v: &[C64], out: &mut [C64]) {
        let r = self.apply_mat(&to_mat(v, self.dim));
        let d = self.dim;
        for j in 0..d {
            for i in 0..d {
                out[i + d * j] = r[(i, j)];
            }
        }
    }

    /// Counted jump operator without its rate.
    pub fn emission_op(&self) -> &Mat<C64> {
        &self.collapse[self.emission].op
    }

    pub fn emission_rate(&self) -> f64 {
        self.collapse[self.emission].rate
    }

    /// Largest `|Tr[L e_ij]|` over matrix units, i.e. the trace defect.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        // Tr[L(|i><j|)] = -i (H_eff - H_eff^dag)_{ji} + sum_c r (C^dag C)_{ji}
        let mut cdc = Mat::<C64>::zeros(d, d);
        for (c, adj) in self.collapse.iter().zip(&self.collapse_adj) {
            cdc += (adj * &c.op) * faer::Scale(C64::new(c.rate, 0.0));
        }
        for i in 0..d {
            for j in 0..d {
                let v = -I * (self.h_eff[(j, i)] - self.h_eff_adj[(j, i)]) + cdc[(j, i)];
                worst = worst.max(v.norm());
            }
        }
        worst
    }

    /// Reduced oscillator matrix, traced over the internal label.
    pub fn reduce(&self, rho: &Mat<C64>) -> Mat<C64> {
        let n = self.n_levels;
        let mut out = Mat::<C64>::zeros(n, n);
        for s in 0..self.internal_levels {
            for a in 0..n {
                for b in 0..n {
                    out[(a, b)] += rho[(s * n + a, s * n + b)];
                }
            }
        }
        out
    }
}

/// Sector-block approximation of `I * shift + scale * L`, factored for use
/// as a preconditioner. The trace functional is added to the diagonal
/// block when `bordered` is set.
pub struct SectorPreconditioner {
    blocks: Vec<(Vec<usize>, PartialPivLu<C64>)>,
    len: usize,
}

impl SectorPreconditioner {
    pub fn new(l: &Liouvillian, shift: f64, scale: f64, bordered: bool) -> Result<Self> {
        let d = l.dim;
        let mut groups: HashMap<i64, Vec<(usize, usize)>> = HashMap::new();
        for j in 0..d {
            for i in 0..d {
                groups.entry(l.sectors[i] - l.sectors[j]).or_default().push((i, j));
            }
        }
        let mut by_sector: HashMap<i64, Vec<usize>> = HashMap::new();
        for (s, &k) in l.sectors.iter().enumerate() {
            by_sector.entry(k).or_default().push(s);
        }
        let mut keys: Vec<i64> = groups.keys().copied().collect();
        keys.sort_unstable();
        let mut blocks = Vec::with_capacity(keys.len());
        for key in keys {
            let pairs = &groups[&key];
            let size = pairs.len();
            let local: HashMap<(usize, usize), usize> = pairs.iter().enumerate().map(|(p, &ij)| (ij, p)).collect();
            let mut b = Mat::<C64>::zeros(size, size);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                b[(p, p)] += C64::new(shift, 0.0);
                // -i H_eff[i, a] rho[a, j] with K(a) = K(i)
                for &a in &by_sector[&l.sectors[i]] {
                    if let Some(&q) = local.get(&(a, j)) {
                        b[(p, q)] += -I * scale * l.h_eff[(i, a)];
                    }
                }
                // i rho[i, b] H_eff^dag[b, j] with K(b) = K(j)
                for &bb in &by_sector[&l.sectors[j]] {
                    if let Some(&q) = local.get(&(i, bb)) {
                        b[(p, q)] += I * scale * l.h_eff_adj[(bb, j)];
                    }
                }
                for c in &l.collapse {
                    for a in 0..d {
                        let ca = c.op[(i, a)];
                        if ca == ZERO {
                            continue;
                        }
                        let Some(partners) = by_sector.get(&(l.sectors[a] - key)) else { continue };
                        for &bb in partners {
                            let cb = c.op[(j, bb)];
                            if cb == ZERO {
                                continue;
                            }
                            if let Some(&q) = local.get(&(a, bb)) {
                                b[(p, q)] += ca * cb.conj() * (scale * c.rate);
                            }
                        }
                    }
                }
            }
            if bordered && key == 0 {
                let u = 1.0 / d as f64;
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    if i != j {
                        continue;
                    }
                    for (q, &(a, bb)) in pairs.iter().enumerate() {
                        if a == bb {
                            b[(p, q)] += C64::new(u, 0.0);
                        }
                    }
                }
            }
            let flat: Vec<usize> = pairs.iter().map(|&(i, j)| i + d * j).collect();
            blocks.push((flat, b.partial_piv_lu()));
        }
        Ok(Self { blocks, len: d * d })
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.len];
        for (idx, lu) in &self.blocks {
            let rhs = Col::from_fn(idx.len(), |p| v[idx[p]]);
            let x = lu.solve(&rhs);
            for (p, &k) in idx.iter().enumerate() {
                out[k] = x[p];
            }
        }
        out
    }
}

/// Solver for `(L + u w^T) x = y`, `u = I/d`, `w` the trace functional.
/// The stationary state is `x` for `y = u`; for traceless `y` it returns
/// the group inverse of `L` applied to `y`.
pub struct BorderedSolver<'a> {
    l: &'a Liouvillian,
    precond: SectorPreconditioner,
}

impl<'a> BorderedSolver<'a> {
    pub fn new(l: &'a Liouvillian) -> Result<Self> {
        Ok(Self { l, precond: SectorPreconditioner::new(l, 0.0, 1.0, true)? })
    }

    pub fn solve(&self, y: &Mat<C64>, guess: Option<&Mat<C64>>) -> Result<(Mat<C64>, usize)> {
        let d = self.l.dim;
        let u = 1.0 / d as f64;
        let apply = |v: &[C64], out: &mut [C64]| {
            self.l.apply_vec(v, out);
            let tr: C64 = (0..d).map(|i| v[i + d * i]).sum();
            for i in 0..d {
                out[i + d * i] += tr * u;
            }
        };
        let b = to_vec(y);
        let outcome = gmres(apply, |v| self.precond.apply(v), &b, guess.map(to_vec), self.l.options.gmres())?;
        Ok((to_mat(&outcome.x, d), outcome.iterations))
    }
}

/// TR-BDF2 propagator for a fixed step. Both stages solve with
/// `I - k dt L`, `k = 1 - 1/sqrt(2)`, so one preconditioner serves both.
pub struct TrBdf2<'a> {
    l: &'a Liouvillian,
    dt: f64,
    precond: SectorPreconditioner,
}

const TRBDF2_K: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

impl<'a> TrBdf2<'a> {
    pub fn new(l: &'a Liouvillian, dt: f64) -> Result<Self> {
        Ok(Self { l, dt, precond: SectorPreconditioner::new(l, 1.0, -TRBDF2_K * dt, false)? })
    }

    fn implicit(&self, rhs: &Mat<C64>, guess: &Mat<C64>) -> Result<Mat<C64>> {
        let h = TRBDF2_K * self.dt;
        let apply = |v: &[C64], out: &mut [C64]| {
            self.l.apply_vec(v, out);
            for (o, vi) in out.iter_mut().zip(v) {
                *o = vi - *o * h;
            }
        };
        let b = to_vec(rhs);
        let outcome = gmres(apply, |v| self.precond.apply(v), &b, Some(to_vec(guess)), self.l.options.gmres())?;
        Ok(to_mat(&outcome.x, self.l.dim))
    }

    pub fn step(&self, x: &Mat<C64>) -> Result<Mat<C64>> {
        let g = 2.0 * TRBDF2_K;
        // trapezoidal stage to t + g dt
        let rhs = x + self.l.apply_mat(x) * faer::Scale(C64::new(TRBDF2_K * self.dt, 0.0));
        let mid = self.implicit(&rhs, x)?;
        // BDF2 stage to t + dt
        let c1 = 1.0 / (g * (2.0 - g));
        let c0 = (1.0 - g) * (1.0 - g) / (g * (2.0 - g));
        let rhs = &mid * faer::Scale(C64::new(c1, 0.0)) - x * faer::Scale(C64::new(c0, 0.0));
        self.implicit(&rhs, &mid)
    }
}

/// Polaron-frame master equation of the driven TLS and the oscillator.
///
/// `H = -(omega_m + epsilon)/2 sz + omega_m a^dag a + (Omega/2)(s+ D(l_d) + h.c.)`
/// with `l_d = fc_lambda`, jumps `sqrt(gamma (n_B+1)) a`, `sqrt(gamma n_B) a^dag`,
/// `sqrt(Gamma) s- D(-l_j)` with `l_j = jump_lambda`, and `sqrt(gamma_phi) sz`.
pub fn build_liouvillian(params: &SystemParams, options: LindbladOptions) -> Result<Liouvillian> {
    params.validate()?;
    let levels = params.n_max + 1;
    let d = 2 * levels;
    if d * d > options.max_superop_dim {
        return Err(Error::Dimension { dim: d * d, budget: options.max_superop_dim });
    }
    let w = params.omega_m;
    let eye = identity(levels);
    let a = annihilation(levels);
    let num = &adjoint(&a) * &a;
    // internal order: e = 0, g = 1
    let sz = Mat::from_fn(2, 2, |i, j| if i != j { ZERO } else if i == 0 { ONE } else { -ONE });
    let sp = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { ONE } else { ZERO });
    let sm = adjoint(&sp);
    let drive = kron(&sp, &displacement(levels, params.fc_lambda())?);
    let mut h = kron(&sz, &eye) * faer::Scale(C64::new(-0.5 * (w + params.detuning), 0.0));
    h += kron(&identity(2), &num) * faer::Scale(C64::new(w, 0.0));
    h += (&drive + adjoint(&drive)) * faer::Scale(C64::new(0.5 * params.drive, 0.0));

    let nb = params.bose();
    let a_full = kron(&identity(2), &a);
    let mut collapse = vec![Collapse {
        rate: params.tls_decay,
        op: kron(&sm, &displacement(levels, -params.jump_lambda())?),
        label: "emission",
    }];
    collapse.push(Collapse { rate: params.mech_damping * (nb + 1.0), op: a_full.clone(), label: "phonon loss" });
    if nb > 0.0 {
        collapse.push(Collapse { rate: params.mech_damping * nb, op: adjoint(&a_full), label: "phonon gain" });
    }
    if params.dephasing > 0.0 {
        collapse.push(Collapse { rate: params.dephasing, op: kron(&sz, &eye), label: "dephasing" });
    }
    // |e,n> and |g,n-1> share a doublet
    let sectors = (0..d).map(|k| if k < levels { k as i64 } else { (k - levels) as i64 + 1 }).collect();
    Liouvillian::new(h, collapse, 0, sectors, 2, options)
}

#[derive(Debug, Clone)]
pub struct StationaryDm {
    pub rho: Mat<C64>,
    /// Oscillator matrix traced over the internal label.
    pub phonon_matrix: Mat<C64>,
    pub pn: Vec<f64>,
    pub n_bar: f64,
    pub tail_mass: f64,
    /// `max |L rho|`.
    pub residual: f64,
    pub min_eigenvalue: f64,
    pub iterations: usize,
    pub diagnostics: Vec<String>,
}

#[derive(Serialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl StationaryDm {
    /// Reduced oscillator matrix as JSON, row-major real and imaginary parts.
    pub fn phonon_matrix_json(&self) -> Result<String> {
        let m = &self.phonon_matrix;
        let (r, c) = (m.nrows(), m.ncols());
        let mut re = Vec::with_capacity(r * c);
        let mut im = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Ok(serde_json::to_string(&MatrixJson { rows: r, cols: c, re, im })?)
    }
}

fn hermitian_part(m: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()))
}

/// Null vector of the Liouvillian with unit trace.
pub fn stationary_dm(l: &Liouvillian) -> Result<StationaryDm> {
    let d = l.dim;
    let solver = BorderedSolver::new(l)?;
    let u = Mat::from_fn(d, d, |i, j| if i == j { C64::new(1.0 / d as f64, 0.0) } else { ZERO });
    let (raw, iterations) = solver.solve(&u, None)?;
    let mut rho = hermitian_part(&raw);
    let tr = trace(&rho);
    rho *= faer::Scale(tr.inv());
    let mut diagnostics = Vec::new();

    let eig = rho
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::SingularSystem(format!("eigen-decomposition of rho failed: {e:?}")))?;
    let values: Vec<f64> = (0..d).map(|k| eig.S()[k].re).collect();
    let min_eigenvalue = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eigenvalue < -CLIP_TOL {
        if min_eigenvalue < -POSITIVITY_TOL {
            diagnostics.push(format!("positivity violated: min eigenvalue {min_eigenvalue:e}"));
        }
        // clip the negative part and renormalize
        let vecs = eig.U();
        let mut clipped = Mat::<C64>::zeros(d, d);
        for k in 0..d {
            let w = values[k].max(0.0);
            if w == 0.0 {
                continue;
            }
            for j in 0..d {
                let vj = vecs[(j, k)].conj() * w;
                for i in 0..d {
                    clipped[(i, j)] += vecs[(i, k)] * vj;
                }
            }
        }
        let tr = trace(&clipped);
        rho = hermitian_part(&(clipped * faer::Scale(tr.inv())));
        diagnostics.push(format!("clipped negative eigenvalues (min {min_eigenvalue:e})"));
    }

    let lr = l.apply_mat(&rho);
    let mut residual = 0.0f64;
    for j in 0..d {
        for i in 0..d {
            residual = residual.max(lr[(i, j)].norm());
        }
    }
    let phonon_matrix = hermitian_part(&l.reduce(&rho));
    let pn: Vec<f64> = (0..l.n_levels).map(|n| phonon_matrix[(n, n)].re.max(0.0)).collect();
    let n_bar = pn.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
    let tail = tail_mass(&pn);
    if tail >= TAIL_TOL {
        return Err(Error::Truncation(format!(
            "stationary tail mass {tail:e} above 90% of n_max = {}",
            l.n_levels - 1
        )));
    }
    Ok(StationaryDm {
        rho,
        phonon_matrix,
        pn,
        n_bar,
        tail_mass: tail,
        residual,
        min_eigenvalue,
        iterations,
        diagnostics,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhotonCorrelation {
    pub times: Vec<f64>,
    pub g2: Vec<f64>,
    /// `rate * <L^dag L>` in the stationary state.
    pub flux: f64,
    /// Mandel factor from the resolvent, `1 + 2 I int_0^inf (g2 - 1)`.
    pub fano: f64,
    /// `int (g2 - 1)` accumulated on the time grid.
    pub grid_integral: f64,
    /// The same integral to infinity.
    pub exact_integral: f64,
}

impl PhotonCorrelation {
    pub fn to_csv(&self) -> String {
        crate::io::csv(
            &["t", "g2"],
            self.times.iter().zip(&self.g2).map(|(t, g)| vec![crate::io::fmt_num(*t), crate::io::fmt_num(*g)]),
        )
    }
}

/// Piecewise-uniform time grid: `levels` stretches of `steps_per_level`
/// steps, the step doubling from one stretch to the next.
pub fn time_grid(t_max: f64, n_steps: usize, levels: usize) -> Vec<(f64, usize)> {
    let levels = levels.clamp(1, n_steps.max(1));
    let per = (n_steps / levels).max(1);
    let total_units = per as f64 * ((1u64 << levels) - 1) as f64;
    let dt0 = t_max / total_units;
    (0..levels).map(|k| (dt0 * (1u64 << k) as f64, per)).collect()
}

/// `g2(t)` by the quantum regression theorem and the Mandel Fano factor.
///
/// The integral of `g2 - 1` is evaluated exactly through the group inverse;
/// the time grid integral is returned alongside and must have converged to
/// 1% of it.
pub fn g2_and_mandel(l: &Liouvillian, ss: &StationaryDm, t_max: f64, n_steps: usize) -> Result<PhotonCorrelation> {
    let jump = l.emission_op();
    let jump_adj = adjoint(jump);
    let number = &jump_adj * jump;
    let occupation = trace_product(&number, &ss.rho).re;
    if !(occupation > 0.0) {
        return Err(Error::DivisionGuard("no emission in the stationary state".into()));
    }
    let flux = l.emission_rate() * occupation;
    // traceless deviation of the post-jump state from the stationary one
    let post = &(jump * &ss.rho) * &jump_adj;
    let y0 = post * faer::Scale(C64::new(1.0 / occupation, 0.0)) - &ss.rho;
    let g2_of = |y: &Mat<C64>| 1.0 + trace_product(&number, y).re / occupation;

    let solver = BorderedSolver::new(l)?;
    let (dy, _) = solver.solve(&y0, None)?;
    let exact_integral = -trace_product(&number, &dy).re / occupation;
    let fano = 1.0 + 2.0 * flux * exact_integral;

    let mut times = vec![0.0];
    let mut g2 = vec![g2_of(&y0)];
    let mut y = y0;
    let mut t = 0.0;
    let mut grid_integral = 0.0;
    for (dt, steps) in time_grid(t_max, n_steps, 12) {
        let stepper = TrBdf2::new(l, dt)?;
        for _ in 0..steps {
            let next = stepper.step(&y)?;
            let g_next = g2_of(&next);
            grid_integral += 0.5 * dt * (g2.last().unwrap() - 1.0 + g_next - 1.0);
            t += dt;
            times.push(t);
            g2.push(g_next);
            y = next;
        }
    }
    let tail = (exact_integral - grid_integral).abs();
    if tail > 0.01 * exact_integral.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Convergence(format!(
            "g2 integral on [0, {t_max}] is {grid_integral:e}, tail {tail:e} exceeds 1% of {exact_integral:e}"
        )));
    }
    Ok(PhotonCorrelation { times, g2, flux, fano, grid_integral, exact_integral })
}
