//! Wigner functions of the oscillator on a phase-space grid and the
//! negativity `eta = -int_- W / int_+ W`.
//!
//! Quadratures are dimensionless with `alpha = (x + i p) / sqrt(2)`, so the
//! vacuum is `exp(-(x^2 + p^2)) / pi`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ln_factorial;

/// Boundary values must stay below this fraction of `max |W|`.
pub const EXTENT_TOL: f64 = 1e-6;
/// `|W|` below this is assigned to the positive set.
pub const ZERO_CUT: f64 = 1e-14;
/// Allowed deviation of the integrated Wigner function from 1.
pub const NORM_TOL: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Half-width: both axes span `[-extent, extent]`.
    pub extent: f64,
    /// Points per axis; odd so that the origin is a grid point.
    pub resolution: usize,
    /// Rotation of the sampled axes with respect to `(x, p)`.
    pub rotation: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { extent: 6.0, resolution: 241, rotation: 0.0 }
    }
}

impl GridSpec {
    /// Default grid, widened for states that reach higher Fock levels while
    /// keeping the spacing at 0.05.
    pub fn for_distribution(pn: &[f64]) -> Self {
        let n_eff = effective_n(pn);
        let needed = (2.0 * n_eff as f64).sqrt() + 3.0;
        if needed <= 6.0 {
            return Self::default();
        }
        let extent = needed.ceil();
        let resolution = 2 * (extent / 0.05).round() as usize + 1;
        Self { extent, resolution, rotation: 0.0 }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / (self.resolution - 1) as f64
    }

    fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.resolution).map(|i| -self.extent + i as f64 * h).collect()
    }

    fn check(&self) -> Result<()> {
        if self.resolution < 5 || self.resolution.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "grid resolution must be odd and >= 5, got {}",
                self.resolution
            )));
        }
        if !(self.extent > 0.0) {
            return Err(Error::InvalidParams(format!("grid extent must be > 0, got {}", self.extent)));
        }
        Ok(())
    }
}

/// Largest `n` with `P_n > 1e-6`.
pub fn effective_n(pn: &[f64]) -> usize {
    pn.iter().rposition(|p| *p > 1e-6).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WignerSource {
    PhononDistribution,
    DensityMatrix,
}

#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    /// `values[i * p.len() + j] = W(x[i], p[j])` in the sampled frame.
    pub values: Vec<f64>,
    /// Trapezoidal weights of the axes (the 2-D weight is their product).
    pub axis_weights: Vec<f64>,
    pub source: WignerSource,
    pub integral: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Negativity {
    pub eta: f64,
    /// `|eta - eta_half|` with every other grid point.
    pub error_estimate: f64,
    pub negative_volume: f64,
    pub positive_volume: f64,
}

#[derive(Serialize)]
struct GridHeader<'a> {
    source: WignerSource,
    extent: f64,
    resolution: usize,
    rotation: f64,
    integral: f64,
    eta: f64,
    eta_error_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a serde_json::Value>,
}

impl WignerGrid {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p.len() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `x,p,W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", crate::io::CSV_SCHEMA);
        out.push_str("x,p,W\n");
        for (i, x) in self.x.iter().enumerate() {
            for (j, p) in self.p.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    crate::io::fmt_num(*x),
                    crate::io::fmt_num(*p),
                    crate::io::fmt_num(self.at(i, j))
                );
            }
        }
        out
    }

    /// JSON header describing the grid and its negativity.
    pub fn header_json(&self, extra: Option<&serde_json::Value>) -> Result<String> {
        let neg = negativity(self);
        let header = GridHeader {
            source: self.source,
            extent: self.spec.extent,
            resolution: self.spec.resolution,
            rotation: self.spec.rotation,
            integral: self.integral,
            eta: neg.eta,
            eta_error_estimate: neg.error_estimate,
            extra,
        };
        Ok(serde_json::to_string_pretty(&header)?)
    }
}

/// `exp(-x/2) L_k(x)` for `k = 0..=n`.
fn scaled_laguerre_all(n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let s = (-0.5 * x).exp();
    out.push(s);
    if n == 0 {
        return out;
    }
    out.push((1.0 - x) * s);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 - x) * out[k] - kf * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// Wigner function of the Fock state `|n>`:
/// `(-1)^n / pi * exp(-r^2) * L_n(2 r^2)`.
pub fn wigner_fock(n: usize, x: f64, p: f64) -> f64 {
    let r2 = x * x + p * p;
    let l = scaled_laguerre_all(n, 2.0 * r2)[n];
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * l / PI
}

fn radial_from_pn(pn: &[f64], r2: f64) -> f64 {
    let n_top = pn.len().saturating_sub(1);
    let l = scaled_laguerre_all(n_top, 2.0 * r2);
    let mut acc = 0.0;
    for (n, (&p, &ln)) in pn.iter().zip(&l).enumerate() {
        if n % 2 == 0 {
            acc += p * ln;
        } else {
            acc -= p * ln;
        }
    }
    acc / PI
}

/// Evaluates a function of the radius on the grid, once per symmetry
/// class of points (the grid is symmetric under reflections and `x <-> p`).
fn fill_radial<F, G>(spec: &GridSpec, radial: F, assemble: G) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<G::Kernel>,
    G: AngularAssembly,
{
    let n = spec.resolution;
    let c = n / 2;
    let axis = spec.axis();
    let mut values = vec![0.0; n * n];
    for a in 0..=c {
        for b in a..=c {
            let u = axis[c + a];
            let v = axis[c + b];
            let kernel = radial(u * u + v * v)?;
            // the eight images (±u, ±v) and (±v, ±u) in sampled coordinates
            for &(su, sv, swap) in &SYMMETRIES {
                let (du, dv) = if swap { (b as i64 * sv, a as i64 * su) } else { (a as i64 * su, b as i64 * sv) };
                let i = (c as i64 + du) as usize;
                let j = (c as i64 + dv) as usize;
                let x = axis[i];
                let p = axis[j];
                values[i * n + j] = assemble.value(&kernel, x, p, spec.rotation);
            }
        }
    }
    Ok(values)
}

const SYMMETRIES: [(i64, i64, bool); 8] = [
    (1, 1, false),
    (-1, 1, false),
    (1, -1, false),
    (-1, -1, false),
    (1, 1, true),
    (-1, 1, true),
    (1, -1, true),
    (-1, -1, true),
];

trait AngularAssembly {
    type Kernel;
    fn value(&self, kernel: &Self::Kernel, x: f64, p: f64, rotation: f64) -> f64;
}

struct Isotropic;

impl AngularAssembly for Isotropic {
    type Kernel = f64;
    fn value(&self, kernel: &f64, _x: f64, _p: f64, _rotation: f64) -> f64 {
        *kernel
    }
}

/// Phase harmonics `c_d(r)` for `d >= 0`; the value is
/// `c_0 + 2 Re sum_{d>0} c_d exp(i d phi)`.
struct Harmonics;

impl AngularAssembly for Harmonics {
    type Kernel = Vec<Complex64>;
    fn value(&self, kernel: &Vec<Complex64>, x: f64, p: f64, rotation: f64) -> f64 {
        let phi = p.atan2(x) + rotation;
        let mut acc = kernel[0].re;
        let step = Complex64::from_polar(1.0, phi);
        let mut phase = step;
        for c in &kernel[1..] {
            acc += 2.0 * (c * phase).re;
            phase *= step;
        }
        acc
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

fn finish(spec: GridSpec, values: Vec<f64>, source: WignerSource) -> Result<WignerGrid> {
    let n = spec.resolution;
    let axis = spec.axis();
    let axis_weights = trapezoid_weights(n, spec.spacing());
    let mut integral = 0.0;
    for i in 0..n {
        for j in 0..n {
            integral += axis_weights[i] * axis_weights[j] * values[i * n + j];
        }
    }
    let grid = WignerGrid { spec, x: axis.clone(), p: axis, values, axis_weights, source, integral };
    let max = grid.max_abs();
    let mut boundary = 0.0f64;
    for k in 0..n {
        for (i, j) in [(0, k), (n - 1, k), (k, 0), (k, n - 1)] {
            boundary = boundary.max(grid.at(i, j).abs());
        }
    }
    if boundary > EXTENT_TOL * max {
        return Err(Error::Extent { boundary, max });
    }
    if (integral - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidParams(format!(
            "Wigner function integrates to {integral}, outside 1 +- {NORM_TOL}"
        )));
    }
    Ok(grid)
}

/// `W(x, p) = sum_n P_n W_n(x, p)` for a phase-symmetric state.
pub fn wigner_from_pn(pn: &[f64], spec: GridSpec) -> Result<WignerGrid> {
    spec.check()?;
    if pn.is_empty() || pn.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(Error::InvalidParams("phonon distribution must be finite and non-negative".into()));
    }
    let total: f64 = pn.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParams(format!("phonon distribution sums to {total}")));
    }
    let top = effective_n(pn);
    let needed = (2.0 * top as f64).sqrt() + 3.0;
    if spec.extent < needed {
        return Err(Error::Extent { boundary: needed, max: spec.extent });
    }
    let values = fill_radial(&spec, |r2| Ok(radial_from_pn(pn, r2)), Isotropic)?;
    finish(spec, values, WignerSource::PhononDistribution)
}

/// Parity kernel on the upper diagonals,
/// `kernel[d][j] = sum_n (-1)^n <j|D(a)|n> <j+d|D(a)|n> = (-1)^j <j+d| D(2a) |j>`
/// for real `a`, from the scaled Laguerre recurrence along each diagonal.
fn parity_kernel(dim: usize, a: f64) -> Vec<Vec<f64>> {
    let beta = 2.0 * a;
    let x = beta * beta;
    let mut out = Vec::with_capacity(dim);
    for d in 0..dim {
        let len = dim - d;
        let df = d as f64;
        // t_j = sqrt(j!/(j+d)!) beta^d exp(-x/2) L_j^(d)(x)
        let t0 = if beta == 0.0 {
            if d == 0 { 1.0 } else { 0.0 }
        } else {
            (-0.5 * x - 0.5 * ln_factorial(d) + df * beta.ln()).exp()
        };
        let mut t = Vec::with_capacity(len);
        t.push(t0);
        if len > 1 {
            t.push(t0 * (1.0 + df - x) / (1.0 + df).sqrt());
        }
        for j in 1..len.saturating_sub(1) {
            let jf = j as f64;
            let next = ((2.0 * jf + 1.0 + df - x) * ((jf + 1.0) / (jf + 1.0 + df)).sqrt() * t[j]
                - (jf + df) * (jf * (jf + 1.0) / ((jf + df) * (jf + df + 1.0))).sqrt() * t[j - 1])
                / (jf + 1.0);
            t.push(next);
        }
        for (j, v) in t.iter_mut().enumerate() {
            if j % 2 == 1 {
                *v = -*v;
            }
        }
        out.push(t);
    }
    out
}

/// Wigner function of a phonon density matrix via the displaced parity
/// `W(x, p) = (1/pi) sum_n (-1)^n <n| D(alpha)^dag rho D(alpha) |n>`,
/// `alpha = (x + i p) / sqrt(2)`.
///
/// The displaced parity is evaluated through `D(a) P D(a)^dag = D(2a) P`,
/// which needs no Fock space beyond the support of `rho`.
pub fn wigner_from_dm(rho: &Mat<Complex64>, spec: GridSpec) -> Result<WignerGrid> {
    spec.check()?;
    let dim = rho.nrows();
    if rho.ncols() != dim || dim == 0 {
        return Err(Error::InvalidParams("density matrix must be square".into()));
    }
    let mut trace = Complex64::new(0.0, 0.0);
    let mut herm_defect = 0.0f64;
    for i in 0..dim {
        trace += rho[(i, i)];
        for j in 0..dim {
            herm_defect = herm_defect.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
        }
    }
    if (trace - 1.0).norm() > 1e-8 || herm_defect > 1e-8 {
        return Err(Error::InvalidParams(format!(
            "density matrix must be Hermitian with unit trace (trace {trace}, defect {herm_defect:e})"
        )));
    }
    let radial = |r2: f64| -> Result<Vec<Complex64>> {
        let kernel = parity_kernel(dim, (0.5 * r2).sqrt());
        let mut harmonics = vec![Complex64::new(0.0, 0.0); dim];
        for (d, (h, diag)) in harmonics.iter_mut().zip(&kernel).enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, k) in diag.iter().enumerate() {
                acc += rho[(j, j + d)] * *k;
            }
            if !acc.re.is_finite() || !acc.im.is_finite() {
                return Err(Error::Overflow { n: dim, m: d, lambda: (2.0 * r2).sqrt() });
            }
            *h = acc / PI;
        }
        Ok(harmonics)
    };
    let values = fill_radial(&spec, radial, Harmonics)?;
    finish(spec, values, WignerSource::DensityMatrix)
}

fn eta_on(grid: &WignerGrid, stride: usize) -> (f64, f64, f64) {
    let n = grid.x.len();
    let h = grid.spec.spacing() * stride as f64;
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let w = trapezoid_weights(idx.len(), h);
    let (mut neg, mut pos) = (0.0, 0.0);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            let v = grid.at(i, j) * w[a] * w[b];
            if grid.at(i, j) < -ZERO_CUT {
                neg -= v;
            } else {
                pos += v;
            }
        }
    }
    (neg / pos, neg, pos)
}

/// Negativity of a sampled Wigner function with a half-resolution error
/// estimate.
pub fn negativity(grid: &WignerGrid) -> Negativity {
    let (eta, negative_volume, positive_volume) = eta_on(grid, 1);
    let (eta_half, _, _) = eta_on(grid, 2);
    Negativity { eta, error_estimate: (eta - eta_half).abs(), negative_volume, positive_volume }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::franck_condon;

    #[test]
    fn fock_values_at_origin() {
        assert!((wigner_fock(0, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
        assert!((wigner_fock(1, 0.0, 0.0) + 1.0 / PI).abs() < 1e-15);
        assert!((wigner_fock(2, 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn fock_one_closed_form() {
        for &(x, p) in &[(0.3, 0.4), (1.0, -0.5), (2.0, 1.0)] {
            let r2: f64 = x * x + p * p;
            let expected = -(1.0 - 2.0 * r2) * (-r2).exp() / PI;
            assert!((wigner_fock(1, x, p) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn vacuum_grid() {
        let g = wigner_from_pn(&[1.0], GridSpec::default()).unwrap();
        let c = g.x.len() / 2;
        assert!((g.at(c, c) - 1.0 / PI).abs() < 1e-15);
        assert!((g.integral - 1.0).abs() < 1e-10);
        assert_eq!(negativity(&g).eta, 0.0);
    }

    #[test]
    fn small_extent_is_rejected() {
        let mut pn = vec![0.0; 31];
        pn[30] = 1.0;
        assert!(matches!(wigner_from_pn(&pn, GridSpec::default()), Err(Error::Extent { .. })));
        let spec = GridSpec::for_distribution(&pn);
        assert!(spec.extent >= (60.0f64).sqrt() + 3.0);
        wigner_from_pn(&pn, spec).unwrap();
    }

    #[test]
    fn rejects_even_resolution() {
        let spec = GridSpec { resolution: 240, ..GridSpec::default() };
        assert!(wigner_from_pn(&[1.0], spec).is_err());
    }

    #[test]
    fn parity_kernel_matches_closed_form() {
        for &a in &[0.0, 0.3, 1.7, 4.2, 9.0] {
            let k = parity_kernel(30, a);
            for d in 0..30 {
                for j in 0..30 - d {
                    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                    let exact = sign * franck_condon(j + d, j, 2.0 * a).unwrap();
                    assert!((k[d][j] - exact).abs() < 1e-10, "a={a} d={d} j={j}: {} vs {exact}", k[d][j]);
                }
            }
        }
    }

    #[test]
    fn parity_kernel_is_brute_force_sum() {
        // alternating sum over a long Fock range of displaced columns
        let a: f64 = 1.3;
        let k = parity_kernel(8, a);
        for j in 0..8 {
            for l in j..8 {
                let mut acc = 0.0;
                for n in 0..120 {
                    let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                    acc += s * franck_condon(j, n, a).unwrap() * franck_condon(l, n, a).unwrap();
                }
                assert!((k[l - j][j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vacuum_density_matrix() {
        let mut rho = Mat::<Complex64>::zeros(3, 3);
        rho[(0, 0)] = Complex64::new(1.0, 0.0);
        let spec = GridSpec { extent: 5.0, resolution: 101, rotation: 0.0 };
        let g = wigner_from_dm(&rho, spec).unwrap();
        for (i, x) in g.x.iter().enumerate() {
            for (j, p) in g.p.iter().enumerate() {
                assert!((g.at(i, j) - wigner_fock(0, *x, *p)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coherent_superposition_phase() {
        // (|0> + |1>)/sqrt(2): W = e^{-r^2}/pi * (r^2 + sqrt(2) x)
        let mut rho = Mat::<Complex64>::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                rho[(i, j)] = Complex64::new(0.5, 0.0);
            }
        }
        let spec = GridSpec { extent: 6.0, resolution: 61, rotation: 0.0 };
        let g = wigner_from_dm(&rho, spec).unwrap();
        for (i, x) in g.x.iter().enumerate() {
            for (j, p) in g.p.iter().enumerate() {
                let r2 = x * x + p * p;
                let expected = (-r2).exp() / PI * (r2 + 2f64.sqrt() * x);
                assert!((g.at(i, j) - expected).abs() < 1e-12, "x={x} p={p}");
            }
        }
    }

    #[test]
    fn json_header() {
        let g = wigner_from_pn(&[0.5, 0.5], GridSpec::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.header_json(None).unwrap()).unwrap();
        assert_eq!(v["resolution"], 241);
        assert!(v["eta"].as_f64().unwrap() >= 0.0);
        assert!(g.to_csv().lines().nth(1).unwrap() == "x,p,W");
    }
}
