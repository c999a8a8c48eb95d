//! Parameter sweeps over one or two variables with per-point error capture.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cavity::{cavity_liouvillian, cavity_rate_matrix, cavity_stationary, CavityParams};
use crate::counting::{flux_noise_eigen, flux_noise_pseudoinverse, CountingMethod};
use crate::dressed::{rate_matrix_for, RateMatrix};
use crate::error::{Error, Result};
use crate::io::{csv, fmt_num};
use crate::lindblad::{build_liouvillian, g2_and_mandel, stationary_dm, LindbladOptions, PhotonCorrelation, StationaryDm};
use crate::model::SystemParams;
use crate::phonon_noise::{fano_proxy, s_nn, NumberObservable};
use crate::steady::{solve_stationary, StationaryState};
use crate::wigner::{negativity, wigner_from_dm, wigner_from_pn, GridSpec, WignerGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    Omega,
    #[serde(rename = "g0")]
    G0,
    #[serde(rename = "epsilon")]
    Epsilon,
}

impl Variable {
    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Omega => "Omega",
            Variable::G0 => "g0",
            Variable::Epsilon => "epsilon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: Variable,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + t * (self.stop - self.start),
                    Spacing::Log => (self.start.ln() + t * (self.stop.ln() - self.start.ln())).exp(),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.count < 2 {
            return Err(Error::InvalidParams(format!("axis {} needs count >= 2", self.variable.as_str())));
        }
        if !(self.start < self.stop) {
            return Err(Error::InvalidParams(format!("axis {} needs start < stop", self.variable.as_str())));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0) {
            return Err(Error::InvalidParams(format!("log axis {} needs start > 0", self.variable.as_str())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "Pn")]
    Pn,
    #[serde(rename = "nbar")]
    Nbar,
    #[serde(rename = "flux")]
    Flux,
    #[serde(rename = "fano")]
    Fano,
    #[serde(rename = "snn")]
    Snn,
    #[serde(rename = "proxy")]
    Proxy,
    #[serde(rename = "wigner")]
    Wigner,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "g2")]
    G2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Pauli,
    Liouvillian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    System(SystemParams),
    Cavity(CavityParams),
}

impl Model {
    fn with(&self, var: Variable, value: f64) -> Model {
        match self {
            Model::System(p) => {
                let mut p = p.clone();
                match var {
                    Variable::Omega => p.drive = value,
                    Variable::G0 => p.g0 = value,
                    Variable::Epsilon => p.detuning = value,
                }
                Model::System(p)
            }
            Model::Cavity(p) => {
                let mut p = p.clone();
                match var {
                    Variable::Omega => p.drive = value,
                    Variable::G0 => p.coupling = value,
                    Variable::Epsilon => p.detuning = value,
                }
                Model::Cavity(p)
            }
        }
    }

    fn n_max(&self) -> usize {
        match self {
            Model::System(p) => p.n_max,
            Model::Cavity(p) => p.n_max,
        }
    }

    fn with_n_max(&self, n_max: usize) -> Model {
        match self {
            Model::System(p) => Model::System(SystemParams { n_max, ..p.clone() }),
            Model::Cavity(p) => Model::Cavity(CavityParams { n_max, ..p.clone() }),
        }
    }

    /// `(Omega, g0, epsilon)` of the point.
    fn coords(&self) -> [f64; 3] {
        match self {
            Model::System(p) => [p.drive, p.g0, p.detuning],
            Model::Cavity(p) => [p.drive, p.coupling, p.detuning],
        }
    }

    fn mech_damping(&self) -> f64 {
        match self {
            Model::System(p) => p.mech_damping,
            Model::Cavity(p) => p.mech_damping,
        }
    }
}

fn default_t_max_factor() -> f64 {
    20.0
}

fn default_g2_steps() -> usize {
    240
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// One axis, or two for a landscape (outer axis first).
    pub axes: Vec<Axis>,
    pub model: Model,
    pub quantities: Vec<Quantity>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub method: CountingMethod,
    #[serde(default)]
    pub lindblad: LindbladOptions,
    /// When set, a point that fails on truncation is retried with `n_max`
    /// grown by half up to this value.
    #[serde(default)]
    pub n_max_limit: Option<usize>,
    /// `g2` is propagated to `t_max_factor / gamma`.
    #[serde(default = "default_t_max_factor")]
    pub t_max_factor: f64,
    #[serde(default = "default_g2_steps")]
    pub g2_steps: usize,
}

impl SweepSpec {
    pub fn new(axes: Vec<Axis>, model: Model, quantities: Vec<Quantity>) -> Self {
        Self {
            axes,
            model,
            quantities,
            solver: Solver::Pauli,
            method: CountingMethod::default(),
            lindblad: LindbladOptions::default(),
            n_max_limit: None,
            t_max_factor: default_t_max_factor(),
            g2_steps: default_g2_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidParams("a sweep has one or two axes".into()));
        }
        if self.axes.len() == 2 && self.axes[0].variable == self.axes[1].variable {
            return Err(Error::InvalidParams("the two axes must sweep different variables".into()));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if self.quantities.is_empty() {
            return Err(Error::InvalidParams("no quantities requested".into()));
        }
        for &q in &self.quantities {
            let ok = !matches!(
                (self.solver, &self.model, q),
                (Solver::Pauli, _, Quantity::G2)
                    | (Solver::Liouvillian, _, Quantity::Snn | Quantity::Proxy)
                    | (_, Model::Cavity(_), Quantity::Proxy)
            );
            if !ok {
                return Err(Error::InvalidParams(format!("quantity {q:?} is not available with the {:?} solver", self.solver)));
            }
        }
        Ok(())
    }

    fn wants(&self, q: Quantity) -> bool {
        self.quantities.contains(&q)
    }

    /// Parameter points in sweep order, outer axis slowest.
    pub fn points(&self) -> Vec<Model> {
        let first = self.axes[0].values();
        match self.axes.get(1) {
            None => first.iter().map(|&v| self.model.with(self.axes[0].variable, v)).collect(),
            Some(inner) => {
                let second = inner.values();
                let mut out = Vec::with_capacity(first.len() * second.len());
                for &a in &first {
                    let outer = self.model.with(self.axes[0].variable, a);
                    for &b in &second {
                        out.push(outer.with(inner.variable, b));
                    }
                }
                out
            }
        }
    }

    /// Table columns for the requested quantities.
    pub fn columns(&self) -> Vec<&'static str> {
        let mut cols = vec!["Omega", "g0", "epsilon"];
        let mut push = |names: &[&'static str]| {
            for n in names {
                if !cols.contains(n) {
                    cols.push(n);
                }
            }
        };
        for &q in &self.quantities {
            match q {
                Quantity::Nbar => push(&["n_bar"]),
                Quantity::Flux => push(&["I_bar"]),
                Quantity::Fano => push(&["I_bar", "S_II", "F", "method", "err_estimate"]),
                Quantity::Snn => push(&["S_nn"]),
                Quantity::Proxy => push(&["S_nn", "S_nn_thermal", "proxy"]),
                Quantity::Eta | Quantity::Wigner => push(&["eta", "eta_err"]),
                Quantity::G2 => push(&["F_mandel", "g2_0"]),
                Quantity::Pn => {}
            }
        }
        if self.wants(Quantity::Wigner) {
            push(&["W_min", "W_max_abs"]);
        }
        push(&["n_max", "tail_mass", "residual", "error"]);
        cols
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub model: Model,
    pub values: HashMap<&'static str, f64>,
    pub method: Option<&'static str>,
    pub pn: Option<Vec<f64>>,
    pub wigner: Option<WignerGrid>,
    pub g2: Option<PhotonCorrelation>,
    pub n_max: usize,
    pub diagnostics: Vec<String>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn get(&self, column: &str) -> Option<f64> {
        self.values.get(column).copied()
    }
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn to_csv(&self) -> String {
        let rows = self.rows.iter().map(|r| {
            self.columns
                .iter()
                .map(|&c| match c {
                    "method" => r.method.unwrap_or("").to_string(),
                    "error" => r.error.as_deref().map(csv_field).unwrap_or_default(),
                    "n_max" => r.n_max.to_string(),
                    _ => r.get(c).map(fmt_num).unwrap_or_default(),
                })
                .collect::<Vec<_>>()
        });
        csv(&self.columns, rows)
    }

    /// Long-format `(point, n, P_n)` for every row that kept its distribution.
    pub fn pn_csv(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.rows {
            if let Some(pn) = &r.pn {
                for (n, p) in pn.iter().enumerate() {
                    rows.push(vec![r.index.to_string(), n.to_string(), fmt_num(*p)]);
                }
            }
        }
        csv(&["point", "n", "P_n"], rows)
    }
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "'").replace('\n', " "))
}

enum Solved {
    Pauli(RateMatrix, StationaryState),
    Full(crate::lindblad::Liouvillian, StationaryDm),
}

fn solve_point(spec: &SweepSpec, model: &Model) -> Result<Solved> {
    match (spec.solver, model) {
        (Solver::Pauli, Model::System(p)) => {
            let m = rate_matrix_for(p)?;
            let s = solve_stationary(&m)?;
            Ok(Solved::Pauli(m, s))
        }
        (Solver::Pauli, Model::Cavity(p)) => {
            let m = cavity_rate_matrix(p)?;
            let s = solve_stationary(&m)?;
            Ok(Solved::Pauli(m, s))
        }
        (Solver::Liouvillian, Model::System(p)) => {
            let l = build_liouvillian(p, spec.lindblad)?;
            let s = stationary_dm(&l)?;
            Ok(Solved::Full(l, s))
        }
        (Solver::Liouvillian, Model::Cavity(p)) => {
            let l = cavity_liouvillian(p, spec.lindblad)?;
            let s = cavity_stationary(&l)?.state;
            Ok(Solved::Full(l, s))
        }
    }
}

fn evaluate(spec: &SweepSpec, model: &Model, row: &mut SweepRow) -> Result<()> {
    let solved = solve_point(spec, model)?;
    let v = &mut row.values;
    let pn = match &solved {
        Solved::Pauli(m, s) => {
            v.insert("n_bar", s.n_bar);
            v.insert("I_bar", s.flux_total());
            v.insert("tail_mass", s.tail_mass);
            v.insert("residual", s.residual);
            row.diagnostics.extend(m.notes.iter().cloned());
            row.diagnostics.extend(s.diagnostics.iter().cloned());
            if spec.wants(Quantity::Fano) {
                let c = match spec.method {
                    CountingMethod::EigenDerivative => flux_noise_eigen(m)?,
                    CountingMethod::Pseudoinverse => flux_noise_pseudoinverse(m)?,
                };
                v.insert("I_bar", c.flux);
                v.insert("S_II", c.noise);
                v.insert("F", c.fano);
                v.insert("err_estimate", c.err_estimate);
                row.method = Some(c.method.as_str());
            }
            if spec.wants(Quantity::Snn) {
                v.insert("S_nn", s_nn(m, &NumberObservable::new(m), 0.0)?);
            }
            if spec.wants(Quantity::Proxy) {
                if let Model::System(p) = model {
                    let f = fano_proxy(m, p)?;
                    v.insert("S_nn", f.s_nn);
                    v.insert("S_nn_thermal", f.s_nn_thermal);
                    v.insert("proxy", f.proxy);
                }
            }
            s.phonon_marginal.clone()
        }
        Solved::Full(l, s) => {
            let flux = l.emission_rate() * crate::lindblad::trace_product(&emission_number(l), &s.rho).re;
            v.insert("n_bar", s.n_bar);
            v.insert("I_bar", flux);
            v.insert("tail_mass", s.tail_mass);
            v.insert("residual", s.residual);
            row.diagnostics.extend(s.diagnostics.iter().cloned());
            if spec.wants(Quantity::Fano) || spec.wants(Quantity::G2) {
                let t_max = spec.t_max_factor / model.mech_damping();
                let c = g2_and_mandel(l, s, t_max, spec.g2_steps)?;
                v.insert("F_mandel", c.fano);
                v.insert("g2_0", c.g2[0]);
                if spec.wants(Quantity::Fano) {
                    v.insert("F", c.fano);
                    v.insert("I_bar", c.flux);
                    v.insert("S_II", c.fano * c.flux);
                    v.insert("err_estimate", (c.exact_integral - c.grid_integral).abs() * 2.0 * c.flux);
                    row.method = Some("mandel");
                }
                if spec.wants(Quantity::G2) {
                    row.g2 = Some(c);
                }
            }
            if spec.wants(Quantity::Eta) || spec.wants(Quantity::Wigner) {
                let grid = wigner_from_dm(&s.phonon_matrix, GridSpec::for_distribution(&s.pn))?;
                store_wigner(spec, row, grid);
            }
            s.pn.clone()
        }
    };
    if matches!(solved, Solved::Pauli(..)) && (spec.wants(Quantity::Eta) || spec.wants(Quantity::Wigner)) {
        let grid = wigner_from_pn(&normalized(&pn), GridSpec::for_distribution(&pn))?;
        store_wigner(spec, row, grid);
    }
    if spec.wants(Quantity::Pn) {
        row.pn = Some(pn);
    }
    Ok(())
}

fn emission_number(l: &crate::lindblad::Liouvillian) -> faer::Mat<crate::lindblad::C64> {
    let op = l.emission_op();
    let adj = faer::Mat::from_fn(op.ncols(), op.nrows(), |i, j| op[(j, i)].conj());
    &adj * op
}

fn normalized(pn: &[f64]) -> Vec<f64> {
    let total: f64 = pn.iter().sum();
    pn.iter().map(|p| p / total).collect()
}

fn store_wigner(spec: &SweepSpec, row: &mut SweepRow, grid: WignerGrid) {
    let eta = negativity(&grid);
    row.values.insert("eta", eta.eta);
    row.values.insert("eta_err", eta.error_estimate);
    row.values.insert("W_min", grid.min());
    row.values.insert("W_max_abs", grid.max_abs());
    if spec.wants(Quantity::Wigner) {
        row.wigner = Some(grid);
    }
}

/// Evaluates one point, growing `n_max` on truncation failures when allowed.
pub fn run_point(spec: &SweepSpec, index: usize, model: &Model) -> SweepRow {
    let mut current = model.clone();
    loop {
        let mut row = SweepRow {
            index,
            model: current.clone(),
            values: HashMap::new(),
            method: None,
            pn: None,
            wigner: None,
            g2: None,
            n_max: current.n_max(),
            diagnostics: Vec::new(),
            error: None,
        };
        let [om, g0, eps] = current.coords();
        row.values.insert("Omega", om);
        row.values.insert("g0", g0);
        row.values.insert("epsilon", eps);
        match evaluate(spec, &current, &mut row) {
            Ok(()) => return row,
            Err(Error::Truncation(msg)) => {
                let next = current.n_max() + current.n_max() / 2;
                match spec.n_max_limit {
                    Some(limit) if current.n_max() < limit => {
                        current = current.with_n_max(next.min(limit));
                    }
                    _ => {
                        row.error = Some(format!("truncation too small: {msg}"));
                        return row;
                    }
                }
            }
            Err(e) => {
                row.error = Some(e.to_string());
                return row;
            }
        }
    }
}

/// Runs every point of the sweep; rows come back in sweep order whatever
/// the number of workers.
pub fn run_sweep(spec: &SweepSpec, workers: usize) -> Result<SweepTable> {
    use rayon::prelude::*;
    spec.validate()?;
    // points are the unit of parallelism; threaded kernels would make the
    // last digits depend on the pool size
    faer::set_global_parallelism(faer::Par::Seq);
    let points = spec.points();
    let rows: Vec<SweepRow> = if workers <= 1 {
        points.iter().enumerate().map(|(i, m)| run_point(spec, i, m)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidParams(format!("worker pool: {e}")))?;
        pool.install(|| points.par_iter().enumerate().map(|(i, m)| run_point(spec, i, m)).collect())
    };
    Ok(SweepTable { columns: spec.columns(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omega_axis(count: usize) -> Axis {
        Axis { variable: Variable::Omega, start: 1e-3, stop: 2e-2, count, spacing: Spacing::Log }
    }

    fn small_system() -> Model {
        Model::System(SystemParams { n_max: 60, ..SystemParams::limit_cycle(0.0) })
    }

    #[test]
    fn log_axis_endpoints() {
        let v = omega_axis(5).values();
        assert!((v[0] - 1e-3).abs() < 1e-18);
        assert!((v[4] - 2e-2).abs() < 1e-15);
        assert!((v[1] / v[0] - v[2] / v[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SweepSpec::new(vec![omega_axis(1)], small_system(), vec![Quantity::Nbar]);
        assert!(s.validate().is_err());
        s.axes = vec![Axis { start: 0.1, stop: 0.01, ..omega_axis(3) }];
        assert!(s.validate().is_err());
        s.axes = vec![omega_axis(3)];
        s.quantities = vec![Quantity::G2];
        assert!(s.validate().is_err());
        s.solver = Solver::Liouvillian;
        assert!(s.validate().is_ok());
        s.quantities = vec![Quantity::Proxy];
        assert!(s.validate().is_err());
    }

    #[test]
    fn parallel_matches_serial() {
        let spec = SweepSpec::new(vec![omega_axis(6)], small_system(), vec![Quantity::Nbar, Quantity::Fano, Quantity::Pn]);
        let a = run_sweep(&spec, 1).unwrap();
        let b = run_sweep(&spec, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.pn_csv(), b.pn_csv());
        assert!(a.to_csv().starts_with(crate::io::CSV_SCHEMA));
    }

    #[test]
    fn errors_stay_in_their_row() {
        // n_max too small for the upper end of the sweep
        let model = Model::System(SystemParams { n_max: 20, ..SystemParams::limit_cycle(0.0) });
        let spec = SweepSpec::new(vec![omega_axis(4)], model, vec![Quantity::Nbar]);
        let t = run_sweep(&spec, 1).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows[0].error.is_none());
        assert!(t.rows[3].error.as_deref().unwrap().contains("truncation"));
        assert!(t.error_count() > 0);
    }

    #[test]
    fn n_max_grows_on_truncation() {
        let model = Model::System(SystemParams { n_max: 20, ..SystemParams::limit_cycle(0.0) });
        let mut spec = SweepSpec::new(vec![omega_axis(4)], model, vec![Quantity::Nbar]);
        spec.n_max_limit = Some(200);
        let t = run_sweep(&spec, 1).unwrap();
        assert_eq!(t.error_count(), 0);
        assert!(t.rows[3].n_max > 20);
    }

    #[test]
    fn two_axes_outer_slowest() {
        let g_axis = Axis { variable: Variable::G0, start: 0.1, stop: 0.2, count: 2, spacing: Spacing::Linear };
        let spec = SweepSpec::new(vec![g_axis, omega_axis(3)], small_system(), vec![Quantity::Nbar]);
        let pts = spec.points();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[2].coords()[1], 0.1);
        assert_eq!(pts[3].coords()[1], 0.2);
        assert!((pts[3].coords()[0] - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn spec_json_roundtrip() {
        let text = r#"{
            "axes": [{"variable": "Omega", "start": 0.001, "stop": 0.03, "count": 5, "spacing": "log"}],
            "model": {"system": {"g0": 0.1, "Gamma": 0.01, "gamma": 1e-4, "gamma_phi": 1e-4,
                                  "epsilon": 0.01, "Omega": 0.0, "kT": 1.0}},
            "quantities": ["fano", "proxy", "nbar"]
        }"#;
        let spec: SweepSpec = serde_json::from_str(text).unwrap();
        spec.validate().unwrap();
        assert_eq!(spec.method, CountingMethod::EigenDerivative);
        assert!(spec.columns().contains(&"proxy"));
    }
}
