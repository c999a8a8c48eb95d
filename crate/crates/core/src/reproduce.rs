//! Canned figure recipes: data files plus a summary of the checks made on
//! them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::cavity::{cavity_liouvillian, cavity_rate_matrix, cavity_state, CavityParams};
use crate::error::{Error, Result};
use crate::io::{csv, fmt_num};
use crate::lindblad::LindbladOptions;
use crate::model::SystemParams;
use crate::steady::{analytic_nbar, solve_stationary};
use crate::sweep::{run_point, run_sweep, Axis, Model, Quantity, Solver, Spacing, SweepSpec, SweepTable, Variable};
use crate::wigner::{negativity, wigner_from_dm, wigner_from_pn, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2a,
    Fig2b,
    Fig3,
    Fig4,
    #[serde(rename = "figS1")]
    FigS1,
    #[serde(rename = "figS2")]
    FigS2,
    #[serde(rename = "figS3")]
    FigS3,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig2a, Figure::Fig2b, Figure::Fig3, Figure::Fig4, Figure::FigS1, Figure::FigS2, Figure::FigS3];

    pub fn as_str(self) -> &'static str {
        match self {
            Figure::Fig2a => "fig2a",
            Figure::Fig2b => "fig2b",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::FigS1 => "figS1",
            Figure::FigS2 => "figS2",
            Figure::FigS3 => "figS3",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .iter()
            .copied()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParams(format!("unknown figure id {s:?}")))
    }
}

/// Drive strengths of the three distributions of the limit-cycle figure.
pub const FIG2A_DRIVES: [f64; 3] = [1e-3, 1.5e-2, 3e-2];

/// Parameter set a figure is computed at, used to seed single-point runs.
pub fn seed_model(figure: Figure) -> Model {
    match figure {
        Figure::Fig2a | Figure::Fig2b | Figure::FigS1 => Model::System(SystemParams::limit_cycle(FIG2A_DRIVES[0])),
        Figure::Fig3 | Figure::Fig4 => Model::System(SystemParams::strong_coupling(0.58, 0.16)),
        Figure::FigS2 => Model::System(SystemParams::non_secular(0.5, 0.05)),
        Figure::FigS3 => Model::Cavity(CavityParams::blockade(0.1)),
    }
}

/// Sweep behind a figure, when it has one.
pub fn seed_sweep(figure: Figure) -> Option<SweepSpec> {
    let log_omega = |start, stop, count| Axis { variable: Variable::Omega, start, stop, count, spacing: Spacing::Log };
    match figure {
        Figure::Fig2b => Some(SweepSpec::new(
            vec![log_omega(1e-3, 3e-2, 25)],
            Model::System(SystemParams::limit_cycle(0.0)),
            vec![Quantity::Fano, Quantity::Proxy, Quantity::Nbar],
        )),
        Figure::FigS1 => Some(SweepSpec::new(
            vec![Axis { variable: Variable::Omega, start: 1e-3, stop: 8e-3, count: 10, spacing: Spacing::Linear }],
            Model::System(SystemParams::limit_cycle(0.0)),
            vec![Quantity::Nbar, Quantity::Flux],
        )),
        Figure::Fig4 => {
            let mut s = SweepSpec::new(
                vec![
                    Axis { variable: Variable::G0, start: 0.2, stop: 0.9, count: 12, spacing: Spacing::Linear },
                    Axis { variable: Variable::Omega, start: 0.02, stop: 0.3, count: 12, spacing: Spacing::Linear },
                ],
                Model::System(SystemParams::strong_coupling(0.5, 0.1)),
                vec![Quantity::Eta, Quantity::Nbar],
            );
            s.n_max_limit = Some(400);
            Some(s)
        }
        Figure::FigS2 => {
            let mut s = SweepSpec::new(
                vec![log_omega(3e-3, 3e-2, 7)],
                Model::System(SystemParams::non_secular(0.1, 0.0)),
                vec![Quantity::Fano, Quantity::G2, Quantity::Nbar],
            );
            s.solver = Solver::Liouvillian;
            s.n_max_limit = Some(90);
            Some(s)
        }
        Figure::Fig2a | Figure::Fig3 | Figure::FigS3 => None,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, measured: f64, target: impl Into<String>, pass: bool) -> Self {
        Self { name: name.into(), measured, target: target.into(), pass: pass && measured.is_finite() }
    }

    pub fn within(name: &str, measured: f64, center: f64, tol: f64) -> Self {
        Self::new(name, measured, format!("{center} +- {tol}"), (measured - center).abs() <= tol)
    }

    pub fn below(name: &str, measured: f64, limit: f64) -> Self {
        Self::new(name, measured, format!("< {limit}"), measured < limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Bundle {
    pub figure: Figure,
    pub status: Status,
    pub checks: Vec<Check>,
    pub errors: Vec<String>,
    pub elapsed_seconds: f64,
    #[serde(skip)]
    pub files: Vec<(String, String)>,
}

impl Bundle {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary_json(&self) -> Result<String> {
        let file_names: Vec<&str> = self.files.iter().map(|(n, _)| n.as_str()).collect();
        let mut v = serde_json::to_value(self)?;
        v["files"] = serde_json::to_value(file_names)?;
        Ok(serde_json::to_string_pretty(&v)?)
    }

    /// Writes the data files and `summary.json` into `dir/<figure>`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let out = dir.join(self.figure.as_str());
        std::fs::create_dir_all(&out)?;
        for (name, content) in &self.files {
            std::fs::write(out.join(name), content)?;
        }
        std::fs::write(out.join("summary.json"), self.summary_json()?)?;
        Ok(())
    }
}

#[derive(Default)]
struct Builder {
    checks: Vec<Check>,
    errors: Vec<String>,
    files: Vec<(String, String)>,
}

impl Builder {
    fn file(&mut self, name: &str, content: String) {
        self.files.push((name.to_string(), content));
    }

    fn table(&mut self, name: &str, table: &SweepTable) {
        for r in &table.rows {
            if let Some(e) = &r.error {
                self.errors.push(format!("point {}: {e}", r.index));
            }
        }
        self.file(name, table.to_csv());
    }
}

/// Runs the recipe of `figure`. Failures are reported in the bundle status.
pub fn reproduce(figure: Figure, workers: usize) -> Bundle {
    let start = Instant::now();
    let mut b = Builder::default();
    let outcome = match figure {
        Figure::Fig2a => fig2a(&mut b, workers),
        Figure::Fig2b => fig2b(&mut b, workers),
        Figure::Fig3 => fig3(&mut b),
        Figure::Fig4 => fig4(&mut b, workers),
        Figure::FigS1 => fig_s1(&mut b, workers),
        Figure::FigS2 => fig_s2(&mut b, workers),
        Figure::FigS3 => fig_s3(&mut b),
    };
    if let Err(e) = outcome {
        b.errors.push(e.to_string());
    }
    let status = if !b.errors.is_empty() {
        Status::Error
    } else if b.checks.iter().all(|c| c.pass) {
        Status::Pass
    } else {
        Status::Fail
    };
    Bundle {
        figure,
        status,
        checks: b.checks,
        errors: b.errors,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        files: b.files,
    }
}

/// `max_n |F_P(n) - F_Q(n)|` over cumulative distributions.
pub fn kolmogorov_distance(p: &[f64], q: &[f64]) -> f64 {
    let (mut cp, mut cq, mut worst) = (0.0, 0.0, 0.0f64);
    for (a, b) in p.iter().zip(q) {
        cp += a;
        cq += b;
        worst = worst.max((cp - cq).abs());
    }
    worst
}

/// Boltzmann distribution of the oscillator over `levels` Fock states.
pub fn boltzmann(kt: f64, levels: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..levels).map(|n| (-(n as f64) / kt).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// Largest `|P_n / Q_n - 1|` over levels where `Q_n > floor`.
pub fn max_relative_deviation(p: &[f64], q: &[f64], floor: f64) -> f64 {
    p.iter().zip(q).filter(|(_, b)| **b > floor).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max)
}

fn fig2a(b: &mut Builder, workers: usize) -> Result<()> {
    let models: Vec<Model> = FIG2A_DRIVES.iter().map(|&om| Model::System(SystemParams::limit_cycle(om))).collect();
    let spec = SweepSpec::new(
        vec![Axis { variable: Variable::Omega, start: 0.0, stop: 1.0, count: 2, spacing: Spacing::Linear }],
        models[0].clone(),
        vec![Quantity::Pn, Quantity::Nbar],
    );
    faer::set_global_parallelism(faer::Par::Seq);
    let rows: Vec<_> = if workers > 1 {
        use rayon::prelude::*;
        models.par_iter().enumerate().map(|(i, m)| run_point(&spec, i, m)).collect()
    } else {
        models.iter().enumerate().map(|(i, m)| run_point(&spec, i, m)).collect()
    };
    let table = SweepTable { columns: spec.columns(), rows };
    b.table("fig2a.csv", &table);
    b.file("fig2a_pn.csv", table.pn_csv());
    let thermal = table.rows[0].pn.as_ref().ok_or_else(|| Error::Convergence("weak-drive point failed".into()))?;
    let reference = boltzmann(1.0, thermal.len());
    b.checks.push(Check::below("kolmogorov_distance_weak_drive", kolmogorov_distance(thermal, &reference), 0.02));
    b.checks.push(Check::below("max_relative_deviation_weak_drive", max_relative_deviation(thermal, &reference, 1e-4), 0.02));
    if let Some(strong) = &table.rows[2].pn {
        let peak = strong.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).map(|(n, _)| n).unwrap_or(0);
        let is_local_max = peak > 0 && strong[peak] > strong[peak - 1];
        b.checks.push(Check::new("strong_drive_peak_level", peak as f64, "local maximum at n > 0", is_local_max));
    }
    Ok(())
}

/// Index of the largest finite value in a column.
fn argmax(table: &SweepTable, column: &str) -> Option<usize> {
    table
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.get(column).filter(|v| v.is_finite()).map(|v| (i, v)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Peak checks shared by the Fano sweep of the limit-cycle figure.
pub fn fano_peak_checks(table: &SweepTable, omega_star: f64) -> Vec<Check> {
    let mut checks = Vec::new();
    let (Some(i_f), Some(i_p)) = (argmax(table, "F"), argmax(table, "proxy")) else {
        checks.push(Check::new("fano_peak_found", f64::NAN, "peak in F and proxy", false));
        return checks;
    };
    let row = &table.rows[i_f];
    let omega_peak = row.get("Omega").unwrap_or(f64::NAN);
    let ratio = omega_peak / omega_star;
    checks.push(Check::new("fano_peak_omega_over_omega_star", ratio, "[0.5, 2]", (0.5..=2.0).contains(&ratio)));
    let peak_f = row.get("F").unwrap_or(f64::NAN);
    checks.push(Check::new("fano_peak_value", peak_f, ">= 10", peak_f >= 10.0));
    let offset = (i_f as f64 - i_p as f64).abs();
    checks.push(Check::new("proxy_peak_offset_points", offset, "<= 1", offset <= 1.0));
    let f_over_proxy = peak_f / row.get("proxy").unwrap_or(f64::NAN);
    checks.push(Check::new("fano_over_proxy_at_peak", f_over_proxy, "[1.5, 3.5]", (1.5..=3.5).contains(&f_over_proxy)));
    checks
}

fn fig2b(b: &mut Builder, workers: usize) -> Result<()> {
    let spec = seed_sweep(Figure::Fig2b).expect("fig2b sweep");
    let table = run_sweep(&spec, workers)?;
    b.table("fig2b.csv", &table);
    let omega_star = analytic_nbar(&SystemParams::limit_cycle(0.01)).omega_star;
    b.checks.extend(fano_peak_checks(&table, omega_star));
    Ok(())
}

fn fig3(b: &mut Builder) -> Result<()> {
    let p = SystemParams::strong_coupling(0.58, 0.16);
    let s = solve_stationary(&crate::dressed::rate_matrix_for(&p)?)?;
    let grid = wigner_from_pn(&s.phonon_marginal, GridSpec::for_distribution(&s.phonon_marginal))?;
    let eta = negativity(&grid);
    b.file("fig3_pn.csv", s.pn_csv());
    b.file("fig3_wigner.csv", grid.to_csv());
    b.file("fig3_wigner.json", grid.header_json(Some(&serde_json::to_value(eta)?))?);
    b.checks.push(Check::within("eta", eta.eta, 0.013, 0.003));
    Ok(())
}

/// Maximal runs of consecutive outer-axis rows whose largest value of
/// `column` exceeds `threshold`.
pub fn bands(table: &SweepTable, inner: usize, column: &str, threshold: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    let rows = table.rows.len() / inner;
    for r in 0..rows {
        let best = table.rows[r * inner..(r + 1) * inner]
            .iter()
            .filter_map(|row| row.get(column))
            .fold(f64::NEG_INFINITY, f64::max);
        match (best > threshold, open) {
            (true, None) => open = Some(r),
            (false, Some(s)) => {
                out.push((s, r - 1));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        out.push((s, rows - 1));
    }
    out
}

fn fig4(b: &mut Builder, workers: usize) -> Result<()> {
    let spec = seed_sweep(Figure::Fig4).expect("fig4 sweep");
    let table = run_sweep(&spec, workers)?;
    b.table("fig4.csv", &table);
    let max_eta = table.rows.iter().filter_map(|r| r.get("eta")).fold(f64::NEG_INFINITY, f64::max);
    b.checks.push(Check::new("max_eta", max_eta, "[0.015, 0.03]", (0.015..=0.03).contains(&max_eta)));
    let found = bands(&table, spec.axes[1].count, "eta", 0.005);
    b.checks.push(Check::new("g0_bands_above_0.5pct", found.len() as f64, ">= 2", found.len() >= 2));
    Ok(())
}

fn fig_s1(b: &mut Builder, workers: usize) -> Result<()> {
    let spec = seed_sweep(Figure::FigS1).expect("figS1 sweep");
    let table = run_sweep(&spec, workers)?;
    let base = SystemParams::limit_cycle(0.0);
    let nb = base.bose();
    let mut rows = Vec::new();
    let (mut worst_damping, mut worst_gain) = (0.0f64, 0.0f64);
    for r in &table.rows {
        if let Some(e) = &r.error {
            b.errors.push(format!("point {}: {e}", r.index));
            continue;
        }
        let (om, n, i) = (r.get("Omega").unwrap(), r.get("n_bar").unwrap(), r.get("I_bar").unwrap());
        let damping = base.mech_damping * (n - nb);
        let a = analytic_nbar(&SystemParams { drive: om, ..base.clone() }).a;
        let gain = base.tls_decay * a * (n + 1.0);
        worst_damping = worst_damping.max(((i - damping) / i).abs());
        worst_gain = worst_gain.max(((i - gain) / i).abs());
        rows.push([om, n, i, damping, gain].iter().map(|v| fmt_num(*v)).collect::<Vec<_>>());
    }
    b.file("figS1.csv", csv(&["Omega", "n_bar", "I_bar", "gamma_excess", "Gamma_A_n_plus_1"], rows));
    b.checks.push(Check::below("flux_vs_phonon_damping_rel", worst_damping, 0.05));
    b.checks.push(Check::below("flux_vs_dressed_gain_rel", worst_gain, 0.10));
    Ok(())
}

fn fig_s2(b: &mut Builder, workers: usize) -> Result<()> {
    let spec = seed_sweep(Figure::FigS2).expect("figS2 sweep");
    let table = run_sweep(&spec, workers)?;
    b.table("figS2a.csv", &table);
    let mut g2_rows = Vec::new();
    let mut worst_tail = 0.0f64;
    for r in &table.rows {
        if let Some(c) = &r.g2 {
            for (t, g) in c.times.iter().zip(&c.g2) {
                g2_rows.push(vec![r.index.to_string(), fmt_num(*t), fmt_num(*g)]);
            }
            worst_tail = worst_tail.max((c.g2.last().copied().unwrap_or(f64::NAN) - 1.0).abs());
        }
    }
    b.file("figS2a_g2.csv", csv(&["point", "t", "g2"], g2_rows));
    b.checks.push(Check::below("g2_long_time_deviation", worst_tail, 0.01));

    let p = SystemParams::non_secular(0.5, 0.05);
    let l = crate::lindblad::build_liouvillian(&p, LindbladOptions::default())?;
    let s = crate::lindblad::stationary_dm(&l)?;
    let grid = wigner_from_dm(&s.phonon_matrix, GridSpec::for_distribution(&s.pn))?;
    let eta = negativity(&grid);
    b.file("figS2b_pn.csv", crate::io::pn_csv(&s.pn));
    b.file("figS2b_wigner.csv", grid.to_csv());
    b.file("figS2b_wigner.json", grid.header_json(Some(&serde_json::to_value(eta)?))?);
    b.file("figS2b_rho.json", s.phonon_matrix_json()?);
    b.checks.push(Check::within("eta", eta.eta, 0.013, 0.003));
    Ok(())
}

/// Phonon levels of the cavity runs; the distribution reaches `n ~ 100`.
pub const CAVITY_N_MAX: usize = 130;

/// Superoperator budget of the cavity runs.
pub const CAVITY_SUPEROP_BUDGET: usize = 200_000;

fn fig_s3(b: &mut Builder) -> Result<()> {
    let p = CavityParams { n_max: CAVITY_N_MAX, ..CavityParams::blockade(0.1) };
    let pauli = solve_stationary(&cavity_rate_matrix(&p)?)?;
    let grid = wigner_from_pn(&pauli.phonon_marginal, GridSpec::for_distribution(&pauli.phonon_marginal))?;
    let eta = negativity(&grid);
    b.file("figS3_wigner.csv", grid.to_csv());
    b.file("figS3_wigner.json", grid.header_json(Some(&serde_json::to_value(eta)?))?);
    b.checks.push(Check::within("eta_pauli", eta.eta, 0.0142, 0.003));

    let options = LindbladOptions { max_superop_dim: CAVITY_SUPEROP_BUDGET, ..LindbladOptions::default() };
    let full = cavity_state(&cavity_liouvillian(&p, options)?)?;
    let full_grid = wigner_from_dm(&full.state.phonon_matrix, GridSpec::for_distribution(&full.state.pn))?;
    b.checks.push(Check::within("eta_master_equation", negativity(&full_grid).eta, 0.0142, 0.003));
    let deviation = max_relative_deviation(&full.state.pn, &pauli.phonon_marginal, 1e-3);
    b.checks.push(Check::below("pn_pauli_vs_master_rel", deviation, 0.05));
    b.checks.push(Check::below("two_photon_population", full.photon_populations[2], crate::cavity::BLOCKADE_TOL));
    let rows = pauli
        .phonon_marginal
        .iter()
        .zip(&full.state.pn)
        .enumerate()
        .map(|(n, (a, c))| vec![n.to_string(), fmt_num(*a), fmt_num(*c)]);
    b.file("figS3_pn.csv", csv(&["n", "P_n_pauli", "P_n_master"], rows));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_roundtrip() {
        for f in Figure::ALL {
            assert_eq!(f.as_str().parse::<Figure>().unwrap(), f);
            assert_eq!(serde_json::to_value(f).unwrap(), serde_json::Value::String(f.as_str().into()));
        }
        assert!("fig9".parse::<Figure>().is_err());
    }

    #[test]
    fn kolmogorov_of_identical_is_zero() {
        let q = boltzmann(1.0, 30);
        assert_eq!(kolmogorov_distance(&q, &q), 0.0);
        let shifted: Vec<f64> = std::iter::once(0.0).chain(q.iter().copied().take(29)).collect();
        assert!((kolmogorov_distance(&q, &shifted) - q[0]).abs() < 1e-15);
    }

    #[test]
    fn fig2a_bundle_passes_thermal_checks() {
        let bundle = reproduce(Figure::Fig2a, 1);
        assert!(bundle.errors.is_empty(), "{:?}", bundle.errors);
        let ks = bundle.check("kolmogorov_distance_weak_drive").unwrap();
        assert!(ks.pass, "{ks:?}");
        assert!(bundle.check("strong_drive_peak_level").unwrap().pass);
        let json: serde_json::Value = serde_json::from_str(&bundle.summary_json().unwrap()).unwrap();
        assert_eq!(json["figure"], "fig2a");
        assert_eq!(json["files"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn fig3_bundle_written() {
        let bundle = reproduce(Figure::Fig3, 1);
        assert_eq!(bundle.status, Status::Pass, "{:?}", bundle.checks);
        let dir = std::env::temp_dir().join(format!("tlsmech-fig3-{}", std::process::id()));
        bundle.write(&dir).unwrap();
        assert!(dir.join("fig3/summary.json").exists());
        assert!(std::fs::read_to_string(dir.join("fig3/fig3_pn.csv")).unwrap().starts_with(crate::io::CSV_SCHEMA));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
