use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tlsmech::cavity::{cavity_liouvillian, cavity_rate_matrix, cavity_stationary, secular_ratio, CavityParams};
use tlsmech::counting::{flux_noise_eigen, flux_noise_pseudoinverse};
use tlsmech::dressed::rate_matrix_for;
use tlsmech::io::{csv, fmt_num, pn_csv};
use tlsmech::lindblad::{build_liouvillian, g2_and_mandel, stationary_dm, LindbladOptions};
use tlsmech::model::SystemParams;
use tlsmech::phonon_noise::{fano_proxy, NoiseSpectrum, NumberObservable};
use tlsmech::reproduce::{reproduce, seed_model, seed_sweep, Figure, Status};
use tlsmech::steady::{analytic_nbar, solve_stationary};
use tlsmech::sweep::{run_sweep, Model, SweepSpec};
use tlsmech::wigner::{negativity, wigner_from_dm, wigner_from_pn, GridSpec};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "TLSMECH_OUT";

/// Dressed-state mechanics of a sideband-driven two-level system
#[derive(Parser, Debug)]
#[command(name = "tlsmech", version, about)]
struct Cli {
    /// Output directory (default: $TLSMECH_OUT, else ./out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Source {
    /// JSON parameter file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Start from the parameters of a figure (fig2a, fig2b, fig3, fig4, figS1, figS2, figS3)
    #[arg(long)]
    seed_figure: Option<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    EigenDerivative,
    Pseudoinverse,
    Both,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SolverArg {
    Pauli,
    Liouvillian,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary state of the dressed-state rate equation
    Steady {
        #[command(flatten)]
        source: Source,
    },
    /// Mean photon flux, zero-frequency noise and Fano factor
    Fcs {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
    },
    /// Phonon-number noise spectrum and the Fano-factor proxy
    Noise {
        #[command(flatten)]
        source: Source,
        /// Frequencies of the spectrum
        #[arg(long, value_delimiter = ',', default_value = "0")]
        omega: Vec<f64>,
    },
    /// Stationary state of the full master equation, optionally g2(t)
    Lindblad {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        g2: bool,
        /// g2 is propagated up to this multiple of 1/gamma
        #[arg(long, default_value_t = 20.0)]
        t_max_factor: f64,
        #[arg(long, default_value_t = 240)]
        steps: usize,
        #[arg(long, default_value_t = LindbladOptions::default().max_superop_dim)]
        max_superop_dim: usize,
    },
    /// Wigner function of the stationary oscillator state and its negativity
    Wigner {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value = "pauli")]
        solver: SolverArg,
        /// Half-width of the phase-space window (default: sized to the state)
        #[arg(long)]
        extent: Option<f64>,
        /// Points per axis, odd
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, default_value_t = LindbladOptions::default().max_superop_dim)]
        max_superop_dim: usize,
    },
    /// Optomechanical cavity in the blockade regime
    Cavity {
        #[command(flatten)]
        source: Source,
        /// Also solve the master equation
        #[arg(long)]
        master: bool,
        #[arg(long, default_value_t = tlsmech::reproduce::CAVITY_SUPEROP_BUDGET)]
        max_superop_dim: usize,
    },
    /// Parameter sweep from a JSON sweep specification
    Sweep {
        #[command(flatten)]
        source: Source,
    },
    /// Recompute a figure and check it
    Reproduce {
        /// Figure id, or "all"
        figure: String,
    },
}

/// Failure classes with distinct exit codes.
enum Failure {
    Config(anyhow::Error),
    Point(anyhow::Error),
}

impl From<tlsmech::Error> for Failure {
    fn from(e: tlsmech::Error) -> Self {
        match e {
            tlsmech::Error::InvalidParams(_) | tlsmech::Error::Json(_) => Failure::Config(e.into()),
            other => Failure::Point(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match run(&cli, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Point(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli, out: &Path) -> Outcome {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match &cli.command {
        Command::Steady { source } => steady(source, out),
        Command::Fcs { source, method } => fcs(source, *method, out),
        Command::Noise { source, omega } => noise(source, omega, out),
        Command::Lindblad { source, g2, t_max_factor, steps, max_superop_dim } => {
            lindblad(source, *g2, *t_max_factor, *steps, *max_superop_dim, out)
        }
        Command::Wigner { source, solver, extent, resolution, max_superop_dim } => {
            wigner(source, *solver, *extent, *resolution, *max_superop_dim, out)
        }
        Command::Cavity { source, master, max_superop_dim } => cavity(source, *master, *max_superop_dim, out),
        Command::Sweep { source } => sweep(source, cli.workers, out),
        Command::Reproduce { figure } => reproduce_cmd(figure, cli.workers, out),
    }
}

fn figure(id: &str) -> anyhow::Result<Figure> {
    Ok(id.parse::<Figure>()?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn system_params(source: &Source) -> anyhow::Result<SystemParams> {
    match (&source.config, &source.seed_figure) {
        (Some(path), _) => read_json(path),
        (None, Some(id)) => match seed_model(figure(id)?) {
            Model::System(p) => Ok(p),
            Model::Cavity(_) => anyhow::bail!("figure {id} is a cavity figure; use the cavity subcommand"),
        },
        (None, None) => anyhow::bail!("one of --config or --seed-figure is required"),
    }
}

fn cavity_params(source: &Source) -> anyhow::Result<CavityParams> {
    match (&source.config, &source.seed_figure) {
        (Some(path), _) => read_json(path),
        (None, Some(id)) => match seed_model(figure(id)?) {
            Model::Cavity(p) => Ok(p),
            Model::System(_) => anyhow::bail!("figure {id} has no cavity parameters"),
        },
        (None, None) => Ok(CavityParams { n_max: tlsmech::reproduce::CAVITY_N_MAX, ..CavityParams::blockade(0.1) }),
    }
}

fn write(out: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    let path = out.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    Ok(())
}

fn pretty(v: &serde_json::Value) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn steady(source: &Source, out: &Path) -> Outcome {
    let p = system_params(source)?;
    let m = rate_matrix_for(&p)?;
    let s = solve_stationary(&m)?;
    let summary = json!({
        "params": p,
        "state": s,
        "analytic": analytic_nbar(&p),
        "notes": m.notes,
    });
    write(out, "steady.json", &pretty(&summary)?)?;
    write(out, "pn.csv", &s.pn_csv())?;
    write(out, "rates.csv", &m.to_triplet_csv())?;
    Ok(())
}

fn fcs(source: &Source, method: MethodArg, out: &Path) -> Outcome {
    let p = system_params(source)?;
    let m = rate_matrix_for(&p)?;
    let mut summary = json!({ "params": p });
    let eigen = matches!(method, MethodArg::EigenDerivative | MethodArg::Both).then(|| flux_noise_eigen(&m)).transpose()?;
    let pinv = matches!(method, MethodArg::Pseudoinverse | MethodArg::Both).then(|| flux_noise_pseudoinverse(&m)).transpose()?;
    if let Some(e) = &eigen {
        summary["eigen_derivative"] = serde_json::to_value(e).context("serializing")?;
    }
    if let Some(q) = &pinv {
        summary["pseudoinverse"] = serde_json::to_value(q).context("serializing")?;
    }
    if let (Some(e), Some(q)) = (&eigen, &pinv) {
        summary["relative_gap"] = json!(e.relative_gap(q));
    }
    write(out, "fcs.json", &pretty(&summary)?)?;
    Ok(())
}

fn noise(source: &Source, omegas: &[f64], out: &Path) -> Outcome {
    let p = system_params(source)?;
    let m = rate_matrix_for(&p)?;
    let obs = NumberObservable::new(&m);
    let mut spectrum = NoiseSpectrum::new(&m, &obs)?;
    let mut rows = Vec::with_capacity(omegas.len());
    for &w in omegas {
        rows.push(vec![fmt_num(w), fmt_num(spectrum.at(w)?)]);
    }
    write(out, "snn.csv", &csv(&["omega", "S_nn"], rows))?;
    let proxy = match fano_proxy(&m, &p) {
        Ok(f) => serde_json::to_value(f).context("serializing")?,
        Err(e @ tlsmech::Error::DivisionGuard(_)) => json!({ "error": e.to_string() }),
        Err(e) => return Err(e.into()),
    };
    write(out, "noise.json", &pretty(&json!({ "params": p, "proxy": proxy }))?)?;
    Ok(())
}

fn lindblad(source: &Source, g2: bool, t_max_factor: f64, steps: usize, budget: usize, out: &Path) -> Outcome {
    let p = system_params(source)?;
    let options = LindbladOptions { max_superop_dim: budget, ..LindbladOptions::default() };
    let l = build_liouvillian(&p, options)?;
    let s = stationary_dm(&l)?;
    let mut summary = json!({
        "params": p,
        "n_bar": s.n_bar,
        "tail_mass": s.tail_mass,
        "residual": s.residual,
        "min_eigenvalue": s.min_eigenvalue,
        "iterations": s.iterations,
        "diagnostics": s.diagnostics,
    });
    write(out, "lindblad_pn.csv", &pn_csv(&s.pn))?;
    write(out, "lindblad_rho.json", &s.phonon_matrix_json()?)?;
    if g2 {
        let c = g2_and_mandel(&l, &s, t_max_factor / p.mech_damping, steps)?;
        summary["flux"] = json!(c.flux);
        summary["fano_mandel"] = json!(c.fano);
        summary["g2_0"] = json!(c.g2[0]);
        write(out, "g2.csv", &c.to_csv())?;
    }
    write(out, "lindblad.json", &pretty(&summary)?)?;
    Ok(())
}

fn grid_spec(pn: &[f64], extent: Option<f64>, resolution: Option<usize>) -> GridSpec {
    let auto = GridSpec::for_distribution(pn);
    GridSpec { extent: extent.unwrap_or(auto.extent), resolution: resolution.unwrap_or(auto.resolution), ..auto }
}

fn wigner(
    source: &Source,
    solver: SolverArg,
    extent: Option<f64>,
    resolution: Option<usize>,
    budget: usize,
    out: &Path,
) -> Outcome {
    let p = system_params(source)?;
    let grid = match solver {
        SolverArg::Pauli => {
            let s = solve_stationary(&rate_matrix_for(&p)?)?;
            wigner_from_pn(&s.phonon_marginal, grid_spec(&s.phonon_marginal, extent, resolution))?
        }
        SolverArg::Liouvillian => {
            let options = LindbladOptions { max_superop_dim: budget, ..LindbladOptions::default() };
            let s = stationary_dm(&build_liouvillian(&p, options)?)?;
            wigner_from_dm(&s.phonon_matrix, grid_spec(&s.pn, extent, resolution))?
        }
    };
    let eta = negativity(&grid);
    write(out, "wigner.csv", &grid.to_csv())?;
    let extra = serde_json::to_value(eta).context("serializing")?;
    write(out, "wigner.json", &grid.header_json(Some(&extra))?)?;
    println!("eta = {}", fmt_num(eta.eta));
    Ok(())
}

fn cavity(source: &Source, master: bool, budget: usize, out: &Path) -> Outcome {
    let p = cavity_params(source)?;
    let m = cavity_rate_matrix(&p)?;
    let s = solve_stationary(&m)?;
    let grid = wigner_from_pn(&s.phonon_marginal, GridSpec::for_distribution(&s.phonon_marginal))?;
    let mut summary = json!({
        "params": p,
        "n_bar": s.n_bar,
        "flux": s.flux_total(),
        "eta": negativity(&grid),
        "secular_ratio": secular_ratio(&p)?,
        "notes": m.notes,
    });
    write(out, "cavity_pn.csv", &s.pn_csv())?;
    write(out, "cavity_wigner.csv", &grid.to_csv())?;
    if master {
        let options = LindbladOptions { max_superop_dim: budget, ..LindbladOptions::default() };
        let full = cavity_stationary(&cavity_liouvillian(&p, options)?)?;
        let full_grid = wigner_from_dm(&full.state.phonon_matrix, GridSpec::for_distribution(&full.state.pn))?;
        summary["master"] = json!({
            "n_bar": full.state.n_bar,
            "photon_populations": full.photon_populations,
            "eta": negativity(&full_grid),
            "residual": full.state.residual,
            "diagnostics": full.state.diagnostics,
        });
        write(out, "cavity_master_pn.csv", &pn_csv(&full.state.pn))?;
    }
    write(out, "cavity.json", &pretty(&summary)?)?;
    Ok(())
}

fn sweep(source: &Source, workers: usize, out: &Path) -> Outcome {
    let spec: SweepSpec = match (&source.config, &source.seed_figure) {
        (Some(path), _) => read_json(path)?,
        (None, Some(id)) => {
            seed_sweep(figure(id)?).with_context(|| format!("figure {id} has no sweep recipe"))?
        }
        (None, None) => return Err(anyhow::anyhow!("one of --config or --seed-figure is required").into()),
    };
    spec.validate()?;
    let table = run_sweep(&spec, workers)?;
    write(out, "sweep.csv", &table.to_csv())?;
    if table.rows.iter().any(|r| r.pn.is_some()) {
        write(out, "sweep_pn.csv", &table.pn_csv())?;
    }
    for r in &table.rows {
        if let Some(g) = &r.wigner {
            write(out, &format!("wigner_{:04}.csv", r.index), &g.to_csv())?;
        }
        if let Some(c) = &r.g2 {
            write(out, &format!("g2_{:04}.csv", r.index), &c.to_csv())?;
        }
    }
    let errors = table.error_count();
    if errors > 0 {
        return Err(Failure::Point(anyhow::anyhow!("{errors} of {} sweep points failed", table.rows.len())));
    }
    Ok(())
}

fn reproduce_cmd(id: &str, workers: usize, out: &Path) -> Outcome {
    let figures: Vec<Figure> =
        if id.eq_ignore_ascii_case("all") { Figure::ALL.to_vec() } else { vec![figure(id)?] };
    let mut failed = Vec::new();
    for f in figures {
        let bundle = reproduce(f, workers);
        bundle.write(out).with_context(|| format!("writing bundle {f}"))?;
        for c in &bundle.checks {
            println!("{f} {:<36} {:>14} target {:<16} {}", c.name, fmt_num(c.measured), c.target, if c.pass { "pass" } else { "FAIL" });
        }
        for e in &bundle.errors {
            eprintln!("{f}: {e}");
        }
        println!("{f} status {:?} ({:.1} s)", bundle.status, bundle.elapsed_seconds);
        if bundle.status == Status::Error {
            failed.push(f);
        }
    }
    if !failed.is_empty() {
        return Err(Failure::Point(anyhow::anyhow!("figures with errors: {failed:?}")));
    }
    Ok(())
}
