//! Command-line front end: configuration ingestion, experiment
//! orchestration, and CSV/JSON emission.
//!
//! Every subcommand is deterministic given its configuration and seed; CSV
//! bodies carry the full configuration as `# key=value` metadata lines and
//! contain no timestamps, so repeated runs are byte-identical. Exit codes:
//! 0 success, 1 configuration error, 2 numerical failure (with a diagnostic
//! JSON object on stderr).

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::blasso::{fw_solve, noise_measure, two_spike_sweep, FwOptions, Observation, SpikeMeasure};
use crate::certificate::{check_nd, convergence_study, eta_v, eta_w, Certificate, NdOptions};
use crate::error::{Error, Result};
use crate::kernel::{grid_points, CorrelationKernel, KernelSpec};
use crate::leastspace::{least_basis, least_basis_1d, LeastBasis};

/// One experiment, parseable from a single JSON document. Every field has a
/// default: unit-width Gaussian kernel, no spikes, `t = 1`, `λ = 1e-3`,
/// seed 0, 256-point grid, signed amplitudes, 40 solver iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kernel: KernelSpec,
    pub positions: Vec<Vec<f64>>,
    pub amplitudes: Vec<f64>,
    pub t: f64,
    pub lambda: f64,
    /// When nonempty, `solve` runs once per λ in order.
    pub lambda_schedule: Vec<f64>,
    pub seed: u64,
    pub grid: usize,
    pub nonneg: bool,
    pub max_iters: usize,
    /// Output directory; `None` prints to stdout.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel: KernelSpec {
                kernel: "gaussian_unit".into(),
                sigma: None,
                fc: None,
                normalized: None,
                max_order: None,
            },
            positions: Vec::new(),
            amplitudes: Vec::new(),
            t: 1.0,
            lambda: 1e-3,
            lambda_schedule: Vec::new(),
            seed: 0,
            grid: 256,
            nonneg: false,
            max_iters: 40,
            out: None,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
struct CommonArgs {
    /// Kernel name: gaussian2d | gaussian_unit | gmixture1d | neuro_disc | lowpass_torus
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    fc: Option<u32>,
    /// JSON experiment file; flags override its fields
    #[arg(long)]
    spikes: Option<PathBuf>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    nonneg: bool,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the least interpolant basis for a spike configuration
    Basis(CommonArgs),
    /// Evaluate the vanishing pre-certificate on a grid
    Etav(CommonArgs),
    /// Evaluate the limiting certificate on a grid
    Etaw(CommonArgs),
    /// Non-degeneracy report for a certificate
    CheckNd(CommonArgs),
    /// Sup-distance of the pre-certificate to its limit across scales
    Converge(CommonArgs),
    /// Solve the BLASSO with Frank-Wolfe
    Solve(CommonArgs),
    /// Two-spike stability sweep across cluster scales
    Sweep(CommonArgs),
    /// Named figure-data presets
    Figure {
        #[arg(long)]
        name: String,
        #[command(flatten)]
        common: CommonArgs,
    },
}

#[derive(Parser, Debug)]
#[command(name = "superres", about = "dual certificates and BLASSO solving for sparse super-resolution")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &common.spikes {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = &common.kernel {
        cfg.kernel.kernel = k.clone();
    }
    if common.sigma.is_some() {
        cfg.kernel.sigma = common.sigma;
    }
    if common.fc.is_some() {
        cfg.kernel.fc = common.fc;
    }
    if let Some(t) = common.t {
        cfg.t = t;
    }
    if let Some(l) = common.lambda {
        cfg.lambda = l;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(g) = common.grid {
        cfg.grid = g;
    }
    if common.nonneg {
        cfg.nonneg = true;
    }
    if let Some(m) = common.max_iters {
        cfg.max_iters = m;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

fn config_metadata(cfg: &ExperimentConfig) -> Vec<(String, String)> {
    vec![(
        "config".to_string(),
        serde_json::to_string(cfg).unwrap_or_default(),
    )]
}

/// Write a CSV with `# key=value` metadata lines to `out/<name>` or stdout.
fn emit_csv(
    out: &Option<PathBuf>,
    name: &str,
    metadata: &[(String, String)],
    header: &str,
    rows: &[String],
) -> Result<()> {
    let mut body = String::new();
    for (k, v) in metadata {
        body.push_str(&format!("# {k}={v}\n"));
    }
    body.push_str(header);
    body.push('\n');
    for r in rows {
        body.push_str(r);
        body.push('\n');
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn emit_json(out: &Option<PathBuf>, name: &str, value: &serde_json::Value) -> Result<()> {
    let body = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(name), body)?;
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn build_basis(kernel: &CorrelationKernel, positions: &[Vec<f64>]) -> Result<LeastBasis> {
    if kernel.dim() == 1 {
        if positions.is_empty() {
            return Err(Error::Config(
                "1-d certificates need a spike count: provide `positions`".into(),
            ));
        }
        Ok(least_basis_1d(positions.len() as u32))
    } else {
        least_basis(positions)
    }
}

fn cmd_basis(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let basis = build_basis(&kernel, &cfg.positions)?;
    let report = serde_json::json!({
        "polynomials": basis.basis.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        "leading_degrees": basis.leading_degrees,
        "center": basis.center,
        "scale": basis.scale,
        "condition": basis.condition,
    });
    emit_json(&cfg.out, "basis.json", &report)
}

fn certificate_grid_csv(
    cfg: &ExperimentConfig,
    cert: &Certificate,
    name: &str,
) -> Result<f64> {
    let kernel = cert.kernel();
    let d = kernel.dim();
    let pts = grid_points(&kernel.bounding_box(), cfg.grid);
    let mut rows = Vec::with_capacity(pts.len());
    let mut sup = f64::NEG_INFINITY;
    for p in &pts {
        let v = if kernel.contains(p) {
            let v = cert.eval(p)?;
            sup = sup.max(v);
            v
        } else {
            f64::NAN
        };
        let coords: Vec<String> = p.iter().map(|c| format!("{c:.17e}")).collect();
        rows.push(format!("{},{v:.17e}", coords.join(",")));
    }
    let header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    emit_csv(
        &cfg.out,
        name,
        &config_metadata(cfg),
        &format!("{},eta", header.join(",")),
        &rows,
    )?;
    Ok(sup)
}

fn cmd_etav(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let cert = eta_v(&kernel, &cfg.positions, cfg.t)?;
    let sup = certificate_grid_csv(cfg, &cert, "etav.csv")?;
    let report = serde_json::json!({
        "condition": cert.condition,
        "constraint_residual": cert.constraint_residual()?,
        "sup_on_grid": sup,
        "saturates_off_spikes": sup > 1.0,
    });
    emit_json(&cfg.out, "etav.json", &report)
}

fn cmd_etaw(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let basis = build_basis(&kernel, &cfg.positions)?;
    let cert = eta_w(&kernel, &cfg.positions, &basis)?;
    let sup = certificate_grid_csv(cfg, &cert, "etaw.csv")?;
    let report = serde_json::json!({
        "condition": cert.condition,
        "basis_condition": basis.condition,
        "constraint_residual": cert.constraint_residual()?,
        "sup_on_grid": sup,
        "saturates_off_cluster": sup > 1.0,
    });
    emit_json(&cfg.out, "etaw.json", &report)
}

fn cmd_check_nd(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    // t selects the pre-certificate; without it the limit is checked
    let cert = if cfg.t != 1.0 || cfg.positions.len() < 2 {
        eta_v(&kernel, &cfg.positions, cfg.t)?
    } else {
        let basis = build_basis(&kernel, &cfg.positions)?;
        eta_w(&kernel, &cfg.positions, &basis)?
    };
    let report = check_nd(
        &cert,
        &NdOptions {
            grid: cfg.grid,
            exclusion_radius: None,
        },
    )?;
    let value = serde_json::json!({
        "condition": cert.condition,
        "report": report,
    });
    emit_json(&cfg.out, "check_nd.json", &value)
}

const DEFAULT_T_LIST: [f64; 7] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01];

fn cmd_converge(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let study = convergence_study(&kernel, &cfg.positions, &DEFAULT_T_LIST, cfg.grid)?;
    let mut meta = config_metadata(cfg);
    meta.push(("slope".into(), format!("{:.6}", study.slope)));
    let rows: Vec<String> = study
        .rows
        .iter()
        .map(|(t, s)| format!("{t:.17e},{s:.17e}"))
        .collect();
    emit_csv(&cfg.out, "converge.csv", &meta, "t,sup_diff", &rows)?;
    emit_json(&cfg.out, "converge.json", &serde_json::json!({ "slope": study.slope }))
}

fn scaled_measure(kernel: &CorrelationKernel, cfg: &ExperimentConfig) -> Result<SpikeMeasure> {
    let z0 = kernel.z0();
    let amplitudes = if cfg.amplitudes.is_empty() {
        vec![1.0; cfg.positions.len()]
    } else {
        cfg.amplitudes.clone()
    };
    SpikeMeasure::new(
        cfg.positions
            .iter()
            .map(|z| {
                (0..z.len())
                    .map(|s| z0[s] + cfg.t * (z[s] - z0[s]))
                    .collect()
            })
            .collect(),
        amplitudes,
    )
}

fn cmd_solve(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let clean = scaled_measure(&kernel, cfg)?;
    let noise = noise_measure(cfg.seed, 20, 1e-3, &kernel)?;
    let opts = FwOptions {
        grid: cfg.grid,
        max_iters: cfg.max_iters,
        nonneg: cfg.nonneg,
        ..Default::default()
    };
    let lambdas: Vec<f64> = if cfg.lambda_schedule.is_empty() {
        vec![cfg.lambda]
    } else {
        cfg.lambda_schedule.clone()
    };
    let mut runs = Vec::new();
    for &lambda in &lambdas {
        let obs = Observation {
            clean: clean.clone(),
            noise: noise.clone(),
            noise_gain: lambda,
            kernel: kernel.clone(),
        };
        let (m, trace) = fw_solve(&obs, lambda, &opts)?;
        runs.push(serde_json::json!({
            "lambda": lambda,
            "measure": m,
            "trace": trace,
        }));
    }
    let value = serde_json::json!({
        "config": cfg,
        "runs": runs,
    });
    emit_json(&cfg.out, "solve.json", &value)
}

const SWEEP_T_LIST: [f64; 9] = [1.0, 0.7, 0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1];
/// Noise gain multiplier: 20 atoms of std 1e-3 have image norm ≈ 4.5e-3, so
/// gain 200λ keeps ‖w‖ ≈ 0.9λ — noise scaled linearly with λ and of its size.
const SWEEP_NOISE_MULT: f64 = 200.0;

fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let kernel = cfg.kernel.build()?;
    let amplitudes = if cfg.amplitudes.is_empty() {
        vec![1.0; cfg.positions.len()]
    } else {
        cfg.amplitudes.clone()
    };
    let c = cfg.lambda;
    let sweep = two_spike_sweep(
        &kernel,
        &cfg.positions,
        &amplitudes,
        &SWEEP_T_LIST,
        |t| c * t.powi(4),
        |t| SWEEP_NOISE_MULT * c * t.powi(4),
        cfg.seed,
        &FwOptions {
            grid: cfg.grid,
            max_iters: cfg.max_iters,
            nonneg: cfg.nonneg,
            ..Default::default()
        },
    )?;
    let rows: Vec<String> = sweep
        .rows
        .iter()
        .map(|r| {
            format!(
                "{:.17e},{:.17e},{:.17e},{},{:.17e},{:.17e},{:.17e},{}",
                r.t,
                r.lambda,
                r.noise_norm,
                r.spike_count,
                r.position_error,
                r.amplitude_error,
                r.error_ratio,
                r.failure.clone().unwrap_or_default()
            )
        })
        .collect();
    emit_csv(
        &cfg.out,
        "sweep.csv",
        &config_metadata(cfg),
        "t,lambda,noise_norm,spike_count,position_error,amplitude_error,error_ratio,failure",
        &rows,
    )
}

fn cmd_figure(name: &str, cfg: &ExperimentConfig) -> Result<()> {
    match name {
        "fig-etav-conv" => {
            let mut c = cfg.clone();
            c.positions = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
            c.grid = c.grid.min(64);
            cmd_converge(&c)
        }
        "fig-etaw" => {
            for (kernel, positions, file) in [
                (
                    "gaussian_unit",
                    vec![vec![0.0, 0.0], vec![0.0, 1.0]],
                    "etaw_gaussian.csv",
                ),
                (
                    "gmixture1d",
                    vec![vec![-0.5, 1.8], vec![0.5, 2.2]],
                    "etaw_gmixture.csv",
                ),
                (
                    "neuro_disc",
                    vec![vec![0.3, 0.2], vec![0.5, 0.45]],
                    "etaw_neuro.csv",
                ),
            ] {
                let mut c = cfg.clone();
                c.kernel = KernelSpec {
                    kernel: kernel.into(),
                    sigma: None,
                    fc: None,
                    normalized: None,
                    max_order: None,
                };
                c.positions = positions;
                c.grid = c.grid.min(128);
                let k = c.kernel.build()?;
                let basis = build_basis(&k, &c.positions)?;
                let cert = eta_w(&k, &c.positions, &basis)?;
                certificate_grid_csv(&c, &cert, file)?;
            }
            Ok(())
        }
        "fig-frank-wolfe" => {
            let mut c = cfg.clone();
            c.positions = vec![vec![0.0, 0.0], vec![1.0, 0.2], vec![0.3, 0.9]];
            c.amplitudes = vec![1.0, 0.8, 1.2];
            c.t = 0.5;
            c.grid = c.grid.min(128);
            c.lambda_schedule = vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3];
            cmd_solve(&c)
        }
        "fig-frank-wolfe-fixed" => {
            let mut c = cfg.clone();
            c.kernel = KernelSpec {
                kernel: "neuro_disc".into(),
                sigma: None,
                fc: None,
                normalized: None,
                max_order: None,
            };
            c.positions = vec![vec![0.4, 0.3], vec![0.6, 0.34], vec![0.46, 0.48]];
            c.amplitudes = vec![1.0, 1.0, 1.0];
            c.t = 1.0;
            c.lambda = 1e-6;
            c.grid = c.grid.min(96);
            cmd_solve(&c)
        }
        other => Err(Error::Config(format!("unknown figure preset `{other}`"))),
    }
}

fn dispatch(cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Basis(a) => cmd_basis(&load_config(a)?),
        Cmd::Etav(a) => cmd_etav(&load_config(a)?),
        Cmd::Etaw(a) => cmd_etaw(&load_config(a)?),
        Cmd::CheckNd(a) => cmd_check_nd(&load_config(a)?),
        Cmd::Converge(a) => cmd_converge(&load_config(a)?),
        Cmd::Solve(a) => cmd_solve(&load_config(a)?),
        Cmd::Sweep(a) => cmd_sweep(&load_config(a)?),
        Cmd::Figure { name, common } => cmd_figure(name, &load_config(common)?),
    }
}

fn is_numerical(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularSystem(_)
            | Error::RankDeficient { .. }
            | Error::NonPositiveDiagonal { .. }
            | Error::StructuralHypothesis(_)
            | Error::OrderCapExceeded { .. }
    )
}

/// Entry point: parse `argv` (including the program name), run the selected
/// subcommand, and return the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    if let Ok(threads) = std::env::var("SUPERRES_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            // ignore failure: the global pool may already be initialized
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.cmd) {
        Ok(()) => 0,
        Err(e) if is_numerical(&e) => {
            let diag = serde_json::json!({
                "error": "numerical",
                "message": e.to_string(),
            });
            eprintln!("{diag}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
