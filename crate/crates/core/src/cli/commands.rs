use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use super::output::{emit_report, write_atomic};
use super::{CliError, RunConfig};
use crate::discretize::AcousticParams;
use crate::interconnect::{build_model, couple, ModelKind};
use crate::linalg::max_abs;
use crate::lti::{PassiveBlock, PASSIVITY_TOL};
use crate::spectral::{
    acoustic_transfer_real_part, decay_rate_fit, default_decay_window, fit_lower_bound,
    fit_power_law, heat_transfer_real_part, linear_grid, log_grid, resolvent_envelope,
    resolvent_scan, BoundFit, FrequencyScan, ResolventOperator, ScanKind,
};
use crate::timestep::{fmt_f64, simulate, EnergyTrace};

/// Relative slack on energy growth per step accepted by `simulate`.
const MONOTONE_TOL: f64 = 1e-10;

pub fn cmd_simulate(config: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    let out = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.outputs.trace.clone())
        .ok_or_else(|| CliError::Validation("no trace path (use --out or outputs.trace)".into()))?;
    if cfg.snapshot_every > 0 && cfg.outputs.snapshots.is_none() {
        return Err(CliError::Validation(
            "snapshot_every > 0 needs outputs.snapshots".into(),
        ));
    }
    let spec = cfg.model_spec()?;
    let (dt, steps) = cfg.schedule(&spec)?;
    let data = cfg.initial_data(&spec)?;
    let system = build_model(&spec)?;
    let trace = simulate(&system, &data.state, dt, steps, cfg.snapshot_every)?;

    let e0 = trace.total[0];
    if let Some(i) = trace
        .total
        .windows(2)
        .position(|w| w[1] > w[0] + MONOTONE_TOL * e0)
    {
        return Err(CliError::Numerical(format!(
            "energy increased at t = {}: {} -> {}",
            trace.times[i + 1],
            trace.total[i],
            trace.total[i + 1]
        )));
    }
    write_atomic(&out, |w| trace.write_csv(w))?;
    if let Some(path) = &cfg.outputs.snapshots {
        if cfg.snapshot_every > 0 {
            write_atomic(path, |w| write_snapshots(&trace, w))?;
        }
    }
    Ok(())
}

fn write_snapshots(trace: &EnergyTrace, w: &mut dyn Write) -> std::io::Result<()> {
    let n = trace.snapshots.first().map_or(0, |(_, x)| x.len());
    write!(w, "t")?;
    for i in 0..n {
        write!(w, ",x{i}")?;
    }
    writeln!(w)?;
    for (t, x) in &trace.snapshots {
        write!(w, "{}", fmt_f64(*t))?;
        for v in x.iter() {
            write!(w, ",{}", fmt_f64(*v))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PassivityArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Absolute tolerance on the KYP eigenvalues.
    #[arg(long, default_value_t = PASSIVITY_TOL)]
    pub tol: f64,
    /// JSON report path (the report is also printed).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace the plant feedthrough with this value (test hook).
    #[arg(long, hide = true, allow_hyphen_values = true)]
    pub inject_feedthrough: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BlockReport {
    label: String,
    states: usize,
    kyp_residual: f64,
    /// `max |MA + AᵀM|`
    energy_skew_residual: f64,
    is_energy_skew: bool,
    /// `max |MB - Cᵀ|`
    port_residual: f64,
    passive: bool,
}

impl BlockReport {
    fn new(block: &PassiveBlock, tol: f64) -> Self {
        let kyp_residual = block.kyp_residual();
        BlockReport {
            label: block.label().to_string(),
            states: block.n(),
            kyp_residual,
            energy_skew_residual: max_abs(&block.dissipation_form()),
            is_energy_skew: block.is_energy_skew(tol),
            port_residual: max_abs(&(block.mass() * block.b() - block.c().transpose())),
            passive: kyp_residual <= tol,
        }
    }
}

#[derive(Debug, Serialize)]
struct CoupledReport {
    states: usize,
    max_dissipation_eigenvalue: f64,
    contractive: bool,
}

#[derive(Debug, Serialize)]
struct PassivityReport {
    model: String,
    tol: f64,
    plant: BlockReport,
    controller: BlockReport,
    coupled: CoupledReport,
    pass: bool,
}

pub fn cmd_passivity_check(args: &PassivityArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(CliError::Validation(format!(
            "tolerance must be nonnegative, got {}",
            args.tol
        )));
    }
    let spec = cfg.model_spec()?;
    let mut system = build_model(&spec)?;
    if let Some(d) = args.inject_feedthrough {
        let plant = system
            .plant()
            .clone()
            .with_feedthrough(DMatrix::from_element(1, 1, d))?;
        system = couple(plant, system.controller().clone(), spec.convention)?;
    }
    let plant = BlockReport::new(system.plant(), args.tol);
    let controller = BlockReport::new(system.controller(), args.tol);
    let lambda = system.max_dissipation_eigenvalue();
    let coupled = CoupledReport {
        states: system.n(),
        max_dissipation_eigenvalue: lambda,
        contractive: lambda <= args.tol,
    };
    let pass = plant.passive && controller.passive && coupled.contractive;
    let report = PassivityReport {
        model: spec.kind.name().to_string(),
        tol: args.tol,
        plant,
        controller,
        coupled,
        pass,
    };
    emit_report(&report, args.out.as_deref())?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation("passivity check failed".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferModel {
    Heat,
    Acoustic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Log,
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct TransferArgs {
    #[arg(long, value_enum)]
    pub model: TransferModel,
    /// Exponent in η₀/(1+|s|^α); defaults to 0.5 (heat) or 2 (acoustic).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Start of the scan and of the bound; defaults to π/2 (heat) or 1 (acoustic).
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub s_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, value_enum, default_value_t = GridKind::Log)]
    pub grid: GridKind,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    #[arg(long, default_value_t = 1.0)]
    pub d: f64,
    #[arg(long, default_value_t = 1.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// Stiffness T(1) at the oscillator end.
    #[arg(long, default_value_t = 1.0)]
    pub t1: f64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct TransferReport {
    model: TransferModel,
    kind: ScanKind,
    /// η₀ is `fit.constant`.
    fit: BoundFit,
}

pub fn cmd_transfer_scan(args: &TransferArgs) -> Result<(), CliError> {
    let (alpha, s0) = match args.model {
        TransferModel::Heat => (0.5, std::f64::consts::FRAC_PI_2),
        TransferModel::Acoustic => (2.0, 1.0),
    };
    let alpha = args.alpha.unwrap_or(alpha);
    let s0 = args.s0.unwrap_or(s0);
    let grid = match args.grid {
        GridKind::Log => log_grid(s0, args.s_max, args.points)?,
        GridKind::Linear => linear_grid(s0, args.s_max, args.points)?,
    };
    let scan = match args.model {
        TransferModel::Heat => FrequencyScan::sample(ScanKind::TransferRealPart, grid, |s| {
            Ok(heat_transfer_real_part(s))
        })?,
        TransferModel::Acoustic => {
            let p = AcousticParams {
                mass: args.m,
                damping: args.d,
                spring: args.k,
                beta: args.beta,
                stiffness_end: args.t1,
            };
            p.validate()?;
            FrequencyScan::sample(ScanKind::TransferRealPart, grid, |s| {
                Ok(acoustic_transfer_real_part(s, &p))
            })?
        }
    };
    let fit = fit_lower_bound(&scan, alpha, s0)?;
    if let Some(path) = &args.out_csv {
        write_atomic(path, |w| scan.write_csv(w))?;
    }
    let report = TransferReport {
        model: args.model,
        kind: scan.kind(),
        fit,
    };
    emit_report(&report, args.out_json.as_deref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolventMode {
    /// Refined local maxima of a uniform scan.
    Envelope,
    /// Plain log grid.
    Grid,
}

#[derive(Debug, Clone, Args)]
pub struct ResolventArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Scan start; defaults to 10 (wave-heat) or 5 (acoustic).
    #[arg(long)]
    pub s_min: Option<f64>,
    /// Scan end; defaults to 300 (wave-heat) or 200 (acoustic).
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = ResolventMode::Envelope)]
    pub mode: ResolventMode,
    /// Coarse spacing of the envelope scan.
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Points of the log grid in grid mode.
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Fit window; defaults to the scan range.
    #[arg(long)]
    pub fit_lo: Option<f64>,
    #[arg(long)]
    pub fit_hi: Option<f64>,
    /// CSV path; defaults to `outputs.scan` of the config.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// JSON path; defaults to `outputs.report` of the config.
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ResolventReport {
    model: String,
    states: usize,
    mode: ResolventMode,
    kind: ScanKind,
    /// Growth exponent α is `fit.alpha`, `M_R` is `fit.constant`.
    fit: BoundFit,
    /// Energy decay exponent `-2/α` implied by the growth exponent.
    implied_energy_slope: f64,
}

pub fn cmd_resolvent_scan(args: &ResolventArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let spec = cfg.model_spec()?;
    let (lo, hi) = match spec.kind {
        ModelKind::WaveHeat => (10.0, 300.0),
        ModelKind::Acoustic => (5.0, 200.0),
    };
    let (s_min, s_max) = (args.s_min.unwrap_or(lo), args.s_max.unwrap_or(hi));
    let window = (args.fit_lo.unwrap_or(s_min), args.fit_hi.unwrap_or(s_max));
    let system = build_model(&spec)?;
    let op = ResolventOperator::for_system(&system)?;
    let scan = match args.mode {
        ResolventMode::Envelope => resolvent_envelope(&op, s_min, s_max, args.step)?,
        ResolventMode::Grid => resolvent_scan(&op, log_grid(s_min, s_max, args.points)?)?,
    };
    let fit = fit_power_law(&scan, window)?;
    if let Some(path) = args.out_csv.as_ref().or(cfg.outputs.scan.as_ref()) {
        write_atomic(path, |w| scan.write_csv(w))?;
    }
    let report = ResolventReport {
        model: spec.kind.name().to_string(),
        states: system.n(),
        mode: args.mode,
        kind: scan.kind(),
        implied_energy_slope: -2.0 / fit.alpha,
        fit,
    };
    emit_report(
        &report,
        args.out_json.as_deref().or(cfg.outputs.report.as_deref()),
    )
}

#[derive(Debug, Clone, Args)]
pub struct DecayFitArgs {
    /// Energy trace CSV written by `simulate`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Window start; defaults to t_final/20.
    #[arg(long)]
    pub t1: Option<f64>,
    /// Window end; defaults to t_final/2.
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct DecayReport {
    t_final: f64,
    /// Slope of log E against log t is `fit.alpha`.
    fit: BoundFit,
}

pub fn cmd_decay_fit(args: &DecayFitArgs) -> Result<(), CliError> {
    let file = std::fs::File::open(&args.trace)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", args.trace.display())))?;
    let trace = EnergyTrace::read_csv(BufReader::new(file))?;
    let t_final = trace.final_time();
    let (d1, d2) = default_decay_window(t_final);
    let fit = decay_rate_fit(&trace, (args.t1.unwrap_or(d1), args.t2.unwrap_or(d2)))?;
    emit_report(&DecayReport { t_final, fit }, args.out_json.as_deref())
}
