use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::discretize::AcousticParams;
use crate::expr::{parse, validate_profile, DEFAULT_SAMPLES};
use crate::interconnect::{Convention, ModelKind, ModelSpec};
use crate::timestep::{
    default_initial_data, project_initial_data, ControllerInit, InitialData, InitialExpressions,
    COMPATIBILITY_TOL,
};

fn one() -> String {
    "1".into()
}

fn unit() -> f64 {
    1.0
}

fn default_family() -> String {
    "default".into()
}

/// Run configuration read from JSON. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `wave-heat` or `acoustic`.
    pub model: String,
    pub n_wave: usize,
    /// Heat cells; defaults to `n_wave`.
    #[serde(default)]
    pub n_heat: Option<usize>,
    #[serde(default = "one")]
    pub rho: String,
    #[serde(rename = "T", default = "one")]
    pub stiffness: String,
    #[serde(default = "unit")]
    pub m: f64,
    #[serde(default = "unit")]
    pub d: f64,
    #[serde(default = "unit")]
    pub k: f64,
    #[serde(default = "unit")]
    pub beta: f64,
    /// Time step; defaults to a quarter of the wave grid spacing.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    /// Step count, as an alternative to `t_final`.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub snapshot_every: usize,
    /// `default`, `zero` or `custom` (requires `initial_expressions`).
    #[serde(default = "default_family")]
    pub initial: String,
    #[serde(default)]
    pub initial_expressions: Option<InitialExpressionConfig>,
    /// `standard` or `mirrored`.
    #[serde(default)]
    pub convention: Option<String>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// Continuous initial data for the `custom` family.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialExpressionConfig {
    /// `v_t(ξ, 0)`
    pub velocity: String,
    /// `v_ξ(ξ, 0)`
    pub strain: String,
    /// Heat profile `w(ξ, 0)` (wave-heat only).
    #[serde(default)]
    pub w: Option<String>,
    /// Oscillator state (acoustic only).
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub delta_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub scan: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// State snapshots, written when `snapshot_every > 0`.
    #[serde(default)]
    pub snapshots: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn kind(&self) -> Result<ModelKind, CliError> {
        ModelKind::from_name(&self.model).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown model `{}` (expected wave-heat or acoustic)",
                self.model
            ))
        })
    }

    /// Validates coefficients and parameters and assembles the model description.
    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        let kind = self.kind()?;
        let interval = kind.wave_interval();
        let profile = |name: &str, text: &str| {
            let expr = parse(text).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
            validate_profile(&expr, interval, DEFAULT_SAMPLES)
                .map_err(|e| CliError::Validation(format!("{name}: {e}")))
        };
        let convention = match self.convention.as_deref() {
            None | Some("standard") => Convention::Standard,
            Some("mirrored") => Convention::Mirrored,
            Some(other) => {
                return Err(CliError::Validation(format!(
                    "unknown convention `{other}` (expected standard or mirrored)"
                )))
            }
        };
        let oscillator = AcousticParams {
            mass: self.m,
            damping: self.d,
            spring: self.k,
            beta: self.beta,
            stiffness_end: 1.0,
        };
        oscillator.validate()?;
        let spec = ModelSpec {
            kind,
            wave_cells: self.n_wave,
            heat_cells: self.n_heat.unwrap_or(self.n_wave),
            rho: profile("rho", &self.rho)?,
            stiffness: profile("T", &self.stiffness)?,
            oscillator,
            convention,
        };
        if spec.wave_cells < 2 || spec.heat_cells < 2 {
            return Err(CliError::Validation(format!(
                "n_wave and n_heat must be at least 2, got {} and {}",
                spec.wave_cells, spec.heat_cells
            )));
        }
        Ok(spec)
    }

    /// Time step and step count.
    pub fn schedule(&self, spec: &ModelSpec) -> Result<(f64, usize), CliError> {
        let dt = self.dt.unwrap_or(spec.wave_h() / 4.0);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(CliError::Validation(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let steps = match (self.t_final, self.steps) {
            (Some(_), Some(_)) => {
                return Err(CliError::Validation(
                    "give either t_final or steps, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Validation("t_final or steps is required".into()))
            }
            (None, Some(steps)) => steps,
            (Some(t), None) if t >= 0.0 && t.is_finite() => (t / dt).round() as usize,
            (Some(t), None) => {
                return Err(CliError::Validation(format!(
                    "t_final must be nonnegative, got {t}"
                )))
            }
        };
        Ok((dt, steps))
    }

    pub fn initial_data(&self, spec: &ModelSpec) -> Result<InitialData, CliError> {
        match (self.initial.as_str(), &self.initial_expressions) {
            ("custom", Some(cfg)) => {
                let data = cfg.expressions(spec.kind)?;
                Ok(project_initial_data(
                    spec,
                    "custom",
                    &data,
                    COMPATIBILITY_TOL,
                )?)
            }
            ("custom", None) => Err(CliError::Validation(
                "initial = custom needs initial_expressions".into(),
            )),
            (family, None) => Ok(default_initial_data(spec, family)?),
            (family, Some(_)) => Err(CliError::Validation(format!(
                "initial_expressions given but initial = `{family}` (use custom)"
            ))),
        }
    }
}

impl InitialExpressionConfig {
    fn expressions(&self, kind: ModelKind) -> Result<InitialExpressions, CliError> {
        let p = |name: &str, text: &str| {
            parse(text).map_err(|e| CliError::Validation(format!("initial {name}: {e}")))
        };
        let controller = match (kind, &self.w, self.delta, self.delta_t) {
            (ModelKind::WaveHeat, Some(w), None, None) => ControllerInit::Heat(p("w", w)?),
            (ModelKind::Acoustic, None, Some(delta), Some(rate)) => {
                ControllerInit::Oscillator { delta, rate }
            }
            (ModelKind::WaveHeat, ..) => {
                return Err(CliError::Validation(
                    "wave-heat initial data needs `w` and no oscillator values".into(),
                ))
            }
            (ModelKind::Acoustic, ..) => {
                return Err(CliError::Validation(
                    "acoustic initial data needs `delta` and `delta_t` and no `w`".into(),
                ))
            }
        };
        Ok(InitialExpressions {
            velocity: p("velocity", &self.velocity)?,
            strain: p("strain", &self.strain)?,
            controller,
        })
    }
}
