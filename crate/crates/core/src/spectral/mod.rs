//! Transfer functions, resolvent norms, spectra and power-law fits.
//!
//! Decay-rate bookkeeping follows the resolvent-growth convention: if
//! `‖R(is, A_e)‖ ≲ 1 + |s|^α` then classical solutions decay in norm like
//! `t^{-1/α}`, so the energy (a squared norm) decays like `t^{-2/α}`. The
//! wave-heat model has `α = 1/2` (energy `t^{-4}`), the acoustic model `α = 2`
//! (energy `t^{-1}`).

mod eigen;
mod fit;
mod resolvent;
mod transfer;

pub use eigen::{spectral_abscissa, spectrum, spectrum_of_block, spectrum_of_system};
pub use fit::{
    decay_rate_fit, default_decay_window, fit_lower_bound, fit_power_law, linear_grid, log_grid,
};
pub use resolvent::{resolvent_envelope, resolvent_norm, resolvent_scan, ResolventOperator};
pub use transfer::{
    acoustic_transfer, acoustic_transfer_real_part, heat_transfer, heat_transfer_real_part,
    numeric_transfer,
};

use serde::Serialize;
use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("{0} is too close to a pole")]
    PoleProximity(String),
    #[error("shifted system is singular (spectral value hit): {0}")]
    Singular(#[from] LinalgError),
    #[error("no samples inside window [{0}, {1}]")]
    EmptyWindow(f64, f64),
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
    #[error("value {value} at {at} is not positive")]
    NonpositiveValue { at: f64, value: f64 },
    #[error("energy reaches numerical zero at t = {0}")]
    EnergyUnderflow(f64),
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),
    #[error("singular value iteration did not converge at s = {0}")]
    NoConvergence(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScanKind {
    TransferRealPart,
    ResolventNorm,
    Modulus,
}

/// Sampled frequency response on a strictly increasing grid of `s > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyScan {
    kind: ScanKind,
    s: Vec<f64>,
    values: Vec<f64>,
}

impl FrequencyScan {
    pub fn new(kind: ScanKind, s: Vec<f64>, values: Vec<f64>) -> Result<Self, SpectralError> {
        if s.len() != values.len() {
            return Err(SpectralError::InvalidGrid(format!(
                "{} frequencies but {} values",
                s.len(),
                values.len()
            )));
        }
        if s.windows(2).any(|w| w[1].is_nan() || w[1] <= w[0]) {
            return Err(SpectralError::InvalidGrid(
                "grid is not strictly increasing".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpectralError::InvalidGrid(format!(
                "non-finite value at s = {}",
                s[i]
            )));
        }
        Ok(FrequencyScan { kind, s, values })
    }

    /// Samples `f` on `grid` in parallel; order is preserved.
    pub fn sample<F>(kind: ScanKind, grid: Vec<f64>, f: F) -> Result<Self, SpectralError>
    where
        F: Fn(f64) -> Result<f64, SpectralError> + Sync,
    {
        use rayon::prelude::*;
        let values = grid
            .par_iter()
            .map(|&s| f(s))
            .collect::<Result<Vec<f64>, _>>()?;
        Self::new(kind, grid, values)
    }

    pub fn kind(&self) -> ScanKind {
        self.kind
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(b"s,value\n")?;
        for (s, v) in self.s.iter().zip(&self.values) {
            writeln!(
                out,
                "{},{}",
                crate::timestep::fmt_f64(*s),
                crate::timestep::fmt_f64(*v)
            )?;
        }
        Ok(())
    }
}

/// Result of a bound or power-law fit.
///
/// `constant` is `η₀` for lower-bound fits and the prefactor `c` of `c·s^α`
/// (or `c·t^α` for decay fits) for power-law fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundFit {
    pub alpha: f64,
    pub constant: f64,
    pub window: [f64; 2],
    pub r2: Option<f64>,
    pub points: usize,
}
