//! Finite-dimensional impedance-passive blocks.
//!
//! A [`PassiveBlock`] is a state-space system `x' = Ax + Bu, y = Cx + Du`
//! together with a symmetric positive definite mass matrix `M` that defines
//! the energy `E = ½ xᵀMx`. The block is impedance passive when
//! `dE/dt <= u·y` along all trajectories, which is equivalent to the KYP form
//!
//! ```text
//! [ MA + AᵀM    MB - Cᵀ  ]
//! [ BᵀM - C   -(D + Dᵀ)  ]  <= 0.
//! ```

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{max_abs, max_sym_eigenvalue, sym_part};

/// Absolute tolerance on KYP eigenvalues used throughout.
pub const PASSIVITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LtiError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("mass matrix is not symmetric positive definite")]
    MassNotSpd,
    #[error("I + kD is singular for gain {0}")]
    SingularFeedback(f64),
}

fn check_shape(
    what: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), LtiError> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(LtiError::Dimension {
            what,
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        })
    }
}

/// Stored energy `½ xᵀMx`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EnergyValue(f64);

impl EnergyValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveBlock {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    mass: DMatrix<f64>,
    label: String,
}

impl PassiveBlock {
    /// Builds a block after checking shapes and that `mass` is SPD.
    ///
    /// Passivity itself is not enforced here; use [`PassiveBlock::kyp_residual`].
    pub fn new(
        label: impl Into<String>,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        mass: DMatrix<f64>,
    ) -> Result<Self, LtiError> {
        let n = a.nrows();
        let m = b.ncols();
        check_shape("A", &a, n, n)?;
        check_shape("B", &b, n, m)?;
        check_shape("C", &c, m, n)?;
        check_shape("D", &d, m, m)?;
        check_shape("M", &mass, n, n)?;
        let asym = max_abs(&(&mass - mass.transpose()));
        if asym > 1e-12 * max_abs(&mass).max(1.0) || mass.clone().cholesky().is_none() {
            return Err(LtiError::MassNotSpd);
        }
        Ok(PassiveBlock {
            a,
            b,
            c,
            d,
            mass,
            label: label.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Port dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Replaces the feedthrough. Used to inject deliberately broken blocks.
    pub fn with_feedthrough(mut self, d: DMatrix<f64>) -> Result<Self, LtiError> {
        check_shape("D", &d, self.m(), self.m())?;
        self.d = d;
        Ok(self)
    }

    pub fn energy(&self, x: &DVector<f64>) -> Result<EnergyValue, LtiError> {
        if x.len() != self.n() {
            return Err(LtiError::Dimension {
                what: "state",
                expected: self.n().to_string(),
                got: x.len().to_string(),
            });
        }
        Ok(EnergyValue(0.5 * x.dot(&(&self.mass * x)).max(0.0)))
    }

    /// `MA + AᵀM`
    pub fn dissipation_form(&self) -> DMatrix<f64> {
        let ma = &self.mass * &self.a;
        &ma + ma.transpose()
    }

    /// The symmetric KYP matrix of the block.
    pub fn kyp_form(&self) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n))
            .copy_from(&self.dissipation_form());
        let cross = &self.mass * &self.b - self.c.transpose();
        k.view_mut((0, n), (n, m)).copy_from(&cross);
        k.view_mut((n, 0), (m, n)).copy_from(&cross.transpose());
        k.view_mut((n, n), (m, m))
            .copy_from(&(-(&self.d + self.d.transpose())));
        sym_part(&k)
    }

    /// Largest eigenvalue of the KYP form; the block is impedance passive iff
    /// this is `<= 0` up to rounding.
    pub fn kyp_residual(&self) -> f64 {
        max_sym_eigenvalue(&self.kyp_form())
    }

    pub fn is_passive(&self, tol: f64) -> bool {
        self.kyp_residual() <= tol
    }

    /// `‖MA + AᵀM‖_max <= tol`, i.e. `A` is skew-adjoint in the energy norm.
    pub fn is_energy_skew(&self, tol: f64) -> bool {
        max_abs(&self.dissipation_form()) <= tol
    }

    /// Closes the port with `u = -κy`, leaving a block without inputs.
    pub fn output_feedback(&self, gain: f64) -> Result<PassiveBlock, LtiError> {
        let m = self.m();
        let loop_matrix = DMatrix::identity(m, m) + &self.d * gain;
        let inv = loop_matrix
            .try_inverse()
            .ok_or(LtiError::SingularFeedback(gain))?;
        let a = &self.a - &self.b * (inv * &self.c) * gain;
        let n = self.n();
        Ok(PassiveBlock {
            a,
            b: DMatrix::zeros(n, 0),
            c: DMatrix::zeros(0, n),
            d: DMatrix::zeros(0, 0),
            mass: self.mass.clone(),
            label: format!("{} (feedback {gain})", self.label),
        })
    }
}
