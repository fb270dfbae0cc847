//! Power-preserving feedback interconnection of two passive blocks and the
//! two built-in coupled models.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::discretize::{
    build_acoustic_ode, build_heat_block, build_wave_block, AcousticParams, DiscretizeError,
    EndCondition, WaveGrid, WaveLayout,
};
use crate::expr::{CoefficientProfile, ExprError};
use crate::linalg::{block_diag, max_sym_eigenvalue};
use crate::lti::{EnergyValue, LtiError, PassiveBlock};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterconnectError {
    #[error("port dimensions differ: plant {plant}, controller {controller}")]
    PortMismatch { plant: usize, controller: usize },
    #[error("algebraic loop I + D_c D is singular")]
    SingularLoop,
    #[error("coefficient `{name}` was validated on [{a}, {b}], which does not cover the model domain [{lo}, {hi}]")]
    ProfileDomain {
        name: &'static str,
        a: f64,
        b: f64,
        lo: f64,
        hi: f64,
    },
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Sign convention of the interconnection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    /// `u = y_c`, `u_c = -y`
    #[default]
    Standard,
    /// `u = -y_c`, `u_c = y`
    Mirrored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSystem {
    plant: PassiveBlock,
    controller: PassiveBlock,
    convention: Convention,
    a_e: DMatrix<f64>,
    mass_e: DMatrix<f64>,
}

/// Closes the loop between `plant` and `controller`.
///
/// Writing `σ = +1` for [`Convention::Standard`] and `-1` for the mirrored one,
/// the ports satisfy `u = σ y_c`, `u_c = -σ y`. Feedthrough terms are
/// eliminated through `(I + D_c D)⁻¹`.
pub fn couple(
    plant: PassiveBlock,
    controller: PassiveBlock,
    convention: Convention,
) -> Result<CoupledSystem, InterconnectError> {
    if plant.m() != controller.m() {
        return Err(InterconnectError::PortMismatch {
            plant: plant.m(),
            controller: controller.m(),
        });
    }
    let m = plant.m();
    let sigma = match convention {
        Convention::Standard => 1.0,
        Convention::Mirrored => -1.0,
    };
    let (d, dc) = (plant.d(), controller.d());
    let loop_inv = (DMatrix::identity(m, m) + dc * d)
        .try_inverse()
        .ok_or(InterconnectError::SingularLoop)?;
    // u = E (σ C_c x_c - D_c C x) since σ² = 1
    let u_from_x = -(&loop_inv * dc * plant.c());
    let u_from_xc = (&loop_inv * controller.c()) * sigma;
    // u_c = -σ (C x + D u)
    let uc_from_x = -(plant.c() + d * &u_from_x) * sigma;
    let uc_from_xc = -(d * &u_from_xc) * sigma;

    let (n, nc) = (plant.n(), controller.n());
    let mut a_e = DMatrix::zeros(n + nc, n + nc);
    a_e.view_mut((0, 0), (n, n))
        .copy_from(&(plant.a() + plant.b() * &u_from_x));
    a_e.view_mut((0, n), (n, nc))
        .copy_from(&(plant.b() * &u_from_xc));
    a_e.view_mut((n, 0), (nc, n))
        .copy_from(&(controller.b() * &uc_from_x));
    a_e.view_mut((n, n), (nc, nc))
        .copy_from(&(controller.a() + controller.b() * &uc_from_xc));
    let mass_e = block_diag(plant.mass(), controller.mass());
    Ok(CoupledSystem {
        plant,
        controller,
        convention,
        a_e,
        mass_e,
    })
}

impl CoupledSystem {
    pub fn plant(&self) -> &PassiveBlock {
        &self.plant
    }

    pub fn controller(&self) -> &PassiveBlock {
        &self.controller
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn a_e(&self) -> &DMatrix<f64> {
        &self.a_e
    }

    pub fn mass_e(&self) -> &DMatrix<f64> {
        &self.mass_e
    }

    pub fn n(&self) -> usize {
        self.a_e.nrows()
    }

    /// Number of plant states; controller states follow.
    pub fn split(&self) -> usize {
        self.plant.n()
    }

    /// `M_e A_e + A_eᵀ M_e`
    pub fn dissipation_form(&self) -> DMatrix<f64> {
        let ma = &self.mass_e * &self.a_e;
        &ma + ma.transpose()
    }

    /// Largest eigenvalue of `sym(M_e A_e)`; nonpositive for a contraction.
    pub fn max_dissipation_eigenvalue(&self) -> f64 {
        0.5 * max_sym_eigenvalue(&self.dissipation_form())
    }

    pub fn block_energies(&self, x: &DVector<f64>) -> Result<(EnergyValue, EnergyValue), LtiError> {
        if x.len() != self.n() {
            return Err(LtiError::Dimension {
                what: "coupled state",
                expected: self.n().to_string(),
                got: x.len().to_string(),
            });
        }
        let split = self.split();
        let xp = x.rows(0, split).into_owned();
        let xc = x.rows(split, self.n() - split).into_owned();
        Ok((self.plant.energy(&xp)?, self.controller.energy(&xc)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// String on (-1, 0) coupled at ξ = 0 to a heat rod on (0, 1).
    WaveHeat,
    /// String on (0, 1) with a damped oscillator at ξ = 1.
    Acoustic,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::WaveHeat => "wave-heat",
            ModelKind::Acoustic => "acoustic",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "wave-heat" => Some(ModelKind::WaveHeat),
            "acoustic" => Some(ModelKind::Acoustic),
            _ => None,
        }
    }

    pub fn wave_interval(self) -> (f64, f64) {
        match self {
            ModelKind::WaveHeat => (-1.0, 0.0),
            ModelKind::Acoustic => (0.0, 1.0),
        }
    }

    pub fn wave_ends(self) -> (EndCondition, EndCondition) {
        match self {
            ModelKind::WaveHeat => (EndCondition::ZeroStress, EndCondition::PortVelocity),
            ModelKind::Acoustic => (EndCondition::ZeroVelocity, EndCondition::PortStress),
        }
    }
}

/// Everything needed to assemble one of the built-in models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub wave_cells: usize,
    /// Heat cells; ignored by the acoustic model.
    pub heat_cells: usize,
    pub rho: CoefficientProfile,
    pub stiffness: CoefficientProfile,
    /// Oscillator parameters; `stiffness_end` is overwritten with `T(1)`.
    pub oscillator: AcousticParams,
    pub convention: Convention,
}

impl ModelSpec {
    pub fn unit(kind: ModelKind, cells: usize) -> Self {
        let interval = kind.wave_interval();
        let unit = CoefficientProfile::constant(1.0, interval).expect("constant profile");
        ModelSpec {
            kind,
            wave_cells: cells,
            heat_cells: cells,
            rho: unit.clone(),
            stiffness: unit,
            oscillator: AcousticParams::unit(),
            convention: Convention::Standard,
        }
    }

    fn check_domain(&self) -> Result<(), InterconnectError> {
        let (lo, hi) = self.kind.wave_interval();
        for (name, p) in [("rho", &self.rho), ("T", &self.stiffness)] {
            let (a, b) = p.interval();
            if a > lo || b < hi {
                return Err(InterconnectError::ProfileDomain { name, a, b, lo, hi });
            }
        }
        Ok(())
    }

    pub fn wave_grid(&self) -> Result<WaveGrid, InterconnectError> {
        self.check_domain()?;
        Ok(WaveGrid::new(
            self.kind.wave_interval(),
            self.wave_cells,
            &self.rho,
            &self.stiffness,
        )?)
    }

    pub fn wave_layout(&self) -> WaveLayout {
        let (l, r) = self.kind.wave_ends();
        WaveLayout::new(self.wave_cells, l, r)
    }

    /// Oscillator parameters with `T1 = T(1)` filled in.
    pub fn oscillator_params(&self) -> Result<AcousticParams, InterconnectError> {
        Ok(AcousticParams {
            stiffness_end: self.stiffness.eval(1.0)?,
            ..self.oscillator
        })
    }

    /// Grid spacing of the wave block.
    pub fn wave_h(&self) -> f64 {
        let (a, b) = self.kind.wave_interval();
        (b - a) / self.wave_cells as f64
    }
}

pub fn build_model(spec: &ModelSpec) -> Result<CoupledSystem, InterconnectError> {
    let grid = spec.wave_grid()?;
    let (left, right) = spec.kind.wave_ends();
    let wave = build_wave_block(&grid, left, right)?;
    let controller = match spec.kind {
        ModelKind::WaveHeat => build_heat_block(spec.heat_cells)?,
        ModelKind::Acoustic => build_acoustic_ode(&spec.oscillator_params()?)?,
    };
    couple(wave, controller, spec.convention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn block_formula_without_feedthrough() {
        let sys = build_model(&ModelSpec::unit(ModelKind::WaveHeat, 2)).unwrap();
        let (p, c) = (sys.plant(), sys.controller());
        assert_eq!(sys.n(), 6);
        let n = p.n();
        assert_eq!(sys.a_e().view((0, 0), (n, n)), p.a().view((0, 0), (n, n)));
        assert_eq!(
            sys.a_e().view((0, n), (n, 2)),
            (p.b() * c.c()).view((0, 0), (n, 2))
        );
        assert_eq!(
            sys.a_e().view((n, 0), (2, n)),
            (-(c.b() * p.c())).view((0, 0), (2, n))
        );
        assert_eq!(sys.a_e().view((n, n), (2, 2)), c.a().view((0, 0), (2, 2)));
        // cross terms cancel exactly
        let expected = block_diag(&p.dissipation_form(), &c.dissipation_form());
        assert_eq!(sys.dissipation_form(), expected);
    }

    #[test]
    fn hand_assembled_wave_heat_two_cells() {
        // wave on (-1,0), h = 1/2, states (v0, v1, e_1/2, e_3/2); heat (w0, w1)
        let sys = build_model(&ModelSpec::unit(ModelKind::WaveHeat, 2)).unwrap();
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(6, 6, &[
            0.0, 0.0,  4.0,  0.0,  0.0, 0.0,
            0.0, 0.0, -2.0,  2.0,  0.0, 0.0,
           -2.0, 2.0,  0.0,  0.0,  0.0, 0.0,
            0.0,-2.0,  0.0,  0.0,  2.0, 0.0,
            0.0, 0.0,  0.0, -4.0, -8.0, 8.0,
            0.0, 0.0,  0.0,  0.0,  4.0,-8.0,
        ]);
        assert_eq!(sys.a_e(), &expected);
    }

    #[test]
    fn acoustic_two_cells() {
        let sys = build_model(&ModelSpec::unit(ModelKind::Acoustic, 2)).unwrap();
        assert_eq!(sys.n(), 6);
        assert!(sys.max_dissipation_eigenvalue() <= 1e-14);
        // u = T1 δ' drives the stress node, u_c = -v_N drives δ''
        assert_eq!(sys.a_e()[(1, 5)], 4.0);
        assert_eq!(sys.a_e()[(5, 1)], -1.0);
    }

    #[test]
    fn port_mismatch() {
        let wave = build_model(&ModelSpec::unit(ModelKind::WaveHeat, 2))
            .unwrap()
            .plant()
            .clone();
        let two_port = PassiveBlock::new(
            "two",
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert_eq!(
            couple(wave, two_port, Convention::Standard),
            Err(InterconnectError::PortMismatch {
                plant: 1,
                controller: 2
            })
        );
    }

    #[test]
    fn singular_algebraic_loop() {
        let blk = |d: f64| {
            PassiveBlock::new(
                "d",
                DMatrix::from_element(1, 1, -1.0),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, 1.0),
                DMatrix::from_element(1, 1, d),
                DMatrix::identity(1, 1),
            )
            .unwrap()
        };
        assert_eq!(
            couple(blk(1.0), blk(-1.0), Convention::Standard),
            Err(InterconnectError::SingularLoop)
        );
    }

    #[test]
    fn feedthrough_loop_stays_contractive() {
        // plant with D = 0.5 > 0, controller with D_c = 0.2: both passive
        let plant = PassiveBlock::new(
            "p",
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let ctrl = PassiveBlock::new(
            "c",
            DMatrix::from_element(1, 1, -2.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.2),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        assert!(plant.is_passive(1e-12) && ctrl.is_passive(1e-12));
        for conv in [Convention::Standard, Convention::Mirrored] {
            let sys = couple(plant.clone(), ctrl.clone(), conv).unwrap();
            assert!(sys.max_dissipation_eigenvalue() <= 1e-12);
            // direct check of the loop equations at a sample state
            let x = DVector::from_vec(vec![0.3, -1.1, 0.7]);
            let sigma = if conv == Convention::Standard {
                1.0
            } else {
                -1.0
            };
            // solve u, u_c from y = Cx + Du, y_c = C_c x_c + D_c u_c
            let (cx, cxc) = (x[1], x[2]);
            // u = σ(cxc + 0.2 u_c), u_c = -σ(cx + 0.5 u)
            let u = sigma * (cxc - 0.2 * sigma * cx) / (1.0 + 0.2 * 0.5);
            let uc = -sigma * (cx + 0.5 * u);
            let dx = sys.a_e() * &x;
            assert!((dx[1] - (-x[0] + u)).abs() < 1e-14);
            assert!((dx[2] - (-2.0 * x[2] + uc)).abs() < 1e-14);
        }
    }

    #[test]
    fn mirrored_convention_is_contractive() {
        let mut spec = ModelSpec::unit(ModelKind::WaveHeat, 6);
        spec.convention = Convention::Mirrored;
        let sys = build_model(&spec).unwrap();
        assert!(sys.max_dissipation_eigenvalue() <= 1e-12);
        let std = build_model(&ModelSpec::unit(ModelKind::WaveHeat, 6)).unwrap();
        assert!(max_abs(&(sys.a_e() - std.a_e())) > 0.0);
    }

    #[test]
    fn energy_is_sum_of_blocks() {
        let sys = build_model(&ModelSpec::unit(ModelKind::Acoustic, 3)).unwrap();
        let x = DVector::from_fn(sys.n(), |i, _| 0.1 * i as f64 - 0.2);
        let (e1, e2) = sys.block_energies(&x).unwrap();
        let total = 0.5 * x.dot(&(sys.mass_e() * &x));
        assert!((e1.value() + e2.value() - total).abs() < 1e-15);
    }

    #[test]
    fn profile_domain_must_cover_model() {
        let mut spec = ModelSpec::unit(ModelKind::Acoustic, 4);
        spec.rho = CoefficientProfile::constant(1.0, (0.0, 0.5)).unwrap();
        assert!(matches!(
            build_model(&spec),
            Err(InterconnectError::ProfileDomain { name: "rho", .. })
        ));
    }
}
