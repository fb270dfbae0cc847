//! Structure-preserving semi-discretizations of the component systems.
//!
//! The wave equation `ρ v_tt = (T v_ξ)_ξ` is discretized on a staggered grid:
//! velocities `v_j` live at the nodes `ξ_j = a + jh`, strains `e_c` at the
//! cell centers `ξ_{c+½}`. With the mass matrix built from trapezoid weights
//! the difference operators are exact adjoints of each other, so the discrete
//! energy balance `dE/dt = u·y` holds without any error term.
//!
//! State ordering of a wave block: the free velocities in node order, followed
//! by all `N` strains in center order.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{CoefficientProfile, ExprError};
use crate::lti::{LtiError, PassiveBlock};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiscretizeError {
    #[error("wave block needs exactly one port end, got {0}")]
    PortCount(usize),
    #[error("at least 2 cells are required, got {0}")]
    TooFewCells(usize),
    #[error("invalid interval [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonpositiveParameter { name: &'static str, value: f64 },
    #[error("coefficient `{name}` = {value} at x = {xi} leaves its validated bounds")]
    CoefficientOutOfBounds {
        name: &'static str,
        xi: f64,
        value: f64,
    },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Boundary condition at one end of a wave block.
///
/// Port conventions, chosen so that `u·y` is the power flowing into the string:
/// right `PortVelocity`: `v(b) = u`, `y = T e` at the last center;
/// right `PortStress`: `T v_ξ(b) = u`, `y = v(b)`;
/// left `PortVelocity`: `v(a) = u`, `y = -T e` at the first center;
/// left `PortStress`: `T v_ξ(a) = -u`, `y = v(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EndCondition {
    PortVelocity,
    PortStress,
    ZeroVelocity,
    ZeroStress,
}

impl EndCondition {
    pub fn is_port(self) -> bool {
        matches!(self, EndCondition::PortVelocity | EndCondition::PortStress)
    }

    fn fixes_velocity(self) -> bool {
        matches!(
            self,
            EndCondition::PortVelocity | EndCondition::ZeroVelocity
        )
    }
}

/// Staggered grid with sampled coefficients: `ρ` at nodes, `T` at centers.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveGrid {
    interval: (f64, f64),
    cells: usize,
    h: f64,
    rho_nodes: Vec<f64>,
    stiffness_centers: Vec<f64>,
}

fn sample(
    name: &'static str,
    profile: &CoefficientProfile,
    points: impl Iterator<Item = f64>,
) -> Result<Vec<f64>, DiscretizeError> {
    points
        .map(|xi| {
            let value = profile.eval(xi)?;
            // the bounds come from dense sampling, so grid points falling
            // between samples may overshoot them slightly
            let slack = 1e-6 * profile.upper();
            if value <= 0.0 || value < profile.lower() - slack || value > profile.upper() + slack {
                return Err(DiscretizeError::CoefficientOutOfBounds { name, xi, value });
            }
            Ok(value)
        })
        .collect()
}

impl WaveGrid {
    pub fn new(
        interval: (f64, f64),
        cells: usize,
        rho: &CoefficientProfile,
        stiffness: &CoefficientProfile,
    ) -> Result<Self, DiscretizeError> {
        let (a, b) = interval;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(DiscretizeError::InvalidInterval(a, b));
        }
        if cells < 2 {
            return Err(DiscretizeError::TooFewCells(cells));
        }
        let h = (b - a) / cells as f64;
        let grid = |k: f64| a + k * h;
        let rho_nodes = sample("rho", rho, (0..=cells).map(|j| grid(j as f64)))?;
        let stiffness_centers = sample("T", stiffness, (0..cells).map(|c| grid(c as f64 + 0.5)))?;
        Ok(WaveGrid {
            interval,
            cells,
            h,
            rho_nodes,
            stiffness_centers,
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn node(&self, j: usize) -> f64 {
        self.interval.0 + j as f64 * self.h
    }

    pub fn center(&self, c: usize) -> f64 {
        self.interval.0 + (c as f64 + 0.5) * self.h
    }

    pub fn rho_nodes(&self) -> &[f64] {
        &self.rho_nodes
    }

    pub fn stiffness_centers(&self) -> &[f64] {
        &self.stiffness_centers
    }
}

/// Where each state of a wave block sits on the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WaveLayout {
    /// Node index of each velocity state, in state order.
    pub velocity_nodes: Vec<usize>,
    /// State index of the first strain; strain `c` is state `strain_offset + c`.
    pub strain_offset: usize,
}

impl WaveLayout {
    pub fn new(cells: usize, left: EndCondition, right: EndCondition) -> Self {
        let velocity_nodes: Vec<usize> = (0..=cells)
            .filter(|&j| {
                !((j == 0 && left.fixes_velocity()) || (j == cells && right.fixes_velocity()))
            })
            .collect();
        let strain_offset = velocity_nodes.len();
        WaveLayout {
            velocity_nodes,
            strain_offset,
        }
    }

    pub fn n_states(&self, cells: usize) -> usize {
        self.strain_offset + cells
    }
}

pub fn build_wave_block(
    grid: &WaveGrid,
    left: EndCondition,
    right: EndCondition,
) -> Result<PassiveBlock, DiscretizeError> {
    let ports = usize::from(left.is_port()) + usize::from(right.is_port());
    if ports != 1 {
        return Err(DiscretizeError::PortCount(ports));
    }
    let cells = grid.cells;
    let h = grid.h;
    let rho = &grid.rho_nodes;
    let stiff = &grid.stiffness_centers;
    let layout = WaveLayout::new(cells, left, right);
    let n = layout.n_states(cells);
    let strain = |c: usize| layout.strain_offset + c;
    let mut vel_state = vec![None; cells + 1];
    for (s, &j) in layout.velocity_nodes.iter().enumerate() {
        vel_state[j] = Some(s);
    }

    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    let mut c_out = DMatrix::zeros(1, n);
    let mut mass = DMatrix::zeros(n, n);

    // strains: e_c' = (v_{c+1} - v_c) / h
    for c in 0..cells {
        let row = strain(c);
        mass[(row, row)] = h * stiff[c];
        for (node, sign) in [(c + 1, 1.0), (c, -1.0)] {
            match vel_state[node] {
                Some(s) => a[(row, s)] += sign / h,
                None => {
                    let end = if node == 0 { left } else { right };
                    if end == EndCondition::PortVelocity {
                        b[(row, 0)] += sign / h;
                    }
                }
            }
        }
    }

    // velocities
    for (s, &j) in layout.velocity_nodes.iter().enumerate() {
        if j > 0 && j < cells {
            mass[(s, s)] = h * rho[j];
            let scale = 1.0 / (h * rho[j]);
            a[(s, strain(j))] += stiff[j] * scale;
            a[(s, strain(j - 1))] -= stiff[j - 1] * scale;
        } else {
            mass[(s, s)] = 0.5 * h * rho[j];
            let scale = 2.0 / (h * rho[j]);
            if j == cells {
                // rho v' = (sigma_b - T e_{N-1}) / (h/2)
                a[(s, strain(cells - 1))] -= stiff[cells - 1] * scale;
                if right == EndCondition::PortStress {
                    b[(s, 0)] += scale;
                }
            } else {
                // rho v' = (T e_0 - sigma_a) / (h/2), sigma_a = -u for a port
                a[(s, strain(0))] += stiff[0] * scale;
                if left == EndCondition::PortStress {
                    b[(s, 0)] += scale;
                }
            }
        }
    }

    // collocated outputs
    match (left, right) {
        (_, EndCondition::PortVelocity) => {
            c_out[(0, strain(cells - 1))] = stiff[cells - 1];
        }
        (_, EndCondition::PortStress) => {
            let s = vel_state[cells].expect("stress end keeps its velocity");
            c_out[(0, s)] = 1.0;
        }
        (EndCondition::PortVelocity, _) => {
            c_out[(0, strain(0))] = -stiff[0];
        }
        (EndCondition::PortStress, _) => {
            let s = vel_state[0].expect("stress end keeps its velocity");
            c_out[(0, s)] = 1.0;
        }
        _ => unreachable!("port count checked above"),
    }

    let label = format!(
        "wave[{}, {}] N={cells} {left:?}/{right:?}",
        grid.interval.0, grid.interval.1
    );
    Ok(PassiveBlock::new(
        label,
        a,
        b,
        c_out,
        DMatrix::zeros(1, 1),
        mass,
    )?)
}

/// Heat equation `w_t = w_ξξ` on `[0, 1]` with `-w_ξ(0) = u`, `w(1) = 0` and
/// output `y = w(0)`. States `w_0 .. w_{N-1}`; the Dirichlet node is dropped.
pub fn build_heat_block(cells: usize) -> Result<PassiveBlock, DiscretizeError> {
    if cells < 2 {
        return Err(DiscretizeError::TooFewCells(cells));
    }
    let n = cells;
    let h = 1.0 / cells as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut a = DMatrix::zeros(n, n);
    let mut mass = DMatrix::zeros(n, n);
    // ghost node w_{-1} = w_1 + 2h u
    a[(0, 0)] = -2.0 * inv_h2;
    a[(0, 1)] = 2.0 * inv_h2;
    mass[(0, 0)] = 0.5 * h;
    for j in 1..n {
        a[(j, j)] = -2.0 * inv_h2;
        a[(j, j - 1)] = inv_h2;
        if j + 1 < n {
            a[(j, j + 1)] = inv_h2;
        }
        mass[(j, j)] = h;
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 2.0 / h;
    let mut c = DMatrix::zeros(1, n);
    c[(0, 0)] = 1.0;
    Ok(PassiveBlock::new(
        format!("heat[0, 1] N={cells}"),
        a,
        b,
        c,
        DMatrix::zeros(1, 1),
        mass,
    )?)
}

/// Parameters of the boundary oscillator `m δ'' = -d δ' - k δ + β u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcousticParams {
    pub mass: f64,
    pub damping: f64,
    pub spring: f64,
    pub beta: f64,
    /// Stiffness `T` at the coupling end.
    pub stiffness_end: f64,
}

impl AcousticParams {
    pub fn unit() -> Self {
        AcousticParams {
            mass: 1.0,
            damping: 1.0,
            spring: 1.0,
            beta: 1.0,
            stiffness_end: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DiscretizeError> {
        for (name, value) in [
            ("m", self.mass),
            ("d", self.damping),
            ("k", self.spring),
            ("beta", self.beta),
            ("T1", self.stiffness_end),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(DiscretizeError::NonpositiveParameter { name, value });
            }
        }
        Ok(())
    }

    /// Energy weights `(c1, c2)` with `c2 = T1/β`, `c1 = c2 k/m`.
    pub fn weights(&self) -> (f64, f64) {
        let c2 = self.stiffness_end / self.beta;
        (c2 * self.spring / self.mass, c2)
    }
}

/// Oscillator block with state `(δ, δ')`, output `y = T1 δ'`.
pub fn build_acoustic_ode(p: &AcousticParams) -> Result<PassiveBlock, DiscretizeError> {
    p.validate()?;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -p.spring / p.mass, -p.damping / p.mass]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, p.beta]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, p.stiffness_end]);
    let (c1, c2) = p.weights();
    let mass = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c1, c2]));
    Ok(PassiveBlock::new(
        "acoustic oscillator",
        a,
        b,
        c,
        DMatrix::zeros(1, 1),
        mass,
    )?)
}
