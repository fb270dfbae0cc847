//! Implicit-midpoint time integration with energy bookkeeping.
//!
//! The implicit midpoint rule `(I - Δt/2 A)x⁺ = (I + Δt/2 A)x` preserves every
//! quadratic invariant of a skew flow and, for a dissipative generator, gives
//! `E⁺ - E = Δt · x̄ᵀ sym(MA) x̄ <= 0` with `x̄` the midpoint state. It is
//! written here as `x⁺ = 2(I - Δt/2 A)⁻¹x - x`, so one banded factorization
//! serves the whole run.

use std::io::{self, BufRead, Write};

use nalgebra::DVector;
use thiserror::Error;

use crate::expr::{parse, ExprError, ExprNode};
use crate::interconnect::{CoupledSystem, InterconnectError, ModelKind, ModelSpec};
use crate::linalg::{BandOrdering, BandedLu, CsrMatrix, LinalgError};

/// Compatibility residual accepted for user supplied initial data.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum TimestepError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("initial state has dimension {got}, system has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("step matrix could not be factorized: {0}")]
    Singular(#[from] LinalgError),
    #[error("initial data violates `{condition}` (residual {residual:e})")]
    Compatibility { condition: String, residual: f64 },
    #[error("unknown initial data family `{0}`")]
    UnknownFamily(String),
    #[error("initial data does not match the model: {0}")]
    ModelMismatch(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Model(#[from] InterconnectError),
    #[error("trace I/O: {0}")]
    Io(#[from] io::Error),
    #[error("malformed trace CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// Initial state of the controller part.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerInit {
    /// Temperature profile `w(ξ, 0)` on `[0, 1]`.
    Heat(ExprNode),
    /// Oscillator displacement and rate.
    Oscillator { delta: f64, rate: f64 },
}

/// Continuous initial data: `v_t(ξ, 0)`, `v_ξ(ξ, 0)` and the controller state.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialExpressions {
    pub velocity: ExprNode,
    pub strain: ExprNode,
    pub controller: ControllerInit,
}

impl InitialExpressions {
    /// Smooth data satisfying all boundary and coupling conditions at `t = 0`
    /// for constant `T`.
    ///
    /// wave-heat: `v = cos(π(ξ+1))`, `v_t = sin(πξ/2)`, `w = ξ²(1-ξ)²`.
    /// acoustic: `v = ξ²`, `v_t = sin(πξ)`, `δ = 1`, `δ' = 2`.
    pub fn default_for(kind: ModelKind) -> Self {
        let p = |s: &str| parse(s).expect("built-in expression");
        match kind {
            ModelKind::WaveHeat => InitialExpressions {
                velocity: p("sin(pi*x/2)"),
                strain: p("-pi*sin(pi*(x+1))"),
                controller: ControllerInit::Heat(p("x^2*(1-x)^2")),
            },
            ModelKind::Acoustic => InitialExpressions {
                velocity: p("sin(pi*x)"),
                strain: p("2*x"),
                controller: ControllerInit::Oscillator {
                    delta: 1.0,
                    rate: 2.0,
                },
            },
        }
    }

    pub fn zero(kind: ModelKind) -> Self {
        let zero = ExprNode::constant(0.0);
        InitialExpressions {
            velocity: zero.clone(),
            strain: zero.clone(),
            controller: match kind {
                ModelKind::WaveHeat => ControllerInit::Heat(zero),
                ModelKind::Acoustic => ControllerInit::Oscillator {
                    delta: 0.0,
                    rate: 0.0,
                },
            },
        }
    }

    /// Boundary and coupling residuals of the continuous data.
    pub fn compatibility_residuals(
        &self,
        spec: &ModelSpec,
    ) -> Result<Vec<(String, f64)>, TimestepError> {
        let t = &spec.stiffness;
        match (spec.kind, &self.controller) {
            (ModelKind::WaveHeat, ControllerInit::Heat(w)) => {
                let (_, dw0) = w.eval_with_derivative(0.0)?;
                Ok(vec![
                    ("v_xi(-1) = 0".into(), self.strain.eval(-1.0)?),
                    ("w(1) = 0".into(), w.eval(1.0)?),
                    (
                        "v_t(0) = w(0)".into(),
                        self.velocity.eval(0.0)? - w.eval(0.0)?,
                    ),
                    (
                        "T(0) v_xi(0) = w_xi(0)".into(),
                        t.eval(0.0)? * self.strain.eval(0.0)? - dw0,
                    ),
                ])
            }
            (ModelKind::Acoustic, ControllerInit::Oscillator { rate, .. }) => Ok(vec![
                ("v_t(0) = 0".into(), self.velocity.eval(0.0)?),
                ("v_xi(1) = delta_t".into(), self.strain.eval(1.0)? - rate),
            ]),
            (kind, _) => Err(TimestepError::ModelMismatch(format!(
                "controller data does not fit model `{}`",
                kind.name()
            ))),
        }
    }
}

/// Initial data projected onto the discrete state of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialData {
    pub family: String,
    pub state: DVector<f64>,
    /// Compatibility residuals of the continuous data, by condition.
    pub residuals: Vec<(String, f64)>,
}

/// Projects continuous data onto the grid after checking compatibility.
pub fn project_initial_data(
    spec: &ModelSpec,
    family: &str,
    data: &InitialExpressions,
    tol: f64,
) -> Result<InitialData, TimestepError> {
    let residuals = data.compatibility_residuals(spec)?;
    if let Some((condition, residual)) = residuals.iter().find(|(_, r)| r.abs() > tol) {
        return Err(TimestepError::Compatibility {
            condition: condition.clone(),
            residual: *residual,
        });
    }
    let grid = spec.wave_grid()?;
    let layout = spec.wave_layout();
    let mut state = Vec::new();
    for &j in &layout.velocity_nodes {
        state.push(data.velocity.eval(grid.node(j))?);
    }
    for c in 0..grid.cells() {
        state.push(data.strain.eval(grid.center(c))?);
    }
    match &data.controller {
        ControllerInit::Heat(w) => {
            let h = 1.0 / spec.heat_cells as f64;
            for j in 0..spec.heat_cells {
                state.push(w.eval(j as f64 * h)?);
            }
        }
        ControllerInit::Oscillator { delta, rate } => {
            state.push(*delta);
            state.push(*rate);
        }
    }
    Ok(InitialData {
        family: family.to_string(),
        state: DVector::from_vec(state),
        residuals,
    })
}

/// Named families: `default` and `zero`.
pub fn default_initial_data(spec: &ModelSpec, family: &str) -> Result<InitialData, TimestepError> {
    let data = match family {
        "default" => InitialExpressions::default_for(spec.kind),
        "zero" => InitialExpressions::zero(spec.kind),
        other => return Err(TimestepError::UnknownFamily(other.to_string())),
    };
    project_initial_data(spec, family, &data, COMPATIBILITY_TOL)
}

/// Energies recorded along a simulation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub total: Vec<f64>,
    pub plant: Vec<f64>,
    pub controller: Vec<f64>,
    pub snapshots: Vec<(f64, DVector<f64>)>,
}

/// Formats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl EnergyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(b"t,E_total,E_block1,E_block2\n")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(self.times[i]),
                fmt_f64(self.total[i]),
                fmt_f64(self.plant[i]),
                fmt_f64(self.controller[i])
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, TimestepError> {
        let mut trace = EnergyTrace::default();
        let mut lines = input.lines();
        match lines.next() {
            Some(header) => {
                let header = header?;
                if header.trim() != "t,E_total,E_block1,E_block2" {
                    return Err(TimestepError::Csv {
                        line: 1,
                        message: format!("unexpected header `{header}`"),
                    });
                }
            }
            None => {
                return Err(TimestepError::Csv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Result<Vec<f64>, _> =
                line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let fields = fields.map_err(|e| TimestepError::Csv {
                line: idx + 2,
                message: e.to_string(),
            })?;
            if fields.len() != 4 {
                return Err(TimestepError::Csv {
                    line: idx + 2,
                    message: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            trace.times.push(fields[0]);
            trace.total.push(fields[1]);
            trace.plant.push(fields[2]);
            trace.controller.push(fields[3]);
        }
        Ok(trace)
    }
}

fn diagonal_energy(weights: &[f64], x: &[f64]) -> f64 {
    0.5 * weights.iter().zip(x).map(|(w, v)| w * v * v).sum::<f64>()
}

/// Runs `steps` implicit-midpoint steps of size `dt` from `x0`.
///
/// Energies are recorded at every step (including `t = 0`); states are kept
/// every `snapshot_every` steps, or never when it is zero.
pub fn simulate(
    system: &CoupledSystem,
    x0: &DVector<f64>,
    dt: f64,
    steps: usize,
    snapshot_every: usize,
) -> Result<EnergyTrace, TimestepError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TimestepError::InvalidStep(dt));
    }
    let n = system.n();
    if x0.len() != n {
        return Err(TimestepError::Dimension {
            expected: n,
            got: x0.len(),
        });
    }
    let neg_half_a = CsrMatrix::from_dense(&(system.a_e() * (-0.5 * dt)));
    let ordering = BandOrdering::reverse_cuthill_mckee(&neg_half_a);
    let lu = BandedLu::factor_shifted(&ordering, 1.0, &neg_half_a)?;

    let split = system.split();
    let mass = CsrMatrix::from_dense(system.mass_e());
    let diagonal = (0..n).all(|i| mass.row(i).all(|(j, _)| j == i));
    let weights: Vec<f64> = system.mass_e().diagonal().iter().copied().collect();
    let mut mx = vec![0.0; n];
    let mut energies = |x: &[f64]| -> (f64, f64) {
        if diagonal {
            (
                diagonal_energy(&weights[..split], &x[..split]),
                diagonal_energy(&weights[split..], &x[split..]),
            )
        } else {
            mass.mul_vec(x, &mut mx);
            let dot = |r: std::ops::Range<usize>| 0.5 * r.map(|i| x[i] * mx[i]).sum::<f64>();
            (dot(0..split), dot(split..n))
        }
    };

    let mut trace = EnergyTrace {
        times: Vec::with_capacity(steps + 1),
        total: Vec::with_capacity(steps + 1),
        plant: Vec::with_capacity(steps + 1),
        controller: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
    };
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut y = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut work = Vec::with_capacity(n);
    for step in 0..=steps {
        if step > 0 {
            y.copy_from_slice(&x);
            lu.solve_in_place(&mut y, &mut work);
            // one step of iterative refinement keeps the energy drift at rounding level
            neg_half_a.mul_vec(&y, &mut r);
            for i in 0..n {
                r[i] = x[i] - y[i] - r[i];
            }
            lu.solve_in_place(&mut r, &mut work);
            for (yi, ri) in y.iter_mut().zip(&r) {
                *yi += ri;
            }
            for (xi, yi) in x.iter_mut().zip(&y) {
                *xi = 2.0 * yi - *xi;
            }
        }
        let t = step as f64 * dt;
        let (ep, ec) = energies(&x);
        trace.times.push(t);
        trace.plant.push(ep);
        trace.controller.push(ec);
        trace.total.push(ep + ec);
        if snapshot_every > 0 && step % snapshot_every == 0 {
            trace.snapshots.push((t, DVector::from_column_slice(&x)));
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_heat_block, build_wave_block, EndCondition, WaveGrid};
    use crate::expr::CoefficientProfile;
    use crate::interconnect::{build_model, couple, Convention};
    use crate::lti::PassiveBlock;
    use nalgebra::DMatrix;

    /// A block with no port, wrapped as a coupled system with an inert partner.
    fn closed(block: PassiveBlock) -> CoupledSystem {
        let n = block.n();
        let open = PassiveBlock::new(
            block.label(),
            block.a().clone(),
            DMatrix::zeros(n, 1),
            DMatrix::zeros(1, n),
            DMatrix::zeros(1, 1),
            block.mass().clone(),
        )
        .unwrap();
        let inert = PassiveBlock::new(
            "inert",
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        couple(open, inert, Convention::Standard).unwrap()
    }

    #[test]
    fn closed_wave_conserves_energy() {
        let unit = CoefficientProfile::constant(1.0, (-1.0, 0.0)).unwrap();
        let grid = WaveGrid::new((-1.0, 0.0), 20, &unit, &unit).unwrap();
        let wave =
            build_wave_block(&grid, EndCondition::ZeroStress, EndCondition::PortVelocity).unwrap();
        let sys = closed(wave);
        let x0 = DVector::from_fn(sys.n(), |i, _| {
            if i + 1 < sys.n() {
                (0.37 * i as f64).sin()
            } else {
                0.0
            }
        });
        let trace = simulate(&sys, &x0, 0.0125, 10_000, 0).unwrap();
        let e0 = trace.total[0];
        let drift = trace
            .total
            .iter()
            .map(|e| (e - e0).abs() / e0)
            .fold(0.0, f64::max);
        assert!(drift < 1e-12, "relative drift {drift:e}");
    }

    #[test]
    fn heat_alone_decays_strictly() {
        let sys = closed(build_heat_block(16).unwrap());
        let x0 = DVector::from_fn(
            sys.n(),
            |i, _| if i < 16 { 1.0 - i as f64 / 16.0 } else { 0.0 },
        );
        let trace = simulate(&sys, &x0, 1e-3, 200, 0).unwrap();
        assert!(trace.total.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn coupled_wave_heat_is_monotone() {
        let spec = ModelSpec::unit(ModelKind::WaveHeat, 20);
        let sys = build_model(&spec).unwrap();
        let x0 = default_initial_data(&spec, "default").unwrap();
        let dt = spec.wave_h() / 4.0;
        let trace = simulate(&sys, &x0.state, dt, 8000, 0).unwrap();
        let e0 = trace.total[0];
        for w in trace.total.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * e0);
        }
        assert!(trace.total.last().unwrap() < &(1e-2 * e0));
    }

    #[test]
    fn zero_data_stays_zero() {
        for kind in [ModelKind::WaveHeat, ModelKind::Acoustic] {
            let spec = ModelSpec::unit(kind, 8);
            let sys = build_model(&spec).unwrap();
            let x0 = default_initial_data(&spec, "zero").unwrap();
            let trace = simulate(&sys, &x0.state, 0.01, 50, 10).unwrap();
            assert!(trace.total.iter().all(|&e| e == 0.0));
            assert_eq!(trace.snapshots.len(), 6);
        }
    }

    #[test]
    fn default_data_is_compatible() {
        for kind in [ModelKind::WaveHeat, ModelKind::Acoustic] {
            let spec = ModelSpec::unit(kind, 10);
            let data = default_initial_data(&spec, "default").unwrap();
            for (name, r) in &data.residuals {
                assert!(r.abs() <= 1e-12, "{name}: {r:e}");
            }
        }
        let spec = ModelSpec::unit(ModelKind::Acoustic, 10);
        let data = InitialExpressions::default_for(ModelKind::Acoustic);
        let ControllerInit::Oscillator { rate, .. } = data.controller else {
            panic!("acoustic data carries an oscillator state")
        };
        assert_eq!(data.strain.eval(1.0).unwrap() - rate, 0.0);
        assert!(default_initial_data(&spec, "bogus").is_err());
    }

    #[test]
    fn incompatible_data_rejected() {
        let spec = ModelSpec::unit(ModelKind::WaveHeat, 10);
        let mut data = InitialExpressions::default_for(ModelKind::WaveHeat);
        data.velocity = parse("1").unwrap();
        let err = project_initial_data(&spec, "custom", &data, COMPATIBILITY_TOL).unwrap_err();
        assert!(matches!(err, TimestepError::Compatibility { .. }), "{err}");
        data.controller = ControllerInit::Oscillator {
            delta: 0.0,
            rate: 0.0,
        };
        assert!(matches!(
            project_initial_data(&spec, "custom", &data, COMPATIBILITY_TOL),
            Err(TimestepError::ModelMismatch(_))
        ));
    }

    #[test]
    fn zero_steps_single_row() {
        let spec = ModelSpec::unit(ModelKind::Acoustic, 4);
        let sys = build_model(&spec).unwrap();
        let x0 = default_initial_data(&spec, "default").unwrap();
        let trace = simulate(&sys, &x0.state, 0.1, 0, 0).unwrap();
        assert_eq!(trace.times, vec![0.0]);
        assert!(simulate(&sys, &x0.state, 0.0, 1, 0).is_err());
        assert!(simulate(&sys, &DVector::zeros(3), 0.1, 1, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let trace = EnergyTrace {
            times: vec![0.0, 0.5],
            total: vec![1.0, 0.1 + 0.2],
            plant: vec![0.75, 0.2],
            controller: vec![0.25, 0.1 + 0.2 - 0.2],
            snapshots: Vec::new(),
        };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,E_total,E_block1,E_block2\n0.0000000000000000e0,"));
        let back = EnergyTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn midpoint_refinement_is_second_order() {
        let spec = ModelSpec::unit(ModelKind::Acoustic, 16);
        let sys = build_model(&spec).unwrap();
        let x0 = default_initial_data(&spec, "default").unwrap().state;
        let t_final = 2.0;
        let run = |dt: f64| {
            let steps = (t_final / dt).round() as usize;
            *simulate(&sys, &x0, dt, steps, 0)
                .unwrap()
                .total
                .last()
                .unwrap()
        };
        let (e1, e2, e3) = (run(0.02), run(0.01), run(0.005));
        let order = ((e1 - e2) / (e2 - e3)).abs().log2();
        assert!(order >= 1.8, "observed order {order}");
    }
}
