//! Resolvent norms `‖(isI - A)⁻¹‖` in the energy norm `‖x‖_M = ‖Lᵀx‖`,
//! `M = LLᵀ`.
//!
//! Under the change of basis `y = Lᵀx` the resolvent becomes
//! `(isI - K)⁻¹` with `K = LᵀAL⁻ᵀ`, so the weighted norm is the reciprocal
//! of the smallest singular value of `isI - K`. Two routes are provided: a
//! dense SVD, and inverse power iteration on `(isI - K)^*(isI - K)` driven by a
//! banded LU. The banded route is what the scans use.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{FrequencyScan, ScanKind, SpectralError};
use crate::interconnect::CoupledSystem;
use crate::linalg::{BandOrdering, BandedLu, CsrMatrix};

const MAX_POWER_STEPS: usize = 2000;
const POWER_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct ResolventOperator {
    /// `K = LᵀAL⁻ᵀ`
    weighted: DMatrix<f64>,
    neg_weighted: CsrMatrix<Complex64>,
    ordering: BandOrdering,
}

impl ResolventOperator {
    pub fn new(a: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<Self, SpectralError> {
        let n = a.nrows();
        let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || mass[(i, j)] == 0.0));
        let weighted = if is_diagonal {
            let root: Vec<f64> = mass.diagonal().iter().map(|m| m.sqrt()).collect();
            DMatrix::from_fn(n, n, |i, j| root[i] * a[(i, j)] / root[j])
        } else {
            let chol = mass.clone().cholesky().ok_or_else(|| {
                SpectralError::InvalidGrid("mass matrix is not positive definite".into())
            })?;
            let l = chol.l();
            let l_inv = l
                .clone()
                .try_inverse()
                .expect("Cholesky factor is invertible");
            l.transpose() * a * l_inv.transpose()
        };
        let neg_weighted = CsrMatrix::from_dense(&weighted.map(|v| Complex64::new(-v, 0.0)));
        let ordering = BandOrdering::reverse_cuthill_mckee(&neg_weighted);
        Ok(ResolventOperator {
            weighted,
            neg_weighted,
            ordering,
        })
    }

    pub fn for_system(system: &CoupledSystem) -> Result<Self, SpectralError> {
        Self::new(system.a_e(), system.mass_e())
    }

    pub fn dim(&self) -> usize {
        self.weighted.nrows()
    }

    /// The generator in energy-orthonormal coordinates.
    pub fn weighted_generator(&self) -> &DMatrix<f64> {
        &self.weighted
    }

    /// Weighted resolvent norm at `is` by inverse power iteration.
    pub fn norm(&self, s: f64) -> Result<f64, SpectralError> {
        let n = self.dim();
        if n == 0 {
            return Ok(0.0);
        }
        let lu =
            BandedLu::factor_shifted(&self.ordering, Complex64::new(0.0, s), &self.neg_weighted)?;
        // fixed pseudo-random start so results are reproducible
        let mut x: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = i as f64;
                Complex64::new(1.0 + 0.5 * (1.3 * t).sin(), 0.25 * (0.7 * t + 0.1).cos())
            })
            .collect();
        normalize(&mut x);
        let mut work = Vec::with_capacity(n);
        let mut estimate = 0.0;
        for _ in 0..MAX_POWER_STEPS {
            lu.solve_in_place(&mut x, &mut work);
            let next = l2(&x);
            lu.solve_adjoint_in_place(&mut x, &mut work);
            normalize(&mut x);
            if !next.is_finite() {
                return Err(SpectralError::NoConvergence(s));
            }
            let done = (next - estimate).abs() <= POWER_TOL * next;
            estimate = next;
            if done {
                break;
            }
        }
        Ok(estimate)
    }

    /// Weighted resolvent norm at `is` from a dense SVD.
    pub fn norm_dense(&self, s: f64) -> Result<f64, SpectralError> {
        let n = self.dim();
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            let diag = if i == j {
                Complex64::new(0.0, s)
            } else {
                Complex64::new(0.0, 0.0)
            };
            diag - self.weighted[(i, j)]
        });
        let sigma = shifted.singular_values();
        let smallest = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        if smallest <= f64::EPSILON * sigma.max() {
            return Err(SpectralError::NoConvergence(s));
        }
        Ok(1.0 / smallest)
    }
}

fn l2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(x: &mut [Complex64]) {
    let norm = l2(x);
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

/// `‖R(is, A_e)‖` in the energy norm of the coupled system.
pub fn resolvent_norm(system: &CoupledSystem, s: f64) -> Result<f64, SpectralError> {
    ResolventOperator::for_system(system)?.norm(s)
}

/// Resolvent norm sampled on `grid`.
pub fn resolvent_scan(
    op: &ResolventOperator,
    grid: Vec<f64>,
) -> Result<FrequencyScan, SpectralError> {
    FrequencyScan::sample(ScanKind::ResolventNorm, grid, |s| op.norm(s))
}

fn golden_max<F>(f: F, mut lo: f64, mut hi: f64) -> Result<(f64, f64), SpectralError>
where
    F: Fn(f64) -> Result<f64, SpectralError>,
{
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Upper envelope of `s ↦ ‖R(is, A_e)‖` on `[s_min, s_max]`.
///
/// The norm is sampled on a uniform grid with spacing at most `step`, every
/// interior local maximum is refined by golden-section search, and the
/// refined peaks are returned. `step` must be well below the spacing of the
/// eigenvalue imaginary parts for every resonance to be bracketed.
pub fn resolvent_envelope(
    op: &ResolventOperator,
    s_min: f64,
    s_max: f64,
    step: f64,
) -> Result<FrequencyScan, SpectralError> {
    if !(s_min.is_finite() && s_max > s_min && step > 0.0) {
        return Err(SpectralError::InvalidGrid(format!(
            "envelope window [{s_min}, {s_max}] with step {step}"
        )));
    }
    let cells = ((s_max - s_min) / step).ceil() as usize;
    let grid = super::linear_grid(s_min, s_max, cells + 1)?;
    let coarse = resolvent_scan(op, grid)?;
    let (s, v) = (coarse.s(), coarse.values());
    let brackets: Vec<(f64, f64)> = (1..s.len() - 1)
        .filter(|&i| v[i] >= v[i - 1] && v[i] >= v[i + 1])
        .map(|i| (s[i - 1], s[i + 1]))
        .collect();
    let mut peaks = brackets
        .par_iter()
        .map(|&(lo, hi)| golden_max(|x| op.norm(x), lo, hi))
        .collect::<Result<Vec<_>, _>>()?;
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    peaks.dedup_by(|b, a| b.0 <= a.0);
    let (ps, pv) = peaks.into_iter().unzip();
    FrequencyScan::new(ScanKind::ResolventNorm, ps, pv)
}
