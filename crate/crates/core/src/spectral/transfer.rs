use nalgebra::DMatrix;
use num_complex::Complex64;

use super::SpectralError;
use crate::discretize::AcousticParams;
use crate::linalg::{BandOrdering, BandedLu, CsrMatrix};
use crate::lti::PassiveBlock;

/// `tanh(z)` for `Re z >= 0`, written so that large `Re z` cannot overflow.
fn tanh_right_half(z: Complex64) -> Result<Complex64, SpectralError> {
    let t = (-2.0 * z).exp();
    let denom = 1.0 + t;
    if denom.norm() < 1e-14 {
        return Err(SpectralError::PoleProximity(format!("sqrt(lambda) = {z}")));
    }
    Ok((1.0 - t) / denom)
}

/// Transfer function `tanh(√λ)/√λ` of the heat rod (principal root, limit 1
/// at `λ = 0`). Poles sit at `λ = -((n + ½)π)²`.
pub fn heat_transfer(lambda: Complex64) -> Result<Complex64, SpectralError> {
    if lambda.norm() < 1e-4 {
        // tanh(z)/z = 1 - z²/3 + 2z⁴/15 - 17z⁶/315
        let l = lambda;
        return Ok(1.0 - l / 3.0 + l * l * (2.0 / 15.0) - l * l * l * (17.0 / 315.0));
    }
    let root = lambda.sqrt();
    tanh_right_half(root)
        .map(|t| t / root)
        .map_err(|_| SpectralError::PoleProximity(format!("lambda = {lambda}")))
}

/// `Re P_c(is)` of the heat rod in closed form,
/// `(sinh a + sin a) / (a (cosh a + cos a))` with `a = √(2|s|)`.
pub fn heat_transfer_real_part(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let a = (2.0 * s.abs()).sqrt();
    // divide through by cosh a so large a cannot overflow
    let num = a.tanh() + a.sin() / a.cosh();
    let den = a * (1.0 + a.cos() / a.cosh());
    num / den
}

/// `P_c(λ) = T1 β λ / (λ² + (d/m)λ + k/m)` of the boundary oscillator.
pub fn acoustic_transfer(
    lambda: Complex64,
    p: &AcousticParams,
) -> Result<Complex64, SpectralError> {
    let denom = lambda * lambda + lambda * (p.damping / p.mass) + p.spring / p.mass;
    if denom.norm() == 0.0 {
        return Err(SpectralError::PoleProximity(format!("lambda = {lambda}")));
    }
    Ok(p.stiffness_end * p.beta * lambda / denom)
}

/// `Re P_c(is) = T1 β m · d s² / ((m s² - k)² + d² s²)`.
pub fn acoustic_transfer_real_part(s: f64, p: &AcousticParams) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let (m, d, k) = (p.mass, p.damping, p.spring);
    let s2 = s * s;
    let denom = (m * s2 - k).powi(2) + d * d * s2;
    p.stiffness_end * p.beta * m * d * s2 / denom
}

/// `C(λI - A)⁻¹B + D` by one banded solve per input column.
pub fn numeric_transfer(
    block: &PassiveBlock,
    lambda: Complex64,
) -> Result<DMatrix<Complex64>, SpectralError> {
    let n = block.n();
    let m = block.m();
    let neg_a = CsrMatrix::from_dense(&block.a().map(|v| Complex64::new(-v, 0.0)));
    let ordering = BandOrdering::reverse_cuthill_mckee(&neg_a);
    let lu = BandedLu::factor_shifted(&ordering, lambda, &neg_a)?;
    let c = block.c().map(|v| Complex64::new(v, 0.0));
    let mut out = block.d().map(|v| Complex64::new(v, 0.0));
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    let mut work = Vec::with_capacity(n);
    for j in 0..m {
        for (i, x) in col.iter_mut().enumerate() {
            *x = Complex64::new(block.b()[(i, j)], 0.0);
        }
        lu.solve_in_place(&mut col, &mut work);
        for i in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, x) in col.iter().enumerate() {
                acc += c[(i, k)] * x;
            }
            out[(i, j)] += acc;
        }
    }
    Ok(out)
}
