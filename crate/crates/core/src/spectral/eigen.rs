use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{ResolventOperator, SpectralError};
use crate::interconnect::CoupledSystem;
use crate::lti::PassiveBlock;

/// Eigenvalues of `A` computed from `K = LᵀAL⁻ᵀ`, `M = LLᵀ`.
///
/// When `K` is skew up to rounding the eigenvalues are taken from the
/// Hermitian matrix `iK`, so they come out exactly imaginary. Otherwise a
/// real Schur decomposition is used. The result is sorted by imaginary part,
/// then real part.
pub fn spectrum(a: &DMatrix<f64>, mass: &DMatrix<f64>) -> Result<Vec<Complex64>, SpectralError> {
    let op = ResolventOperator::new(a, mass)?;
    let k = op.weighted_generator();
    let scale = k.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let asym = (k + k.transpose())
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut out: Vec<Complex64> = if asym <= 64.0 * f64::EPSILON * scale.max(1.0) {
        let skew = (k - k.transpose()) * 0.5;
        let herm = skew.map(|v| Complex64::new(0.0, v));
        herm.symmetric_eigenvalues()
            .iter()
            .map(|&mu| Complex64::new(0.0, -mu))
            .collect()
    } else {
        k.complex_eigenvalues().iter().copied().collect()
    };
    out.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));
    Ok(out)
}

/// Spectrum of the block with its input set to zero.
pub fn spectrum_of_block(block: &PassiveBlock) -> Result<Vec<Complex64>, SpectralError> {
    spectrum(block.a(), block.mass())
}

pub fn spectrum_of_system(system: &CoupledSystem) -> Result<Vec<Complex64>, SpectralError> {
    spectrum(system.a_e(), system.mass_e())
}

/// Largest real part, or `-inf` for an empty spectrum.
pub fn spectral_abscissa(eigenvalues: &[Complex64]) -> f64 {
    eigenvalues
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{build_heat_block, build_wave_block, EndCondition, WaveGrid};
    use crate::expr::CoefficientProfile;
    use crate::interconnect::{build_model, ModelKind, ModelSpec};
    use std::f64::consts::PI;

    fn unit_grid(interval: (f64, f64), cells: usize) -> WaveGrid {
        WaveGrid::new(
            interval,
            cells,
            &CoefficientProfile::constant(1.0, interval).unwrap(),
            &CoefficientProfile::constant(1.0, interval).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn closed_wave_spectrum_matches_separation_of_variables() {
        let mut errors = Vec::new();
        for cells in [40, 80] {
            let grid = unit_grid((-1.0, 0.0), cells);
            let block =
                build_wave_block(&grid, EndCondition::ZeroStress, EndCondition::PortVelocity)
                    .unwrap();
            let eig = spectrum_of_block(&block).unwrap();
            assert!(eig.iter().all(|z| z.re == 0.0));
            let mut positive: Vec<f64> = eig.iter().filter(|z| z.im > 0.0).map(|z| z.im).collect();
            positive.sort_by(f64::total_cmp);
            let err: f64 = (0..4)
                .map(|n| (positive[n] - (n as f64 + 0.5) * PI).abs())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        // dispersion error of the staggered stencil is about ω³h²/24
        assert!(errors[0] < 0.05, "{errors:?}");
        // second order: halving h divides the error by about four
        assert!(errors[0] / errors[1] > 3.5, "{errors:?}");
    }

    #[test]
    fn acoustic_closed_wave_has_no_zero_eigenvalue() {
        // the stress port with zero input is the ZeroStress end
        let grid = unit_grid((0.0, 1.0), 50);
        let block =
            build_wave_block(&grid, EndCondition::ZeroVelocity, EndCondition::PortStress).unwrap();
        let eig = spectrum_of_block(&block).unwrap();
        let smallest = eig.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
        assert!((smallest - PI / 2.0).abs() < 1e-3, "{smallest}");
    }

    #[test]
    fn output_feedback_stabilizes() {
        let grid = unit_grid((-1.0, 0.0), 30);
        let wave =
            build_wave_block(&grid, EndCondition::ZeroStress, EndCondition::PortVelocity).unwrap();
        let fed = wave.output_feedback(1.0).unwrap();
        assert!(spectral_abscissa(&spectrum_of_block(&fed).unwrap()) < 0.0);

        let heat = build_heat_block(30).unwrap();
        let open = spectral_abscissa(&spectrum_of_block(&heat).unwrap());
        let closed =
            spectral_abscissa(&spectrum_of_block(&heat.output_feedback(1.0).unwrap()).unwrap());
        assert!(open < 0.0 && closed < open, "{open} {closed}");
    }

    #[test]
    fn coupled_models_are_strictly_stable() {
        for kind in [ModelKind::WaveHeat, ModelKind::Acoustic] {
            let sys = build_model(&ModelSpec::unit(kind, 20)).unwrap();
            let eig = spectrum_of_system(&sys).unwrap();
            assert_eq!(eig.len(), sys.n());
            assert!(spectral_abscissa(&eig) < -1e-6, "{kind:?}");
        }
    }

    #[test]
    fn non_normal_spectrum_is_similarity_invariant() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 4.0, 0.0, -3.0]);
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let eig = spectrum(&a, &m).unwrap();
        assert!((eig[0].re + 3.0).abs() < 1e-12 || (eig[0].re + 1.0).abs() < 1e-12);
        let mut re: Vec<f64> = eig.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 3.0).abs() < 1e-12 && (re[1] + 1.0).abs() < 1e-12);
    }
}
