use super::{BoundFit, FrequencyScan, SpectralError};
use crate::timestep::EnergyTrace;

const MIN_FIT_POINTS: usize = 5;

/// `n` equispaced points from `a` to `b` inclusive.
pub fn linear_grid(a: f64, b: f64, n: usize) -> Result<Vec<f64>, SpectralError> {
    if n < 2 || !(a.is_finite() && b.is_finite() && b > a) {
        return Err(SpectralError::InvalidGrid(format!(
            "linear grid [{a}, {b}] with {n} points"
        )));
    }
    let step = (b - a) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n).map(|i| a + step * i as f64).collect();
    grid[n - 1] = b;
    Ok(grid)
}

/// `n` log-equispaced points from `a > 0` to `b` inclusive.
pub fn log_grid(a: f64, b: f64, n: usize) -> Result<Vec<f64>, SpectralError> {
    if a.is_nan() || a <= 0.0 {
        return Err(SpectralError::InvalidGrid(format!(
            "log grid needs a > 0, got {a}"
        )));
    }
    let mut grid: Vec<f64> = linear_grid(a.ln(), b.ln(), n)?
        .into_iter()
        .map(f64::exp)
        .collect();
    grid[0] = a;
    grid[n - 1] = b;
    Ok(grid)
}

/// `[t/20, t/2]`.
pub fn default_decay_window(t_final: f64) -> (f64, f64) {
    (t_final / 20.0, t_final / 2.0)
}

/// Least-squares line through `(x, y)`: slope, intercept, R².
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    (slope, intercept, r2)
}

fn log_log_fit(points: &[(f64, f64)], window: (f64, f64)) -> Result<BoundFit, SpectralError> {
    if points.len() < MIN_FIT_POINTS {
        return Err(SpectralError::DegenerateWindow(format!(
            "{} points in [{}, {}], need at least {MIN_FIT_POINTS}",
            points.len(),
            window.0,
            window.1
        )));
    }
    if let Some(&(at, value)) = points.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(SpectralError::NonpositiveValue { at, value });
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    if x.iter().all(|v| *v == x[0]) {
        return Err(SpectralError::DegenerateWindow(
            "all abscissae coincide".into(),
        ));
    }
    let (slope, intercept, r2) = least_squares(&x, &y);
    Ok(BoundFit {
        alpha: slope,
        constant: intercept.exp(),
        window: [window.0, window.1],
        r2: Some(r2),
        points: points.len(),
    })
}

/// `η₀ = min value·(1 + s^α)` over grid points with `s >= s0`, or 0 if
/// any value there is not positive.
pub fn fit_lower_bound(
    scan: &FrequencyScan,
    alpha: f64,
    s0: f64,
) -> Result<BoundFit, SpectralError> {
    let points: Vec<(f64, f64)> = scan
        .s()
        .iter()
        .zip(scan.values())
        .filter(|(s, _)| **s >= s0)
        .map(|(s, v)| (*s, *v))
        .collect();
    let last = scan.s().last().copied().unwrap_or(s0);
    if points.is_empty() {
        return Err(SpectralError::EmptyWindow(s0, last));
    }
    let eta = if points.iter().any(|p| p.1 <= 0.0) {
        0.0
    } else {
        points
            .iter()
            .map(|(s, v)| v * (1.0 + s.abs().powf(alpha)))
            .fold(f64::INFINITY, f64::min)
    };
    Ok(BoundFit {
        alpha,
        constant: eta,
        window: [s0, last],
        r2: None,
        points: points.len(),
    })
}

/// Least-squares slope of `log value` against `log s` on `[lo, hi]`.
pub fn fit_power_law(scan: &FrequencyScan, window: (f64, f64)) -> Result<BoundFit, SpectralError> {
    let points: Vec<(f64, f64)> = scan
        .s()
        .iter()
        .zip(scan.values())
        .filter(|(s, _)| **s >= window.0 && **s <= window.1)
        .map(|(s, v)| (*s, *v))
        .collect();
    log_log_fit(&points, window)
}

/// Least-squares slope of `log E_total` against `log t` on `[t1, t2]`.
pub fn decay_rate_fit(trace: &EnergyTrace, window: (f64, f64)) -> Result<BoundFit, SpectralError> {
    let (t1, t2) = window;
    if !(t1 > 0.0 && t2 > t1) {
        return Err(SpectralError::DegenerateWindow(format!(
            "decay window [{t1}, {t2}] needs 0 < t1 < t2"
        )));
    }
    let peak = trace.total.iter().copied().fold(0.0, f64::max);
    let mut points = Vec::new();
    for (&t, &e) in trace.times.iter().zip(&trace.total) {
        if t < t1 || t > t2 {
            continue;
        }
        if e <= 1e-30 * peak || e <= 0.0 {
            return Err(SpectralError::EnergyUnderflow(t));
        }
        points.push((t, e));
    }
    log_log_fit(&points, window)
}
