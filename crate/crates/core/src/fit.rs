//! Least-squares fits used by refinement studies and limit extrapolation.

use serde::Serialize;

/// Straight-line fit `y ≈ intercept + slope · x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(!x.is_empty());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    LineFit {
        intercept,
        slope,
        residual,
    }
}

/// Observed order `p` in `err ≈ C hᵖ` from a log–log fit.
///
/// Errors at or below `floor` are treated as converged to rounding and the
/// order is reported as infinite.
pub fn convergence_order(h: &[f64], err: &[f64], floor: f64) -> f64 {
    if err.iter().all(|&e| e <= floor) {
        return f64::INFINITY;
    }
    let lx: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = err.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    line_fit(&lx, &ly).slope
}

/// Richardson-style limit: linear fit in `eps` over the last `last` points,
/// evaluated at `eps = 0`.
pub fn richardson_limit(eps: &[f64], values: &[f64], last: usize) -> LineFit {
    let start = eps.len().saturating_sub(last);
    line_fit(&eps[start..], &values[start..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!(f.residual < 1e-14);
    }

    #[test]
    fn order_of_power_law() {
        let h = [0.1, 0.05, 0.025];
        let e: Vec<f64> = h.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((convergence_order(&h, &e, 0.0) - 2.0).abs() < 1e-12);
        assert!(convergence_order(&h, &[0.0, 0.0, 0.0], 1e-14).is_infinite());
    }

    #[test]
    fn richardson_uses_trailing_points() {
        let eps = [1.0, 0.5, 0.25, 0.125, 0.0625];
        let vals = [100.0, 1.5, 1.25, 1.125, 1.0625];
        let f = richardson_limit(&eps, &vals, 4);
        assert!((f.intercept - 1.0).abs() < 1e-12);
    }
}
