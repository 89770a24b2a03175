//! Log-spaced grids, quadrature, and differentiation helpers shared by the
//! density and payoff modules.
//!
//! All integrals in this crate are composite trapezoid rules taken in the
//! log of the abscissa: `∫ f(x) dx = ∫ f(e^u) e^u du` with `u = ln x`. On
//! the log-spaced grids used throughout, integrands that decay smoothly at
//! both ends are handled essentially to machine precision.

use crate::error::{Error, Result};

/// Log-spaced grid of `points` values covering `[lo, hi]` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "grid bounds must satisfy 0 < lo < hi, got [{lo}, {hi}]"
        )));
    }
    if points < 2 {
        return Err(Error::InvalidInput(format!(
            "grid needs at least 2 points, got {points}"
        )));
    }
    let (u_lo, u_hi) = (lo.ln(), hi.ln());
    let step = (u_hi - u_lo) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|j| (u_lo + j as f64 * step).exp()).collect();
    grid[0] = lo;
    grid[points - 1] = hi;
    Ok(grid)
}

/// `∫ f dx` over the grid, trapezoid rule in `ln x`.
pub fn integrate(grid: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(grid.len(), values.len());
    if grid.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..grid.len() - 1 {
        let du = grid[i + 1].ln() - grid[i].ln();
        total += 0.5 * (grid[i] * values[i] + grid[i + 1] * values[i + 1]) * du;
    }
    total
}

/// Per-cell trapezoid contributions of [`integrate`], in grid order.
pub(crate) fn integrate_cells(grid: &[f64], values: &[f64]) -> Vec<f64> {
    debug_assert_eq!(grid.len(), values.len());
    (0..grid.len().saturating_sub(1))
        .map(|i| {
            let du = grid[i + 1].ln() - grid[i].ln();
            0.5 * (grid[i] * values[i] + grid[i + 1] * values[i + 1]) * du
        })
        .collect()
}

/// True when two grids agree pointwise to relative precision 1e-12.
pub fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(&x, &y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

/// `d ln(values) / d ln(x)` by central differences, evaluated on the grid
/// interior. Two points at each boundary are excluded rather than handled
/// one-sided; callers get `(sub_grid, slopes)` for `grid[2..n-2]`.
pub fn log_log_slope_interior(grid: &[f64], values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.len();
    if n != values.len() {
        return Err(Error::InvalidInput(
            "grid and values must have equal length".into(),
        ));
    }
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "log-slope needs at least 5 grid points, got {n}"
        )));
    }
    for (&x, &v) in grid.iter().zip(values) {
        if !(v > 0.0) {
            return Err(Error::InvalidInput(format!(
                "non-positive density values: {v} at x = {x}"
            )));
        }
    }
    let phi: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let u: Vec<f64> = grid.iter().map(|x| x.ln()).collect();
    let mut slopes = Vec::with_capacity(n - 4);
    for j in 2..n - 2 {
        slopes.push((phi[j + 1] - phi[j - 1]) / (u[j + 1] - u[j - 1]));
    }
    Ok((grid[2..n - 2].to_vec(), slopes))
}

/// Resamples `(src_grid, src_values)` onto `dst_grid`, interpolating the log
/// of the values linearly in `ln x`. Points outside the source span map to
/// zero; non-positive source values fall back to linear interpolation.
pub fn resample_log_linear(src_grid: &[f64], src_values: &[f64], dst_grid: &[f64]) -> Vec<f64> {
    debug_assert_eq!(src_grid.len(), src_values.len());
    let n = src_grid.len();
    dst_grid
        .iter()
        .map(|&x| {
            if n == 0 || x < src_grid[0] || x > src_grid[n - 1] {
                return 0.0;
            }
            let idx = match src_grid.binary_search_by(|probe| probe.partial_cmp(&x).unwrap()) {
                Ok(i) => return src_values[i],
                Err(i) => i,
            };
            let (i0, i1) = (idx - 1, idx);
            let t = (x.ln() - src_grid[i0].ln()) / (src_grid[i1].ln() - src_grid[i0].ln());
            let (v0, v1) = (src_values[i0], src_values[i1]);
            if v0 > 0.0 && v1 > 0.0 {
                (v0.ln() + t * (v1.ln() - v0.ln())).exp()
            } else {
                v0 + t * (v1 - v0)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_grid_endpoints_and_spacing() {
        let g = log_grid(0.02, 20.0, 2001).unwrap();
        assert_eq!(g.len(), 2001);
        assert_eq!(g[0], 0.02);
        assert_eq!(g[2000], 20.0);
        let r0 = g[1] / g[0];
        let r1 = g[1000] / g[999];
        assert_relative_eq!(r0, r1, max_relative = 1e-10);
    }

    #[test]
    fn log_grid_rejects_bad_bounds() {
        assert!(log_grid(0.0, 1.0, 10).is_err());
        assert!(log_grid(2.0, 1.0, 10).is_err());
        assert!(log_grid(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn integrate_power_function() {
        // ∫ x dx over [1, 2] = 1.5; integrand linear in x but smooth in u
        let g = log_grid(1.0, 2.0, 801).unwrap();
        let v: Vec<f64> = g.iter().map(|&x| x).collect();
        assert_relative_eq!(integrate(&g, &v), 1.5, max_relative = 1e-5);
    }

    #[test]
    fn integrate_decaying_gaussian_in_log() {
        // log-normal pdf integrates to 1; decaying tails make the rule
        // effectively exact
        let g = log_grid(0.02, 50.0, 2001).unwrap();
        let v: Vec<f64> = g
            .iter()
            .map(|&x| {
                let z = x.ln() / 0.3;
                (-0.5 * z * z).exp() / (x * 0.3 * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        assert_relative_eq!(integrate(&g, &v), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn slope_of_power_is_exact() {
        let g = log_grid(0.5, 2.0, 101).unwrap();
        let v: Vec<f64> = g.iter().map(|&x| 3.0 * x.powf(1.7)).collect();
        let (sub, slopes) = log_log_slope_interior(&g, &v).unwrap();
        assert_eq!(sub.len(), 97);
        for s in slopes {
            assert_relative_eq!(s, 1.7, max_relative = 1e-9);
        }
    }

    #[test]
    fn slope_rejects_non_positive_values() {
        let g = log_grid(0.5, 2.0, 11).unwrap();
        let mut v = vec![1.0; 11];
        v[5] = 0.0;
        assert!(log_log_slope_interior(&g, &v).is_err());
    }

    #[test]
    fn resample_recovers_power_law() {
        let src = log_grid(0.1, 10.0, 201).unwrap();
        let vals: Vec<f64> = src.iter().map(|&x| x.powf(-1.3)).collect();
        let dst = log_grid(0.2, 5.0, 57).unwrap();
        let out = resample_log_linear(&src, &vals, &dst);
        for (&x, &v) in dst.iter().zip(&out) {
            assert_relative_eq!(v, x.powf(-1.3), max_relative = 1e-9);
        }
    }

    #[test]
    fn resample_outside_span_is_zero() {
        let src = vec![1.0, 2.0];
        let vals = vec![1.0, 1.0];
        let out = resample_log_linear(&src, &vals, &[0.5, 1.5, 3.0]);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[2], 0.0);
        assert!(out[1] > 0.0);
    }
}
