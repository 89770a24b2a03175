//! Static replication of twice-differentiable payoffs from vanilla option
//! strips, and the expected log-return of power payoffs priced that way.
//!
//! A payoff `g` decomposes into a bond, a forward, and a strip of
//! out-of-the-money options: `Price(g) = g(k) DF + g'(k)(1 - k DF) +
//! ∫ g''(y) O(y, k) dy`. With the pivot at `k = 1/DF` the forward leg
//! vanishes, which is how [`price_power_payoff`] works.

use crate::error::{Error, Result};
use crate::grid;
use crate::market::OptionCurve;

/// Fraction of the grid counted as "tail" for the truncation diagnostic.
const TAIL_CELL_FRACTION: f64 = 0.02;

/// Replication summary for a power payoff `x^R`.
#[derive(Debug, Clone, Copy)]
pub struct PowerPayoffPrice {
    /// Payoff exponent, the constant relative risk aversion it represents.
    pub risk_aversion: f64,
    /// Replication price of `x^R`.
    pub price: f64,
    /// `∫ y^(R-2) O(y, 1/DF) dy` over the strike grid.
    pub i1: f64,
    /// `∫ y^(R-2) O(y, 1/DF) ln y dy` over the strike grid.
    pub i2: f64,
    /// Discount factor of the curve.
    pub df: f64,
    /// Share of `i1` carried by the outermost grid cells; a truncation
    /// diagnostic, large when the integrand has not decayed by the edge.
    pub tail_fraction: f64,
}

impl PowerPayoffPrice {
    /// `∂Price(x^R)/∂R` assembled from the stored integrals.
    pub fn dprice_dr(&self) -> f64 {
        let r = self.risk_aversion;
        -self.df.powf(1.0 - r) * self.df.ln() + (2.0 * r - 1.0) * self.i1 + (r * r - r) * self.i2
    }

    /// True when the grid visibly truncates the integrals.
    pub fn tail_divergent(&self) -> bool {
        self.risk_aversion >= 3.5 && self.tail_fraction > 1e-4
    }
}

/// Prices a twice-differentiable payoff by static replication with the
/// pivot at `1/DF`, where the forward leg drops out exactly.
pub fn replicate_price<G, G1, G2>(g: G, g_prime: G1, g_second: G2, curve: &OptionCurve) -> Result<f64>
where
    G: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
    G2: Fn(f64) -> f64,
{
    replicate_price_with_pivot(g, g_prime, g_second, curve, curve.pivot())
}

/// General-pivot replication,
/// `g(k) DF + g'(k)(1 - k DF) + ∫ g''(y) O(y, k) dy`.
///
/// Away from `1/DF` the strip `O(y, k)` jumps at the pivot, so the integral
/// is split there, with the pivot endpoint priced exactly on both sides.
pub fn replicate_price_with_pivot<G, G1, G2>(
    g: G,
    g_prime: G1,
    g_second: G2,
    curve: &OptionCurve,
    pivot: f64,
) -> Result<f64>
where
    G: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
    G2: Fn(f64) -> f64,
{
    if !(pivot > 0.0) || !pivot.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pivot must be finite and > 0, got {pivot}"
        )));
    }
    let df = curve.df();
    let strikes = curve.strikes();
    let n = strikes.len();
    let check = |y: f64, v: f64| -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "replication integrand is not finite at strike {y}; \
                 the payoff diverges faster than the grid tail"
            )));
        }
        Ok(v)
    };
    let mut strip = 0.0;
    let cut = strikes.partition_point(|&y| y < pivot);
    if cut > 0 {
        // put side, closed on the right by the pivot itself
        let mut xs: Vec<f64> = strikes[..cut].to_vec();
        let mut vs = Vec::with_capacity(cut + 1);
        for &y in &xs {
            vs.push(check(y, g_second(y) * curve.put_price(y)?)?);
        }
        if pivot < strikes[n - 1] && pivot > strikes[cut - 1] {
            xs.push(pivot);
            vs.push(check(pivot, g_second(pivot) * curve.put_price(pivot)?)?);
        }
        strip += grid::integrate(&xs, &vs);
    }
    if cut < n {
        let mut xs: Vec<f64> = Vec::with_capacity(n - cut + 1);
        let mut vs = Vec::with_capacity(n - cut + 1);
        if pivot > strikes[0] && pivot < strikes[cut] {
            xs.push(pivot);
            vs.push(check(pivot, g_second(pivot) * curve.call_price(pivot)?)?);
        }
        for &y in &strikes[cut..] {
            xs.push(y);
            vs.push(check(y, g_second(y) * curve.call_price(y)?)?);
        }
        strip += grid::integrate(&xs, &vs);
    }
    Ok(g(pivot) * df + g_prime(pivot) * (1.0 - pivot * df) + strip)
}

fn strip_integrand<W>(curve: &OptionCurve, pivot: f64, weight: W) -> Result<Vec<f64>>
where
    W: Fn(f64) -> f64,
{
    let strikes = curve.strikes();
    let calls = curve.calls();
    let puts = curve.puts();
    let mut values = Vec::with_capacity(strikes.len());
    for i in 0..strikes.len() {
        let y = strikes[i];
        let strip = if y <= pivot { puts[i] } else { calls[i] };
        let v = weight(y) * strip;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "replication integrand is not finite at strike {y}; \
                 the payoff diverges faster than the grid tail"
            )));
        }
        values.push(v);
    }
    Ok(values)
}

/// Share of the integral carried by the outermost cells on either end.
fn tail_share(strikes: &[f64], integrand: &[f64], total: f64) -> f64 {
    if total.abs() <= f64::MIN_POSITIVE {
        return 0.0;
    }
    let cells = grid::integrate_cells(strikes, integrand);
    let n_tail = ((cells.len() as f64 * TAIL_CELL_FRACTION) as usize).max(1);
    let lo: f64 = cells[..n_tail].iter().sum();
    let hi: f64 = cells[cells.len() - n_tail..].iter().sum();
    (lo / total).abs().max((hi / total).abs())
}

/// Prices `x^R` by static replication:
/// `Price(x^R) = DF^(1-R) + (R^2 - R) I1`.
pub fn price_power_payoff(risk_aversion: f64, curve: &OptionCurve) -> Result<PowerPayoffPrice> {
    let r = risk_aversion;
    if !r.is_finite() {
        return Err(Error::InvalidInput(format!(
            "risk aversion must be finite, got {r}"
        )));
    }
    let df = curve.df();
    let strikes = curve.strikes();
    let integrand1 = strip_integrand(curve, curve.pivot(), |y| y.powf(r - 2.0))?;
    let integrand2 = strip_integrand(curve, curve.pivot(), |y| y.powf(r - 2.0) * y.ln())?;
    let mut i1 = grid::integrate(strikes, &integrand1);
    let mut i2 = grid::integrate(strikes, &integrand2);

    // The strip's log-strike derivative jumps by -df^(1-R) at the pivot
    // (times ln(pivot) for the i2 weight); the trapezoid rule feels the
    // jump as an O(du^2) bias with a known coefficient, removed here.
    let pivot = curve.pivot();
    let n = strikes.len();
    let at = strikes.partition_point(|&y| y < pivot);
    if at > 0 && at + 1 < n && (strikes[at] - pivot).abs() <= 1e-12 * pivot {
        let du_l = (strikes[at] / strikes[at - 1]).ln();
        let du_r = (strikes[at + 1] / strikes[at]).ln();
        let weight = du_l * du_r / 12.0;
        let jump = -df.powf(1.0 - r);
        i1 += weight * jump;
        i2 += weight * jump * pivot.ln();
    }

    let price = df.powf(1.0 - r) + (r * r - r) * i1;
    if !price.is_finite() || price <= 0.0 {
        return Err(Error::Numerical(format!(
            "replication price of x^{r} came out as {price}"
        )));
    }
    Ok(PowerPayoffPrice {
        risk_aversion: r,
        price,
        i1,
        i2,
        df,
        tail_fraction: tail_share(strikes, &integrand1, i1),
    })
}

/// Expected log-return of holding `x^R` to maturity,
/// `ER_R = [-DF^(1-R) ln DF + (2R-1) I1 + (R^2-R) I2] / [DF^(1-R) + (R^2-R) I1]`,
/// in horizon-total units.
pub fn expected_return_numeric(risk_aversion: f64, curve: &OptionCurve) -> Result<f64> {
    let p = price_power_payoff(risk_aversion, curve)?;
    Ok(p.dprice_dr() / p.price)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{GridSpec, LogNormalMarket, OptionCurve};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn flat_curve(r: f64, sigma: f64, t: f64) -> OptionCurve {
        OptionCurve::flat(r, sigma, t, &GridSpec::default()).unwrap()
    }

    /// Closed-form price of x^R on a flat-volatility market.
    fn lognormal_power_price(market: &LogNormalMarket, r: f64) -> f64 {
        market.df()
            * (r * market.mu() + 0.5 * r * r * market.sigma_total() * market.sigma_total()).exp()
    }

    #[test]
    fn identity_payoff_prices_to_one() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let p = replicate_price(|x| x, |_| 1.0, |_| 0.0, &curve).unwrap();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_payoff_prices_to_discounted_constant() {
        let curve = flat_curve(0.05, 0.3, 2.0);
        let c = 3.7;
        let p = replicate_price(|_| c, |_| 0.0, |_| 0.0, &curve).unwrap();
        assert_abs_diff_eq!(p, c * curve.df(), epsilon = 1e-12);
    }

    #[test]
    fn square_payoff_matches_lognormal_moment() {
        // horizon-total market: r = 0.1, sigma = 0.44721, df = e^-0.1
        let curve = flat_curve(0.1, 0.44721, 1.0);
        let p = replicate_price(|x| x * x, |x| 2.0 * x, |_| 2.0, &curve).unwrap();
        assert_relative_eq!(p, (0.3f64).exp(), max_relative = 1e-5);
    }

    #[test]
    fn general_pivot_agrees_with_default() {
        let curve = flat_curve(0.1, 0.44721, 1.0);
        let base = replicate_price(|x| x * x, |x| 2.0 * x, |_| 2.0, &curve).unwrap();
        let moved =
            replicate_price_with_pivot(|x| x * x, |x| 2.0 * x, |_| 2.0, &curve, 0.9 * curve.pivot())
                .unwrap();
        assert_relative_eq!(base, moved, max_relative = 1e-4);
    }

    #[test]
    fn power_payoff_degenerate_exponents() {
        let curve = flat_curve(0.03, 0.25, 2.0);
        let p0 = price_power_payoff(0.0, &curve).unwrap();
        assert_abs_diff_eq!(p0.price, curve.df(), epsilon = 1e-14);
        let p1 = price_power_payoff(1.0, &curve).unwrap();
        assert_abs_diff_eq!(p1.price, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn power_payoff_matches_closed_form() {
        let curve = flat_curve(0.1, 0.44721, 1.0);
        let market = LogNormalMarket::new(0.1, 0.44721).unwrap();
        let p = price_power_payoff(2.0, &curve).unwrap();
        assert_relative_eq!(p.price, lognormal_power_price(&market, 2.0), max_relative = 1e-5);
        assert_relative_eq!(p.price, 1.349_858_807_576_003, max_relative = 1e-4);
    }

    #[test]
    fn power_price_tracks_closed_form_across_exponents() {
        let t = 5.0;
        let curve = flat_curve(0.02, 0.2, t);
        let market = LogNormalMarket::from_annual(0.02, 0.2, t).unwrap();
        let mut r = -1.0;
        while r <= 3.0 {
            let p = price_power_payoff(r, &curve).unwrap();
            assert_relative_eq!(
                p.price,
                lognormal_power_price(&market, r),
                max_relative = 1e-4
            );
            r += 0.5;
        }
    }

    #[test]
    fn expected_return_matches_lognormal_limit() {
        let t = 5.0;
        let curve = flat_curve(0.02, 0.2, t);
        let market = LogNormalMarket::from_annual(0.02, 0.2, t).unwrap();
        let sig2 = market.sigma_total() * market.sigma_total();
        let mut r = -1.0;
        while r <= 3.0 {
            let er = expected_return_numeric(r, &curve).unwrap();
            assert_abs_diff_eq!(er, market.mu() + r * sig2, epsilon = 1e-4);
            r += 0.5;
        }
    }

    #[test]
    fn expected_return_kelly_point() {
        let curve = flat_curve(0.02, 0.2, 1.0);
        let er = expected_return_numeric(1.0, &curve).unwrap();
        assert_abs_diff_eq!(er, 0.02 + 0.5 * 0.04, epsilon = 1e-6);
    }

    #[test]
    fn expected_return_at_half_is_risk_free() {
        let curve = flat_curve(0.02, 0.2, 1.0);
        let er = expected_return_numeric(0.5, &curve).unwrap();
        assert_abs_diff_eq!(er, 0.02, epsilon = 1e-6);
    }

    #[test]
    fn expected_return_high_aversion_reference() {
        // R = 3, sigma = 20%, T = 1, r = 2%: total expected return 12%
        let curve = flat_curve(0.02, 0.2, 1.0);
        let er = expected_return_numeric(3.0, &curve).unwrap();
        assert_abs_diff_eq!(er, 0.12, epsilon = 1e-4);
    }

    #[test]
    fn expected_return_is_increasing_in_r() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let mut prev = f64::NEG_INFINITY;
        let mut r = -1.0;
        while r <= 3.0 {
            let er = expected_return_numeric(r, &curve).unwrap();
            assert!(er > prev, "ER not increasing at R = {r}");
            prev = er;
            r += 0.25;
        }
    }

    #[test]
    fn stored_derivative_matches_finite_difference() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        for r in [-0.5, 0.7, 2.2] {
            let p = price_power_payoff(r, &curve).unwrap();
            let h = 1e-5;
            let up = price_power_payoff(r + h, &curve).unwrap().price;
            let down = price_power_payoff(r - h, &curve).unwrap().price;
            let fd = (up - down) / (2.0 * h);
            assert_relative_eq!(p.dprice_dr(), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn grid_refinement_moves_results_below_gate() {
        let base = OptionCurve::flat(0.02, 0.2, 5.0, &GridSpec::default()).unwrap();
        let fine = OptionCurve::flat(
            0.02,
            0.2,
            5.0,
            &GridSpec {
                points: 4001,
                ..GridSpec::default()
            },
        )
        .unwrap();
        for r in [-1.0, 0.5, 2.0, 3.0] {
            let a = price_power_payoff(r, &base).unwrap();
            let b = price_power_payoff(r, &fine).unwrap();
            assert_relative_eq!(a.price, b.price, max_relative = 1e-5);
            let ea = expected_return_numeric(r, &base).unwrap();
            let eb = expected_return_numeric(r, &fine).unwrap();
            assert_abs_diff_eq!(ea, eb, epsilon = 1e-5);
        }
    }

    #[test]
    fn tail_divergence_flagged_for_steep_payoffs() {
        // wide vol pushes the R = 4 integrand mass beyond the grid edge
        let curve = flat_curve(0.02, 0.45, 5.0);
        let p = price_power_payoff(4.0, &curve).unwrap();
        assert!(p.tail_divergent(), "tail fraction {}", p.tail_fraction);
        let mild = flat_curve(0.02, 0.2, 1.0);
        let q = price_power_payoff(2.0, &mild).unwrap();
        assert!(!q.tail_divergent(), "tail fraction {}", q.tail_fraction);
    }
}
