//! Converting between expected equity premiums and implied risk aversion,
//! numerically from option curves and in closed form for flat-volatility
//! markets.
//!
//! Premiums here are annualized compound (geometric) excess returns. The
//! numeric route matches `(ER_R + ln DF) / T` to a premium quote by
//! bisection in R; the closed-form route inverts
//! `premium = (R - 1/2) sigma^2` at the at-the-money-forward volatility.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market::{option_curve_from_surface, GridSpec, LogNormalMarket, OptionCurve, VolSurface};
use crate::replication;

const MAX_BISECTION_ITERATIONS: usize = 100;

/// One dated premium quote.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumQuote {
    pub as_of: NaiveDate,
    /// Annualized compound premium, e.g. 0.06 for six percent.
    pub premium_annual: f64,
    /// Maturity of the option data the quote refers to, in years.
    pub horizon_years: f64,
}

impl PremiumQuote {
    pub fn new(as_of: NaiveDate, premium_annual: f64, horizon_years: f64) -> Result<Self> {
        if !premium_annual.is_finite() {
            return Err(Error::InvalidInput(format!(
                "premium must be finite, got {premium_annual}"
            )));
        }
        if !(horizon_years > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be > 0 years, got {horizon_years}"
            )));
        }
        Ok(Self {
            as_of,
            premium_annual,
            horizon_years,
        })
    }
}

/// How an implied risk aversion was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpliedMethod {
    /// Bisection against the replication-priced expected return.
    Numeric,
    /// Closed-form inversion on a flat-volatility market.
    Lognormal,
}

/// Solved risk aversion with solver diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ImpliedRiskAversion {
    pub risk_aversion: f64,
    pub method: ImpliedMethod,
    /// Premium-matching error at the solution, annualized.
    pub residual: f64,
    pub iterations: usize,
}

/// Expected log-return over the horizon for constant risk aversion on a
/// flat-volatility market: `r + (R - 1/2) sigma^2`, horizon-total units.
pub fn expected_return_lognormal(risk_aversion: f64, market: &LogNormalMarket) -> f64 {
    market.r_total() + (risk_aversion - 0.5) * market.sigma_total() * market.sigma_total()
}

/// Closed-form inversion: `R = premium / sigma^2 + 1/2`, both annualized.
pub fn implied_r_lognormal(premium_annual: f64, sigma_annual: f64) -> Result<f64> {
    if !(sigma_annual > 0.0) {
        return Err(Error::InvalidInput(format!(
            "volatility must be > 0 to carry premium information, got {sigma_annual}"
        )));
    }
    if !premium_annual.is_finite() {
        return Err(Error::InvalidInput(format!(
            "premium must be finite, got {premium_annual}"
        )));
    }
    Ok(premium_annual / (sigma_annual * sigma_annual) + 0.5)
}

/// Annualized compound premium of holding `x^R` to the curve's maturity,
/// `(ER_R + ln DF) / T`.
pub fn annualized_premium_numeric(risk_aversion: f64, curve: &OptionCurve) -> Result<f64> {
    let er = replication::expected_return_numeric(risk_aversion, curve)?;
    Ok((er + curve.df().ln()) / curve.maturity())
}

/// Bisection bracket for the risk-aversion solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self { lo: -5.0, hi: 15.0 }
    }
}

/// Finds R such that the curve's annualized premium matches the target, by
/// bisection on the bracket. The tolerance applies to the premium residual,
/// not to R.
pub fn implied_r_numeric(
    premium_annual: f64,
    curve: &OptionCurve,
    bracket: Bracket,
    tol: f64,
) -> Result<ImpliedRiskAversion> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    if !premium_annual.is_finite() {
        return Err(Error::InvalidInput(format!(
            "target premium must be finite, got {premium_annual}"
        )));
    }
    if !(bracket.lo < bracket.hi) {
        return Err(Error::InvalidInput(format!(
            "bracket must satisfy lo < hi, got [{}, {}]",
            bracket.lo, bracket.hi
        )));
    }
    let residual_at = |r: f64| -> Result<f64> {
        Ok(annualized_premium_numeric(r, curve)? - premium_annual)
    };
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let f_lo = residual_at(lo)?;
    let f_hi = residual_at(hi)?;
    let done = |r, residual, iterations| ImpliedRiskAversion {
        risk_aversion: r,
        method: ImpliedMethod::Numeric,
        residual,
        iterations,
    };
    if f_lo.abs() <= tol {
        return Ok(done(lo, f_lo, 0));
    }
    if f_hi.abs() <= tol {
        return Ok(done(hi, f_hi, 0));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSolution {
            lo,
            hi,
            f_lo,
            f_hi,
        });
    }
    let mut f_lo = f_lo;
    for iteration in 1..=MAX_BISECTION_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        let f_mid = residual_at(mid)?;
        if f_mid.abs() <= tol {
            return Ok(done(mid, f_mid, iteration));
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(format!(
        "bisection exhausted {MAX_BISECTION_ITERATIONS} iterations without reaching |residual| <= {tol}"
    )))
}

/// A volatility surface observed on a date.
#[derive(Debug, Clone)]
pub struct DatedSurface {
    pub date: NaiveDate,
    pub surface: VolSurface,
}

/// Options for [`implied_r_series`].
#[derive(Debug, Clone)]
pub struct SeriesOptions {
    /// Maximum calendar-day gap between a quote and the surface used for it.
    pub staleness_days: i64,
    pub grid: GridSpec,
    pub bracket: Bracket,
    /// Premium-residual tolerance for the bisection.
    pub tol: f64,
    /// When set, premiums are measured against this annualized rate instead
    /// of the rate implied by the surface's discount factor.
    pub risk_free_override_annual: Option<f64>,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            staleness_days: 7,
            grid: GridSpec::default(),
            bracket: Bracket::default(),
            tol: 1e-8,
            risk_free_override_annual: None,
        }
    }
}

/// One row of the implied risk-aversion series.
#[derive(Debug, Clone, Copy)]
pub struct ImpliedRRow {
    pub date: NaiveDate,
    pub r_numeric: f64,
    pub r_lognormal: f64,
    /// Premium residual of the numeric solve.
    pub residual: f64,
    pub iterations: usize,
}

/// A quote that produced no row, with the reason.
#[derive(Debug, Clone)]
pub struct SkippedQuote {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct ImpliedRSeries {
    pub rows: Vec<ImpliedRRow>,
    pub skipped: Vec<SkippedQuote>,
}

/// Per-date implied risk aversion by both methods. Quotes with no surface
/// inside the staleness window are skipped and reported, not fatal.
pub fn implied_r_series(
    quotes: &[PremiumQuote],
    surfaces: &[DatedSurface],
    opts: &SeriesOptions,
) -> Result<ImpliedRSeries> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for quote in quotes {
        let surface = match nearest_surface(quote.as_of, surfaces, opts.staleness_days) {
            Some(s) => s,
            None => {
                skipped.push(SkippedQuote {
                    date: quote.as_of,
                    reason: format!(
                        "no surface within {} days of {}",
                        opts.staleness_days, quote.as_of
                    ),
                });
                continue;
            }
        };
        match solve_one(quote, &surface.surface, opts) {
            Ok(row) => rows.push(row),
            Err(err) => skipped.push(SkippedQuote {
                date: quote.as_of,
                reason: err.to_string(),
            }),
        }
    }
    rows.sort_by_key(|row| row.date);
    Ok(ImpliedRSeries { rows, skipped })
}

fn nearest_surface<'a>(
    date: NaiveDate,
    surfaces: &'a [DatedSurface],
    staleness_days: i64,
) -> Option<&'a DatedSurface> {
    surfaces
        .iter()
        .filter_map(|s| {
            let gap = (s.date - date).num_days();
            (gap.abs() <= staleness_days).then_some((gap, s))
        })
        // nearest wins; on a distance tie prefer the surface on or after
        // the quote date (quotes are stamped at the start of the period)
        .min_by_key(|(gap, _)| (gap.abs(), *gap < 0))
        .map(|(_, s)| s)
}

fn solve_one(
    quote: &PremiumQuote,
    surface: &VolSurface,
    opts: &SeriesOptions,
) -> Result<ImpliedRRow> {
    let horizon = quote.horizon_years;
    let forward = surface.forward(horizon)?;
    let strikes = opts.grid.strikes(forward)?;
    let curve = option_curve_from_surface(surface, horizon, &strikes)?;
    // with an override the premium is ER/T - r_o rather than ER/T - r_df;
    // shift the solver target by the difference
    let target = match opts.risk_free_override_annual {
        Some(r_override) => {
            let r_df = curve.r_total() / horizon;
            quote.premium_annual + r_override - r_df
        }
        None => quote.premium_annual,
    };
    let numeric = implied_r_numeric(target, &curve, opts.bracket, opts.tol)?;
    let sigma_atmf = surface.atmf_vol(horizon)?;
    let r_lognormal = implied_r_lognormal(quote.premium_annual, sigma_atmf)?;
    Ok(ImpliedRRow {
        date: quote.as_of,
        r_numeric: numeric.risk_aversion,
        r_lognormal,
        residual: numeric.residual,
        iterations: numeric.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn flat_curve(r: f64, sigma: f64, t: f64) -> OptionCurve {
        OptionCurve::flat(r, sigma, t, &GridSpec::default()).unwrap()
    }

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn lognormal_er_at_half_is_risk_free() {
        let market = LogNormalMarket::from_annual(0.03, 0.25, 2.0).unwrap();
        assert_abs_diff_eq!(
            expected_return_lognormal(0.5, &market),
            market.r_total(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn lognormal_premium_reference_point() {
        // R = 3 at 20% vol: 10% annualized premium
        let market = LogNormalMarket::from_annual(0.02, 0.2, 1.0).unwrap();
        let premium = expected_return_lognormal(3.0, &market) - market.r_total();
        assert_abs_diff_eq!(premium, 0.10, epsilon = 1e-15);
    }

    #[test]
    fn lognormal_er_equals_mu_plus_r_sigma_squared() {
        let market = LogNormalMarket::from_annual(0.04, 0.3, 3.0).unwrap();
        let sig2 = market.sigma_total() * market.sigma_total();
        for r in [-1.0, 0.0, 0.5, 1.7, 3.0] {
            assert_abs_diff_eq!(
                expected_return_lognormal(r, &market),
                market.mu() + r * sig2,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn implied_r_lognormal_reference_values() {
        assert_abs_diff_eq!(implied_r_lognormal(0.06, 0.2).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            implied_r_lognormal(0.0035, 0.2).unwrap(),
            0.5875,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(implied_r_lognormal(0.0, 0.2).unwrap(), 0.5, epsilon = 1e-15);
        assert!(implied_r_lognormal(0.06, 0.0).is_err());
    }

    #[test]
    fn implied_r_round_trips_lognormal_target() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let market = LogNormalMarket::from_annual(0.02, 0.2, 5.0).unwrap();
        let target = (expected_return_lognormal(2.3, &market) - market.r_total()) / 5.0;
        let sol = implied_r_numeric(target, &curve, Bracket::default(), 1e-8).unwrap();
        assert_abs_diff_eq!(sol.risk_aversion, 2.3, epsilon = 1e-6);
        assert!(sol.residual.abs() <= 1e-8);
    }

    #[test]
    fn implied_r_zero_premium_is_half() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let sol = implied_r_numeric(0.0, &curve, Bracket::default(), 1e-8).unwrap();
        assert_abs_diff_eq!(sol.risk_aversion, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn implied_r_six_percent_at_twenty_vol() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let sol = implied_r_numeric(0.06, &curve, Bracket::default(), 1e-8).unwrap();
        assert_abs_diff_eq!(sol.risk_aversion, 2.0, epsilon = 1e-3);
    }

    #[test]
    fn both_methods_agree_on_flat_markets() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        for premium in [0.0, 0.02, 0.06, 0.1] {
            let numeric = implied_r_numeric(premium, &curve, Bracket::default(), 1e-10).unwrap();
            let closed = implied_r_lognormal(premium, 0.2).unwrap();
            assert_abs_diff_eq!(numeric.risk_aversion, closed, epsilon = 1e-3);
        }
    }

    #[test]
    fn unsolvable_premium_reports_bracket() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let err = implied_r_numeric(5.0, &curve, Bracket::default(), 1e-8).unwrap_err();
        match err {
            Error::NoSolution { lo, hi, f_lo, f_hi } => {
                assert_eq!((lo, hi), (-5.0, 15.0));
                assert!(f_lo < 0.0 && f_hi < 0.0);
            }
            other => panic!("expected NoSolution, got {other}"),
        }
    }

    #[test]
    fn series_is_constant_for_stationary_inputs() {
        let surface = VolSurface::flat(0.02, 0.2, &[1.0, 5.0]).unwrap();
        let surfaces: Vec<DatedSurface> = ["2024-01-02", "2024-02-01", "2024-03-01"]
            .iter()
            .map(|d| DatedSurface {
                date: date(d),
                surface: surface.clone(),
            })
            .collect();
        let quotes: Vec<PremiumQuote> = ["2024-01-01", "2024-02-01", "2024-03-01"]
            .iter()
            .map(|d| PremiumQuote::new(date(d), 0.05, 5.0).unwrap())
            .collect();
        let series = implied_r_series(&quotes, &surfaces, &SeriesOptions::default()).unwrap();
        assert_eq!(series.rows.len(), 3);
        assert!(series.skipped.is_empty());
        for w in series.rows.windows(2) {
            assert_abs_diff_eq!(w[0].r_numeric, w[1].r_numeric, epsilon = 1e-9);
            assert_abs_diff_eq!(w[0].r_lognormal, w[1].r_lognormal, epsilon = 1e-12);
        }
    }

    #[test]
    fn series_rises_with_premium_at_fixed_vol() {
        let surface = VolSurface::flat(0.02, 0.2, &[5.0]).unwrap();
        let quotes: Vec<PremiumQuote> = [(1, 0.02), (2, 0.04), (3, 0.06)]
            .iter()
            .map(|&(m, p)| {
                PremiumQuote::new(NaiveDate::from_ymd_opt(2024, m, 1).unwrap(), p, 5.0).unwrap()
            })
            .collect();
        let surfaces: Vec<DatedSurface> = quotes
            .iter()
            .map(|q| DatedSurface {
                date: q.as_of,
                surface: surface.clone(),
            })
            .collect();
        let series = implied_r_series(&quotes, &surfaces, &SeriesOptions::default()).unwrap();
        assert!(series.rows.windows(2).all(|w| w[1].r_numeric > w[0].r_numeric));
        assert!(series
            .rows
            .windows(2)
            .all(|w| w[1].r_lognormal > w[0].r_lognormal));
    }

    #[test]
    fn series_skips_quotes_without_surfaces() {
        let surface = VolSurface::flat(0.02, 0.2, &[5.0]).unwrap();
        let surfaces = vec![DatedSurface {
            date: date("2024-01-02"),
            surface,
        }];
        let quotes = vec![
            PremiumQuote::new(date("2024-01-01"), 0.05, 5.0).unwrap(),
            PremiumQuote::new(date("2024-06-01"), 0.05, 5.0).unwrap(),
        ];
        let series = implied_r_series(&quotes, &surfaces, &SeriesOptions::default()).unwrap();
        assert_eq!(series.rows.len(), 1);
        assert_eq!(series.skipped.len(), 1);
        assert_eq!(series.skipped[0].date, date("2024-06-01"));
        assert!(series.skipped[0].reason.contains("no surface"));
    }

    #[test]
    fn methods_stay_close_on_mildly_skewed_surfaces() {
        // two vol points of skew across [0.8, 1.2] moneyness
        let surface = VolSurface::new(
            vec![5.0],
            vec![(-0.02f64 * 5.0).exp()],
            vec![vec![0.8, 1.0, 1.2]],
            vec![vec![0.21, 0.20, 0.19]],
        )
        .unwrap();
        let quotes = vec![PremiumQuote::new(date("2024-01-01"), 0.05, 5.0).unwrap()];
        let surfaces = vec![DatedSurface {
            date: date("2024-01-01"),
            surface,
        }];
        let series = implied_r_series(&quotes, &surfaces, &SeriesOptions::default()).unwrap();
        let row = &series.rows[0];
        assert!(
            (row.r_numeric - row.r_lognormal).abs() < 0.5,
            "methods diverge: numeric {} vs lognormal {}",
            row.r_numeric,
            row.r_lognormal
        );
    }

    #[test]
    fn risk_free_override_shifts_the_target() {
        let surface = VolSurface::flat(0.02, 0.2, &[5.0]).unwrap();
        let quotes = vec![PremiumQuote::new(date("2024-01-01"), 0.05, 5.0).unwrap()];
        let surfaces = vec![DatedSurface {
            date: date("2024-01-01"),
            surface,
        }];
        let base = implied_r_series(&quotes, &surfaces, &SeriesOptions::default()).unwrap();
        let shifted = implied_r_series(
            &quotes,
            &surfaces,
            &SeriesOptions {
                // measuring against a 1% rate instead of the surface's 2%
                risk_free_override_annual: Some(0.01),
                ..SeriesOptions::default()
            },
        )
        .unwrap();
        // lower reference rate means the same quoted premium needs less ER,
        // hence lower implied R
        assert!(shifted.rows[0].r_numeric < base.rows[0].r_numeric);
        assert_abs_diff_eq!(
            base.rows[0].r_numeric - shifted.rows[0].r_numeric,
            0.01 / 0.04,
            epsilon = 1e-3
        );
    }

    #[test]
    fn annualized_premium_matches_closed_form() {
        let curve = flat_curve(0.02, 0.2, 5.0);
        let p = annualized_premium_numeric(3.0, &curve).unwrap();
        assert_relative_eq!(p, 0.10, max_relative = 1e-4);
    }
}
