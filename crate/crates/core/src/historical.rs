//! Realized risk aversion from index histories.
//!
//! A long investment is viewed as a chain of imaginary reinvestments at a
//! fixed business-day period. Each period contributes a factor
//! `x_i = S_i / S_{i-1}`; the average realized risk aversion is
//! `<R>_P = -1 - mean(x_i * (ln m)'(x_i))` with the log-density slope taken
//! from the period's own market. The partition grid counts trading days
//! present in the series; holidays are not imputed.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market::{LogNormalMarket, OptionCurve};

/// Minimum fraction of periods whose slope must be usable.
const MIN_COVERAGE: f64 = 0.9;

/// Dated total-return index levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    levels: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, levels: Vec<f64>) -> Result<Self> {
        if dates.len() != levels.len() {
            return Err(Error::InvalidInput(
                "dates and levels must have equal length".into(),
            ));
        }
        if dates.len() < 2 {
            return Err(Error::InsufficientData(
                "a return series needs at least 2 observations".into(),
            ));
        }
        for (i, &level) in levels.iter().enumerate() {
            if !(level > 0.0) || !level.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "levels must be finite and > 0, got {level} at {}",
                    dates[i]
                )));
            }
            if i > 0 && dates[i] <= dates[i - 1] {
                return Err(Error::InvalidInput(format!(
                    "dates must be strictly increasing, got {} after {}",
                    dates[i],
                    dates[i - 1]
                )));
            }
        }
        Ok(Self { dates, levels })
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Consecutive reinvestment factors on a business-day grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedReturns {
    factors: Vec<f64>,
    period_business_days: usize,
    start_offset: usize,
    start_dates: Vec<NaiveDate>,
    end_dates: Vec<NaiveDate>,
}

impl PartitionedReturns {
    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    pub fn n(&self) -> usize {
        self.factors.len()
    }

    pub fn period_business_days(&self) -> usize {
        self.period_business_days
    }

    pub fn start_offset(&self) -> usize {
        self.start_offset
    }

    /// Date of each period's first level.
    pub fn start_dates(&self) -> &[NaiveDate] {
        &self.start_dates
    }

    /// Date of each period's last level.
    pub fn end_dates(&self) -> &[NaiveDate] {
        &self.end_dates
    }
}

/// Cuts the series into `floor((len - 1 - offset) / period)` consecutive
/// factors starting `start_offset` trading days in; leftover tail days are
/// dropped.
pub fn partition_returns(
    series: &ReturnSeries,
    period_business_days: usize,
    start_offset: usize,
) -> Result<PartitionedReturns> {
    if period_business_days == 0 {
        return Err(Error::InvalidInput("period must be at least 1 day".into()));
    }
    if start_offset >= period_business_days {
        return Err(Error::InvalidInput(format!(
            "start offset {start_offset} must fall inside the first period window of {period_business_days} days"
        )));
    }
    let steps = series.len() - 1 - start_offset.min(series.len() - 1);
    let n = steps / period_business_days;
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "series spans {n} full period(s) from offset {start_offset}; need at least 2"
        )));
    }
    let levels = series.levels();
    let dates = series.dates();
    let mut factors = Vec::with_capacity(n);
    let mut start_dates = Vec::with_capacity(n);
    let mut end_dates = Vec::with_capacity(n);
    for i in 0..n {
        let a = start_offset + i * period_business_days;
        let b = a + period_business_days;
        factors.push(levels[b] / levels[a]);
        start_dates.push(dates[a]);
        end_dates.push(dates[b]);
    }
    Ok(PartitionedReturns {
        factors,
        period_business_days,
        start_offset,
        start_dates,
        end_dates,
    })
}

/// Per-period realized log rate, `(1/N) Σ ln x_i`. Multiplied by N it
/// telescopes to `ln(S_end / S_start)` whatever the partition.
pub fn realized_rate(partition: &PartitionedReturns) -> f64 {
    partition.factors.iter().map(|x| x.ln()).sum::<f64>() / partition.n() as f64
}

/// A market usable as the per-period pricing measure: it can report the
/// log-density slope at a realized factor and its own risk-free return.
pub trait PeriodMarket {
    /// `d ln m / dx` at the realized return factor.
    fn log_density_slope(&self, x: f64) -> Result<f64>;
    /// Log risk-free return over the period.
    fn risk_free_total(&self) -> f64;
}

impl PeriodMarket for LogNormalMarket {
    fn log_density_slope(&self, x: f64) -> Result<f64> {
        self.log_density_slope_analytic(x)
    }

    fn risk_free_total(&self) -> f64 {
        self.r_total()
    }
}

impl PeriodMarket for OptionCurve {
    fn log_density_slope(&self, x: f64) -> Result<f64> {
        self.log_density_slope_auto(x)
    }

    fn risk_free_total(&self) -> f64 {
        self.r_total()
    }
}

impl<M: PeriodMarket + ?Sized> PeriodMarket for &M {
    fn log_density_slope(&self, x: f64) -> Result<f64> {
        (**self).log_density_slope(x)
    }

    fn risk_free_total(&self) -> f64 {
        (**self).risk_free_total()
    }
}

/// Estimation window of a [`RealizedRiskAversion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorWindow {
    FullSample,
    Moving { window_periods: usize },
}

/// Average realized risk aversion with its per-period terms.
#[derive(Debug, Clone)]
pub struct RealizedRiskAversion {
    /// `-1 - mean(per_period_terms)` over the usable terms.
    pub r_avg: f64,
    /// `x_i * (ln m)'(x_i)` per period; `None` where the slope failed.
    pub per_period_terms: Vec<Option<f64>>,
    pub window: EstimatorWindow,
}

impl RealizedRiskAversion {
    /// Fraction of periods with a usable slope.
    pub fn coverage(&self) -> f64 {
        if self.per_period_terms.is_empty() {
            return 0.0;
        }
        self.per_period_terms.iter().flatten().count() as f64 / self.per_period_terms.len() as f64
    }
}

fn slope_terms<M: PeriodMarket>(factors: &[f64], markets: &[Option<M>]) -> Vec<Option<f64>> {
    factors
        .iter()
        .zip(markets)
        .map(|(&x, market)| {
            market
                .as_ref()
                .and_then(|m| m.log_density_slope(x).ok())
                .map(|slope| x * slope)
        })
        .collect()
}

fn average_from_terms(terms: &[Option<f64>]) -> Result<f64> {
    let usable: Vec<f64> = terms.iter().flatten().copied().collect();
    let coverage = usable.len() as f64 / terms.len() as f64;
    if coverage < MIN_COVERAGE {
        return Err(Error::Numerical(format!(
            "slope coverage {:.1}% below the {:.0}% floor ({} of {} periods usable)",
            100.0 * coverage,
            100.0 * MIN_COVERAGE,
            usable.len(),
            terms.len()
        )));
    }
    Ok(-1.0 - usable.iter().sum::<f64>() / usable.len() as f64)
}

/// `<R>_P` over the whole partition, one market per period. Periods whose
/// slope fails are flagged and skipped; the estimate aborts when fewer than
/// 90% of periods survive.
pub fn realized_avg_risk_aversion<M: PeriodMarket>(
    partition: &PartitionedReturns,
    markets: &[M],
) -> Result<RealizedRiskAversion> {
    if markets.len() != partition.n() {
        return Err(Error::InvalidInput(format!(
            "need one market per period: {} periods, {} markets",
            partition.n(),
            markets.len()
        )));
    }
    let wrapped: Vec<Option<&M>> = markets.iter().map(Some).collect();
    let terms = slope_terms(partition.factors(), &wrapped);
    let r_avg = average_from_terms(&terms)?;
    Ok(RealizedRiskAversion {
        r_avg,
        per_period_terms: terms,
        window: EstimatorWindow::FullSample,
    })
}

/// One point of a moving-average series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingPoint {
    /// Date closing the last period inside the window.
    pub end_date: NaiveDate,
    pub r_avg: f64,
}

fn moving_from_terms(
    terms: &[Option<f64>],
    end_dates: &[NaiveDate],
    window_periods: usize,
) -> Result<Vec<MovingPoint>> {
    let n = terms.len();
    if window_periods == 0 {
        return Err(Error::InvalidInput("window must be at least 1 period".into()));
    }
    if window_periods > n {
        return Err(Error::InsufficientData(format!(
            "window of {window_periods} periods exceeds the {n} available"
        )));
    }
    // Reported from the first grid point after the initial full window; the
    // window ending exactly at period `window_periods` is the baseline and
    // is re-reported only when it is the sole window. Over 15 years of
    // bi-monthly periods this yields 30 values (29 when the final period is
    // missing from the data).
    let ends: Vec<usize> = if n == window_periods {
        vec![n]
    } else {
        (window_periods + 1..=n).collect()
    };
    let mut points = Vec::with_capacity(ends.len());
    for end in ends {
        let r_avg = average_from_terms(&terms[end - window_periods..end])?;
        points.push(MovingPoint {
            end_date: end_dates[end - 1],
            r_avg,
        });
    }
    Ok(points)
}

/// Sliding-window `<R>_P` on the partition grid.
pub fn moving_average_r<M: PeriodMarket>(
    partition: &PartitionedReturns,
    markets: &[M],
    window_periods: usize,
) -> Result<Vec<MovingPoint>> {
    if markets.len() != partition.n() {
        return Err(Error::InvalidInput(format!(
            "need one market per period: {} periods, {} markets",
            partition.n(),
            markets.len()
        )));
    }
    let wrapped: Vec<Option<&M>> = markets.iter().map(Some).collect();
    let terms = slope_terms(partition.factors(), &wrapped);
    moving_from_terms(&terms, partition.end_dates(), window_periods)
}

/// Configuration of the offset experiment grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    /// Reinvestment period in trading days; 42 is a two-month grid.
    pub period_business_days: usize,
    /// Number of start offsets to run, one per trading day.
    pub n_offsets: usize,
    /// Moving-average window in periods.
    pub window_periods: usize,
    /// Annualization convention for realized premia.
    pub business_days_per_year: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            period_business_days: 42,
            n_offsets: 42,
            window_periods: 60,
            business_days_per_year: 252.0,
        }
    }
}

/// Results of one offset run.
#[derive(Debug, Clone)]
pub struct OffsetRun {
    pub offset: usize,
    pub n_periods: usize,
    pub full_sample: RealizedRiskAversion,
    /// Realized annualized compound premium over the run's periods.
    pub annualized_premium: f64,
    pub moving: Vec<MovingPoint>,
}

/// Full experiment output: one run per available offset.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub runs: Vec<OffsetRun>,
    pub offsets_requested: usize,
}

/// Runs the full offset grid. `market_for` supplies the market observed at
/// each period's start date; failures there flag the period rather than
/// aborting the run. Offsets whose partitions no longer fit are dropped and
/// the grid reports what actually ran.
pub fn run_experiment_grid<M, F>(
    series: &ReturnSeries,
    market_for: F,
    cfg: &ExperimentConfig,
) -> Result<ExperimentGrid>
where
    M: PeriodMarket,
    F: Fn(NaiveDate) -> Result<M>,
{
    if cfg.n_offsets == 0 {
        return Err(Error::InvalidInput("need at least one offset".into()));
    }
    if !(cfg.business_days_per_year > 0.0) {
        return Err(Error::InvalidInput(
            "business days per year must be > 0".into(),
        ));
    }
    let max_offsets = cfg.n_offsets.min(cfg.period_business_days);
    let mut runs = Vec::new();
    for offset in 0..max_offsets {
        let partition = match partition_returns(series, cfg.period_business_days, offset) {
            Ok(p) => p,
            Err(Error::InsufficientData(_)) => break,
            Err(err) => return Err(err),
        };
        let markets: Vec<Option<M>> = partition
            .start_dates()
            .iter()
            .map(|&d| market_for(d).ok())
            .collect();
        let terms = slope_terms(partition.factors(), &markets);
        let r_avg = average_from_terms(&terms)?;
        let full_sample = RealizedRiskAversion {
            r_avg,
            per_period_terms: terms.clone(),
            window: EstimatorWindow::FullSample,
        };
        let moving = if partition.n() >= cfg.window_periods {
            moving_from_terms(&terms, partition.end_dates(), cfg.window_periods)?
        } else {
            Vec::new()
        };
        let annualized_premium = annualized_premium_for(&partition, &markets, cfg);
        runs.push(OffsetRun {
            offset,
            n_periods: partition.n(),
            full_sample,
            annualized_premium,
            moving,
        });
    }
    if runs.is_empty() {
        return Err(Error::InsufficientData(
            "no offset produced a viable partition".into(),
        ));
    }
    Ok(ExperimentGrid {
        runs,
        offsets_requested: cfg.n_offsets,
    })
}

fn annualized_premium_for<M: PeriodMarket>(
    partition: &PartitionedReturns,
    markets: &[Option<M>],
    cfg: &ExperimentConfig,
) -> f64 {
    let periods_per_year = cfg.business_days_per_year / cfg.period_business_days as f64;
    let excess: Vec<f64> = partition
        .factors()
        .iter()
        .zip(markets)
        .filter_map(|(&x, market)| market.as_ref().map(|m| x.ln() - m.risk_free_total()))
        .collect();
    if excess.is_empty() {
        return f64::NAN;
    }
    excess.iter().sum::<f64>() / excess.len() as f64 * periods_per_year
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SyntheticWorldSpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn daily_series(levels: Vec<f64>) -> ReturnSeries {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..levels.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        ReturnSeries::new(dates, levels).unwrap()
    }

    /// Degenerate market whose log-density slope is exactly -1/x.
    struct FlatLogDensity;

    impl PeriodMarket for FlatLogDensity {
        fn log_density_slope(&self, x: f64) -> Result<f64> {
            Ok(-1.0 / x)
        }

        fn risk_free_total(&self) -> f64 {
            0.0
        }
    }

    /// Market whose slope always fails.
    struct BrokenMarket;

    impl PeriodMarket for BrokenMarket {
        fn log_density_slope(&self, _x: f64) -> Result<f64> {
            Err(Error::UnreliableDensity("stub".into()))
        }

        fn risk_free_total(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn partition_direct_ratios() {
        let series = daily_series(vec![100.0, 110.0, 99.0]);
        let p = partition_returns(&series, 1, 0).unwrap();
        assert_eq!(p.factors().len(), 2);
        assert_relative_eq!(p.factors()[0], 1.1, max_relative = 1e-12);
        assert_relative_eq!(p.factors()[1], 0.9, max_relative = 1e-12);
    }

    #[test]
    fn fifteen_years_of_daily_data_gives_ninety_bimonthly_periods() {
        let levels = vec![100.0; 15 * 252 + 1];
        let series = daily_series(levels);
        let p = partition_returns(&series, 42, 0).unwrap();
        assert_eq!(p.n(), 90);
    }

    #[test]
    fn offset_outside_first_period_rejected() {
        let series = daily_series(vec![100.0; 200]);
        assert!(matches!(
            partition_returns(&series, 42, 42),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn insufficient_span_rejected() {
        let series = daily_series(vec![100.0; 50]);
        assert!(matches!(
            partition_returns(&series, 42, 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn rate_of_constant_factors() {
        let series = daily_series(vec![100.0, 103.0, 106.09, 109.2727]);
        let p = partition_returns(&series, 1, 0).unwrap();
        assert_abs_diff_eq!(realized_rate(&p), 1.03f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn rate_reference_value() {
        let series = daily_series(vec![100.0, 110.0, 99.0]);
        let p = partition_returns(&series, 1, 0).unwrap();
        assert_abs_diff_eq!(realized_rate(&p), -0.005_025_167_926_750_7, epsilon = 1e-12);
        assert_abs_diff_eq!(realized_rate(&p), 0.99f64.ln() / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rate_telescopes_across_partitions() {
        // 2520 steps factor into many period lengths with shared endpoints
        let mut levels = vec![100.0];
        let mut state = 0x1234_5678_u64;
        for _ in 0..2520 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let step = ((state >> 40) as f64 / (1u64 << 24) as f64 - 0.5) * 0.02;
            levels.push(levels.last().unwrap() * (1.0 + step));
        }
        let series = daily_series(levels.clone());
        let total = (levels[2520] / levels[0]).ln();
        for period in [1usize, 2, 4, 8, 20, 42, 1260] {
            let p = partition_returns(&series, period, 0).unwrap();
            assert_abs_diff_eq!(realized_rate(&p) * p.n() as f64, total, epsilon = 1e-12);
        }
    }

    #[test]
    fn kelly_world_has_unit_risk_aversion() {
        // every factor exactly exp(r + sigma^2/2) on a flat market
        let market = LogNormalMarket::new(0.01, 0.2).unwrap();
        let x = (0.01f64 + 0.5 * 0.04).exp();
        let mut levels = vec![1.0];
        for _ in 0..10 {
            levels.push(levels.last().unwrap() * x);
        }
        let series = daily_series(levels);
        let p = partition_returns(&series, 1, 0).unwrap();
        let markets = vec![market; p.n()];
        let est = realized_avg_risk_aversion(&p, &markets).unwrap();
        assert_abs_diff_eq!(est.r_avg, 1.0, epsilon = 1e-12);
        assert_eq!(est.coverage(), 1.0);
    }

    #[test]
    fn mean_log_return_oracle() {
        // mean ln x = 0.02 with r = 0 and sigma^2 = 0.04 per period: <R> = 1
        let market = LogNormalMarket::with_df(0.0, 0.2, 1.0).unwrap();
        let lns = [0.01, 0.03];
        let mut levels = vec![1.0];
        for i in 0..10 {
            levels.push(levels.last().unwrap() * (lns[i % 2] as f64).exp());
        }
        let series = daily_series(levels);
        let p = partition_returns(&series, 1, 0).unwrap();
        let markets = vec![market; p.n()];
        let est = realized_avg_risk_aversion(&p, &markets).unwrap();
        assert_abs_diff_eq!(est.r_avg, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn improper_flat_log_density_gives_zero() {
        let series = daily_series(vec![100.0, 105.0, 99.0, 104.0, 101.0]);
        let p = partition_returns(&series, 1, 0).unwrap();
        let markets: Vec<FlatLogDensity> = (0..p.n()).map(|_| FlatLogDensity).collect();
        let est = realized_avg_risk_aversion(&p, &markets).unwrap();
        assert_abs_diff_eq!(est.r_avg, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn low_coverage_aborts() {
        let series = daily_series(vec![100.0, 105.0, 99.0, 104.0, 101.0]);
        let p = partition_returns(&series, 1, 0).unwrap();
        let markets: Vec<BrokenMarket> = (0..p.n()).map(|_| BrokenMarket).collect();
        let err = realized_avg_risk_aversion(&p, &markets).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
        assert!(err.to_string().contains("coverage"));
    }

    #[test]
    fn estimator_identity_on_lognormal_markets() {
        // <R>_P = 1/2 + (mean ln x - r) / sigma^2 exactly, analytic slopes
        let spec = SyntheticWorldSpec::new(4, 0.02, 0.2, 2.0, 13);
        let world = generate(&spec).unwrap();
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let period_market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        let markets = vec![period_market; p.n()];
        let est = realized_avg_risk_aversion(&p, &markets).unwrap();
        let sig2 = period_market.sigma_total() * period_market.sigma_total();
        let expected = 0.5 + (realized_rate(&p) - period_market.r_total()) / sig2;
        assert_abs_diff_eq!(est.r_avg, expected, epsilon = 1e-12);
    }

    #[test]
    fn finite_difference_slopes_track_analytic() {
        let spec = SyntheticWorldSpec::new(4, 0.02, 0.2, 2.0, 99);
        let world = generate(&spec).unwrap();
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let t = 42.0 / 252.0;
        let market = LogNormalMarket::from_annual(0.02, 0.2, t).unwrap();
        let curve = OptionCurve::flat(0.02, 0.2, t, &crate::market::GridSpec::default()).unwrap();
        let analytic = realized_avg_risk_aversion(&p, &vec![market; p.n()]).unwrap();
        let curves: Vec<&OptionCurve> = (0..p.n()).map(|_| &curve).collect();
        let numeric = realized_avg_risk_aversion(&p, &curves).unwrap();
        assert_abs_diff_eq!(numeric.r_avg, analytic.r_avg, epsilon = 1e-2);
    }

    #[test]
    fn moving_average_reporting_counts() {
        let spec = SyntheticWorldSpec::new(15, 0.02, 0.2, 2.0, 7);
        let world = generate(&spec).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();

        let p0 = partition_returns(&world.series, 42, 0).unwrap();
        assert_eq!(p0.n(), 90);
        let points = moving_average_r(&p0, &vec![market; p0.n()], 60).unwrap();
        assert_eq!(points.len(), 30);

        let p1 = partition_returns(&world.series, 42, 1).unwrap();
        assert_eq!(p1.n(), 89);
        let points = moving_average_r(&p1, &vec![market; p1.n()], 60).unwrap();
        assert_eq!(points.len(), 29);
    }

    #[test]
    fn degenerate_window_equals_full_sample() {
        let spec = SyntheticWorldSpec::new(3, 0.02, 0.2, 1.0, 5);
        let world = generate(&spec).unwrap();
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        let markets = vec![market; p.n()];
        let full = realized_avg_risk_aversion(&p, &markets).unwrap();
        let points = moving_average_r(&p, &markets, p.n()).unwrap();
        assert_eq!(points.len(), 1);
        assert_abs_diff_eq!(points[0].r_avg, full.r_avg, epsilon = 1e-15);
        assert_eq!(points[0].end_date, *p.end_dates().last().unwrap());
    }

    #[test]
    fn window_larger_than_sample_rejected() {
        let spec = SyntheticWorldSpec::new(3, 0.02, 0.2, 1.0, 5);
        let world = generate(&spec).unwrap();
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        assert!(matches!(
            moving_average_r(&p, &vec![market; p.n()], p.n() + 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn moving_averages_stay_near_full_sample_on_stationary_data() {
        let spec = SyntheticWorldSpec::new(15, 0.02, 0.2, 2.0, 11);
        let world = generate(&spec).unwrap();
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        let markets = vec![market; p.n()];
        let full = realized_avg_risk_aversion(&p, &markets).unwrap();
        let window = 60;
        let points = moving_average_r(&p, &markets, window).unwrap();

        // bootstrap the window-mean spread from the per-period terms
        let terms: Vec<f64> = full.per_period_terms.iter().flatten().copied().collect();
        let mut rng = crate::synth::SplitMix64::new(424242);
        let mut means = Vec::with_capacity(400);
        for _ in 0..400 {
            let mut acc = 0.0;
            for _ in 0..window {
                let idx = (rng.next_u64() % terms.len() as u64) as usize;
                acc += terms[idx];
            }
            means.push(-1.0 - acc / window as f64);
        }
        let center = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - center) * (m - center)).sum::<f64>()
            / (means.len() - 1) as f64;
        let se = var.sqrt();
        for point in points {
            assert!(
                (point.r_avg - full.r_avg).abs() <= 2.0 * se,
                "moving value {} vs full {} exceeds 2 x {se}",
                point.r_avg,
                full.r_avg
            );
        }
    }

    #[test]
    fn experiment_grid_runs_all_offsets() {
        let spec = SyntheticWorldSpec::new(4, 0.02, 0.2, 2.0, 3);
        let world = generate(&spec).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        let cfg = ExperimentConfig {
            window_periods: 12,
            ..ExperimentConfig::default()
        };
        let grid = run_experiment_grid(&world.series, |_| Ok(market), &cfg).unwrap();
        assert_eq!(grid.runs.len(), 42);
        assert_eq!(grid.runs[0].n_periods, 24);
        for run in &grid.runs {
            assert!(run.annualized_premium.is_finite());
        }
    }

    #[test]
    fn single_offset_reduces_to_plain_estimators() {
        let spec = SyntheticWorldSpec::new(4, 0.02, 0.2, 2.0, 3);
        let world = generate(&spec).unwrap();
        let market = LogNormalMarket::from_annual(0.02, 0.2, 42.0 / 252.0).unwrap();
        let cfg = ExperimentConfig {
            n_offsets: 1,
            window_periods: 12,
            ..ExperimentConfig::default()
        };
        let grid = run_experiment_grid(&world.series, |_| Ok(market), &cfg).unwrap();
        assert_eq!(grid.runs.len(), 1);
        let p = partition_returns(&world.series, 42, 0).unwrap();
        let direct = realized_avg_risk_aversion(&p, &vec![market; p.n()]).unwrap();
        assert_abs_diff_eq!(grid.runs[0].full_sample.r_avg, direct.r_avg, epsilon = 1e-15);
        let moving = moving_average_r(&p, &vec![market; p.n()], 12).unwrap();
        assert_eq!(grid.runs[0].moving, moving);
    }

    #[test]
    fn grid_reports_fewer_offsets_when_data_runs_out() {
        // 11 daily steps fit two 5-day periods at offsets 0 and 1 only
        let levels: Vec<f64> = (0..12).map(|i| 100.0 + i as f64).collect();
        let series = daily_series(levels);
        let market = LogNormalMarket::new(0.001, 0.05).unwrap();
        let cfg = ExperimentConfig {
            period_business_days: 5,
            n_offsets: 5,
            window_periods: 2,
            business_days_per_year: 252.0,
        };
        let grid = run_experiment_grid(&series, |_| Ok(market), &cfg).unwrap();
        assert_eq!(grid.offsets_requested, 5);
        assert_eq!(grid.runs.len(), 2);
    }

    #[test]
    fn estimator_standard_error_scales_as_root_n() {
        let market = LogNormalMarket::with_df(0.0, 0.1, 1.0).unwrap();
        let mut rng = crate::synth::SplitMix64::new(2024);
        let mut sds = Vec::new();
        for &n in &[50usize, 200, 800] {
            let mut estimates = Vec::with_capacity(200);
            for _ in 0..200 {
                let mut levels = vec![1.0];
                for _ in 0..n {
                    let z = rng.next_normal();
                    levels.push(levels.last().unwrap() * (market.mu() + 0.1 * z).exp());
                }
                let series = daily_series(levels);
                let p = partition_returns(&series, 1, 0).unwrap();
                let markets = vec![market; p.n()];
                estimates.push(realized_avg_risk_aversion(&p, &markets).unwrap().r_avg);
            }
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                / (estimates.len() - 1) as f64;
            sds.push(var.sqrt());
        }
        // quadrupling N should halve the spread, within sampling slack
        let r1 = sds[0] / sds[1];
        let r2 = sds[1] / sds[2];
        assert!((1.4..=2.9).contains(&r1), "scaling ratios {sds:?}");
        assert!((1.4..=2.9).contains(&r2), "scaling ratios {sds:?}");
    }
}
