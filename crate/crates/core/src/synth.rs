//! Deterministic synthetic market worlds: a seeded daily index path whose
//! per-period log-returns are the belief of a constant-R investor on a
//! flat-volatility market, plus the matching flat surfaces.
//!
//! # Random number generation
//!
//! Reproducibility across runs and languages matters more than generator
//! sophistication here, so the generator is pinned down exactly:
//!
//! * **SplitMix64** over a 64-bit counter. Per draw:
//!   `state += 0x9E3779B97F4A7C15`, then `z ^= z >> 30`,
//!   `z *= 0xBF58476D1CE4E5B9`, `z ^= z >> 27`, `z *= 0x94D049BB133111EB`,
//!   `z ^= z >> 31` (wrapping arithmetic throughout).
//! * Uniforms map the top 53 bits to `(0, 1)`:
//!   `u = ((x >> 11) + 0.5) / 2^53`.
//! * Normals are Box-Muller, cosine branch only, exactly two uniforms per
//!   draw: `z = sqrt(-2 ln u1) * cos(2 pi u2)`.

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};
use crate::historical::ReturnSeries;
use crate::market::VolSurface;

/// SplitMix64 generator; see the module docs for the exact algorithm.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in the open interval (0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) / (1u64 << 53) as f64
    }

    /// Standard normal draw; consumes exactly two uniforms.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Specification of a synthetic world.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorldSpec {
    pub years: usize,
    pub r_annual: f64,
    pub sigma_annual: f64,
    /// Risk aversion of the investor whose belief generates the path; the
    /// daily log-returns are drawn from N(mu + R sigma^2, sigma^2) scaled
    /// to one day.
    pub risk_aversion: f64,
    pub business_days_per_year: usize,
    pub seed: u64,
    /// First index date; weekend starts roll forward to Monday.
    pub start_date: NaiveDate,
    pub initial_level: f64,
    /// Maturities quoted on the flat surfaces.
    pub surface_maturities: Vec<f64>,
}

impl SyntheticWorldSpec {
    pub fn new(years: usize, r_annual: f64, sigma_annual: f64, risk_aversion: f64, seed: u64) -> Self {
        Self {
            years,
            r_annual,
            sigma_annual,
            risk_aversion,
            business_days_per_year: 252,
            seed,
            start_date: NaiveDate::from_ymd_opt(2005, 1, 3).unwrap(),
            initial_level: 100.0,
            surface_maturities: vec![1.0 / 12.0, 1.0 / 6.0, 1.0, 5.0],
        }
    }
}

/// A generated world: the index path and the flat surface that holds on
/// every date of it.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub series: ReturnSeries,
    pub surface: VolSurface,
}

/// Generates `years * business_days_per_year` daily steps (one more level
/// than steps), deterministically from the seed.
pub fn generate(spec: &SyntheticWorldSpec) -> Result<SyntheticWorld> {
    if spec.years == 0 || spec.business_days_per_year == 0 {
        return Err(Error::InvalidInput(
            "world needs at least one year and one business day per year".into(),
        ));
    }
    if !(spec.sigma_annual > 0.0) {
        return Err(Error::InvalidInput(format!(
            "sigma must be > 0, got {}",
            spec.sigma_annual
        )));
    }
    if !(spec.initial_level > 0.0) {
        return Err(Error::InvalidInput(format!(
            "initial level must be > 0, got {}",
            spec.initial_level
        )));
    }
    let steps = spec.years * spec.business_days_per_year;
    let dt = 1.0 / spec.business_days_per_year as f64;
    let sig2 = spec.sigma_annual * spec.sigma_annual;
    // believed daily log-return: (mu + R sigma^2) dt with variance sigma^2 dt
    let drift = (spec.r_annual - 0.5 * sig2 + spec.risk_aversion * sig2) * dt;
    let sd = spec.sigma_annual * dt.sqrt();

    let mut rng = SplitMix64::new(spec.seed);
    let mut levels = Vec::with_capacity(steps + 1);
    levels.push(spec.initial_level);
    for _ in 0..steps {
        let z = rng.next_normal();
        let next = levels.last().unwrap() * (drift + sd * z).exp();
        levels.push(next);
    }
    let dates = business_days_from(spec.start_date, steps + 1);
    let series = ReturnSeries::new(dates, levels)?;
    let surface = VolSurface::flat(spec.r_annual, spec.sigma_annual, &spec.surface_maturities)?;
    Ok(SyntheticWorld { series, surface })
}

/// `count` consecutive weekdays starting at `start` (rolled off weekends).
pub fn business_days_from(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut dates = Vec::with_capacity(count);
    let mut day = start;
    while matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
        day = day.succ_opt().expect("date overflow");
    }
    while dates.len() < count {
        dates.push(day);
        day = day.succ_opt().expect("date overflow");
        while matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            day = day.succ_opt().expect("date overflow");
        }
    }
    dates
}
