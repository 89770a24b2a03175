//! Belief/payoff duality and equilibrium aggregation.
//!
//! An investor's view `b`, the market density `m`, and the payoff they buy
//! are three faces of the same object: the growth-optimal payoff is the
//! ratio `b/m`, a constant-R investor holds `(b/m)^(1/R)`, and the
//! risk-aversion profile is the log-log slope of `b/m`. All operations here
//! require their inputs to share one grid; resample first if they do not.

use crate::error::{Error, Result};
use crate::grid;
use crate::market::GridDensity;

/// Beliefs integrate to one within this tolerance.
const BELIEF_MASS_TOL: f64 = 1e-6;

/// Largest admissible boundary term `x b(x)` at the grid edges.
const BOUNDARY_DECAY_TOL: f64 = 1e-6;

/// A normalized probability density over total return.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl BeliefDensity {
    /// Validates non-negativity and unit mass (within 1e-6).
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_density_shape(&grid, &values)?;
        let mass = grid::integrate(&grid, &values);
        if (mass - 1.0).abs() > BELIEF_MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "belief mass {mass} differs from 1 by more than {BELIEF_MASS_TOL}"
            )));
        }
        Ok(Self { grid, values })
    }

    /// Rescales arbitrary non-negative samples to unit quadrature mass.
    pub fn from_unnormalized(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_density_shape(&grid, &values)?;
        let mass = grid::integrate(&grid, &values);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!(
                "cannot normalize a density with mass {mass}"
            )));
        }
        let values = values.iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    /// Log-normal belief sampled on `grid` and normalized there.
    pub fn lognormal(grid: &[f64], log_mean: f64, log_sd: f64) -> Result<Self> {
        if !(log_sd > 0.0) {
            return Err(Error::InvalidInput(format!(
                "log standard deviation must be > 0, got {log_sd}"
            )));
        }
        let values = grid
            .iter()
            .map(|&x| {
                let z = (x.ln() - log_mean) / log_sd;
                (-0.5 * z * z).exp() / (x * log_sd * (2.0 * std::f64::consts::PI).sqrt())
            })
            .collect();
        Self::from_unnormalized(grid.to_vec(), values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `<ln x>` under this belief.
    pub fn mean_ln(&self) -> f64 {
        let weighted: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.values)
            .map(|(&x, &b)| x.ln() * b)
            .collect();
        grid::integrate(&self.grid, &weighted)
    }
}

fn validate_density_shape(grid: &[f64], values: &[f64]) -> Result<()> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(Error::InvalidInput(
            "density needs matching grid and values with at least 2 points".into(),
        ));
    }
    for (i, &x) in grid.iter().enumerate() {
        if !(x > 0.0) || (i > 0 && x <= grid[i - 1]) {
            return Err(Error::InvalidInput(
                "grid must be positive and strictly increasing".into(),
            ));
        }
        if !values[i].is_finite() || values[i] < 0.0 {
            return Err(Error::InvalidInput(format!(
                "density values must be finite and >= 0, got {} at x = {x}",
                values[i]
            )));
        }
    }
    Ok(())
}

/// A strictly positive payoff function with its budget against a market.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffCurve {
    grid: Vec<f64>,
    values: Vec<f64>,
    budget: f64,
}

impl PayoffCurve {
    /// Payoff with its budget `∫ F m dx` computed against `market`.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, market: &GridDensity) -> Result<Self> {
        validate_payoff_shape(&grid, &values)?;
        ensure_common_grid(&grid, market.grid())?;
        let budget = budget_of(&grid, &values, market);
        if !budget.is_finite() || budget <= 0.0 {
            return Err(Error::Numerical(format!(
                "payoff budget {budget} is not a positive finite number"
            )));
        }
        Ok(Self {
            grid,
            values,
            budget,
        })
    }

    /// Payoff rescaled so that `∫ F m dx = 1`.
    pub fn market_normalized(
        grid: Vec<f64>,
        values: Vec<f64>,
        market: &GridDensity,
    ) -> Result<Self> {
        let raw = Self::new(grid, values, market)?;
        let scale = raw.budget;
        let values: Vec<f64> = raw.values.iter().map(|v| v / scale).collect();
        Ok(Self {
            grid: raw.grid,
            values,
            budget: 1.0,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `∫ F m dx` against the market supplied at construction.
    pub fn budget(&self) -> f64 {
        self.budget
    }
}

fn validate_payoff_shape(grid: &[f64], values: &[f64]) -> Result<()> {
    if grid.len() != values.len() || grid.len() < 2 {
        return Err(Error::InvalidInput(
            "payoff needs matching grid and values with at least 2 points".into(),
        ));
    }
    for (&x, &v) in grid.iter().zip(values) {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "payoff values must be finite and strictly positive, got {v} at x = {x}"
            )));
        }
    }
    Ok(())
}

fn budget_of(grid: &[f64], values: &[f64], market: &GridDensity) -> f64 {
    let weighted: Vec<f64> = values
        .iter()
        .zip(market.values())
        .map(|(&f, &m)| f * m)
        .collect();
    grid::integrate(grid, &weighted)
}

/// Risk aversion as a function of the return level, on the grid interior.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskAversionProfile {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl RiskAversionProfile {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One market participant: invested dollars and a belief.
#[derive(Debug, Clone)]
pub struct InvestorSpec {
    pub weight: f64,
    pub belief: BeliefDensity,
}

fn ensure_common_grid(a: &[f64], b: &[f64]) -> Result<()> {
    if !grid::same_grid(a, b) {
        return Err(Error::InvalidInput(
            "inputs live on different grids; resample onto a common grid first".into(),
        ));
    }
    Ok(())
}

fn likelihood_ratio(belief: &BeliefDensity, market: &GridDensity) -> Result<Vec<f64>> {
    ensure_common_grid(belief.grid(), market.grid())?;
    belief
        .values()
        .iter()
        .zip(market.values())
        .zip(market.grid())
        .map(|((&b, &m), &x)| {
            if m <= 0.0 {
                if b > 0.0 {
                    return Err(Error::Numerical(format!(
                        "market density vanishes at x = {x} where the belief has mass; \
                         the payoff there is unbounded"
                    )));
                }
                return Err(Error::InvalidInput(format!(
                    "market density must be strictly positive on the grid, zero at x = {x}"
                )));
            }
            Ok(b / m)
        })
        .collect()
}

/// Payoff of the growth-optimal (Kelly) investor, the likelihood ratio
/// `b/m` scaled to unit budget. A market-believing investor gets a flat
/// payoff: no view, no trade.
pub fn growth_optimal_payoff(belief: &BeliefDensity, market: &GridDensity) -> Result<PayoffCurve> {
    let ratio = likelihood_ratio(belief, market)?;
    PayoffCurve::market_normalized(belief.grid().to_vec(), ratio, market)
}

/// Payoff of a constant-R investor, `(b/m)^(1/R)` at unit budget.
pub fn payoff_from_belief(
    belief: &BeliefDensity,
    market: &GridDensity,
    risk_aversion: f64,
) -> Result<PayoffCurve> {
    if risk_aversion == 0.0 {
        return Err(Error::InvalidInput(
            "zero risk aversion means infinite payoff elasticity; no finite payoff exists".into(),
        ));
    }
    if !risk_aversion.is_finite() {
        return Err(Error::InvalidInput(format!(
            "risk aversion must be finite, got {risk_aversion}"
        )));
    }
    let ratio = likelihood_ratio(belief, market)?;
    let values: Vec<f64> = ratio.iter().map(|t| t.powf(1.0 / risk_aversion)).collect();
    PayoffCurve::market_normalized(belief.grid().to_vec(), values, market)
}

/// Belief that makes a constant-R investor buy `payoff`:
/// `b = F^R m / Z` with `Z = ∫ F^R m dx`.
pub fn belief_from_payoff(
    payoff: &PayoffCurve,
    risk_aversion: f64,
    market: &GridDensity,
) -> Result<BeliefDensity> {
    if !risk_aversion.is_finite() {
        return Err(Error::InvalidInput(format!(
            "risk aversion must be finite, got {risk_aversion}"
        )));
    }
    ensure_common_grid(payoff.grid(), market.grid())?;
    let weighted: Vec<f64> = payoff
        .values()
        .iter()
        .zip(market.values())
        .map(|(&f, &m)| f.powf(risk_aversion) * m)
        .collect();
    if weighted.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "F^R m is not finite everywhere on the grid".into(),
        ));
    }
    BeliefDensity::from_unnormalized(payoff.grid().to_vec(), weighted)
}

/// Risk-aversion profile `R(x) = d ln(b/m) / d ln x` by central differences
/// on the grid interior (two boundary points excluded at each end).
pub fn risk_aversion_profile(
    belief: &BeliefDensity,
    market: &GridDensity,
) -> Result<RiskAversionProfile> {
    let ratio = likelihood_ratio(belief, market)?;
    let (sub_grid, slopes) = grid::log_log_slope_interior(belief.grid(), &ratio)?;
    Ok(RiskAversionProfile {
        grid: sub_grid,
        values: slopes,
    })
}

/// Belief-averaged risk aversion, `<R>_b = -1 - <x (ln m)'>_b`.
///
/// Needs `x b(x)` to have decayed at both grid edges, otherwise the
/// integration-by-parts identity behind the formula does not hold on the
/// grid and the call fails.
pub fn avg_risk_aversion_belief(belief: &BeliefDensity, market: &GridDensity) -> Result<f64> {
    ensure_common_grid(belief.grid(), market.grid())?;
    let xs = belief.grid();
    let b = belief.values();
    let n = xs.len();
    let boundary_lo = xs[0] * b[0];
    let boundary_hi = xs[n - 1] * b[n - 1];
    if boundary_lo > BOUNDARY_DECAY_TOL || boundary_hi > BOUNDARY_DECAY_TOL {
        return Err(Error::BoundaryDecay(format!(
            "x b(x) is {boundary_lo:.3e} / {boundary_hi:.3e} at the grid edges; \
             the boundary term does not vanish, widen the grid"
        )));
    }
    // x (ln m)'_x equals d ln m / d ln x, taken on the interior
    let (sub_grid, slopes) = grid::log_log_slope_interior(xs, market.values())?;
    let integrand: Vec<f64> = slopes
        .iter()
        .zip(&b[2..n - 2])
        .map(|(&s, &bv)| s * bv)
        .collect();
    Ok(-1.0 - grid::integrate(&sub_grid, &integrand))
}

/// The unique market consistent with everyone's holdings:
/// `m = (DF/W) Σ w_i β_i`.
pub fn equilibrium_market(investors: &[InvestorSpec], df: f64) -> Result<GridDensity> {
    if investors.is_empty() {
        return Err(Error::InvalidInput(
            "equilibrium needs at least one investor".into(),
        ));
    }
    if !(df > 0.0) || df > 1.0 {
        return Err(Error::InvalidInput(format!(
            "discount factor must lie in (0, 1], got {df}"
        )));
    }
    let total_weight: f64 = investors.iter().map(|inv| inv.weight).sum();
    for inv in investors {
        if !(inv.weight > 0.0) || !inv.weight.is_finite() {
            return Err(Error::InvalidInput(format!(
                "investor weights must be finite and > 0, got {}",
                inv.weight
            )));
        }
    }
    if !(total_weight > 0.0) {
        return Err(Error::InvalidInput("total invested weight is zero".into()));
    }
    let grid_x = investors[0].belief.grid();
    for inv in &investors[1..] {
        ensure_common_grid(grid_x, inv.belief.grid())?;
    }
    let mut values = vec![0.0; grid_x.len()];
    for inv in investors {
        let share = inv.weight / total_weight;
        for (acc, &b) in values.iter_mut().zip(inv.belief.values()) {
            *acc += share * b;
        }
    }
    for v in values.iter_mut() {
        *v *= df;
    }
    GridDensity::new(grid_x.to_vec(), values, df, 1e-9)
}
