//! Quantitative-structuring analytics over total-return distributions:
//! market-implied densities, static replication of smooth payoffs, implied
//! and realized risk aversion, belief/payoff duality, and equilibrium
//! aggregation of investor beliefs.
//!
//! Quantities live in horizon-total units internally (log return and log
//! volatility accumulated over the horizon); annualization happens only at
//! boundaries that say so. All types are immutable after construction and
//! every operation is a pure function of its inputs, so everything is safe
//! to use from any number of threads.

pub mod error;
pub mod grid;
pub mod historical;
pub mod io;
pub mod market;
pub mod premium;
pub mod replication;
pub mod structuring;
pub mod synth;

pub use error::{Error, Result};
pub use historical::{
    moving_average_r, partition_returns, realized_avg_risk_aversion, realized_rate,
    run_experiment_grid, EstimatorWindow, ExperimentConfig, ExperimentGrid, MovingPoint,
    OffsetRun, PartitionedReturns, PeriodMarket, RealizedRiskAversion, ReturnSeries,
};
pub use market::{
    bs_option_price, option_curve_from_surface, GridDensity, GridSpec, LogNormalMarket,
    OptionCurve, OptionKind, VolSurface,
};
pub use premium::{
    annualized_premium_numeric, expected_return_lognormal, implied_r_lognormal, implied_r_numeric,
    implied_r_series, Bracket, DatedSurface, ImpliedMethod, ImpliedRRow, ImpliedRSeries,
    ImpliedRiskAversion, PremiumQuote, SeriesOptions, SkippedQuote,
};
pub use replication::{
    expected_return_numeric, price_power_payoff, replicate_price, replicate_price_with_pivot,
    PowerPayoffPrice,
};
pub use structuring::{
    avg_risk_aversion_belief, belief_from_payoff, equilibrium_market, growth_optimal_payoff,
    payoff_from_belief, risk_aversion_profile, BeliefDensity, InvestorSpec, PayoffCurve,
    RiskAversionProfile,
};
pub use synth::{generate, SplitMix64, SyntheticWorld, SyntheticWorldSpec};
