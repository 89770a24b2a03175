//! Market representations: flat log-normal markets, volatility surfaces,
//! option curves, and the densities implied by call prices.
//!
//! Everything is stored in horizon-total units: `r_total` is the log
//! risk-free return accumulated over the horizon and `sigma_total` the log
//! volatility over the horizon (`sigma_annual * sqrt(T)`). Annualized
//! numbers appear only in constructors that say so.

use crate::error::{Error, Result};
use crate::grid;

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Relative finite-difference step used for strike derivatives.
pub(crate) const FD_STEP_REL: f64 = 1e-3;

/// Curves whose discrete call convexity dips below this are rejected, not
/// repaired.
const CONVEXITY_TOL: f64 = 1e-8;

const MONOTONICITY_TOL: f64 = 1e-10;

// strike finite differences amplify CDF noise, so this needs a sub-ulp
// erfc; libm's is the musl one
#[inline]
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Option side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionKind {
    Call,
    Put,
}

/// Flat-volatility market over a single horizon.
///
/// The implied distribution over total return `x` is log-normal with
/// log-mean `mu = r_total - sigma_total^2 / 2`, discounted so that it
/// integrates to the discount factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalMarket {
    r_total: f64,
    sigma_total: f64,
    df: f64,
    mu: f64,
}

impl LogNormalMarket {
    /// Market with `df = exp(-r_total)`.
    pub fn new(r_total: f64, sigma_total: f64) -> Result<Self> {
        Self::with_df(r_total, sigma_total, (-r_total).exp())
    }

    /// Market with an explicit discount factor.
    pub fn with_df(r_total: f64, sigma_total: f64, df: f64) -> Result<Self> {
        if !r_total.is_finite() || !sigma_total.is_finite() || !df.is_finite() {
            return Err(Error::InvalidInput(
                "market parameters must be finite".into(),
            ));
        }
        if sigma_total <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "sigma_total must be > 0, got {sigma_total}"
            )));
        }
        if df <= 0.0 || df > 1.0 {
            return Err(Error::InvalidInput(format!(
                "discount factor must lie in (0, 1], got {df}"
            )));
        }
        Ok(Self {
            r_total,
            sigma_total,
            df,
            mu: r_total - 0.5 * sigma_total * sigma_total,
        })
    }

    /// Market from annualized rate and volatility over `t_years`.
    pub fn from_annual(r_annual: f64, sigma_annual: f64, t_years: f64) -> Result<Self> {
        if !(t_years > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be > 0 years, got {t_years}"
            )));
        }
        Self::new(r_annual * t_years, sigma_annual * t_years.sqrt())
    }

    pub fn r_total(&self) -> f64 {
        self.r_total
    }

    pub fn sigma_total(&self) -> f64 {
        self.sigma_total
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    /// Log-mean of the implied distribution, `r_total - sigma_total^2 / 2`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Forward of one invested unit, `1 / df`.
    pub fn forward(&self) -> f64 {
        1.0 / self.df
    }

    /// Discounted log-normal density of total return at `x`.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density requires x > 0, got {x}"
            )));
        }
        let z = (x.ln() - self.mu) / self.sigma_total;
        Ok(self.df / (x * self.sigma_total * SQRT_2PI) * (-0.5 * z * z).exp())
    }

    /// `d ln m / dx` in closed form.
    pub fn log_density_slope_analytic(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidInput(format!(
                "slope requires x > 0, got {x}"
            )));
        }
        Ok(-1.0 / x - (x.ln() - self.mu) / (self.sigma_total * self.sigma_total * x))
    }

    /// Return level with the highest density, `exp(mu - sigma_total^2)`.
    pub fn mode(&self) -> f64 {
        (self.mu - self.sigma_total * self.sigma_total).exp()
    }

    /// Samples the density on a grid; the quadrature mass must land within
    /// 1e-4 of the discount factor.
    pub fn grid_density(&self, grid_x: &[f64]) -> Result<GridDensity> {
        let values = grid_x
            .iter()
            .map(|&x| self.density(x))
            .collect::<Result<Vec<_>>>()?;
        GridDensity::new(grid_x.to_vec(), values, self.df, 1e-4)
    }
}

/// Undiscounted Black expectation times `df`, with the forward pinned at
/// `1/df` so that one unit of wealth invested in the underlying prices to 1.
/// Puts come from put-call parity, which therefore holds to machine
/// precision on every curve built from this function.
pub fn bs_option_price(kind: OptionKind, strike: f64, vol_total: f64, df: f64) -> Result<f64> {
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(Error::InvalidInput(format!(
            "strike must be finite and > 0, got {strike}"
        )));
    }
    if !(vol_total >= 0.0) || !vol_total.is_finite() {
        return Err(Error::InvalidInput(format!(
            "total volatility must be finite and >= 0, got {vol_total}"
        )));
    }
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::InvalidInput(format!(
            "discount factor must be finite and > 0, got {df}"
        )));
    }
    let forward = 1.0 / df;
    let call = if vol_total == 0.0 {
        df * (forward - strike).max(0.0)
    } else {
        let d1 = ((forward / strike).ln() + 0.5 * vol_total * vol_total) / vol_total;
        let d2 = d1 - vol_total;
        df * (forward * normal_cdf(d1) - strike * normal_cdf(d2))
    };
    Ok(match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - (1.0 - strike * df),
    })
}

/// Monotone cubic (Fritsch-Carlson) interpolant with flat-clamped end
/// derivatives, so constant extrapolation beyond the knots joins smoothly.
///
/// Total variance across strikes needs a C1 scheme: a piecewise-linear one
/// kinks at every quoted strike, and a strike grid dense enough to resolve
/// the kink sees it as a delta function in the implied density, which the
/// convexity gate then rejects for any non-flat smile. On flat smiles this
/// interpolant is exactly constant.
#[derive(Debug, Clone, PartialEq)]
struct MonotoneCubic {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Knots must be strictly increasing, at least two of them.
    fn new(knots: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert!(knots.len() >= 2 && knots.len() == values.len());
        let n = knots.len();
        let secants: Vec<f64> = (0..n - 1)
            .map(|i| (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]))
            .collect();
        let mut slopes = vec![0.0; n];
        for i in 1..n - 1 {
            if secants[i - 1] * secants[i] > 0.0 {
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                slopes[i] = (w1 + w2) / (w1 / secants[i - 1] + w2 / secants[i]);
            }
        }
        // end slopes stay zero: the flat wings continue the end values
        Self {
            knots,
            values,
            slopes,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0];
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let j = self.knots.partition_point(|&k| k < x);
        let (x0, x1) = (self.knots[j - 1], self.knots[j]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[j - 1]
            + h10 * h * self.slopes[j - 1]
            + h01 * self.values[j]
            + h11 * h * self.slopes[j]
    }
}

/// Implied-volatility surface quoted on forward-moneyness ratios.
///
/// Total variance interpolates with a monotone C1 cubic across strikes
/// (flat beyond the quoted wings) and linearly across maturities. Discount
/// factors interpolate log-linearly in maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct VolSurface {
    maturities: Vec<f64>,
    dfs: Vec<f64>,
    strike_ratios: Vec<Vec<f64>>,
    vols: Vec<Vec<f64>>,
}

enum MaturityPos {
    At(usize),
    Between(usize, usize, f64),
}

impl VolSurface {
    pub fn new(
        maturities: Vec<f64>,
        dfs: Vec<f64>,
        strike_ratios: Vec<Vec<f64>>,
        vols: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if maturities.is_empty() {
            return Err(Error::InvalidInput("surface has no maturities".into()));
        }
        if dfs.len() != maturities.len()
            || strike_ratios.len() != maturities.len()
            || vols.len() != maturities.len()
        {
            return Err(Error::InvalidInput(
                "surface fields must have one entry per maturity".into(),
            ));
        }
        for (i, &t) in maturities.iter().enumerate() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "maturities must be finite and > 0, got {t}"
                )));
            }
            if i > 0 && t <= maturities[i - 1] {
                return Err(Error::InvalidInput(
                    "maturities must be strictly increasing".into(),
                ));
            }
            let df = dfs[i];
            if !(df > 0.0) || df > 1.0 {
                return Err(Error::InvalidInput(format!(
                    "discount factors must lie in (0, 1], got {df} at T = {t}"
                )));
            }
            let (ratios, smile_vols) = (&strike_ratios[i], &vols[i]);
            if ratios.is_empty() || ratios.len() != smile_vols.len() {
                return Err(Error::InvalidInput(format!(
                    "maturity {t} needs matching non-empty strike and vol lists"
                )));
            }
            for (j, &k) in ratios.iter().enumerate() {
                if !(k > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "strike ratios must be > 0, got {k} at T = {t}"
                    )));
                }
                if j > 0 && k <= ratios[j - 1] {
                    return Err(Error::InvalidInput(format!(
                        "strike ratios must be strictly increasing at T = {t}"
                    )));
                }
                if !(smile_vols[j] > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "vols must be > 0, got {} at T = {t}",
                        smile_vols[j]
                    )));
                }
            }
        }
        Ok(Self {
            maturities,
            dfs,
            strike_ratios,
            vols,
        })
    }

    /// Flat surface: one volatility everywhere, one continuously compounded
    /// discount rate.
    pub fn flat(r_annual: f64, vol_annual: f64, maturities: &[f64]) -> Result<Self> {
        let ratios = vec![0.5, 1.0, 2.0];
        let dfs = maturities.iter().map(|&t| (-r_annual * t).exp()).collect();
        let strike_ratios = vec![ratios.clone(); maturities.len()];
        let vols = vec![vec![vol_annual; ratios.len()]; maturities.len()];
        Self::new(maturities.to_vec(), dfs, strike_ratios, vols)
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn maturity_range(&self) -> (f64, f64) {
        (self.maturities[0], *self.maturities.last().unwrap())
    }

    /// Quote rows `(maturity, strike_ratio, vol, df)` in surface order.
    pub fn quotes(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut rows = Vec::new();
        for (i, &t) in self.maturities.iter().enumerate() {
            for (j, &k) in self.strike_ratios[i].iter().enumerate() {
                rows.push((t, k, self.vols[i][j], self.dfs[i]));
            }
        }
        rows
    }

    fn locate(&self, maturity: f64) -> Result<MaturityPos> {
        let (lo, hi) = self.maturity_range();
        let tol = 1e-12 * maturity.abs().max(1.0);
        if maturity < lo - tol || maturity > hi + tol {
            return Err(Error::OutOfRange(format!(
                "maturity {maturity} outside quoted range [{lo}, {hi}]"
            )));
        }
        for (i, &t) in self.maturities.iter().enumerate() {
            if (t - maturity).abs() <= tol {
                return Ok(MaturityPos::At(i));
            }
        }
        let hi_idx = self
            .maturities
            .iter()
            .position(|&t| t > maturity)
            .expect("maturity inside range");
        let lo_idx = hi_idx - 1;
        let weight =
            (maturity - self.maturities[lo_idx]) / (self.maturities[hi_idx] - self.maturities[lo_idx]);
        Ok(MaturityPos::Between(lo_idx, hi_idx, weight))
    }

    /// Discount factor at `maturity`, log-linear between quoted maturities.
    pub fn df(&self, maturity: f64) -> Result<f64> {
        match self.locate(maturity)? {
            MaturityPos::At(i) => Ok(self.dfs[i]),
            MaturityPos::Between(i, j, w) => {
                Ok((self.dfs[i].ln() * (1.0 - w) + self.dfs[j].ln() * w).exp())
            }
        }
    }

    pub fn forward(&self, maturity: f64) -> Result<f64> {
        Ok(1.0 / self.df(maturity)?)
    }

    /// Total-variance interpolant for one quoted maturity.
    fn smile(&self, idx: usize) -> MonotoneCubic {
        let t = self.maturities[idx];
        let w: Vec<f64> = self.vols[idx].iter().map(|v| v * v * t).collect();
        if self.strike_ratios[idx].len() == 1 {
            // single quote: constant variance (interpolant needs two knots)
            let k = self.strike_ratios[idx][0];
            return MonotoneCubic::new(vec![k, k + 1.0], vec![w[0], w[0]]);
        }
        MonotoneCubic::new(self.strike_ratios[idx].clone(), w)
    }

    fn smile_variance(&self, idx: usize, ratio: f64) -> f64 {
        self.smile(idx).eval(ratio)
    }

    /// Total variance `sigma^2 T` at `(maturity, strike_ratio)`.
    pub fn total_variance(&self, maturity: f64, strike_ratio: f64) -> Result<f64> {
        if !(strike_ratio > 0.0) {
            return Err(Error::InvalidInput(format!(
                "strike ratio must be > 0, got {strike_ratio}"
            )));
        }
        match self.locate(maturity)? {
            MaturityPos::At(i) => Ok(self.smile_variance(i, strike_ratio)),
            MaturityPos::Between(i, j, w) => Ok(self.smile_variance(i, strike_ratio) * (1.0 - w)
                + self.smile_variance(j, strike_ratio) * w),
        }
    }

    /// Annualized at-the-money-forward volatility at `maturity`.
    pub fn atmf_vol(&self, maturity: f64) -> Result<f64> {
        Ok((self.total_variance(maturity, 1.0)? / maturity).sqrt())
    }

    /// Effective total-variance slice at `maturity`, exact under the
    /// surface's strike and maturity interpolation.
    fn variance_slice(&self, maturity: f64) -> Result<VarianceSlice> {
        let insufficient = |i: usize| {
            Err(Error::InsufficientData(format!(
                "insufficient strikes: maturity {} quotes {} strike(s), need at least 2",
                self.maturities[i],
                self.strike_ratios[i].len()
            )))
        };
        match self.locate(maturity)? {
            MaturityPos::At(i) => {
                if self.strike_ratios[i].len() < 2 {
                    return insufficient(i);
                }
                Ok(VarianceSlice {
                    near: self.smile(i),
                    far: None,
                })
            }
            MaturityPos::Between(i, j, weight) => {
                if self.strike_ratios[i].len() < 2 {
                    return insufficient(i);
                }
                if self.strike_ratios[j].len() < 2 {
                    return insufficient(j);
                }
                Ok(VarianceSlice {
                    near: self.smile(i),
                    far: Some((self.smile(j), weight)),
                })
            }
        }
    }
}

/// Total variance as a function of forward moneyness at one maturity,
/// blending the two bracketing quoted smiles linearly in maturity.
#[derive(Debug, Clone, PartialEq)]
struct VarianceSlice {
    near: MonotoneCubic,
    far: Option<(MonotoneCubic, f64)>,
}

impl VarianceSlice {
    fn variance(&self, moneyness: f64) -> f64 {
        match &self.far {
            None => self.near.eval(moneyness),
            Some((far, weight)) => {
                self.near.eval(moneyness) * (1.0 - weight) + far.eval(moneyness) * weight
            }
        }
    }
}

/// Strike-grid specification in forward-moneyness multiples.
///
/// The default spans deep tails so that power payoffs with exponents up to
/// about 3 keep their replication integrals inside the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo_moneyness: f64,
    pub hi_moneyness: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo_moneyness: 0.02,
            hi_moneyness: 20.0,
            points: 2001,
        }
    }
}

impl GridSpec {
    /// Absolute strike grid for a given forward. When the span covers the
    /// forward, the grid is anchored so that one node sits exactly on it:
    /// the put/call pivot then falls on a node and the spacing around it
    /// stays uniform in log-strike, which the replication quadrature needs.
    pub fn strikes(&self, forward: f64) -> Result<Vec<f64>> {
        if !(forward > 0.0) {
            return Err(Error::InvalidInput(format!(
                "forward must be > 0, got {forward}"
            )));
        }
        if !(self.lo_moneyness > 0.0) || !(self.hi_moneyness > self.lo_moneyness) || self.points < 2
        {
            return Err(Error::InvalidInput(format!(
                "grid spec must satisfy 0 < lo < hi with at least 2 points, got [{}, {}] x {}",
                self.lo_moneyness, self.hi_moneyness, self.points
            )));
        }
        if self.lo_moneyness < 1.0 && self.hi_moneyness > 1.0 {
            let du = (self.hi_moneyness / self.lo_moneyness).ln() / (self.points - 1) as f64;
            let anchor = (-self.lo_moneyness.ln() / du).round() as usize;
            let anchor = anchor.min(self.points - 1);
            let u_forward = forward.ln();
            let mut grid: Vec<f64> = (0..self.points)
                .map(|j| (u_forward + (j as f64 - anchor as f64) * du).exp())
                .collect();
            grid[anchor] = forward;
            Ok(grid)
        } else {
            grid::log_grid(
                self.lo_moneyness * forward,
                self.hi_moneyness * forward,
                self.points,
            )
        }
    }
}

#[derive(Debug, Clone)]
enum PriceInterp {
    /// Reprice off-grid strikes from the total-variance slice.
    Variance(VarianceSlice),
    /// Piecewise-linear interpolation of the stored call prices; second
    /// derivatives vanish inside segments by construction.
    LinearPrice,
}

/// Call/put curve at one maturity.
///
/// The out-of-the-money strip `O(y, k)` is puts at or below the pivot `k`
/// and calls above it; the pivot sits at `1/df` so the forward leg of a
/// replication drops out. Curves are immutable once built and all
/// accessors are pure.
#[derive(Debug, Clone)]
pub struct OptionCurve {
    maturity: f64,
    df: f64,
    pivot: f64,
    strikes: Vec<f64>,
    calls: Vec<f64>,
    puts: Vec<f64>,
    interp: PriceInterp,
}

/// Builds an [`OptionCurve`] by pricing every grid strike off the surface.
/// The pivot strike `1/df` is inserted into the grid when it falls strictly
/// inside it, so the put/call switch never lands mid-cell.
pub fn option_curve_from_surface(
    surface: &VolSurface,
    maturity: f64,
    strikes: &[f64],
) -> Result<OptionCurve> {
    if strikes.is_empty() {
        return Err(Error::InvalidInput("empty strike grid".into()));
    }
    let df = surface.df(maturity)?;
    let slice = surface.variance_slice(maturity)?;
    let pivot = 1.0 / df;

    let mut grid_strikes = strikes.to_vec();
    validate_strikes(&grid_strikes)?;
    let pos = grid_strikes.partition_point(|&y| y < pivot);
    let on_node = pos < grid_strikes.len()
        && (grid_strikes[pos] - pivot).abs() <= 1e-12 * pivot;
    if !on_node && pos > 0 && pos < grid_strikes.len() {
        grid_strikes.insert(pos, pivot);
    }

    let calls = grid_strikes
        .iter()
        .map(|&y| bs_option_price(OptionKind::Call, y, slice.variance(y * df).sqrt(), df))
        .collect::<Result<Vec<_>>>()?;
    let puts = puts_from_parity(&grid_strikes, &calls, df);
    validate_curve_shape(&grid_strikes, &calls, &puts)?;

    Ok(OptionCurve {
        maturity,
        df,
        pivot,
        strikes: grid_strikes,
        calls,
        puts,
        interp: PriceInterp::Variance(slice),
    })
}

fn validate_strikes(strikes: &[f64]) -> Result<()> {
    for (i, &y) in strikes.iter().enumerate() {
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::InvalidInput(format!(
                "strikes must be finite and > 0, got {y}"
            )));
        }
        if i > 0 && y <= strikes[i - 1] {
            return Err(Error::InvalidInput(
                "strikes must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

fn puts_from_parity(strikes: &[f64], calls: &[f64], df: f64) -> Vec<f64> {
    strikes
        .iter()
        .zip(calls)
        .map(|(&y, &c)| c - (1.0 - y * df))
        .collect()
}

fn validate_curve_shape(strikes: &[f64], calls: &[f64], puts: &[f64]) -> Result<()> {
    let n = strikes.len();
    for i in 0..n {
        if calls[i] < -MONOTONICITY_TOL || puts[i] < -MONOTONICITY_TOL {
            return Err(Error::NonConvex(format!(
                "negative option price at strike {}",
                strikes[i]
            )));
        }
        if i > 0 {
            if calls[i] > calls[i - 1] + MONOTONICITY_TOL {
                return Err(Error::NonConvex(format!(
                    "call prices increase in strike at {}",
                    strikes[i]
                )));
            }
            if puts[i] + MONOTONICITY_TOL < puts[i - 1] {
                return Err(Error::NonConvex(format!(
                    "put prices decrease in strike at {}",
                    strikes[i]
                )));
            }
        }
    }
    for i in 1..n - 1 {
        let h0 = strikes[i] - strikes[i - 1];
        let h1 = strikes[i + 1] - strikes[i];
        let (w0, w1, w2) = (
            2.0 / (h0 * (h0 + h1)),
            2.0 / (h0 * h1),
            2.0 / (h1 * (h0 + h1)),
        );
        let second = calls[i - 1] * w0 - calls[i] * w1 + calls[i + 1] * w2;
        // widen the gate by the stencil's own roundoff bound; on tightly
        // spaced cells the noise floor exceeds the nominal tolerance
        let noise = 4.0 * f64::EPSILON * (calls[i - 1] * w0 + calls[i] * w1 + calls[i + 1] * w2).abs();
        if second < -(CONVEXITY_TOL + noise) {
            return Err(Error::NonConvex(format!(
                "call curve convexity {second:.3e} at strike {} breaches -{CONVEXITY_TOL:.0e}",
                strikes[i]
            )));
        }
    }
    Ok(())
}

impl OptionCurve {
    /// Curve from raw call prices, e.g. quoted market data. Puts are filled
    /// in by parity; off-grid prices interpolate linearly in strike.
    pub fn from_prices(
        maturity: f64,
        df: f64,
        strikes: Vec<f64>,
        calls: Vec<f64>,
    ) -> Result<Self> {
        if !(maturity > 0.0) {
            return Err(Error::InvalidInput(format!(
                "maturity must be > 0, got {maturity}"
            )));
        }
        if !(df > 0.0) || df > 1.0 {
            return Err(Error::InvalidInput(format!(
                "discount factor must lie in (0, 1], got {df}"
            )));
        }
        if strikes.len() != calls.len() || strikes.len() < 3 {
            return Err(Error::InvalidInput(
                "need at least 3 matching strikes and call prices".into(),
            ));
        }
        validate_strikes(&strikes)?;
        if calls.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("call prices must be finite".into()));
        }
        let puts = puts_from_parity(&strikes, &calls, df);
        validate_curve_shape(&strikes, &calls, &puts)?;
        Ok(Self {
            maturity,
            df,
            pivot: 1.0 / df,
            strikes,
            calls,
            puts,
            interp: PriceInterp::LinearPrice,
        })
    }

    /// Flat-volatility curve on the given grid spec.
    pub fn flat(
        r_annual: f64,
        vol_annual: f64,
        maturity_years: f64,
        spec: &GridSpec,
    ) -> Result<Self> {
        let surface = VolSurface::flat(r_annual, vol_annual, &[maturity_years])?;
        let strikes = spec.strikes(surface.forward(maturity_years)?)?;
        option_curve_from_surface(&surface, maturity_years, &strikes)
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn df(&self) -> f64 {
        self.df
    }

    /// Log risk-free return over the horizon, `-ln df`.
    pub fn r_total(&self) -> f64 {
        -self.df.ln()
    }

    /// Strike where the out-of-the-money strip switches puts to calls.
    pub fn pivot(&self) -> f64 {
        self.pivot
    }

    pub fn strikes(&self) -> &[f64] {
        &self.strikes
    }

    pub fn calls(&self) -> &[f64] {
        &self.calls
    }

    pub fn puts(&self) -> &[f64] {
        &self.puts
    }

    /// Call price at an arbitrary strike.
    pub fn call_price(&self, strike: f64) -> Result<f64> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidInput(format!(
                "strike must be finite and > 0, got {strike}"
            )));
        }
        match &self.interp {
            PriceInterp::Variance(slice) => {
                let var = slice.variance(strike * self.df);
                bs_option_price(OptionKind::Call, strike, var.sqrt(), self.df)
            }
            PriceInterp::LinearPrice => {
                let n = self.strikes.len();
                if strike < self.strikes[0] || strike > self.strikes[n - 1] {
                    return Err(Error::OutOfRange(format!(
                        "strike {strike} outside the quoted grid [{}, {}]",
                        self.strikes[0],
                        self.strikes[n - 1]
                    )));
                }
                let j = match self
                    .strikes
                    .binary_search_by(|probe| probe.partial_cmp(&strike).unwrap())
                {
                    Ok(i) => return Ok(self.calls[i]),
                    Err(i) => i,
                };
                let (y0, y1) = (self.strikes[j - 1], self.strikes[j]);
                let t = (strike - y0) / (y1 - y0);
                Ok(self.calls[j - 1] * (1.0 - t) + self.calls[j] * t)
            }
        }
    }

    /// Put price by parity.
    pub fn put_price(&self, strike: f64) -> Result<f64> {
        Ok(self.call_price(strike)? - (1.0 - strike * self.df))
    }

    /// Out-of-the-money strip `O(y, pivot)`.
    pub fn strip_price(&self, strike: f64) -> Result<f64> {
        if strike <= self.pivot {
            self.put_price(strike)
        } else {
            self.call_price(strike)
        }
    }

    fn check_clearance(&self, x: f64, steps: usize) -> Result<()> {
        let n = self.strikes.len();
        if n < 2 * steps + 1 {
            return Err(Error::InsufficientData(format!(
                "strike grid too short for {steps}-step clearance"
            )));
        }
        if x < self.strikes[steps] || x > self.strikes[n - 1 - steps] {
            return Err(Error::OutOfRange(format!(
                "x = {x} too close to the strike-grid boundary [{}, {}]",
                self.strikes[0],
                self.strikes[n - 1]
            )));
        }
        Ok(())
    }

    /// Implied density at `x`: the second strike-derivative of the call
    /// curve, by central difference with step `1e-3 * x`. Values below the
    /// stencil's roundoff floor collapse to zero.
    pub fn density_from_calls(&self, x: f64) -> Result<f64> {
        self.check_clearance(x, 2)?;
        let h = FD_STEP_REL * x;
        let c_lo = self.call_price(x - h)?;
        let c_mid = self.call_price(x)?;
        let c_hi = self.call_price(x + h)?;
        let value = (c_lo - 2.0 * c_mid + c_hi) / (h * h);
        let noise = 4.0 * f64::EPSILON * (c_lo.abs() + 2.0 * c_mid.abs() + c_hi.abs()) / (h * h);
        Ok(if value.abs() <= noise { 0.0 } else { value })
    }

    /// `d ln m / dx` at `x` from call prices alone:
    /// `[-C(x-2h)/2 + C(x-h) - C(x+h) + C(x+2h)/2] / [h (C(x-h) - 2C(x) + C(x+h))]`.
    pub fn log_density_slope(&self, x: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("step must be > 0, got {h}")));
        }
        self.check_clearance(x, 2)?;
        let n = self.strikes.len();
        if x - 2.0 * h < self.strikes[0] || x + 2.0 * h > self.strikes[n - 1] {
            return Err(Error::OutOfRange(format!(
                "x = {x} needs 2h clearance inside the strike grid"
            )));
        }
        let c_m2 = self.call_price(x - 2.0 * h)?;
        let c_m1 = self.call_price(x - h)?;
        let c_0 = self.call_price(x)?;
        let c_p1 = self.call_price(x + h)?;
        let c_p2 = self.call_price(x + 2.0 * h)?;
        let numerator = -0.5 * c_m2 + c_m1 - c_p1 + 0.5 * c_p2;
        let convexity = c_m1 - 2.0 * c_0 + c_p1;
        let noise = f64::EPSILON * (c_m1.abs() + 2.0 * c_0.abs() + c_p1.abs());
        if convexity <= 4.0 * noise {
            return Err(Error::UnreliableDensity(format!(
                "call-curve convexity at x = {x} is {convexity:.3e}, below numerical resolution; \
                 the implied density there cannot be trusted"
            )));
        }
        Ok(numerator / (h * convexity))
    }

    /// Slope with the default step `1e-3 * x` and a three-step refinement
    /// consistency check; returns the finest estimate. The absolute floor
    /// covers points where the leading truncation term happens to vanish
    /// and the differences are pure noise.
    pub fn log_density_slope_auto(&self, x: f64) -> Result<f64> {
        let h = FD_STEP_REL * x;
        let s1 = self.log_density_slope(x, h)?;
        let s2 = self.log_density_slope(x, 0.5 * h)?;
        let s3 = self.log_density_slope(x, 0.25 * h)?;
        if (s2 - s3).abs() > 0.5 * (s1 - s2).abs() + 1e-6 * (1.0 + s3.abs()) {
            return Err(Error::UnreliableDensity(format!(
                "log-density slope at x = {x} does not settle under step refinement"
            )));
        }
        Ok(s3)
    }

    /// Density over the interior of the strike grid.
    pub fn implied_density(&self) -> Result<GridDensity> {
        let n = self.strikes.len();
        if n < 5 {
            return Err(Error::InsufficientData(
                "strike grid too short to extract a density".into(),
            ));
        }
        let sub = &self.strikes[2..n - 2];
        let values = sub
            .iter()
            .map(|&x| self.density_from_calls(x))
            .collect::<Result<Vec<_>>>()?;
        GridDensity::new(sub.to_vec(), values, self.df, 1e-2)
    }
}

/// Density sampled on a positive grid, carrying its quadrature mass.
///
/// Market densities integrate to the discount factor, beliefs to one; the
/// target is declared at construction and checked there.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Vec<f64>,
    values: Vec<f64>,
    total_mass: f64,
}

impl GridDensity {
    /// Validates shape and non-negativity and that the quadrature mass is
    /// within `tol` (relative) of `target_mass`. Values in `[-1e-10, 0)`
    /// are treated as quadrature noise and clamped to zero.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, target_mass: f64, tol: f64) -> Result<Self> {
        let mut values = values;
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidInput(
                "density needs matching grid and values with at least 2 points".into(),
            ));
        }
        validate_strikes(&grid)?;
        for (&x, v) in grid.iter().zip(values.iter_mut()) {
            if !v.is_finite() || *v < -1e-10 {
                return Err(Error::InvalidInput(format!(
                    "density value {v} at x = {x} is negative or non-finite"
                )));
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let total_mass = grid::integrate(&grid, &values);
        if (total_mass - target_mass).abs() > tol * target_mass.abs().max(1.0) {
            return Err(Error::Numerical(format!(
                "density mass {total_mass} misses its target {target_mass} beyond tolerance {tol}"
            )));
        }
        Ok(Self {
            grid,
            values,
            total_mass,
        })
    }

    /// Density from samples with no declared mass target; the mass is
    /// whatever the quadrature says.
    pub fn from_samples(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let mass = grid::integrate(&grid, &values);
        Self::new(grid, values, mass, 1e-12)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
}
