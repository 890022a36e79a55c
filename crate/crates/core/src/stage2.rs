//! Liquidity supply: adverse-selection dispersion `S_M`, the zero-profit
//! depth `L*`, viability, and the uniform closed form.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::Tolerance;
use crate::stage3::Stage3Solution;
use crate::valuations::ValuationModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// DEX proportional fee `π`.
    pub pi: f64,
    /// Noise traders' price sensitivity `θ`.
    pub theta: f64,
    /// Noise mass `N`.
    pub noise_mass: f64,
    /// Information cost `C`.
    pub info_cost: f64,
    pub model: ValuationModel,
}

impl MarketParams {
    pub fn validated(self) -> Result<Self> {
        self.model.validated()?;
        let v_bar = self.model.v_bar();
        if !(self.pi >= 0.0) || !(self.pi < v_bar) {
            return Err(domain(format!(
                "pi must be below v_bar (pi={}, v_bar={v_bar})",
                self.pi
            )));
        }
        for (name, x) in [
            ("theta", self.theta),
            ("N", self.noise_mass),
            ("C", self.info_cost),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(domain(format!("{name} must be finite and nonnegative, got {x}")));
            }
        }
        Ok(self)
    }

    pub fn v_bar(&self) -> f64 {
        self.model.v_bar()
    }

    pub fn solve_stage3(&self, m: usize, tol: Tolerance) -> Result<Stage3Solution> {
        Stage3Solution::solve(self.model, m, self.pi, tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketEquilibrium {
    pub m: usize,
    pub s_m: f64,
    /// Zero-profit depth; negative when the market is not viable.
    pub l_star: f64,
    pub viable: bool,
    /// `|L*|` within tolerance of zero.
    pub shutdown: bool,
    /// Expected `|Δ_M|` at depth `max(L*, 0)`.
    pub aggregate_volume: f64,
    pub end_price: f64,
}

impl MarketEquilibrium {
    pub fn solve(params: &MarketParams, m: usize, tol: Tolerance) -> Result<(Stage3Solution, Self)> {
        let params = params.validated()?;
        let sol = params.solve_stage3(m, tol)?;
        let eq = liquidity_star_with_tol(&params, &sol, tol)?;
        Ok((sol, eq))
    }

    /// `πN·L/(L+θ) − L·M·S_M` at `L = L*`.
    pub fn zero_profit_residual(&self, params: &MarketParams) -> f64 {
        noise_revenue_unchecked(params, self.l_star) - self.l_star * self.m as f64 * self.s_m
    }
}

/// `S_M = ∫Q̃² dF + (v_M − π)²/(4(M − 1))`.
pub fn s_m(sol: &Stage3Solution) -> Result<f64> {
    let a = (sol.m() - 1) as f64;
    let mean = (sol.cutoff() - sol.pi()) / (2.0 * a);
    Ok(sol.second_moment()? + a * mean * mean)
}

pub fn liquidity_star(params: &MarketParams, sol: &Stage3Solution) -> Result<MarketEquilibrium> {
    liquidity_star_with_tol(params, sol, Tolerance::default())
}

/// `L* = πN/(M·S_M) − θ`, kept signed when the market is not viable.
pub fn liquidity_star_with_tol(
    params: &MarketParams,
    sol: &Stage3Solution,
    tol: Tolerance,
) -> Result<MarketEquilibrium> {
    if params.pi != sol.pi() || params.model != *sol.model() {
        return Err(domain("stage-three solution was solved for different market parameters"));
    }
    let s = s_m(sol)?;
    if !(s > 0.0) {
        return Err(domain(format!("S_M must be positive, got {s}")));
    }
    let m = sol.m();
    let l_star = params.pi * params.noise_mass / (m as f64 * s) - params.theta;
    let viable = l_star >= 0.0;
    Ok(MarketEquilibrium {
        m,
        s_m: s,
        l_star,
        viable,
        shutdown: l_star.abs() <= tol.abs_tol,
        aggregate_volume: if l_star > 0.0 {
            sol.aggregate_volume(l_star)?
        } else {
            0.0
        },
        end_price: sol.expected_end_price(),
    })
}

/// `L^∞ = 8πN/(3(v̄ − π)²) − θ`.
pub fn liquidity_limit(params: &MarketParams) -> Result<f64> {
    limit_formula(params.pi, params.noise_mass, params.v_bar(), params.theta)
}

pub(crate) fn limit_formula(pi: f64, noise_mass: f64, v_bar: f64, theta: f64) -> Result<f64> {
    let d = v_bar - pi;
    if !(d > 0.0) {
        return Err(domain(format!("pi must be below v_bar (pi={pi}, v_bar={v_bar})")));
    }
    Ok(8.0 * pi * noise_mass / (3.0 * d * d) - theta)
}

/// Closed-form `L*` for valuations uniform on `[π, v̄]`.
pub fn uniform_liquidity_closed_form(params: &MarketParams, m: usize) -> Result<f64> {
    let v_bar = match params.model {
        ValuationModel::UniformOnFeeToMax { pi, v_bar } if pi == params.pi => v_bar,
        _ => {
            return Err(domain(
                "closed-form liquidity needs valuations uniform on [pi, v_bar]",
            ))
        }
    };
    if m < 2 {
        return Err(domain(format!("M must be at least 2, got {m}")));
    }
    let mf = m as f64;
    let a = mf - 1.0;
    let ln_m = mf.ln();
    let d = v_bar - params.pi;
    let bracket = a * (3.0 * mf - 5.0) - 2.0 * (2.0 * mf - 3.0) * ln_m + 2.0 * ln_m * ln_m;
    Ok(8.0 * params.pi * params.noise_mass * a.powi(3) / (mf * d * d * bracket) - params.theta)
}

/// `−Δ²/L + 2Y₀Δ/L`.
pub fn lp_wealth_change(depth: f64, delta: f64, y0: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(domain(format!("depth must be positive, got {depth}")));
    }
    Ok(-delta * delta / depth + 2.0 * y0 * delta / depth)
}

/// `πN·L/(L + θ)`.
pub fn noise_revenue(params: &MarketParams, depth: f64) -> Result<f64> {
    if !(depth >= 0.0) {
        return Err(domain(format!("depth must be nonnegative, got {depth}")));
    }
    Ok(noise_revenue_unchecked(params, depth))
}

fn noise_revenue_unchecked(params: &MarketParams, depth: f64) -> f64 {
    if depth == 0.0 {
        0.0
    } else {
        params.pi * params.noise_mass * depth / (depth + params.theta)
    }
}
