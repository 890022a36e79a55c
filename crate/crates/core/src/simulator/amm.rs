use serde::{Deserialize, Serialize};

use super::dex::ConstantProductPool;
use crate::error::{domain, Result};

/// Linear-schedule approximation errors against an exact constant-product
/// pool with depth `L` at marginal price 1. Errors are relative to the exact
/// slippage (execution price minus marginal price, fee excluded) and to the
/// exact change in marginal price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmmErrorRow {
    pub q_over_l: f64,
    pub slippage_error_buy: f64,
    pub slippage_error_sell: f64,
    pub impact_error_buy: f64,
    pub impact_error_sell: f64,
    /// Per-unit buy price including the DEX fee, linear and exact.
    pub linear_buy_price: f64,
    pub exact_buy_price: f64,
}

pub fn amm_approximation_error(depth: f64, pi: f64, q_over_l_grid: &[f64]) -> Result<Vec<AmmErrorRow>> {
    let pool = ConstantProductPool::calibrated(depth, 1.0)?;
    let v0 = pool.marginal_price();
    q_over_l_grid
        .iter()
        .map(|&r| {
            if !(r > 0.0) {
                return Err(domain(format!("q/L must be positive, got {r}")));
            }
            let q = r * depth;
            let linear_slip = q / depth;
            let linear_impact = 2.0 * q / depth;

            let buy_slip = pool.buy_cost(q)? / q - v0;
            let mut after = pool;
            after.trade(q)?;
            let buy_impact = after.marginal_price() - v0;

            let sell_slip = v0 - pool.sell_proceeds(q)? / q;
            let mut after = pool;
            after.trade(-q)?;
            let sell_impact = v0 - after.marginal_price();

            let rel = |approx: f64, exact: f64| ((approx - exact) / exact).abs();
            Ok(AmmErrorRow {
                q_over_l: r,
                slippage_error_buy: rel(linear_slip, buy_slip),
                slippage_error_sell: rel(linear_slip, sell_slip),
                impact_error_buy: rel(linear_impact, buy_impact),
                impact_error_sell: rel(linear_impact, sell_impact),
                linear_buy_price: v0 + linear_slip + pi,
                exact_buy_price: v0 + buy_slip + pi,
            })
        })
        .collect()
}
