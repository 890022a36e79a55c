use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DexMode {
    /// Slippage `q/L`, price update `2q/L`.
    LinearSchedule,
    /// Constant-product pool `x·y = k` whose depth `2/Γ″(y)` equals `L` at
    /// the reference price.
    ExactConstantProduct { reference_price: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Buy => 1.0,
            Side::Sell => -1.0,
        }
    }
}

/// Constant-product reserves: `x` units of cash, `y` of the risky asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantProductPool {
    pub x: f64,
    pub y: f64,
}

impl ConstantProductPool {
    /// Pool with marginal price `p0` and depth `y²/x = depth`.
    pub fn calibrated(depth: f64, p0: f64) -> Result<Self> {
        if !(depth > 0.0 && p0 > 0.0) {
            return Err(domain("pool needs positive depth and reference price"));
        }
        Ok(Self {
            x: depth * p0 * p0,
            y: depth * p0,
        })
    }

    pub fn invariant(&self) -> f64 {
        self.x * self.y
    }

    /// `V = −Γ′(y) = x/y`.
    pub fn marginal_price(&self) -> f64 {
        self.x / self.y
    }

    /// `2/Γ″(y) = y²/x`.
    pub fn depth(&self) -> f64 {
        self.y * self.y / self.x
    }

    /// Cash paid for `q` units, `Γ(y − q) − Γ(y)`.
    pub fn buy_cost(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0 && q < self.y) {
            return Err(domain(format!("buy of {q} exceeds pool reserves {}", self.y)));
        }
        Ok(self.x * q / (self.y - q))
    }

    /// Cash received for `q` units, `Γ(y) − Γ(y + q)`.
    pub fn sell_proceeds(&self, q: f64) -> Result<f64> {
        if !(q >= 0.0) {
            return Err(domain(format!("sell volume must be nonnegative, got {q}")));
        }
        Ok(self.x * q / (self.y + q))
    }

    /// Executes a signed trade (positive buys) and returns the signed cash
    /// the trader pays.
    pub fn trade(&mut self, signed_q: f64) -> Result<f64> {
        if signed_q >= 0.0 {
            let cash = self.buy_cost(signed_q)?;
            let k = self.invariant();
            self.y -= signed_q;
            self.x = k / self.y;
            Ok(cash)
        } else {
            let q = -signed_q;
            let cash = self.sell_proceeds(q)?;
            let k = self.invariant();
            self.y += q;
            self.x = k / self.y;
            Ok(-cash)
        }
    }
}

/// Marginal price (normalized to zero at slot start) and execution engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DexState {
    pub depth: f64,
    pub price: f64,
    pub pi: f64,
    pub mode: DexMode,
    pool: Option<(ConstantProductPool, f64)>,
}

/// One executed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fill {
    /// Per-unit price including the DEX fee, relative to the slot-start price.
    pub exec_price: f64,
    /// Signed cash paid by the trader, fee included.
    pub cash_paid: f64,
    /// Fee part of `cash_paid`.
    pub fee_paid: f64,
}

impl DexState {
    pub fn new(depth: f64, pi: f64, mode: DexMode) -> Result<Self> {
        if !(depth > 0.0) {
            return Err(domain(format!("depth must be positive, got {depth}")));
        }
        let pool = match mode {
            DexMode::LinearSchedule => None,
            DexMode::ExactConstantProduct { reference_price } => {
                Some((ConstantProductPool::calibrated(depth, reference_price)?, reference_price))
            }
        };
        Ok(Self {
            depth,
            price: 0.0,
            pi,
            mode,
            pool,
        })
    }

    pub fn pool(&self) -> Option<&ConstantProductPool> {
        self.pool.as_ref().map(|(p, _)| p)
    }

    /// Executes `signed_q` units (positive buys, negative sells).
    pub fn execute(&mut self, signed_q: f64) -> Result<Fill> {
        let q = signed_q.abs();
        if q == 0.0 {
            return Ok(Fill {
                exec_price: 0.0,
                cash_paid: 0.0,
                fee_paid: 0.0,
            });
        }
        let side = signed_q.signum();
        let fee_paid = self.pi * q;
        let (cash, price_after) = match &mut self.pool {
            None => {
                let unit = self.price + side * q / self.depth;
                (signed_q * unit, self.price + 2.0 * signed_q / self.depth)
            }
            Some((pool, p0)) => {
                let cash = pool.trade(signed_q)?;
                // Remove the reference level so prices stay slot-relative.
                (cash - signed_q * *p0, pool.marginal_price() - *p0)
            }
        };
        self.price = price_after;
        let cash_paid = cash + fee_paid;
        Ok(Fill {
            exec_price: cash_paid / signed_q,
            cash_paid,
            fee_paid,
        })
    }
}
