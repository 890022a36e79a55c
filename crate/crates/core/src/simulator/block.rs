use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dex::{DexMode, DexState, Side};
use crate::error::{domain, Result};
use crate::stage2::lp_wealth_change;
use crate::stage3::Stage3Solution;

/// Everything a block needs besides the equilibrium schedules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSetup {
    pub depth: f64,
    /// LP's initial risky-asset reserve `Y₀`.
    pub y0: f64,
    pub info_cost: f64,
    pub mode: DexMode,
    /// Size of a buy-then-sell noise round trip executed after the informed
    /// flow; it moves no expectation and is excluded from the estimators.
    pub noise_flow: Option<f64>,
}

impl BlockSetup {
    pub fn linear(depth: f64, info_cost: f64) -> Self {
        Self {
            depth,
            y0: depth,
            info_cost,
            mode: DexMode::LinearSchedule,
            noise_flow: None,
        }
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.depth > 0.0 && self.depth.is_finite()) {
            return Err(domain(format!("depth must be positive, got {}", self.depth)));
        }
        if !self.y0.is_finite() {
            return Err(domain("y0 must be finite"));
        }
        if let Some(s) = self.noise_flow {
            if !(s >= 0.0) {
                return Err(domain("noise flow size must be nonnegative"));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraderRecord {
    /// Index of the valuation draw inside the block.
    pub trader_id: usize,
    /// Signed valuation relative to the slot-start price.
    pub valuation: f64,
    /// Signed volume (negative for sells).
    pub volume: f64,
    pub fee: f64,
    /// 1-based queue position.
    pub queue_rank: usize,
    /// Zero for traders who submit no volume.
    pub exec_price: f64,
    /// Signed cash paid to the DEX, fee included.
    pub cash_paid: f64,
    /// `−Φ − cash paid + volume·valuation − C`.
    pub perceived_wealth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRealization {
    pub side: Side,
    /// In queue order.
    pub traders: Vec<TraderRecord>,
    /// Signed aggregate informed volume `Δ_M`.
    pub delta: f64,
    /// Marginal price after the block, relative to slot start.
    pub end_price: f64,
    /// Informed-flow wealth change of the LP, marked at the end price.
    pub lp_wealth_change: f64,
    /// LP cash received from informed traders, DEX fees excluded.
    pub lp_cash_change: f64,
    /// DEX fees collected from informed traders.
    pub lp_fee_income: f64,
    /// Active traders whose fees tied with the next in queue.
    pub fee_ties: usize,
}

impl BlockRealization {
    pub fn active_count(&self) -> usize {
        self.traders.iter().filter(|t| t.volume != 0.0).count()
    }
}

/// Draws the side, then `M` valuations, and executes the informed flow in
/// descending fee order.
pub fn simulate_block<R: Rng + ?Sized>(
    sol: &Stage3Solution,
    setup: &BlockSetup,
    rng: &mut R,
) -> Result<BlockRealization> {
    let setup = setup.validated()?;
    let table = sol.schedule()?;
    let depth = setup.depth;
    let side = if rng.random::<bool>() { Side::Buy } else { Side::Sell };
    let sign = side.sign();

    let mut orders: Vec<(usize, f64, f64, f64)> = (0..sol.m())
        .map(|i| {
            let v = sol.model().sample(rng);
            (i, v, depth * table.volume_tilde(v), depth * table.phi_per_depth(v))
        })
        .collect();
    // Active traders by fee, highest first; ties and inactive traders by draw index.
    orders.sort_by(|a, b| {
        let active = |o: &(usize, f64, f64, f64)| o.2 > 0.0;
        active(b)
            .cmp(&active(a))
            .then(b.3.total_cmp(&a.3))
            .then(a.0.cmp(&b.0))
    });
    let fee_ties = orders
        .windows(2)
        .filter(|w| w[0].2 > 0.0 && w[1].2 > 0.0 && w[0].3 == w[1].3)
        .count();

    let mut dex = DexState::new(depth, sol.pi(), setup.mode)?;
    let mut traders = Vec::with_capacity(orders.len());
    let mut delta = 0.0;
    let mut lp_cash = 0.0;
    let mut lp_fees = 0.0;
    for (rank, &(id, v, q, fee)) in orders.iter().enumerate() {
        let signed_q = sign * q;
        let valuation = sign * v;
        let fill = dex.execute(signed_q)?;
        delta += signed_q;
        lp_cash += fill.cash_paid - fill.fee_paid;
        lp_fees += fill.fee_paid;
        traders.push(TraderRecord {
            trader_id: id,
            valuation,
            volume: signed_q,
            fee,
            queue_rank: rank + 1,
            exec_price: fill.exec_price,
            cash_paid: fill.cash_paid,
            perceived_wealth: -fee - fill.cash_paid + signed_q * valuation - setup.info_cost,
        });
    }
    let end_price = dex.price;
    let lp_change = match setup.mode {
        DexMode::LinearSchedule => lp_wealth_change(depth, delta, setup.y0)?,
        DexMode::ExactConstantProduct { .. } => lp_cash + (setup.y0 - delta) * end_price,
    };
    if let Some(s) = setup.noise_flow {
        dex.execute(s)?;
        dex.execute(-s)?;
    }
    Ok(BlockRealization {
        side,
        traders,
        delta,
        end_price,
        lp_wealth_change: lp_change,
        lp_cash_change: lp_cash,
        lp_fee_income: lp_fees,
        fee_ties,
    })
}

pub const TRACE_HEADER: [&str; 8] = [
    "block_id",
    "trader_id",
    "v",
    "Q",
    "fee",
    "rank",
    "exec_price",
    "W",
];

/// Streams per-trader rows as CSV.
pub struct TraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(TRACE_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_block(&mut self, block_id: u64, block: &BlockRealization) -> Result<()> {
        for t in &block.traders {
            self.inner.write_record(&[
                block_id.to_string(),
                t.trader_id.to_string(),
                t.valuation.to_string(),
                t.volume.to_string(),
                t.fee.to_string(),
                t.queue_rank.to_string(),
                t.exec_price.to_string(),
                t.perceived_wealth.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner
            .into_inner()
            .map_err(|e| crate::Error::Io(e.into_error()))
    }
}
