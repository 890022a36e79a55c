//! Brute-force Monte Carlo oracle for the equilibrium: simulated blocks on
//! a linear or constant-product DEX, deviation scans, and AMM linearization
//! errors.

mod amm;
mod best_response;
mod block;
mod dex;
mod monte_carlo;

pub use amm::{amm_approximation_error, AmmErrorRow};
pub use best_response::{best_response_scan, BestResponseVerdict, DeviationGrid, GridPoint};
pub use block::{simulate_block, BlockRealization, BlockSetup, TraceWriter, TraderRecord, TRACE_HEADER};
pub use dex::{ConstantProductPool, DexMode, DexState, Fill, Side};
pub use monte_carlo::{
    block_rng, rank_volume_monotonicity, run_monte_carlo, Estimate, McConfig, RankMonotonicity,
    RankStat, SimReport, ACTIVE_COUNT, AGGREGATE_VOLUME, CHUNK, END_PRICE, LP_LOSS,
    MIN_RANK_COUNT, PARTICIPATION_RATE,
};
