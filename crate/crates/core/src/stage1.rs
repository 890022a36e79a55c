//! Entry: ex-ante profit `H(M)` of an informed trader and the equilibrium
//! number of entrants `M*`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::Tolerance;
use crate::par;
use crate::stage2::{MarketEquilibrium, MarketParams};
use crate::stage3::Stage3Solution;

/// Default upper end of the entry scan.
pub const DEFAULT_M_CAP: usize = 10_000;
/// The scan stops after this many consecutive `M` with `H(M) < C`.
pub const CONSECUTIVE_MISSES: usize = 10;
const SCAN_CHUNK: usize = 16;

fn validate_m(m: usize) -> Result<()> {
    if m < 2 {
        Err(domain(format!("M must be at least 2, got {m}")))
    } else {
        Ok(())
    }
}

/// `H(M) = L*·∫ Q̃²[1 − 2(M−1)(1−F)] dF`; `-∞` when the market is not viable at `M`.
pub fn h_of_m(params: &MarketParams, m: usize) -> Result<f64> {
    validate_m(m)?;
    let (sol, eq) = MarketEquilibrium::solve(params, m, Tolerance::default())?;
    if !eq.viable {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(eq.l_star * h_integral(&sol)?)
}

fn h_integral(sol: &Stage3Solution) -> Result<f64> {
    let a = (sol.m() - 1) as f64;
    let model = *sol.model();
    sol.weighted_q_integral(sol.cutoff(), sol.v_bar(), |q, u| {
        q * q * (1.0 - 2.0 * a * (1.0 - model.cdf(u)))
    })
}

/// Ex-ante wealth before simplification: expected trading profit net of
/// slippage, minus expected fees, minus expected impact from competitors
/// ahead in the queue.
pub fn h_of_m_expanded(params: &MarketParams, m: usize) -> Result<f64> {
    validate_m(m)?;
    let (sol, eq) = MarketEquilibrium::solve(params, m, Tolerance::default())?;
    if !eq.viable {
        return Ok(f64::NEG_INFINITY);
    }
    let a = (m - 1) as f64;
    let pi = sol.pi();
    let model = *sol.model();
    let profit = sol.weighted_q_integral(sol.cutoff(), sol.v_bar(), |q, u| q * (u - pi - q))?;
    let fees = sol.weighted_q_integral(sol.cutoff(), sol.v_bar(), |q, u| {
        q * q * (1.0 - model.cdf(u))
    })?;
    let mut failure = None;
    let impact = sol.weighted_q_integral(sol.cutoff(), sol.v_bar(), |q, u| {
        match sol.upper_first_moment(u) {
            Ok(upper) => q * upper,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    });
    let impact = match failure {
        Some(e) => return Err(e),
        None => impact?,
    };
    Ok(eq.l_star * (profit - 2.0 * a * fees - 2.0 * a * impact))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    /// Largest `M` with `C ≤ H(M)`; `None` when even `H(2) < C`.
    pub m_star: Option<usize>,
    /// `(M, H(M))` for every scanned `M`, in order.
    pub h_values: Vec<(usize, f64)>,
    /// `H(m*) ≥ C > H(m* + 1)` with `m* + 1` inside the scan.
    pub binding: bool,
    pub m_cap: usize,
}

/// Scans `M = 2..=m_cap` and returns the largest `M` with `C ≤ H(M)`.
///
/// Stops early after a run of consecutive misses. Chunks are evaluated in
/// parallel but decided strictly in `M` order.
pub fn equilibrium_m(params: &MarketParams, m_cap: usize, workers: Option<usize>) -> Result<EntryOutcome> {
    let params = params.validated()?;
    if m_cap < 2 {
        return Err(domain(format!("m_cap must be at least 2, got {m_cap}")));
    }
    let c = params.info_cost;
    let mut h_values = Vec::new();
    let mut last_hit = None;
    let mut misses = 0usize;
    let mut next = 2usize;
    'scan: while next <= m_cap {
        let len = SCAN_CHUNK.min(m_cap - next + 1);
        let chunk = par::map_indexed(len, workers, |i| h_of_m(&params, next + i));
        for (i, h) in chunk.into_iter().enumerate() {
            let m = next + i;
            let h = h?;
            h_values.push((m, h));
            if c <= h {
                last_hit = Some(m);
                misses = 0;
            } else {
                misses += 1;
                if misses >= CONSECUTIVE_MISSES {
                    break 'scan;
                }
            }
        }
        next += len;
    }
    if last_hit == Some(m_cap) {
        return Err(Error::ScanCapHit { cap: m_cap });
    }
    let h2 = h_values[0].1;
    let m_star = if h2 < c { None } else { last_hit };
    let binding = match m_star {
        Some(m) => h_values
            .iter()
            .find(|(k, _)| *k == m + 1)
            .is_some_and(|(_, h)| *h < c),
        None => false,
    };
    Ok(EntryOutcome {
        m_star,
        h_values,
        binding,
        m_cap,
    })
}
