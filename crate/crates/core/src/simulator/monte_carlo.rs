use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::block::{simulate_block, BlockRealization, BlockSetup};
use crate::error::{domain, Error, Result};
use crate::par;
use crate::stage2::s_m;
use crate::stage3::Stage3Solution;

/// Blocks per accumulation chunk. Fixed so the merge order, and therefore
/// every rounding step, is independent of the number of workers.
pub const CHUNK: u64 = 4096;
/// Ranks observed fewer times than this are left out of the rank statistic.
pub const MIN_RANK_COUNT: u64 = 20;

pub const END_PRICE: &str = "end_price";
pub const AGGREGATE_VOLUME: &str = "aggregate_volume";
pub const LP_LOSS: &str = "lp_loss";
pub const ACTIVE_COUNT: &str = "active_count";
pub const PARTICIPATION_RATE: &str = "participation_rate";
const METRICS: [&str; 5] = [END_PRICE, AGGREGATE_VOLUME, LP_LOSS, ACTIVE_COUNT, PARTICIPATION_RATE];

/// Random stream for block (or sample) `index` under `seed`.
pub fn block_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Streaming mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.n = n;
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `|mean − target| / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankStat {
    pub rank: usize,
    /// Blocks in which this queue position was filled by an active trader.
    pub count: u64,
    pub mean_volume: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub n_blocks: u64,
    pub seed: u64,
    pub m: usize,
    pub depth: f64,
    pub y0: f64,
    pub estimates: BTreeMap<String, Estimate>,
    /// Closed-form values the estimates should converge to.
    pub targets: BTreeMap<String, f64>,
    pub rank_volume_profile: Vec<RankStat>,
    pub fee_ties: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub setup: BlockSetup,
    pub n_blocks: u64,
    pub seed: u64,
}

#[derive(Clone)]
struct Accumulator {
    metrics: [Moments; 5],
    ranks: Vec<Moments>,
    ties: u64,
}

impl Accumulator {
    fn new(m: usize) -> Self {
        Self {
            metrics: [Moments::default(); 5],
            ranks: vec![Moments::default(); m],
            ties: 0,
        }
    }

    fn push(&mut self, block: &BlockRealization, m: usize) {
        let active = block.active_count() as f64;
        let values = [
            block.end_price.abs(),
            block.delta.abs(),
            block.lp_wealth_change,
            active,
            active / m as f64,
        ];
        for (acc, x) in self.metrics.iter_mut().zip(values) {
            acc.push(x);
        }
        for (acc, t) in self.ranks.iter_mut().zip(&block.traders) {
            if t.volume != 0.0 {
                acc.push(t.volume.abs());
            }
        }
        self.ties += block.fee_ties as u64;
    }

    fn merge(&mut self, o: &Accumulator) {
        for (a, b) in self.metrics.iter_mut().zip(&o.metrics) {
            a.merge(b);
        }
        for (a, b) in self.ranks.iter_mut().zip(&o.ranks) {
            a.merge(b);
        }
        self.ties += o.ties;
    }
}

/// Simulates `n_blocks` independent blocks. Block `b` draws from stream `b`
/// of `seed`, and chunks are merged in index order, so the report is
/// identical for every worker count.
pub fn run_monte_carlo(sol: &Stage3Solution, cfg: &McConfig, workers: Option<usize>) -> Result<SimReport> {
    if cfg.n_blocks == 0 {
        return Err(domain("n_blocks must be at least 1"));
    }
    let setup = cfg.setup.validated()?;
    sol.schedule()?;
    let m = sol.m();
    let n_chunks = cfg.n_blocks.div_ceil(CHUNK);
    let chunks = par::map_indexed(n_chunks as usize, workers, |c| -> Result<Accumulator> {
        let start = c as u64 * CHUNK;
        let end = (start + CHUNK).min(cfg.n_blocks);
        let mut acc = Accumulator::new(m);
        for b in start..end {
            let block = simulate_block(sol, &setup, &mut block_rng(cfg.seed, b))?;
            acc.push(&block, m);
        }
        Ok(acc)
    });
    let mut total = Accumulator::new(m);
    for c in chunks {
        total.merge(&c?);
    }

    let estimates = METRICS
        .iter()
        .zip(&total.metrics)
        .map(|(name, mo)| {
            (
                name.to_string(),
                Estimate {
                    mean: mo.mean,
                    std_error: mo.std_error(),
                },
            )
        })
        .collect();
    let rank_volume_profile = total
        .ranks
        .iter()
        .enumerate()
        .map(|(i, mo)| RankStat {
            rank: i + 1,
            count: mo.n,
            mean_volume: mo.mean,
            std_error: mo.std_error(),
        })
        .collect();

    let depth = setup.depth;
    let active = sol.expected_active_count();
    let targets = BTreeMap::from([
        (END_PRICE.to_string(), sol.expected_end_price()),
        (AGGREGATE_VOLUME.to_string(), sol.aggregate_volume_closed_form(depth)),
        (LP_LOSS.to_string(), -depth * m as f64 * s_m(sol)?),
        (ACTIVE_COUNT.to_string(), active),
        (PARTICIPATION_RATE.to_string(), active / m as f64),
    ]);
    Ok(SimReport {
        n_blocks: cfg.n_blocks,
        seed: cfg.seed,
        m,
        depth,
        y0: setup.y0,
        estimates,
        targets,
        rank_volume_profile,
        fee_ties: total.ties,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankMonotonicity {
    /// Spearman correlation between queue position and mean volume.
    pub correlation: f64,
    pub strictly_decreasing: bool,
    pub ranks_used: usize,
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Rank correlation between queue position and conditional mean volume over
/// the ranks observed at least [`MIN_RANK_COUNT`] times.
pub fn rank_volume_monotonicity(report: &SimReport) -> Result<RankMonotonicity> {
    let used: Vec<&RankStat> = report
        .rank_volume_profile
        .iter()
        .filter(|r| r.count >= MIN_RANK_COUNT)
        .collect();
    if used.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least two queue positions with {MIN_RANK_COUNT}+ active observations, got {}",
            used.len()
        )));
    }
    let pos: Vec<f64> = used.iter().map(|r| r.rank as f64).collect();
    let vol: Vec<f64> = used.iter().map(|r| r.mean_volume).collect();
    let correlation = pearson(&average_ranks(&pos), &average_ranks(&vol));
    Ok(RankMonotonicity {
        correlation,
        strictly_decreasing: vol.windows(2).all(|w| w[1] < w[0]),
        ranks_used: used.len(),
    })
}
