use serde::{Deserialize, Serialize};

use super::monte_carlo::{block_rng, Moments};
use crate::error::{domain, Result};
use crate::par;
use crate::stage3::Stage3Solution;

const SAMPLE_CHUNK: u64 = 2048;

/// Deviation grid: `q = Q(v)·q_max_factor·i/(n_q − 1)` and
/// `φ = Φ(v)·phi_max_factor·j/(n_phi − 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationGrid {
    pub n_q: usize,
    pub n_phi: usize,
    pub q_max_factor: f64,
    pub phi_max_factor: f64,
}

impl Default for DeviationGrid {
    /// 21×21 over `[0, 2]` multiples; the equilibrium is the centre node.
    fn default() -> Self {
        Self {
            n_q: 21,
            n_phi: 21,
            q_max_factor: 2.0,
            phi_max_factor: 2.0,
        }
    }
}

impl DeviationGrid {
    fn q_factor(&self, i: usize) -> f64 {
        self.q_max_factor * i as f64 / (self.n_q - 1) as f64
    }
    fn phi_factor(&self, j: usize) -> f64 {
        self.phi_max_factor * j as f64 / (self.n_phi - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub q: f64,
    pub phi: f64,
    pub mc_mean: f64,
    pub mc_std_error: f64,
    pub analytic: f64,
    /// Mean and standard error of `W(point) − W(equilibrium)` over the same draws.
    pub gap_mean: f64,
    pub gap_std_error: f64,
}

impl GridPoint {
    /// Whether the analytic payoff lies within 3 standard errors of the
    /// simulated mean (a rounding-level slack covers zero-variance points).
    pub fn analytic_agrees(&self) -> bool {
        (self.mc_mean - self.analytic).abs() <= 3.0 * self.mc_std_error + 1e-12 * (1.0 + self.analytic.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestResponseVerdict {
    pub valuation: f64,
    pub n_samples: u64,
    pub equilibrium: GridPoint,
    /// Grid point with the highest simulated mean.
    pub best: GridPoint,
    /// Equilibrium within 3 paired standard errors of the grid maximum.
    pub equilibrium_is_maximal: bool,
    pub analytic_matches: bool,
    /// Largest `|mc − analytic|/se` over points with positive variance.
    pub max_abs_z: f64,
    pub pass: bool,
    pub grid: DeviationGrid,
    /// Row-major over `(q index, φ index)`.
    pub points: Vec<GridPoint>,
}

impl BestResponseVerdict {
    pub fn point(&self, i: usize, j: usize) -> &GridPoint {
        &self.points[i * self.grid.n_phi + j]
    }
}

/// Brute-force check that `(Q(v), Φ(v))` is a best response when the other
/// `M − 1` traders follow the equilibrium schedules. Every grid point sees the
/// same competitor draws.
#[allow(clippy::too_many_arguments)]
pub fn best_response_scan(
    sol: &Stage3Solution,
    depth: f64,
    info_cost: f64,
    v: f64,
    grid: DeviationGrid,
    n_samples: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<BestResponseVerdict> {
    if !(v > sol.cutoff() && v <= sol.v_bar()) {
        return Err(domain(format!(
            "valuation {v} must lie in ({}, {}]",
            sol.cutoff(),
            sol.v_bar()
        )));
    }
    if grid.n_q < 2 || grid.n_phi < 2 || !(grid.q_max_factor > 0.0 && grid.phi_max_factor > 0.0) {
        return Err(domain("deviation grid needs at least 2×2 nodes and positive ranges"));
    }
    if n_samples < 2 {
        return Err(domain("best-response scan needs at least 2 samples"));
    }
    if !(depth > 0.0) {
        return Err(domain(format!("depth must be positive, got {depth}")));
    }
    let table = sol.schedule()?;
    let q_eq = depth * table.volume_tilde(v);
    let phi_eq = depth * table.phi_per_depth(v);
    let qs: Vec<f64> = (0..grid.n_q).map(|i| q_eq * grid.q_factor(i)).collect();
    let phis: Vec<f64> = (0..grid.n_phi).map(|j| phi_eq * grid.phi_factor(j)).collect();
    let (n_q, n_phi) = (grid.n_q, grid.n_phi);
    let pi = sol.pi();
    let competitors = sol.m() - 1;

    let payoff = |q: f64, phi: f64, ahead: f64| -> f64 {
        -phi + q * (v - pi - q / depth) - info_cost - 2.0 * q * ahead / depth
    };

    let n_chunks = n_samples.div_ceil(SAMPLE_CHUNK);
    let chunks = par::map_indexed(n_chunks as usize, workers, |c| {
        let start = c as u64 * SAMPLE_CHUNK;
        let end = (start + SAMPLE_CHUNK).min(n_samples);
        let mut level = vec![Moments::default(); n_q * n_phi];
        let mut gap = vec![Moments::default(); n_q * n_phi];
        let mut eq = Moments::default();
        let mut rivals = Vec::with_capacity(competitors);
        let mut ahead = vec![0.0; n_phi];
        for s in start..end {
            let mut rng = block_rng(seed, s);
            rivals.clear();
            for _ in 0..competitors {
                let w = sol.model().sample(&mut rng);
                rivals.push((depth * table.volume_tilde(w), depth * table.phi_per_depth(w)));
            }
            for (j, &phi) in phis.iter().enumerate() {
                ahead[j] = rivals.iter().filter(|r| r.1 > phi).map(|r| r.0).sum();
            }
            let eq_ahead: f64 = rivals.iter().filter(|r| r.1 > phi_eq).map(|r| r.0).sum();
            let w_eq = payoff(q_eq, phi_eq, eq_ahead);
            eq.push(w_eq);
            for (i, &q) in qs.iter().enumerate() {
                for (j, &phi) in phis.iter().enumerate() {
                    let w = payoff(q, phi, ahead[j]);
                    level[i * n_phi + j].push(w);
                    gap[i * n_phi + j].push(w - w_eq);
                }
            }
        }
        (level, gap, eq)
    });
    let mut level = vec![Moments::default(); n_q * n_phi];
    let mut gap = vec![Moments::default(); n_q * n_phi];
    let mut eq = Moments::default();
    for (l, g, e) in chunks {
        eq.merge(&e);
        for (a, b) in level.iter_mut().zip(&l) {
            a.merge(b);
        }
        for (a, b) in gap.iter_mut().zip(&g) {
            a.merge(b);
        }
    }

    let mut points = Vec::with_capacity(n_q * n_phi);
    for (i, &q) in qs.iter().enumerate() {
        for (j, &phi) in phis.iter().enumerate() {
            let k = i * n_phi + j;
            points.push(GridPoint {
                q,
                phi,
                mc_mean: level[k].mean,
                mc_std_error: level[k].std_error(),
                analytic: sol.deviation_payoff(depth, v, q, phi, info_cost)?,
                gap_mean: gap[k].mean,
                gap_std_error: gap[k].std_error(),
            });
        }
    }
    let best = *points
        .iter()
        .max_by(|a, b| a.mc_mean.total_cmp(&b.mc_mean))
        .expect("grid is nonempty");
    let equilibrium = GridPoint {
        q: q_eq,
        phi: phi_eq,
        mc_mean: eq.mean,
        mc_std_error: eq.std_error(),
        analytic: sol.deviation_payoff(depth, v, q_eq, phi_eq, info_cost)?,
        gap_mean: 0.0,
        gap_std_error: 0.0,
    };
    let equilibrium_is_maximal = best.gap_mean <= 3.0 * best.gap_std_error + 1e-12 * (1.0 + best.mc_mean.abs());
    let analytic_matches = points.iter().all(GridPoint::analytic_agrees);
    let max_abs_z = points
        .iter()
        .filter(|p| p.mc_std_error > 0.0)
        .map(|p| (p.mc_mean - p.analytic).abs() / p.mc_std_error)
        .fold(0.0, f64::max);
    Ok(BestResponseVerdict {
        valuation: v,
        n_samples,
        equilibrium,
        best,
        equilibrium_is_maximal,
        analytic_matches,
        max_abs_z,
        pass: equilibrium_is_maximal && analytic_matches,
        grid,
        points,
    })
}
