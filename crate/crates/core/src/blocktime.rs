//! Block-time comparative statics: cutoff against `T`, limiting liquidity
//! against `T`, and the block time at which markets shut down.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{find_root, Bracket, Tolerance};
use crate::par;
use crate::stage2::{limit_formula, MarketEquilibrium, MarketParams};
use crate::stage3::solve_cutoff;
use crate::valuations::BlockTimeFamily;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffTable {
    pub m: usize,
    /// `(T, v_M(T))`.
    pub rows: Vec<(f64, f64)>,
    pub strictly_increasing: bool,
    /// Describes the first pair of grid points that breaks monotonicity.
    pub diagnostic: Option<String>,
}

fn validate_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(domain("block-time grid is empty"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(domain("block times must be positive and finite"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("block-time grid must be strictly increasing without duplicates"));
    }
    Ok(())
}

pub fn cutoff_vs_t(
    family: &dyn BlockTimeFamily,
    m: usize,
    pi: f64,
    t_grid: &[f64],
    tol: Tolerance,
) -> Result<CutoffTable> {
    validate_grid(t_grid)?;
    let cutoffs = par::map_indexed(t_grid.len(), None, |i| {
        solve_cutoff(&family.model(t_grid[i]), m, pi, tol)
    });
    let mut rows = Vec::with_capacity(t_grid.len());
    for (t, c) in t_grid.iter().zip(cutoffs) {
        rows.push((*t, c?));
    }
    let diagnostic = rows.windows(2).find(|w| !(w[1].1 > w[0].1)).map(|w| {
        format!(
            "cutoff not increasing: v_M({}) = {} but v_M({}) = {}",
            w[0].0, w[0].1, w[1].0, w[1].1
        )
    });
    Ok(CutoffTable {
        m,
        rows,
        strictly_increasing: diagnostic.is_none(),
        diagnostic,
    })
}

/// `L^∞(T) = 8πN(T)/(3(v̄(T) − π)²) − θ`.
pub fn limit_liquidity_vs_t(family: &dyn BlockTimeFamily, pi: f64, theta: f64, t: f64) -> Result<f64> {
    limit_formula(pi, family.noise_mass(t), family.v_bar(t), theta)
}

/// Root of `L^∞(T)` inside `[t_lo, t_hi]`.
pub fn shutdown_time(
    family: &dyn BlockTimeFamily,
    pi: f64,
    theta: f64,
    t_lo: f64,
    t_hi: f64,
    tol: Tolerance,
) -> Result<f64> {
    // Validate both ends before bracketing so domain errors are not masked.
    limit_liquidity_vs_t(family, pi, theta, t_lo)?;
    limit_liquidity_vs_t(family, pi, theta, t_hi)?;
    let f = |t: f64| limit_liquidity_vs_t(family, pi, theta, t).unwrap_or(f64::NAN);
    let bracket = Bracket::new(f, t_lo, t_hi)?;
    find_root(f, &bracket, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteMLiquidityRow {
    pub t: f64,
    pub v_bar: f64,
    pub noise_mass: f64,
    pub cutoff: f64,
    pub l_star: f64,
    pub viable: bool,
    pub limit_liquidity: f64,
}

/// Finite-`M` equilibrium alongside the limit, for each `T`. Reported only;
/// no monotonicity is implied.
pub fn liquidity_vs_t(
    family: &dyn BlockTimeFamily,
    m: usize,
    pi: f64,
    theta: f64,
    t_grid: &[f64],
    tol: Tolerance,
) -> Result<Vec<FiniteMLiquidityRow>> {
    validate_grid(t_grid)?;
    par::map_indexed(t_grid.len(), None, |i| {
        let t = t_grid[i];
        let params = MarketParams {
            pi,
            theta,
            noise_mass: family.noise_mass(t),
            info_cost: 0.0,
            model: family.model(t),
        };
        let (sol, eq) = MarketEquilibrium::solve(&params, m, tol)?;
        Ok(FiniteMLiquidityRow {
            t,
            v_bar: family.v_bar(t),
            noise_mass: params.noise_mass,
            cutoff: sol.cutoff(),
            l_star: eq.l_star,
            viable: eq.viable,
            limit_liquidity: limit_liquidity_vs_t(family, pi, theta, t)?,
        })
    })
    .into_iter()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::valuations::{DiffusiveFamily, StaticFamily, ValuationModel};

    #[test]
    fn default_family_cutoff_rises_with_t() {
        let fam = DiffusiveFamily::default();
        for m in [2, 5, 10] {
            let t = cutoff_vs_t(&fam, m, 0.1, &[6.0, 12.0, 24.0, 48.0], Tolerance::default()).unwrap();
            assert!(t.strictly_increasing, "{t:?}");
        }
        assert!(cutoff_vs_t(&fam, 5, 0.1, &[6.0, 6.0], Tolerance::default()).is_err());
    }

    #[test]
    fn static_family_reports_flat_cutoffs() {
        let fam = StaticFamily {
            model: ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 },
            noise_mass: 1000.0,
        };
        let t = cutoff_vs_t(&fam, 5, 0.1, &[6.0, 12.0], Tolerance::default()).unwrap();
        assert!(!t.strictly_increasing);
        assert!(t.diagnostic.unwrap().contains("not increasing"));
        assert_eq!(t.rows[0].1, t.rows[1].1);
    }

    #[test]
    fn limit_liquidity_formula() {
        let fam = DiffusiveFamily::default();
        // At T = T₀: v̄ = 1, N = 1000e^{-0.12}.
        let expected = 8.0 * 0.1 * 1000.0 * (-0.12f64).exp() / (3.0 * 0.81) - 10.0;
        let got = limit_liquidity_vs_t(&fam, 0.1, 10.0, 12.0).unwrap();
        assert!((got - expected).abs() < 1e-12);
        let dead = DiffusiveFamily { n0: 0.0, ..fam };
        assert_eq!(limit_liquidity_vs_t(&dead, 0.1, 10.0, 12.0).unwrap(), -10.0);
        assert!(limit_liquidity_vs_t(&fam, 5.0, 10.0, 12.0).is_err());
    }

    #[test]
    fn shutdown_brackets_sign_change() {
        let fam = DiffusiveFamily::default();
        let t = shutdown_time(&fam, 0.1, 10.0, 1.0, 1e4, Tolerance::default()).unwrap();
        assert!(t > 1.0 && t < 1e4);
        assert!(limit_liquidity_vs_t(&fam, 0.1, 10.0, t - 1e-3).unwrap() > 0.0);
        assert!(limit_liquidity_vs_t(&fam, 0.1, 10.0, t + 1e-3).unwrap() < 0.0);
    }

    #[test]
    fn no_shutdown_without_theta() {
        let fam = DiffusiveFamily {
            lambda: 0.0,
            ..DiffusiveFamily::default()
        };
        assert!(matches!(
            shutdown_time(&fam, 0.1, 0.0, 1.0, 1e4, Tolerance::default()),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn finite_m_report_runs() {
        let rows = liquidity_vs_t(
            &DiffusiveFamily::default(),
            5,
            0.1,
            10.0,
            &[6.0, 12.0, 24.0],
            Tolerance::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows.iter().all(|r| r.l_star > r.limit_liquidity));
    }
}
