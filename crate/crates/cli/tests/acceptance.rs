//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use blockclear_core::blocktime::{cutoff_vs_t, limit_liquidity_vs_t, shutdown_time};
use blockclear_core::numerics::Tolerance;
use blockclear_core::simulator::{
    amm_approximation_error, best_response_scan, rank_volume_monotonicity, run_monte_carlo, BlockSetup,
    DeviationGrid, McConfig, ACTIVE_COUNT, AGGREGATE_VOLUME, END_PRICE, LP_LOSS,
};
use blockclear_core::stage1::{equilibrium_m, h_of_m};
use blockclear_core::stage2::{liquidity_limit, uniform_liquidity_closed_form, MarketEquilibrium, MarketParams};
use blockclear_core::stage3::{solve_cutoff, Stage3Solution};
use blockclear_core::valuations::{DiffusiveFamily, ValuationModel};

const CUTOFF_ABS: f64 = 1e-9;
const IDENTITY_REL: f64 = 1e-8;
const END_PRICE_LIMIT_ABS: f64 = 1e-4;
const S_M_TARGET: f64 = 0.0581794;
const S_M_ABS: f64 = 1e-6;
const L_STAR_TARGET: f64 = 849.41;
const L_STAR_ABS: f64 = 0.01;
const LIMIT_TARGET: f64 = 319.22;
const LIMIT_REL_AT_1E4: f64 = 0.01;
const ODE_MAX: f64 = 1e-6;
const ODE_H: f64 = 1e-5;
const ODE_RATIO_BAND: (f64, f64) = (3.5, 4.5);
const H2_TARGET: f64 = 23.951;
const H2_ABS: f64 = 0.01;
const Z_MAX: f64 = 3.0;
const MC_BLOCKS: u64 = 1_000_000;
const BR_SAMPLES: u64 = 100_000;
const SEED: u64 = 20_240_601;

const LN2: f64 = std::f64::consts::LN_2;

type Verdict = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Verdict);

fn uniform(pi: f64, v_bar: f64) -> ValuationModel {
    ValuationModel::UniformOnFeeToMax { pi, v_bar }
}

fn running(c: f64, n: f64) -> MarketParams {
    MarketParams {
        pi: 0.1,
        theta: 10.0,
        noise_mass: n,
        info_cost: c,
        model: uniform(0.1, 1.0),
    }
}

fn closed_cutoff(pi: f64, v_bar: f64, m: usize) -> f64 {
    let mf = m as f64;
    v_bar - (v_bar - pi) * mf.ln() / (mf - 1.0)
}

fn sol(m: usize) -> Stage3Solution {
    Stage3Solution::solve(uniform(0.1, 1.0), m, 0.1, Tolerance::default()).unwrap()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn c1() -> Verdict {
    let mut worst: f64 = 0.0;
    for m in [2, 3, 5, 10, 50, 200] {
        let c = solve_cutoff(&uniform(0.1, 1.0), m, 0.1, Tolerance::default()).map_err(|e| e.to_string())?;
        let err = (c - closed_cutoff(0.1, 1.0, m)).abs();
        worst = worst.max(err);
        ensure(err <= CUTOFF_ABS, format!("M={m}: |v_M - closed form| = {err:.2e}"))?;
    }
    Ok(format!("max error {worst:.2e}"))
}

fn c2() -> Verdict {
    let pis = [0.0, 0.05, 0.2, 0.5];
    let v_bars = [0.8, 1.0, 3.0];
    let ms = [2, 3, 7, 25, 120];
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let (pi, v_bar, m) = (pis[k % 4], v_bars[(k / 2) % 3], ms[k % 5]);
        let s = Stage3Solution::solve(uniform(pi, v_bar), m, pi, Tolerance::default()).map_err(|e| e.to_string())?;
        let depth = 13.0;
        let q = s.aggregate_volume(depth).map_err(|e| e.to_string())?;
        let cf = depth * m as f64 * (closed_cutoff(pi, v_bar, m) - pi) / (2.0 * (m - 1) as f64);
        let r = ((q - cf) / cf).abs();
        worst = worst.max(r);
        ensure(r <= IDENTITY_REL, format!("(pi={pi}, v_bar={v_bar}, M={m}): relative gap {r:.2e}"))?;
    }
    Ok(format!("20 points, max relative gap {worst:.2e}"))
}

fn c3() -> Verdict {
    let mut prev = f64::NEG_INFINITY;
    for m in 2..=1000 {
        let p = sol(m).expected_end_price();
        let cf = m as f64 * (closed_cutoff(0.1, 1.0, m) - 0.1) / (m - 1) as f64;
        ensure(((p - cf) / cf).abs() <= IDENTITY_REL, format!("M={m}: {p} vs closed form {cf}"))?;
        ensure(p > prev && p < 0.9, format!("M={m}: end price {p} after {prev}"))?;
        prev = p;
    }
    let far = sol(100_000).expected_end_price();
    ensure(far.is_finite() && (0.9 - far).abs() <= END_PRICE_LIMIT_ABS, format!("M=1e5: {far}"))?;
    Ok(format!("increasing on 2..=1000, gap at M=1e5 {:.2e}", 0.9 - far))
}

fn c4() -> Verdict {
    let s = blockclear_core::stage2::s_m(&sol(2)).map_err(|e| e.to_string())?;
    // (v̄−π)²/4 · (½ − ln2 + ln²2)
    let oracle = 0.2025 * (0.5 - LN2 + LN2 * LN2);
    ensure((s - oracle).abs() <= 1e-12, format!("S_2 = {s}, antiderivative {oracle}"))?;
    ensure((s - S_M_TARGET).abs() <= S_M_ABS, format!("S_2 = {s}"))?;
    Ok(format!("S_2 = {s:.9}"))
}

fn c5() -> Verdict {
    let p = running(0.0, 1000.0);
    let mut worst: f64 = 0.0;
    for m in [2, 3, 5, 10, 50, 200] {
        let (_, eq) = MarketEquilibrium::solve(&p, m, Tolerance::default()).map_err(|e| e.to_string())?;
        let cf = uniform_liquidity_closed_form(&p, m).map_err(|e| e.to_string())?;
        let r = ((eq.l_star - cf) / cf).abs();
        worst = worst.max(r);
        ensure(r <= IDENTITY_REL, format!("M={m}: {} vs {cf}", eq.l_star))?;
        if m == 2 {
            ensure(
                (eq.l_star - L_STAR_TARGET).abs() <= L_STAR_ABS && (cf - L_STAR_TARGET).abs() <= L_STAR_ABS,
                format!("M=2: pipeline {} closed form {cf}", eq.l_star),
            )?;
        }
    }
    Ok(format!("max relative gap {worst:.2e}"))
}

fn c6() -> Verdict {
    let p = running(0.0, 1000.0);
    let lim = liquidity_limit(&p).map_err(|e| e.to_string())?;
    ensure((lim - LIMIT_TARGET).abs() <= 0.01, format!("limit {lim}"))?;
    let mut last = f64::NAN;
    for m in [2, 3, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000] {
        let (_, eq) = MarketEquilibrium::solve(&p, m, Tolerance::default()).map_err(|e| e.to_string())?;
        ensure(eq.l_star > lim, format!("M={m}: L* = {} not above {lim}", eq.l_star))?;
        last = eq.l_star;
    }
    let r = (last - lim) / lim;
    ensure(r < LIMIT_REL_AT_1E4, format!("M=1e4: relative gap {r}"))?;
    Ok(format!("limit {lim:.6}, gap at M=1e4 {:.3}%", 100.0 * r))
}

fn c7() -> Verdict {
    let s = sol(2);
    let mut worst: f64 = 0.0;
    for k in 1..=20 {
        let v = s.cutoff() + (1.0 - s.cutoff()) * k as f64 / 21.0;
        let r = s.volume_ode_residual(1.0, v, ODE_H).map_err(|e| e.to_string())?;
        worst = worst.max(r);
    }
    ensure(worst < ODE_MAX, format!("max residual {worst:.2e}"))?;
    // Truncation error dominates rounding only for fairly coarse steps.
    let mut ratios = Vec::new();
    for v in [0.5, 0.7, 0.9] {
        let coarse = s.volume_ode_residual(1.0, v, 1e-2).map_err(|e| e.to_string())?;
        let fine = s.volume_ode_residual(1.0, v, 5e-3).map_err(|e| e.to_string())?;
        let ratio = coarse / fine;
        ensure(
            ratio > ODE_RATIO_BAND.0 && ratio < ODE_RATIO_BAND.1,
            format!("v={v}: halving ratio {ratio}"),
        )?;
        ratios.push(format!("{ratio:.3}"));
    }
    Ok(format!("max residual {worst:.2e}, halving ratios {}", ratios.join("/")))
}

fn c8() -> Verdict {
    let p = running(0.0, 1000.0);
    let h2 = h_of_m(&p, 2).map_err(|e| e.to_string())?;
    let (_, eq) = MarketEquilibrium::solve(&p, 2, Tolerance::default()).map_err(|e| e.to_string())?;
    // L*·(v̄−π)²/4·(2 − 2ln2 − ln²2)
    let oracle = eq.l_star * 0.2025 * (2.0 - 2.0 * LN2 - LN2 * LN2);
    let mut failures = Vec::new();
    if (h2 - oracle).abs() > 1e-6 {
        failures.push(format!("H(2) = {h2} disagrees with antiderivative {oracle}"));
    }
    if (h2 - H2_TARGET).abs() > H2_ABS {
        failures.push(format!("H(2) = {h2:.6} (antiderivative {oracle:.6}), expected {H2_TARGET} +- {H2_ABS}"));
    }

    let cap = blockclear_core::stage1::DEFAULT_M_CAP;
    let probes: Vec<usize> = (2..=100).chain([200, 500, 1000, 2000, 5000, cap]).collect();
    let hs: Vec<(usize, f64)> = probes.iter().map(|&m| (m, h_of_m(&p, m).unwrap())).collect();
    let last_nonneg = hs.iter().rev().find(|(_, h)| *h >= 0.0);
    // The weaker statement limsup H <= 0: H decreasing in the tail and
    // vanishing relative to H(2).
    let tail = hs.iter().filter(|(m, _)| *m >= 100).map(|(_, h)| *h).collect::<Vec<_>>();
    let vanishing = tail.windows(2).all(|w| w[1] < w[0]) && tail.last().is_some_and(|h| *h < 1e-6 * h2);
    if let Some((m, h)) = last_nonneg {
        failures.push(format!(
            "no M0 <= {cap} with H(M) < 0 beyond it: H({m}) = {h:.3e} (H decreasing to zero from above: {vanishing})"
        ));
    }

    let ns = [500.0, 750.0, 1000.0, 1500.0, 2000.0];
    let cs = [1.0, 2.0, 5.0, 10.0, 20.0];
    let mut grid = vec![vec![0usize; cs.len()]; ns.len()];
    for (i, &n) in ns.iter().enumerate() {
        for (j, &c) in cs.iter().enumerate() {
            grid[i][j] = equilibrium_m(&running(c, n), cap, None).map_err(|e| e.to_string())?.m_star.unwrap_or(0);
        }
    }
    let in_c = grid.iter().all(|row| row.windows(2).all(|w| w[1] <= w[0]));
    let in_n = (0..cs.len()).all(|j| (1..ns.len()).all(|i| grid[i][j] >= grid[i - 1][j]));
    if !(in_c && in_n) {
        failures.push(format!("m_star not monotone: {grid:?}"));
    }
    if failures.is_empty() {
        Ok(format!("H(2) = {h2:.4}, m_star grid monotone"))
    } else {
        Err(format!("{}; m_star grid monotone in C: {in_c}, in N: {in_n}", failures.join("; ")))
    }
}

fn c9() -> Verdict {
    let (s, eq) = MarketEquilibrium::solve(&running(0.0, 1000.0), 2, Tolerance::default()).map_err(|e| e.to_string())?;
    let cfg = McConfig {
        setup: BlockSetup::linear(eq.l_star, 0.0),
        n_blocks: MC_BLOCKS,
        seed: SEED,
    };
    let r = run_monte_carlo(&s, &cfg, None).map_err(|e| e.to_string())?;
    let lp_target = -eq.l_star * 2.0 * eq.s_m;
    let targets = [
        (END_PRICE, s.expected_end_price()),
        (AGGREGATE_VOLUME, s.aggregate_volume_closed_form(eq.l_star)),
        (LP_LOSS, lp_target),
        (ACTIVE_COUNT, 2.0 * (1.0 - s.model().cdf(s.cutoff()))),
    ];
    let mut parts = Vec::new();
    for (name, target) in targets {
        let z = r.estimates[name].z_score(target);
        ensure(z <= Z_MAX, format!("{name}: mean {} target {target} z {z:.2}", r.estimates[name].mean))?;
        parts.push(format!("{name} {z:.2}se"));
    }
    Ok(parts.join(", "))
}

fn c10() -> Verdict {
    let p = running(0.0, 1000.0);
    let (s, eq) = MarketEquilibrium::solve(&p, 3, Tolerance::default()).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for (k, v) in [s.cutoff() + 0.05, 0.8, 0.99].into_iter().enumerate() {
        let b = best_response_scan(&s, eq.l_star, 0.0, v, DeviationGrid::default(), BR_SAMPLES, SEED + k as u64, None)
            .map_err(|e| e.to_string())?;
        ensure(
            b.equilibrium_is_maximal,
            format!("v={v}: grid point (q={}, phi={}) beats equilibrium", b.best.q, b.best.phi),
        )?;
        ensure(b.analytic_matches, format!("v={v}: analytic payoff off by {:.2} se", b.max_abs_z))?;
        parts.push(format!("v={v:.3} max|z| {:.2}", b.max_abs_z));
    }
    Ok(parts.join(", "))
}

fn c11() -> Verdict {
    let mut parts = Vec::new();
    for m in [2, 5, 10] {
        let (s, eq) = MarketEquilibrium::solve(&running(0.0, 1000.0), m, Tolerance::default()).map_err(|e| e.to_string())?;
        let cfg = McConfig {
            setup: BlockSetup::linear(eq.l_star, 0.0),
            n_blocks: MC_BLOCKS,
            seed: SEED + m as u64,
        };
        let r = run_monte_carlo(&s, &cfg, None).map_err(|e| e.to_string())?;
        let stat = rank_volume_monotonicity(&r).map_err(|e| e.to_string())?;
        ensure(
            stat.strictly_decreasing && stat.correlation == -1.0,
            format!("M={m}: correlation {} profile {:?}", stat.correlation, r.rank_volume_profile),
        )?;
        parts.push(format!("M={m}: {} ranks", stat.ranks_used));
    }
    Ok(parts.join(", "))
}

fn c12() -> Verdict {
    let fam = DiffusiveFamily::default();
    let grid = [6.0, 12.0, 24.0, 48.0, 96.0];
    let tol = Tolerance::default();
    let table = cutoff_vs_t(&fam, 2, fam.pi, &grid, tol).map_err(|e| e.to_string())?;
    ensure(table.strictly_increasing, format!("{:?}", table.diagnostic))?;
    let limits: Vec<f64> = grid
        .iter()
        .map(|&t| limit_liquidity_vs_t(&fam, fam.pi, 10.0, t).unwrap())
        .collect();
    ensure(limits.windows(2).all(|w| w[1] < w[0]), format!("L_inf not decreasing: {limits:?}"))?;
    let t_bar = shutdown_time(&fam, fam.pi, 10.0, 1.0, 1.0e4, tol).map_err(|e| e.to_string())?;
    let eps = 1e-6 * t_bar;
    let before = limit_liquidity_vs_t(&fam, fam.pi, 10.0, t_bar - eps).map_err(|e| e.to_string())?;
    let after = limit_liquidity_vs_t(&fam, fam.pi, 10.0, t_bar + eps).map_err(|e| e.to_string())?;
    ensure(before > 0.0 && after < 0.0, format!("no sign change at {t_bar}: {before}, {after}"))?;
    Ok(format!("shutdown at T = {t_bar:.4}"))
}

fn c13() -> Verdict {
    let grid = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
    let rows = amm_approximation_error(1000.0, 0.003, &grid).map_err(|e| e.to_string())?;
    for w in rows.windows(2) {
        for (a, b, what) in [
            (w[0].slippage_error_buy, w[1].slippage_error_buy, "buy slippage"),
            (w[0].slippage_error_sell, w[1].slippage_error_sell, "sell slippage"),
            (w[0].impact_error_buy, w[1].impact_error_buy, "buy impact"),
            (w[0].impact_error_sell, w[1].impact_error_sell, "sell impact"),
        ] {
            ensure(b > a, format!("{what} error not increasing at q/L={}", w[1].q_over_l))?;
        }
    }
    let first = &rows[0];
    let worst = first
        .slippage_error_buy
        .max(first.slippage_error_sell)
        .max(first.impact_error_buy)
        .max(first.impact_error_sell);
    // Errors are first order in q/L.
    ensure(worst <= 2.0 * first.q_over_l, format!("error {worst} at q/L=1e-4"))?;
    Ok(format!("max error {worst:.2e} at q/L=1e-4, {:.3} at 1e-1", rows[6].impact_error_buy))
}

fn cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["blockclear"];
    argv.extend_from_slice(args);
    let code = blockclear_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap())
}

fn c14() -> Verdict {
    let (c1, one) = cli(&["simulate", "--seed", "99", "--n-blocks", "200000", "--workers", "1"]);
    let (c8, eight) = cli(&["simulate", "--seed", "99", "--n-blocks", "200000", "--workers", "8"]);
    ensure(c1 == 0 && c8 == 0, format!("exit codes {c1}, {c8}"))?;
    ensure(one == eight, "simulate output differs between 1 and 8 workers".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 5] = [
        &["simulate", "--seed", "99", "--n-blocks", "200000", "--M", "4"],
        &["solve", "--C", "2"],
        &["sweep", "--M-range", "2..12"],
        &["sweep", "--C", "1,5,20"],
        &["blocktime"],
    ];
    for (k, args) in runs.iter().enumerate() {
        let (code, first) = cli(args);
        ensure(code == 0, format!("{args:?} exited {code}"))?;
        let doc: serde_json::Value = serde_json::from_str(&first).map_err(|e| e.to_string())?;
        let path = dir.path().join(format!("cfg{k}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&doc["config"]).unwrap()).map_err(|e| e.to_string())?;
        let (_, again) = cli(&[args[0], "--config", path.to_str().unwrap()]);
        ensure(again == first, format!("{args:?} does not reproduce from its embedded config"))?;
    }
    Ok("bit-identical across workers; 5 reports reproduce".into())
}

fn main() {
    let criteria: [Criterion; 14] = [
        ("cutoff closed form", Duration::from_secs(1), c1),
        ("aggregate volume identity", Duration::from_secs(5), c2),
        ("end price and limit", Duration::from_secs(10), c3),
        ("S_M hand oracle", Duration::from_secs(1), c4),
        ("closed-form liquidity", Duration::from_secs(5), c5),
        ("liquidity limit from above", Duration::from_secs(5), c6),
        ("volume ODE residual", Duration::from_secs(2), c7),
        ("entry profit and comparative statics", Duration::from_secs(60), c8),
        ("Monte Carlo unbiasedness", Duration::from_secs(300), c9),
        ("best response", Duration::from_secs(300), c10),
        ("rank-volume profile", Duration::from_secs(60), c11),
        ("block-time statics", Duration::from_secs(10), c12),
        ("AMM linearization", Duration::from_secs(1), c13),
        ("determinism and round trip", Duration::from_secs(60), c14),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let verdict = match verdict {
            Ok(_) if elapsed > budget => Err(format!("took {elapsed:.1?}, budget {budget:?}")),
            v => v,
        };
        let (tag, detail) = match &verdict {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name} [{elapsed:.2?}]: {detail}", i + 1);
    }
    println!("{} of 14 criteria pass", 14 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
