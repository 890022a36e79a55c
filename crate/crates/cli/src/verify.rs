use blockclear_core::numerics::{Eval, Tolerance};
use blockclear_core::simulator::{
    best_response_scan, rank_volume_monotonicity, run_monte_carlo, DeviationGrid, ACTIVE_COUNT, AGGREGATE_VOLUME,
    END_PRICE, LP_LOSS,
};
use blockclear_core::stage2::uniform_liquidity_closed_form;
use blockclear_core::stage3::cutoff_residual;
use blockclear_core::valuations::ValuationModel;
use serde::Serialize;
use serde_json::{json, Map};

use crate::report::{json_document, sig9, to_value};
use crate::simulate::prepare;
use crate::{CliError, Outcome, RunConfig, EXIT_OK, EXIT_VERIFY_FAILED};

pub const MIN_REPLICATIONS: u64 = 100_000;
const Z_MAX: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

impl Check {
    fn new(name: impl Into<String>, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, detail }
    }

    fn from_result(name: &str, r: Result<(bool, String), blockclear_core::Error>) -> Self {
        match r {
            Ok((pass, detail)) => Self::new(name, pass, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub(crate) fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    if cfg.n_blocks < MIN_REPLICATIONS {
        return Err(CliError::Config(format!(
            "insufficient replications: verify needs n_blocks >= {MIN_REPLICATIONS}, got {}",
            cfg.n_blocks
        )));
    }
    let p = match prepare(cfg, "verify")? {
        Ok(p) => p,
        Err(outcome) => return Ok(outcome),
    };
    let params = cfg.market_params();
    let (sol, eq) = (&p.sol, &p.eq);
    let depth = p.mc.setup.depth;
    let seed = p.mc.seed;
    let tol = Tolerance::default();
    let mut checks = Vec::new();

    checks.push(Check::from_result(
        "cutoff_residual",
        cutoff_residual(sol.model(), cfg.m, cfg.pi, sol.cutoff()).map(|r| match r {
            Eval::Value(h) => (h.abs() <= 10.0 * tol.abs_tol, format!("|h(v_M)| = {:.3e}", h.abs())),
            other => (false, format!("residual overflowed: {other:?}")),
        }),
    ));
    let uniform = matches!(params.model, ValuationModel::UniformOnFeeToMax { .. });
    if uniform {
        let mf = cfg.m as f64;
        let closed = cfg.v_bar - (cfg.v_bar - cfg.pi) * mf.ln() / (mf - 1.0);
        let err = (sol.cutoff() - closed).abs();
        checks.push(Check::new("cutoff_closed_form", err <= 1e-9, format!("|v_M - closed form| = {err:.3e}")));
    }
    checks.push(Check::from_result(
        "aggregate_volume_identity",
        sol.aggregate_volume(depth).map(|q| {
            let r = rel(q, sol.aggregate_volume_closed_form(depth));
            (r <= 1e-8, format!("relative gap {r:.3e}"))
        }),
    ));
    if uniform {
        checks.push(Check::from_result(
            "liquidity_closed_form",
            uniform_liquidity_closed_form(&params, cfg.m).map(|l| {
                let r = rel(eq.l_star, l);
                (r <= 1e-8, format!("L* = {}, closed form {}, relative gap {r:.3e}", sig9(eq.l_star), sig9(l)))
            }),
        ));
    }
    let zp = eq.zero_profit_residual(&params);
    let zp_bound = 1e-6 * params.pi * params.noise_mass;
    checks.push(Check::new(
        "zero_profit",
        !eq.viable || zp.abs() <= zp_bound,
        format!("residual {zp:.3e} (bound {zp_bound:.3e})"),
    ));
    checks.push(Check::from_result(
        "volume_ode",
        (1..=20)
            .map(|k| {
                let v = sol.cutoff() + (sol.v_bar() - sol.cutoff()) * k as f64 / 21.0;
                sol.volume_ode_residual(1.0, v, 1e-5)
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(|r| {
                let worst = r.into_iter().fold(0.0, f64::max);
                (worst < 1e-6, format!("max residual {worst:.3e} over 20 valuations"))
            }),
    ));

    let sim = run_monte_carlo(sol, &p.mc, cfg.workers)?;
    for (name, metric) in [
        ("mc_end_price", END_PRICE),
        ("mc_aggregate_volume", AGGREGATE_VOLUME),
        ("mc_lp_loss", LP_LOSS),
        ("mc_active_count", ACTIVE_COUNT),
    ] {
        let e = sim.estimates[metric];
        let target = sim.targets[metric];
        let z = e.z_score(target);
        checks.push(Check::new(
            name,
            z <= Z_MAX,
            format!("mean {} target {} ({z:.2} se)", sig9(e.mean), sig9(target)),
        ));
    }
    checks.push(Check::from_result(
        "rank_volume_monotonicity",
        rank_volume_monotonicity(&sim).map(|r| {
            (
                r.strictly_decreasing,
                format!("rank correlation {} over {} ranks", r.correlation, r.ranks_used),
            )
        }),
    ));

    let s = cfg.v_bar - cfg.pi;
    let probes = [
        sol.cutoff() + 0.05 * s / 0.9,
        cfg.pi + 0.7 * s / 0.9,
        cfg.v_bar - 0.01 * s / 0.9,
    ];
    let mut scans = Vec::new();
    for (k, v) in probes.into_iter().enumerate() {
        let name = format!("best_response_{}", k + 1);
        if !(v > sol.cutoff() && v <= sol.v_bar()) {
            checks.push(Check::new(name, true, format!("skipped: v = {} is not above the cutoff", sig9(v))));
            continue;
        }
        let stream = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1));
        match best_response_scan(sol, depth, params.info_cost, v, DeviationGrid::default(), cfg.n_blocks, stream, cfg.workers) {
            Ok(b) => {
                let detail = format!(
                    "v = {}: equilibrium maximal {}, analytic max |z| {:.2}",
                    sig9(v),
                    b.equilibrium_is_maximal,
                    b.max_abs_z
                );
                checks.push(Check::new(name, b.pass, detail));
                scans.push(json!({
                    "valuation": b.valuation,
                    "equilibrium": b.equilibrium,
                    "best": b.best,
                    "equilibrium_is_maximal": b.equilibrium_is_maximal,
                    "analytic_matches": b.analytic_matches,
                    "max_abs_z": b.max_abs_z,
                }));
            }
            Err(e) => checks.push(Check::new(name, false, format!("error: {e}"))),
        }
    }

    let passed = checks.iter().filter(|c| c.pass).count();
    let first_fail = checks.iter().find(|c| !c.pass).map(|c| c.name.clone());
    let mut lines = String::new();
    for c in &checks {
        lines.push_str(&format!("{} {} {}\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    match &first_fail {
        None => lines.push_str(&format!("verdict: PASS ({passed}/{})\n", checks.len())),
        Some(n) => lines.push_str(&format!("verdict: FAIL ({passed}/{}), first failing check: {n}\n", checks.len())),
    }

    let mut body = Map::new();
    body.insert("M".into(), json!(cfg.m));
    body.insert("L".into(), json!(depth));
    body.insert("checks".into(), to_value(&checks));
    body.insert("pass".into(), json!(first_fail.is_none()));
    body.insert("simulation".into(), to_value(&sim));
    body.insert("best_response".into(), json!(scans));
    let report = json_document("verify", body, cfg);
    let (code, note) = match first_fail {
        None => (EXIT_OK, None),
        Some(n) => (EXIT_VERIFY_FAILED, Some(format!("verification failed: {n}"))),
    };
    Ok(Outcome {
        report,
        verdicts: Some(lines),
        code,
        note,
    })
}
