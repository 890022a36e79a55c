use blockclear_core::blocktime::{cutoff_vs_t, limit_liquidity_vs_t, liquidity_vs_t, shutdown_time};
use blockclear_core::numerics::Tolerance;
use blockclear_core::valuations::fosd_check;
use serde_json::{json, Map};

use crate::report::{cell, json_document, to_value, trend, CsvDoc};
use crate::{CliError, Format, Outcome, RunConfig, EXIT_OK};

pub const DEFAULT_T_GRID: [f64; 5] = [6.0, 12.0, 24.0, 48.0, 96.0];

pub(crate) fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let fam = cfg.block_time_family().map_err(CliError::Config)?;
    let grid = cfg.t_grid.clone().unwrap_or_else(|| DEFAULT_T_GRID.to_vec());
    let tol = Tolerance::default();
    let cutoffs = cutoff_vs_t(&fam, cfg.m, cfg.pi, &grid, tol).map_err(|e| CliError::Config(e.to_string()))?;
    let rows = liquidity_vs_t(&fam, cfg.m, cfg.pi, cfg.theta, &grid, tol)?;
    let limits: Vec<Option<f64>> = rows.iter().map(|r| Some(r.limit_liquidity)).collect();
    let limit_trend = trend(&limits);
    let fosd = grid
        .windows(2)
        .map(|w| fosd_check(&fam, w[0], w[1], 1000).map(|v| v.holds))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .all(|h| h);

    let [t_lo, t_hi] = cfg.shutdown_range;
    let shutdown = match shutdown_time(&fam, cfg.pi, cfg.theta, t_lo, t_hi, tol) {
        Ok(t) => {
            let eps = 1e-6 * t;
            let below = limit_liquidity_vs_t(&fam, cfg.pi, cfg.theta, t - eps)?;
            let above = limit_liquidity_vs_t(&fam, cfg.pi, cfg.theta, t + eps)?;
            json!({
                "T": t,
                "eps": eps,
                "L_limit_before": below,
                "L_limit_after": above,
                "sign_change": below > 0.0 && above < 0.0,
            })
        }
        Err(e) => json!({ "error": e.to_string() }),
    };

    let report = match cfg.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("M".into(), json!(cfg.m));
            body.insert("rows".into(), to_value(&rows));
            body.insert("cutoff_strictly_increasing".into(), json!(cutoffs.strictly_increasing));
            body.insert("cutoff_diagnostic".into(), to_value(&cutoffs.diagnostic));
            body.insert("limit_trend".into(), json!(limit_trend));
            body.insert("fosd_holds".into(), json!(fosd));
            body.insert("shutdown".into(), shutdown);
            json_document("blocktime", body, cfg)
        }
        Format::Csv => {
            let mut doc = CsvDoc::new(&["T", "v_bar", "N", "cutoff", "L_star", "viable", "L_limit"])?;
            for r in &rows {
                doc.row(&[
                    cell(Some(r.t)),
                    cell(Some(r.v_bar)),
                    cell(Some(r.noise_mass)),
                    cell(Some(r.cutoff)),
                    cell(Some(r.l_star)),
                    r.viable.to_string(),
                    cell(Some(r.limit_liquidity)),
                ])?;
            }
            let cut: Vec<Option<f64>> = rows.iter().map(|r| Some(r.cutoff)).collect();
            let vb: Vec<Option<f64>> = rows.iter().map(|r| Some(r.v_bar)).collect();
            let nm: Vec<Option<f64>> = rows.iter().map(|r| Some(r.noise_mass)).collect();
            let ls: Vec<Option<f64>> = rows.iter().map(|r| Some(r.l_star)).collect();
            doc.footer(&[
                "#summary".into(),
                trend(&vb).into(),
                trend(&nm).into(),
                trend(&cut).into(),
                trend(&ls).into(),
                String::new(),
                limit_trend.into(),
            ])?;
            doc.footer(&["#fosd_holds".into(), fosd.to_string()])?;
            let t = shutdown.get("T").and_then(|t| t.as_f64());
            doc.footer(&["#shutdown_T".into(), cell(t)])?;
            doc.finish(cfg)?
        }
    };
    Ok(Outcome::report(report, EXIT_OK))
}
