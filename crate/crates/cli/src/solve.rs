use blockclear_core::numerics::Tolerance;
use blockclear_core::stage1::{equilibrium_m, h_of_m, EntryOutcome};
use blockclear_core::stage2::{liquidity_limit, uniform_liquidity_closed_form, MarketEquilibrium};
use blockclear_core::Error;
use serde_json::{json, Map, Value};

use crate::report::{cell, finite, json_document, to_value, CsvDoc};
use crate::{CliError, Format, Outcome, RunConfig, EXIT_NOT_VIABLE, EXIT_OK};

pub(crate) fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let params = cfg.market_params();
    let (sol, eq) = MarketEquilibrium::solve(&params, cfg.m, Tolerance::default())?;
    let h = h_of_m(&params, cfg.m)?;
    let limit = liquidity_limit(&params)?;
    let closed = uniform_liquidity_closed_form(&params, cfg.m).ok();

    let n = cfg.grid_points;
    let mut grid = Vec::with_capacity(n);
    for k in 0..n {
        let v = sol.cutoff() + (sol.v_bar() - sol.cutoff()) * k as f64 / (n - 1) as f64;
        grid.push((v, sol.volume_tilde(v)?, sol.phi_per_depth(v)?));
    }

    let entry = match cfg.info_cost {
        Some(_) => Some(match equilibrium_m(&params, cfg.m_cap, cfg.workers) {
            Ok(o) => Ok(o),
            Err(e @ Error::ScanCapHit { .. }) => Err(e.to_string()),
            Err(e) => return Err(e.into()),
        }),
        None => None,
    };
    let code = if eq.viable { EXIT_OK } else { EXIT_NOT_VIABLE };
    let note = (!eq.viable).then(|| format!("market is not viable at M={}: L* = {}", cfg.m, eq.l_star));

    let report = match cfg.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("M".into(), json!(cfg.m));
            body.insert("family".into(), json!(params.model.name()));
            body.insert("cutoff".into(), json!(sol.cutoff()));
            body.insert("S_M".into(), json!(eq.s_m));
            body.insert("L_star".into(), json!(eq.l_star));
            body.insert("L_star_closed_form".into(), to_value(&closed));
            body.insert("L_limit".into(), json!(limit));
            body.insert("viable".into(), json!(eq.viable));
            body.insert("shutdown".into(), json!(eq.shutdown));
            body.insert("aggregate_volume".into(), json!(eq.aggregate_volume));
            body.insert("end_price".into(), json!(eq.end_price));
            body.insert("active_count".into(), json!(sol.expected_active_count()));
            body.insert("H".into(), to_value(&finite(h)));
            body.insert(
                "grid".into(),
                Value::Array(
                    grid.iter()
                        .map(|(v, q, p)| json!({ "v": v, "Q_tilde": q, "Phi_per_L": p }))
                        .collect(),
                ),
            );
            if let Some(entry) = &entry {
                body.insert("entry".into(), entry_json(entry));
            }
            json_document("solve", body, cfg)
        }
        Format::Csv => {
            let mut doc = CsvDoc::new(&["v", "Q_tilde", "Phi_per_L"])?;
            for (v, q, p) in &grid {
                doc.row(&[cell(Some(*v)), cell(Some(*q)), cell(Some(*p))])?;
            }
            let scalars = [
                ("cutoff", Some(sol.cutoff())),
                ("S_M", Some(eq.s_m)),
                ("L_star", Some(eq.l_star)),
                ("L_limit", Some(limit)),
                ("aggregate_volume", Some(eq.aggregate_volume)),
                ("end_price", Some(eq.end_price)),
                ("H", finite(h)),
            ];
            for (k, x) in scalars {
                doc.footer(&[format!("#{k}"), cell(x)])?;
            }
            doc.footer(&["#viable".into(), eq.viable.to_string()])?;
            if let Some(Ok(o)) = &entry {
                doc.footer(&["#m_star".into(), o.m_star.map_or(String::new(), |m| m.to_string())])?;
            }
            doc.finish(cfg)?
        }
    };
    Ok(Outcome { note, ..Outcome::report(report, code) })
}

fn entry_json(entry: &Result<EntryOutcome, String>) -> Value {
    match entry {
        Ok(o) => json!({
            "m_star": o.m_star,
            "binding": o.binding,
            "m_cap": o.m_cap,
            "H": o.h_values.iter().map(|(m, h)| json!([m, finite(*h)])).collect::<Vec<_>>(),
        }),
        Err(msg) => json!({ "error": msg }),
    }
}
