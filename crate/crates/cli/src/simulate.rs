use std::fs::File;
use std::io::BufWriter;

use blockclear_core::numerics::Tolerance;
use blockclear_core::simulator::{
    block_rng, rank_volume_monotonicity, run_monte_carlo, simulate_block, BlockSetup, McConfig, TraceWriter,
};
use blockclear_core::stage2::MarketEquilibrium;
use blockclear_core::stage3::Stage3Solution;
use serde_json::{json, Map};

use crate::report::{cell, json_document, to_value, CsvDoc};
use crate::{CliError, Format, Outcome, RunConfig, EXIT_NOT_VIABLE, EXIT_OK};

/// The solved market and the block setup to simulate it with, or the exit
/// report when there is no positive depth to trade against.
pub(crate) struct Prepared {
    pub sol: Stage3Solution,
    pub eq: MarketEquilibrium,
    pub mc: McConfig,
}

pub(crate) fn prepare(cfg: &RunConfig, command: &str) -> Result<Result<Prepared, Outcome>, CliError> {
    let params = cfg.market_params();
    let (sol, eq) = MarketEquilibrium::solve(&params, cfg.m, Tolerance::default())?;
    let depth = match cfg.depth {
        Some(l) => l,
        None if eq.viable && eq.l_star > 0.0 => eq.l_star,
        None => {
            let mut body = Map::new();
            body.insert("M".into(), json!(cfg.m));
            body.insert("viable".into(), json!(eq.viable));
            body.insert("L_star".into(), json!(eq.l_star));
            let note = format!(
                "market is not viable at M={} (L* = {}); set L to simulate at a given depth",
                cfg.m, eq.l_star
            );
            return Ok(Err(Outcome {
                note: Some(note),
                ..Outcome::report(json_document(command, body, cfg), EXIT_NOT_VIABLE)
            }));
        }
    };
    let setup = BlockSetup {
        depth,
        y0: cfg.y0.unwrap_or(depth),
        info_cost: params.info_cost,
        mode: cfg.dex_mode(),
        noise_flow: cfg.noise_flow,
    }
    .validated()?;
    let mc = McConfig {
        setup,
        n_blocks: cfg.n_blocks,
        seed: cfg.seed.expect("seed resolved before dispatch"),
    };
    Ok(Ok(Prepared { sol, eq, mc }))
}

pub(crate) fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = match prepare(cfg, "simulate")? {
        Ok(p) => p,
        Err(outcome) => return Ok(outcome),
    };
    let report = run_monte_carlo(&p.sol, &p.mc, cfg.workers)?;
    let ranks = rank_volume_monotonicity(&report).ok();

    if let Some(path) = &cfg.trace {
        let file = File::create(path).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))?;
        let mut w = TraceWriter::new(BufWriter::new(file))?;
        for b in 0..p.mc.n_blocks {
            let blk = simulate_block(&p.sol, &p.mc.setup, &mut block_rng(p.mc.seed, b))?;
            w.write_block(b, &blk)?;
        }
        w.finish()?;
    }

    let doc = match cfg.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("M".into(), json!(cfg.m));
            body.insert("viable".into(), json!(p.eq.viable));
            body.insert("L_star".into(), json!(p.eq.l_star));
            body.insert("setup".into(), to_value(&p.mc.setup));
            body.insert("simulation".into(), to_value(&report));
            body.insert("rank_monotonicity".into(), to_value(&ranks));
            json_document("simulate", body, cfg)
        }
        Format::Csv => {
            let mut doc = CsvDoc::new(&["metric", "mean", "std_error", "target", "z"])?;
            for (name, e) in &report.estimates {
                let target = report.targets.get(name).copied();
                doc.row(&[
                    name.clone(),
                    cell(Some(e.mean)),
                    cell(Some(e.std_error)),
                    cell(target),
                    cell(target.map(|t| e.z_score(t))),
                ])?;
            }
            for r in &report.rank_volume_profile {
                doc.footer(&[
                    format!("#rank_{}", r.rank),
                    cell(Some(r.mean_volume)),
                    cell(Some(r.std_error)),
                    r.count.to_string(),
                ])?;
            }
            doc.finish(cfg)?
        }
    };
    let code = if p.eq.viable { EXIT_OK } else { EXIT_NOT_VIABLE };
    Ok(Outcome::report(doc, code))
}
