use blockclear_core::numerics::Tolerance;
use blockclear_core::stage1::{equilibrium_m, h_of_m};
use blockclear_core::stage2::{liquidity_limit, MarketEquilibrium, MarketParams};
use blockclear_core::valuations::BlockTimeFamily;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::report::{cell, finite, json_document, to_value, trend, CsvDoc};
use crate::{CliError, Format, Outcome, RunConfig, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    M,
    T,
    C,
    N,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::M => "M",
            Axis::T => "T",
            Axis::C => "C",
            Axis::N => "N",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    value: f64,
    #[serde(rename = "M")]
    m: usize,
    cutoff: f64,
    aggregate_volume: f64,
    end_price: f64,
    #[serde(rename = "S_M")]
    s_m: f64,
    #[serde(rename = "L_star")]
    l_star: f64,
    #[serde(rename = "L_limit")]
    l_limit: f64,
    #[serde(rename = "H")]
    h: Option<f64>,
    viable: bool,
    m_star: Option<usize>,
}

const COLUMNS: [&str; 9] = [
    "cutoff",
    "aggregate_volume",
    "end_price",
    "S_M",
    "L_star",
    "L_limit",
    "H",
    "viable",
    "m_star",
];

fn axis_of(cfg: &RunConfig) -> Result<Axis, CliError> {
    let set: Vec<Axis> = [
        (Axis::M, cfg.m_range.is_some()),
        (Axis::T, cfg.t_grid.is_some()),
        (Axis::C, cfg.c_grid.is_some()),
        (Axis::N, cfg.n_grid.is_some()),
    ]
    .into_iter()
    .filter_map(|(a, on)| on.then_some(a))
    .collect();
    match set.as_slice() {
        [a] => Ok(*a),
        _ => Err(CliError::Config(format!(
            "sweep needs exactly one axis among M, T, C, N; got {} ({})",
            set.len(),
            set.iter().map(|a| a.name()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn m_star(params: &MarketParams, cfg: &RunConfig) -> Result<Option<usize>, CliError> {
    Ok(equilibrium_m(params, cfg.m_cap, cfg.workers)?.m_star)
}

fn row(params: &MarketParams, m: usize, value: f64, m_star: Option<usize>) -> Result<Row, CliError> {
    let (sol, eq) = MarketEquilibrium::solve(params, m, Tolerance::default())?;
    Ok(Row {
        value,
        m,
        cutoff: sol.cutoff(),
        aggregate_volume: eq.aggregate_volume,
        end_price: eq.end_price,
        s_m: eq.s_m,
        l_star: eq.l_star,
        l_limit: liquidity_limit(params)?,
        h: finite(h_of_m(params, m)?),
        viable: eq.viable,
        m_star,
    })
}

pub(crate) fn run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let axis = axis_of(cfg)?;
    let base = cfg.market_params();
    let with_entry = cfg.info_cost.is_some();
    let mut rows = Vec::new();
    match axis {
        Axis::M => {
            let [lo, hi] = cfg.m_range.expect("axis is set");
            let ms = if with_entry { m_star(&base, cfg)? } else { None };
            for m in lo..=hi {
                rows.push(row(&base, m, m as f64, ms)?);
            }
        }
        Axis::T => {
            let fam = cfg.block_time_family().map_err(CliError::Config)?;
            for &t in cfg.t_grid.as_deref().expect("axis is set") {
                let params = MarketParams {
                    noise_mass: fam.noise_mass(t),
                    model: fam.model(t),
                    ..base
                };
                let ms = if with_entry { m_star(&params, cfg)? } else { None };
                rows.push(row(&params, cfg.m, t, ms)?);
            }
        }
        Axis::C => {
            for &c in cfg.c_grid.as_deref().expect("axis is set") {
                let params = MarketParams { info_cost: c, ..base };
                rows.push(row(&params, cfg.m, c, m_star(&params, cfg)?)?);
            }
        }
        Axis::N => {
            for &n in cfg.n_grid.as_deref().expect("axis is set") {
                let params = MarketParams { noise_mass: n, ..base };
                let ms = if with_entry { m_star(&params, cfg)? } else { None };
                rows.push(row(&params, cfg.m, n, ms)?);
            }
        }
    }

    let col = |f: fn(&Row) -> Option<f64>| rows.iter().map(f).collect::<Vec<_>>();
    let columns: [(&str, Vec<Option<f64>>); 8] = [
        ("cutoff", col(|r| Some(r.cutoff))),
        ("aggregate_volume", col(|r| Some(r.aggregate_volume))),
        ("end_price", col(|r| Some(r.end_price))),
        ("S_M", col(|r| Some(r.s_m))),
        ("L_star", col(|r| Some(r.l_star))),
        ("L_limit", col(|r| Some(r.l_limit))),
        ("H", col(|r| r.h)),
        ("m_star", col(|r| r.m_star.map(|m| m as f64))),
    ];
    let viable = match (rows.iter().all(|r| r.viable), rows.iter().any(|r| r.viable)) {
        (true, _) => "all",
        (false, true) => "some",
        (false, false) => "none",
    };
    let summary: Vec<(&str, &str)> = columns.iter().map(|(k, v)| (*k, trend(v))).collect();

    let report = match cfg.format {
        Format::Json => {
            let mut body = Map::new();
            body.insert("axis".into(), Value::String(axis.name().into()));
            body.insert("rows".into(), to_value(&rows));
            let mut s: Map<String, Value> = summary
                .iter()
                .map(|(k, t)| (k.to_string(), Value::String(t.to_string())))
                .collect();
            s.insert("viable".into(), Value::String(viable.into()));
            body.insert("summary".into(), Value::Object(s));
            json_document("sweep", body, cfg)
        }
        Format::Csv => {
            let mut header = vec![axis.name()];
            header.extend(COLUMNS);
            let mut doc = CsvDoc::new(&header)?;
            for r in &rows {
                let value = if axis == Axis::M { r.m.to_string() } else { cell(Some(r.value)) };
                doc.row(&[
                    value,
                    cell(Some(r.cutoff)),
                    cell(Some(r.aggregate_volume)),
                    cell(Some(r.end_price)),
                    cell(Some(r.s_m)),
                    cell(Some(r.l_star)),
                    cell(Some(r.l_limit)),
                    cell(r.h),
                    r.viable.to_string(),
                    r.m_star.map_or(String::new(), |m| m.to_string()),
                ])?;
            }
            let mut footer = vec!["#summary".to_string()];
            for k in COLUMNS {
                let label = if k == "viable" {
                    viable
                } else {
                    summary.iter().find(|(c, _)| *c == k).map(|(_, t)| *t).expect("column")
                };
                footer.push(label.to_string());
            }
            doc.footer(&footer)?;
            doc.finish(cfg)?
        }
    };
    Ok(Outcome::report(report, EXIT_OK))
}
