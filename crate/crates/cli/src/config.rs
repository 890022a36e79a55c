use std::fs;
use std::path::{Path, PathBuf};

use blockclear_core::simulator::DexMode;
use blockclear_core::stage2::MarketParams;
use blockclear_core::valuations::{DiffusiveFamily, ValuationModel};
use serde::{Deserialize, Serialize};

use crate::{CliError, Flags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    #[default]
    UniformOnFeeToMax,
    UniformOnZeroToMax,
    TruncatedExponential,
    ScaledBeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dex {
    #[default]
    Linear,
    ConstantProduct,
}

/// Flat run configuration. File values are overridden by command-line flags.
/// `workers`, `out` and `trace` never change results and are left out of the
/// copy embedded in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pi: f64,
    pub theta: f64,
    #[serde(rename = "N")]
    pub noise_mass: f64,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub info_cost: Option<f64>,
    pub family: Family,
    pub v_bar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "M_range", skip_serializing_if = "Option::is_none")]
    pub m_range: Option<[usize; 2]>,
    #[serde(rename = "T_grid", skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(rename = "C_grid", skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    #[serde(rename = "N_grid", skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<f64>>,
    pub m_cap: usize,
    pub grid_points: usize,

    // block-time family: v̄(T) = v_bar0(1 + √(T/t0)), N(T) = n0·e^{-λT}
    pub v_bar0: f64,
    pub t0: f64,
    pub n0: f64,
    pub lambda: f64,
    pub shutdown_range: [f64; 2],

    pub n_blocks: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<f64>,
    pub dex: Dex,
    pub reference_price: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_flow: Option<f64>,

    pub format: Format,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fam = DiffusiveFamily::default();
        Self {
            pi: 0.1,
            theta: 10.0,
            noise_mass: 1000.0,
            info_cost: None,
            family: Family::UniformOnFeeToMax,
            v_bar: 1.0,
            rate: None,
            alpha: None,
            beta: None,
            m: 2,
            m_range: None,
            t_grid: None,
            c_grid: None,
            n_grid: None,
            m_cap: blockclear_core::stage1::DEFAULT_M_CAP,
            grid_points: 11,
            v_bar0: fam.v_bar0,
            t0: fam.t0,
            n0: fam.n0,
            lambda: fam.lambda,
            shutdown_range: [1.0, 1.0e4],
            n_blocks: 100_000,
            seed: None,
            depth: None,
            y0: None,
            dex: Dex::Linear,
            reference_price: 1000.0,
            noise_flow: None,
            format: Format::Json,
            workers: None,
            out: None,
            trace: None,
        }
    }
}

impl RunConfig {
    /// Reads the file named by `--config` (if any), applies flag overrides
    /// and validates the result.
    pub fn load(flags: &Flags) -> Result<Self, CliError> {
        let (mut cfg, source) = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                (cfg, Some((path.as_path(), text)))
            }
            None => (RunConfig::default(), None),
        };
        cfg.apply(flags);
        cfg.validate().map_err(|(key, msg)| {
            let located = source
                .as_ref()
                .and_then(|(path, text)| locate(text, key).map(|line| format!("{}:{line}: {msg}", path.display())));
            CliError::Config(located.unwrap_or(msg))
        })?;
        Ok(cfg)
    }

    fn apply(&mut self, flags: &Flags) {
        if let Some(s) = flags.seed {
            self.seed = Some(s);
        }
        if flags.workers.is_some() {
            self.workers = flags.workers;
        }
        if let Some(f) = flags.format {
            self.format = f;
        }
        if flags.out.is_some() {
            self.out.clone_from(&flags.out);
        }
        if flags.trace.is_some() {
            self.trace.clone_from(&flags.trace);
        }
        if let Some(m) = flags.m {
            self.m = m;
        }
        if let Some((lo, hi)) = flags.m_range {
            self.m_range = Some([lo, hi]);
        }
        if flags.t_grid.is_some() {
            self.t_grid.clone_from(&flags.t_grid);
        }
        // A single value sets the parameter, a list makes it a sweep axis.
        match flags.c.as_deref() {
            Some([c]) => self.info_cost = Some(*c),
            Some(cs) if !cs.is_empty() => self.c_grid = Some(cs.to_vec()),
            _ => {}
        }
        match flags.n.as_deref() {
            Some([n]) => self.noise_mass = *n,
            Some(ns) if !ns.is_empty() => self.n_grid = Some(ns.to_vec()),
            _ => {}
        }
        if let Some(n) = flags.n_blocks {
            self.n_blocks = n;
        }
    }

    fn validate(&self) -> Result<(), (&'static str, String)> {
        let finite = |key: &'static str, x: f64| {
            if x.is_finite() {
                Ok(())
            } else {
                Err((key, format!("{key} must be finite")))
            }
        };
        finite("pi", self.pi)?;
        finite("v_bar", self.v_bar)?;
        if !(self.pi < self.v_bar) {
            return Err(("pi", format!("pi must be below v_bar (pi={}, v_bar={})", self.pi, self.v_bar)));
        }
        if self.m < 2 {
            return Err(("M", format!("M must be at least 2, got {}", self.m)));
        }
        if let Some([lo, hi]) = self.m_range {
            if lo < 2 || hi < lo {
                return Err(("M_range", format!("M_range must satisfy 2 <= lo <= hi, got [{lo}, {hi}]")));
            }
        }
        for (key, grid) in [("T_grid", &self.t_grid), ("C_grid", &self.c_grid), ("N_grid", &self.n_grid)] {
            if let Some(g) = grid {
                if g.is_empty() || g.iter().any(|x| !x.is_finite()) {
                    return Err((key, format!("{key} must be a nonempty list of finite numbers")));
                }
            }
        }
        if self.m_cap < 2 {
            return Err(("m_cap", "m_cap must be at least 2".into()));
        }
        if self.grid_points < 2 {
            return Err(("grid_points", "grid_points must be at least 2".into()));
        }
        if self.n_blocks == 0 {
            return Err(("n_blocks", "n_blocks must be positive".into()));
        }
        if !(self.reference_price > 0.0) {
            return Err(("reference_price", "reference_price must be positive".into()));
        }
        if let Some(l) = self.depth {
            if !(l > 0.0 && l.is_finite()) {
                return Err(("L", format!("L must be positive, got {l}")));
            }
        }
        if !(self.shutdown_range[0] > 0.0 && self.shutdown_range[1] > self.shutdown_range[0]) {
            return Err(("shutdown_range", "shutdown_range must be an increasing pair of positive times".into()));
        }
        let model = self.model().map_err(|m| ("family", m))?;
        let key_of = |msg: &str| {
            ["theta", "N", "C"]
                .into_iter()
                .find(|k| msg.starts_with(&format!("{k} ")))
                .unwrap_or("family")
        };
        for c in self.c_grid.iter().flatten().chain(self.info_cost.iter()) {
            MarketParams { info_cost: *c, ..self.market_params_with(model) }
                .validated()
                .map_err(|e| (key_of(&e.to_string()), e.to_string()))?;
        }
        for n in self.n_grid.iter().flatten().chain([&self.noise_mass]) {
            MarketParams { noise_mass: *n, ..self.market_params_with(model) }
                .validated()
                .map_err(|e| (key_of(&e.to_string()), e.to_string()))?;
        }
        if self.t_grid.is_some() {
            self.block_time_family().map_err(|m| ("v_bar0", m))?;
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ValuationModel, String> {
        let need = |x: Option<f64>, name: &str| x.ok_or_else(|| format!("family {:?} needs `{name}`", self.family));
        let model = match self.family {
            Family::UniformOnFeeToMax => ValuationModel::UniformOnFeeToMax { pi: self.pi, v_bar: self.v_bar },
            Family::UniformOnZeroToMax => ValuationModel::UniformOnZeroToMax { v_bar: self.v_bar },
            Family::TruncatedExponential => ValuationModel::TruncatedExponential {
                v_bar: self.v_bar,
                rate: need(self.rate, "rate")?,
            },
            Family::ScaledBeta => ValuationModel::ScaledBeta {
                v_bar: self.v_bar,
                alpha: need(self.alpha, "alpha")?,
                beta: need(self.beta, "beta")?,
            },
        };
        model.validated().map_err(|e| e.to_string())
    }

    fn market_params_with(&self, model: ValuationModel) -> MarketParams {
        MarketParams {
            pi: self.pi,
            theta: self.theta,
            noise_mass: self.noise_mass,
            info_cost: self.info_cost.unwrap_or(0.0),
            model,
        }
    }

    /// Market parameters; `C` defaults to zero when unset.
    pub fn market_params(&self) -> MarketParams {
        self.market_params_with(self.model().expect("validated at load"))
    }

    pub fn block_time_family(&self) -> Result<DiffusiveFamily, String> {
        DiffusiveFamily {
            pi: self.pi,
            v_bar0: self.v_bar0,
            t0: self.t0,
            n0: self.n0,
            lambda: self.lambda,
        }
        .validated()
        .map_err(|e| e.to_string())
    }

    pub fn dex_mode(&self) -> DexMode {
        match self.dex {
            Dex::Linear => DexMode::LinearSchedule,
            Dex::ConstantProduct => DexMode::ExactConstantProduct {
                reference_price: self.reference_price,
            },
        }
    }
}

/// Line of the first occurrence of `"key"` in a JSON document.
fn locate(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
}

pub(crate) fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Run(format!("{}: {e}", path.display())))
}
