//! Distributions of informed traders' private valuations on `[0, v̄]`, and
//! block-time indexed families of them.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{domain, Result};
use crate::numerics::{find_root, Bracket, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ValuationModel {
    /// Uniform on `[pi, v_bar]`.
    UniformOnFeeToMax { pi: f64, v_bar: f64 },
    /// Uniform on `[0, v_bar]`.
    UniformOnZeroToMax { v_bar: f64 },
    /// Density proportional to `e^{-rate·v}` on `[0, v_bar]`; `rate` may be negative.
    TruncatedExponential { v_bar: f64, rate: f64 },
    /// `v_bar · Beta(alpha, beta)`, with `alpha, beta ≥ 1` so the density is bounded.
    ScaledBeta { v_bar: f64, alpha: f64, beta: f64 },
}

impl ValuationModel {
    pub fn uniform_on_fee_to_max(pi: f64, v_bar: f64) -> Result<Self> {
        Self::UniformOnFeeToMax { pi, v_bar }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        let v_bar = self.v_bar();
        if !(v_bar > 0.0) || !v_bar.is_finite() {
            return Err(domain(format!("v_bar must be positive and finite, got {v_bar}")));
        }
        match self {
            Self::UniformOnFeeToMax { pi, .. } => {
                if !(pi >= 0.0 && pi < v_bar) {
                    return Err(domain(format!("pi must be below v_bar (pi={pi}, v_bar={v_bar})")));
                }
            }
            Self::UniformOnZeroToMax { .. } => {}
            Self::TruncatedExponential { rate, .. } => {
                if rate == 0.0 || !rate.is_finite() {
                    return Err(domain("truncated exponential needs a finite nonzero rate"));
                }
            }
            Self::ScaledBeta { alpha, beta, .. } => {
                if !(alpha >= 1.0 && beta >= 1.0) || !alpha.is_finite() || !beta.is_finite() {
                    return Err(domain(format!(
                        "beta shapes must be finite and >= 1, got ({alpha}, {beta})"
                    )));
                }
            }
        }
        Ok(self)
    }

    pub fn v_bar(&self) -> f64 {
        match *self {
            Self::UniformOnFeeToMax { v_bar, .. }
            | Self::UniformOnZeroToMax { v_bar }
            | Self::TruncatedExponential { v_bar, .. }
            | Self::ScaledBeta { v_bar, .. } => v_bar,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::UniformOnFeeToMax { .. } => "uniform_on_fee_to_max",
            Self::UniformOnZeroToMax { .. } => "uniform_on_zero_to_max",
            Self::TruncatedExponential { .. } => "truncated_exponential",
            Self::ScaledBeta { .. } => "scaled_beta",
        }
    }

    /// Closed support `[lo, v̄]`.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Self::UniformOnFeeToMax { pi, v_bar } => (pi, v_bar),
            _ => (0.0, self.v_bar()),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if v <= lo {
            return 0.0;
        }
        if v >= hi {
            return 1.0;
        }
        let p = match *self {
            Self::UniformOnFeeToMax { pi, v_bar } => (v - pi) / (v_bar - pi),
            Self::UniformOnZeroToMax { v_bar } => v / v_bar,
            Self::TruncatedExponential { v_bar, rate } => (-rate * v).exp_m1() / (-rate * v_bar).exp_m1(),
            Self::ScaledBeta { v_bar, alpha, beta } => beta_reg(alpha, beta, v / v_bar),
        };
        p.clamp(0.0, 1.0)
    }

    /// Density on the support; zero outside it.
    pub fn density(&self, v: f64) -> f64 {
        let (lo, hi) = self.support();
        if v < lo || v > hi {
            return 0.0;
        }
        match *self {
            Self::UniformOnFeeToMax { pi, v_bar } => 1.0 / (v_bar - pi),
            Self::UniformOnZeroToMax { v_bar } => 1.0 / v_bar,
            Self::TruncatedExponential { v_bar, rate } => -rate * (-rate * v).exp() / (-rate * v_bar).exp_m1(),
            Self::ScaledBeta { v_bar, alpha, beta } => {
                let x = v / v_bar;
                let ln_core = |e: f64, t: f64| if e == 0.0 { 0.0 } else { e * t.ln() };
                (ln_core(alpha - 1.0, x) + ln_core(beta - 1.0, 1.0 - x) - ln_beta(alpha, beta)).exp()
                    / v_bar
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("quantile probability {p} outside [0, 1]")));
        }
        let (lo, hi) = self.support();
        if p == 0.0 {
            return Ok(lo);
        }
        if p == 1.0 {
            return Ok(hi);
        }
        let v = match *self {
            Self::UniformOnFeeToMax { pi, v_bar } => pi + p * (v_bar - pi),
            Self::UniformOnZeroToMax { v_bar } => p * v_bar,
            Self::TruncatedExponential { v_bar, rate } => -(p * (-rate * v_bar).exp_m1()).ln_1p() / rate,
            Self::ScaledBeta { .. } => {
                let g = |v: f64| self.cdf(v) - p;
                let tol = Tolerance::new(1e-15, 1e-15, 300)?;
                let bracket = Bracket::new(g, lo, hi)?;
                find_root(g, &bracket, tol)?
            }
        };
        Ok(v.clamp(lo, hi))
    }

    /// Inverse-transform draw; one uniform is consumed per call.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u).expect("uniform draw lies in [0, 1)")
    }

    /// Whether the density stays at or below the uniform-on-`[pi, v̄]` density
    /// near `v̄` (checked on the top 5% of that interval).
    pub fn is_compliant(&self, pi: f64) -> bool {
        let v_bar = self.v_bar();
        if pi >= v_bar {
            return false;
        }
        let bound = 1.0 / (v_bar - pi) * (1.0 + 1e-12);
        (0..=64).all(|k| {
            let v = v_bar - 0.05 * (v_bar - pi) * k as f64 / 64.0;
            self.density(v) <= bound
        })
    }
}

/// A valuation environment indexed by block time `T`.
pub trait BlockTimeFamily: Send + Sync {
    fn v_bar(&self, t: f64) -> f64;
    fn noise_mass(&self, t: f64) -> f64;
    fn model(&self, t: f64) -> ValuationModel;
    fn reference_time(&self) -> f64;
}

/// `v̄(T) = v̄₀(1 + √(T/T₀))`, `N(T) = N₀e^{-λT}`, valuations uniform on `[π, v̄(T)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusiveFamily {
    pub pi: f64,
    pub v_bar0: f64,
    pub t0: f64,
    pub n0: f64,
    pub lambda: f64,
}

impl Default for DiffusiveFamily {
    fn default() -> Self {
        Self {
            pi: 0.1,
            v_bar0: 0.5,
            t0: 12.0,
            n0: 1000.0,
            lambda: 0.01,
        }
    }
}

impl DiffusiveFamily {
    pub fn validated(self) -> Result<Self> {
        if !(self.v_bar0 > 0.0 && self.t0 > 0.0 && self.n0 >= 0.0 && self.lambda >= 0.0) {
            return Err(domain("block-time family needs v_bar0 > 0, t0 > 0, n0 >= 0, lambda >= 0"));
        }
        if !(self.pi >= 0.0 && self.pi < self.v_bar0) {
            return Err(domain("pi must be below v_bar0"));
        }
        Ok(self)
    }
}

impl BlockTimeFamily for DiffusiveFamily {
    fn v_bar(&self, t: f64) -> f64 {
        self.v_bar0 * (1.0 + (t / self.t0).sqrt())
    }
    fn noise_mass(&self, t: f64) -> f64 {
        self.n0 * (-self.lambda * t).exp()
    }
    fn model(&self, t: f64) -> ValuationModel {
        ValuationModel::UniformOnFeeToMax {
            pi: self.pi,
            v_bar: self.v_bar(t),
        }
    }
    fn reference_time(&self) -> f64 {
        self.t0
    }
}

/// Block time has no effect: one model and one noise mass for every `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticFamily {
    pub model: ValuationModel,
    pub noise_mass: f64,
}

impl BlockTimeFamily for StaticFamily {
    fn v_bar(&self, _t: f64) -> f64 {
        self.model.v_bar()
    }
    fn noise_mass(&self, _t: f64) -> f64 {
        self.noise_mass
    }
    fn model(&self, _t: f64) -> ValuationModel {
        self.model
    }
    fn reference_time(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FosdViolation {
    pub v: f64,
    pub cdf_t: f64,
    pub cdf_t_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FosdVerdict {
    pub holds: bool,
    pub violation: Option<FosdViolation>,
}

/// Checks that `F(·;T')` dominates `F(·;T)` on `grid_size` points of `(0, v̄(T)]`.
///
/// Where `F(v;T) = 0` nothing can lie strictly below it, so there only
/// `F(v;T') ≤ F(v;T)` is required; elsewhere the inequality must be strict.
pub fn fosd_check(
    family: &dyn BlockTimeFamily,
    t: f64,
    t_prime: f64,
    grid_size: usize,
) -> Result<FosdVerdict> {
    if !(t > 0.0 && t_prime > t) {
        return Err(domain(format!("fosd_check needs T' > T > 0, got T={t}, T'={t_prime}")));
    }
    if grid_size == 0 {
        return Err(domain("fosd_check needs a nonempty grid"));
    }
    let early = family.model(t);
    let late = family.model(t_prime);
    let top = family.v_bar(t);
    for k in 1..=grid_size {
        let v = top * k as f64 / grid_size as f64;
        let (a, b) = (early.cdf(v), late.cdf(v));
        let ok = if a > 0.0 { b < a } else { b <= a };
        if !ok {
            return Ok(FosdVerdict {
                holds: false,
                violation: Some(FosdViolation {
                    v,
                    cdf_t: a,
                    cdf_t_prime: b,
                }),
            });
        }
    }
    Ok(FosdVerdict {
        holds: true,
        violation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::integrate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_models() -> Vec<ValuationModel> {
        vec![
            ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 },
            ValuationModel::UniformOnZeroToMax { v_bar: 2.0 },
            ValuationModel::TruncatedExponential { v_bar: 1.0, rate: 3.0 },
            ValuationModel::TruncatedExponential { v_bar: 1.5, rate: -0.7 },
            ValuationModel::ScaledBeta { v_bar: 1.0, alpha: 2.0, beta: 3.0 },
            ValuationModel::ScaledBeta { v_bar: 3.0, alpha: 1.0, beta: 1.5 },
        ]
    }

    #[test]
    fn uniform_values() {
        let m = ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 };
        assert_eq!(m.cdf(0.1), 0.0);
        assert!((m.cdf(0.55) - 0.5).abs() < 1e-15);
        assert_eq!(m.cdf(1.0), 1.0);
        assert!((m.density(0.5) - 1.0 / 0.9).abs() < 1e-15);
        assert!((m.quantile(0.5).unwrap() - 0.55).abs() < 1e-15);
        assert!(m.quantile(-0.1).is_err());
        assert!(m.quantile(1.5).is_err());
    }

    #[test]
    fn densities_integrate_to_one() {
        let tol = Tolerance::new(1e-14, 1e-13, 500).unwrap();
        for m in all_models() {
            let (lo, hi) = m.support();
            let mass = integrate(|v| m.density(v), lo, hi, tol).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "{m:?}: {mass}");
        }
    }

    #[test]
    fn density_is_cdf_derivative() {
        for m in all_models() {
            let (lo, hi) = m.support();
            for k in 1..10 {
                let v = lo + (hi - lo) * k as f64 / 10.0;
                let h = 1e-6;
                let fd = (m.cdf(v + h) - m.cdf(v - h)) / (2.0 * h);
                assert!((fd - m.density(v)).abs() < 1e-6, "{m:?} at {v}");
            }
        }
    }

    #[test]
    fn quantile_and_cdf_invert() {
        for m in all_models() {
            let (lo, hi) = m.support();
            for k in 0..=50 {
                let v = lo + (hi - lo) * k as f64 / 50.0;
                let back = m.quantile(m.cdf(v)).unwrap();
                assert!((back - v).abs() < 1e-10, "{m:?}: {v} -> {back}");
                let p = k as f64 / 50.0;
                let again = m.cdf(m.quantile(p).unwrap());
                assert!((again - p).abs() < 1e-10, "{m:?}: {p} -> {again}");
            }
        }
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(ValuationModel::uniform_on_fee_to_max(1.0, 1.0).is_err());
        assert!(ValuationModel::UniformOnZeroToMax { v_bar: -1.0 }.validated().is_err());
        assert!(ValuationModel::TruncatedExponential { v_bar: 1.0, rate: 0.0 }
            .validated()
            .is_err());
        assert!(ValuationModel::ScaledBeta { v_bar: 1.0, alpha: 0.5, beta: 2.0 }
            .validated()
            .is_err());
    }

    #[test]
    fn compliance_flags() {
        let pi = 0.1;
        assert!(ValuationModel::UniformOnFeeToMax { pi, v_bar: 1.0 }.is_compliant(pi));
        assert!(ValuationModel::UniformOnZeroToMax { v_bar: 1.0 }.is_compliant(pi));
        assert!(ValuationModel::TruncatedExponential { v_bar: 1.0, rate: 3.0 }.is_compliant(pi));
        assert!(ValuationModel::ScaledBeta { v_bar: 1.0, alpha: 2.0, beta: 3.0 }.is_compliant(pi));
        // Mass piles up near v̄.
        assert!(!ValuationModel::TruncatedExponential { v_bar: 1.0, rate: -3.0 }.is_compliant(pi));
        assert!(!ValuationModel::ScaledBeta { v_bar: 1.0, alpha: 3.0, beta: 1.0 }.is_compliant(pi));
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = ValuationModel::ScaledBeta { v_bar: 1.0, alpha: 2.0, beta: 3.0 };
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            assert_eq!(m.sample(&mut a).to_bits(), m.sample(&mut b).to_bits());
        }
    }

    #[test]
    fn default_family_dominates() {
        let fam = DiffusiveFamily::default();
        let v = fosd_check(&fam, 12.0, 24.0, 10_000).unwrap();
        assert!(v.holds, "{v:?}");
        assert!(fosd_check(&fam, 12.0, 12.0, 10).is_err());
        let flat = StaticFamily {
            model: ValuationModel::UniformOnFeeToMax { pi: 0.1, v_bar: 1.0 },
            noise_mass: 1000.0,
        };
        let v = fosd_check(&flat, 12.0, 24.0, 100).unwrap();
        assert!(!v.holds);
        assert!(v.violation.is_some());
    }
}
