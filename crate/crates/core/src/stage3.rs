//! Trading-stage equilibrium for a fixed number of informed traders `M`:
//! participation cutoff, volume schedule `Q̃`, priority-fee schedule `Φ/L`,
//! and the derived aggregates.

use std::sync::OnceLock;

use crate::error::{domain, Error, Result};
use crate::numerics::{exp_integral_stable, find_root, integrate, Bracket, Eval, Tolerance};
use crate::par;
use crate::valuations::ValuationModel;

/// Relative tolerance of the aggregate-volume consistency assertion.
pub const AGGREGATE_CONSISTENCY_RTOL: f64 = 1e-8;

/// Intervals in the interpolation table used by the simulator.
pub const SCHEDULE_INTERVALS: usize = 4096;

fn outer_tol() -> Tolerance {
    Tolerance {
        abs_tol: 1e-15,
        rel_tol: 1e-12,
        max_iter: 4000,
    }
}

/// Integrates over `[a, b]`, splitting at any breakpoint strictly inside.
fn integrate_split<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    brk: f64,
    tol: Tolerance,
) -> Result<f64> {
    if a < brk && brk < b {
        Ok(integrate(&mut f, a, brk, tol)? + integrate(&mut f, brk, b, tol)?)
    } else {
        integrate(f, a, b, tol)
    }
}

fn validate_inputs(model: &ValuationModel, m: usize, pi: f64) -> Result<()> {
    model.validated()?;
    if m < 2 {
        return Err(domain(format!("M must be at least 2, got {m}")));
    }
    let v_bar = model.v_bar();
    if !(pi >= 0.0) || !(pi < v_bar) {
        return Err(domain(format!("pi must be below v_bar (pi={pi}, v_bar={v_bar})")));
    }
    Ok(())
}

/// `h_M(v) = v − π − ∫_v^{v̄}(e^{(M−1)(1−F(u))} − 1)du`, reported sign-only
/// when the integral overflows.
pub fn cutoff_residual(model: &ValuationModel, m: usize, pi: f64, v: f64) -> Result<Eval> {
    let v_bar = model.v_bar();
    let a = (m - 1) as f64;
    let lo = model.support().0;
    let g = |u: f64| a * (1.0 - model.cdf(u));
    let tol = Tolerance::quadrature();
    let scaled = if v < lo && lo < v_bar {
        // Piecewise: the exponent is flat below the support.
        let below = exp_integral_stable(g, v, lo, tol)?;
        let above = exp_integral_stable(g, lo, v_bar, tol)?;
        let shift = below.log_magnitude.max(above.log_magnitude);
        crate::numerics::LogScaled {
            log_magnitude: shift,
            mantissa: below.mantissa * (below.log_magnitude - shift).exp()
                + above.mantissa * (above.log_magnitude - shift).exp(),
        }
    } else {
        exp_integral_stable(g, v, v_bar, tol)?
    };
    let integral = scaled.value();
    if !integral.is_finite() {
        return Ok(Eval::OverflowNegative);
    }
    Ok(Eval::Value((v_bar - pi) - integral))
}

/// Participation cutoff `v_M`, the root of `∫_{v}^{v̄} e^{(M−1)(1−F(u))}du = v̄ − π`.
pub fn solve_cutoff(model: &ValuationModel, m: usize, pi: f64, tol: Tolerance) -> Result<f64> {
    validate_inputs(model, m, pi)?;
    let v_bar = model.v_bar();
    let mut failure = None;
    let mut h = |v: f64| match cutoff_residual(model, m, pi, v) {
        Ok(e) => e,
        Err(e) => {
            failure.get_or_insert(e);
            Eval::Value(f64::NAN)
        }
    };
    let bracket = Bracket::new(&mut h, pi, v_bar)?;
    // The slope of h_M at the root is up to M, so the abscissa must be
    // resolved M times finer than the residual target.
    let scale = m as f64;
    let x_tol = Tolerance {
        abs_tol: tol.abs_tol / scale,
        rel_tol: tol.rel_tol / scale,
        max_iter: tol.max_iter,
    };
    let root = find_root(&mut h, &bracket, x_tol)?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(root)
}

#[derive(Debug, Clone)]
pub struct Stage3Solution {
    m: usize,
    pi: f64,
    model: ValuationModel,
    cutoff: f64,
    table: OnceLock<ScheduleTable>,
}

impl Stage3Solution {
    pub fn solve(model: ValuationModel, m: usize, pi: f64, tol: Tolerance) -> Result<Self> {
        let cutoff = solve_cutoff(&model, m, pi, tol)?;
        Ok(Self {
            m,
            pi,
            model,
            cutoff,
            table: OnceLock::new(),
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn pi(&self) -> f64 {
        self.pi
    }
    pub fn model(&self) -> &ValuationModel {
        &self.model
    }
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }
    pub fn v_bar(&self) -> f64 {
        self.model.v_bar()
    }

    fn a(&self) -> f64 {
        (self.m - 1) as f64
    }

    fn support_lo(&self) -> f64 {
        self.model.support().0
    }

    /// `Q̃(v̄) = (v̄ − π)/2`.
    pub fn max_volume_tilde(&self) -> f64 {
        0.5 * (self.v_bar() - self.pi)
    }

    /// Depth-normalized equilibrium volume `Q̃(v)`.
    pub fn volume_tilde(&self, v: f64) -> Result<f64> {
        if v <= self.cutoff {
            return Ok(0.0);
        }
        let v_bar = self.v_bar();
        if v >= v_bar {
            return Ok(self.max_volume_tilde());
        }
        let a = self.a();
        let fv = self.model.cdf(v);
        let head = (v_bar - self.pi) * (-a * (1.0 - fv)).exp();
        let tail = integrate_split(
            |u| (-a * (self.model.cdf(u) - fv)).exp(),
            v,
            v_bar,
            self.support_lo(),
            Tolerance::quadrature(),
        )?;
        Ok((0.5 * (head - tail)).max(0.0))
    }

    /// `Q̃′(v) = ½ + (M−1)Q̃(v)f(v)` above the cutoff.
    pub fn volume_tilde_slope(&self, v: f64) -> Result<f64> {
        if v < self.cutoff {
            return Ok(0.0);
        }
        Ok(0.5 + self.a() * self.volume_tilde(v)? * self.model.density(v))
    }

    /// `Φ(v)/L = 2(M−1)∫_{v_M}^{v} Q̃² dF`.
    pub fn phi_per_depth(&self, v: f64) -> Result<f64> {
        let top = v.min(self.v_bar());
        if top <= self.cutoff {
            return Ok(0.0);
        }
        let inner = self.q_moment(2, self.cutoff, top)?;
        Ok(2.0 * self.a() * inner)
    }

    /// `∫_lo^hi Q̃^k dF` by nested quadrature.
    fn q_moment(&self, k: i32, lo: f64, hi: f64) -> Result<f64> {
        self.weighted_q_integral(lo, hi, |q, _| q.powi(k))
    }

    /// `∫_lo^hi w(Q̃(u), u) dF(u)` over `[lo, hi] ∩ [cutoff, v̄]`.
    pub(crate) fn weighted_q_integral<W: FnMut(f64, f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        mut w: W,
    ) -> Result<f64> {
        let lo = lo.max(self.cutoff);
        let hi = hi.min(self.v_bar());
        if hi <= lo {
            return Ok(0.0);
        }
        let mut failure = None;
        let value = integrate_split(
            |u| match self.volume_tilde(u) {
                Ok(q) => w(q, u) * self.model.density(u),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            lo,
            hi,
            self.support_lo(),
            outer_tol(),
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }

    /// `∫_{max(v, v_M)}^{v̄} Q̃ dF`.
    pub fn upper_first_moment(&self, v: f64) -> Result<f64> {
        self.q_moment(1, v, self.v_bar())
    }

    /// `∫ Q̃² dF` over the active region.
    pub fn second_moment(&self) -> Result<f64> {
        self.q_moment(2, self.cutoff, self.v_bar())
    }

    /// Equilibrium priority fee `Φ(v)` at depth `L`.
    pub fn fee_equilibrium(&self, depth: f64, v: f64) -> Result<f64> {
        check_depth(depth)?;
        Ok(depth * self.phi_per_depth(v)?)
    }

    /// `L·M·∫Q̃ dF`, asserted against the closed form `LM(v_M − π)/(2(M−1))`.
    pub fn aggregate_volume(&self, depth: f64) -> Result<f64> {
        check_depth(depth)?;
        let quadrature = depth * self.m as f64 * self.q_moment(1, self.cutoff, self.v_bar())?;
        let closed_form = self.aggregate_volume_closed_form(depth);
        let scale = closed_form.abs().max(f64::MIN_POSITIVE);
        if (quadrature - closed_form).abs() > AGGREGATE_CONSISTENCY_RTOL * scale {
            return Err(Error::Consistency {
                what: "aggregate volume",
                quadrature,
                closed_form,
            });
        }
        Ok(quadrature)
    }

    pub fn aggregate_volume_closed_form(&self, depth: f64) -> f64 {
        depth * self.m as f64 * (self.cutoff - self.pi) / (2.0 * self.a())
    }

    /// `M(v_M − π)/(M − 1)`.
    pub fn expected_end_price(&self) -> f64 {
        self.m as f64 * (self.cutoff - self.pi) / self.a()
    }

    /// `M(1 − F(v_M))`.
    pub fn expected_active_count(&self) -> f64 {
        self.m as f64 * (1.0 - self.model.cdf(self.cutoff))
    }

    /// `|(Q(v+h) − Q(v−h))/2h − (L/2 + (M−1)Q(v)f(v))|`.
    pub fn volume_ode_residual(&self, depth: f64, v: f64, h: f64) -> Result<f64> {
        check_depth(depth)?;
        if !(h > 0.0 && self.cutoff < v - h && v + h < self.v_bar()) {
            return Err(domain(format!(
                "ODE stencil [{}, {}] must lie inside ({}, {})",
                v - h,
                v + h,
                self.cutoff,
                self.v_bar()
            )));
        }
        let q = |x: f64| self.volume_tilde(x).map(|t| depth * t);
        let fd = (q(v + h)? - q(v - h)?) / (2.0 * h);
        let rhs = 0.5 * depth + self.a() * q(v)? * self.model.density(v);
        Ok((fd - rhs).abs())
    }

    /// Interpolation table of the schedules, built on first use.
    pub fn schedule(&self) -> Result<&ScheduleTable> {
        if let Some(t) = self.table.get() {
            return Ok(t);
        }
        let built = ScheduleTable::build(self, SCHEDULE_INTERVALS)?;
        let _ = self.table.set(built);
        Ok(self.table.get().expect("table was just set"))
    }

    /// Expected wealth of a trader with valuation `v` who submits volume
    /// `q_dev` with fee `phi_dev` while every competitor follows `(Q, Φ)`.
    pub fn deviation_payoff(
        &self,
        depth: f64,
        v: f64,
        q_dev: f64,
        phi_dev: f64,
        info_cost: f64,
    ) -> Result<f64> {
        check_depth(depth)?;
        if !(q_dev >= 0.0 && phi_dev >= 0.0) {
            return Err(domain("deviation volume and fee must be nonnegative"));
        }
        let table = self.schedule()?;
        let upper = table.upper_moment_beaten_by(phi_dev / depth)?;
        Ok(-phi_dev + q_dev * (v - self.pi - q_dev / depth)
            - info_cost
            - 2.0 * q_dev * self.a() * upper)
    }

    pub fn volume_distribution(&self, depth: f64) -> Result<VolumeDistribution<'_>> {
        check_depth(depth)?;
        Ok(VolumeDistribution { sol: self, depth })
    }

    /// Valuation with `Q̃(w) = q_tilde`, for `q_tilde ∈ (0, Q̃(v̄))`.
    fn invert_volume_tilde(&self, q_tilde: f64) -> Result<f64> {
        let mut failure = None;
        let mut g = |w: f64| match self.volume_tilde(w) {
            Ok(q) => q - q_tilde,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let bracket = Bracket::new(&mut g, self.cutoff, self.v_bar())?;
        let tol = Tolerance::new(1e-15, 1e-14, 300)?;
        let w = find_root(&mut g, &bracket, tol)?;
        match failure {
            Some(e) => Err(e),
            None => Ok(w),
        }
    }
}

fn check_depth(depth: f64) -> Result<()> {
    if depth > 0.0 && depth.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("depth must be positive, got {depth}")))
    }
}

/// A law `G` of one trader's volume, with a possible atom at zero.
pub trait VolumeLaw {
    /// `∫_0^q x² dG(x)`.
    fn partial_second_moment(&self, q: f64) -> Result<f64>;
}

/// Finitely many volume atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassVolumes {
    pub atoms: Vec<(f64, f64)>,
}

impl VolumeLaw for PointMassVolumes {
    fn partial_second_moment(&self, q: f64) -> Result<f64> {
        Ok(self
            .atoms
            .iter()
            .filter(|(x, _)| *x <= q)
            .map(|(x, p)| x * x * p)
            .sum())
    }
}

/// `(2/L)(M − 1)∫_0^q x² dG(x)`.
pub fn fee_schedule_given_g(law: &dyn VolumeLaw, depth: f64, m: usize, q: f64) -> Result<f64> {
    check_depth(depth)?;
    if !(q >= 0.0) {
        return Err(domain(format!("volume must be nonnegative, got {q}")));
    }
    if m < 2 {
        return Err(domain(format!("M must be at least 2, got {m}")));
    }
    Ok(2.0 / depth * (m - 1) as f64 * law.partial_second_moment(q)?)
}

/// Equilibrium law of one trader's volume, `G(Q(v)) = F(v)`.
#[derive(Debug, Clone, Copy)]
pub struct VolumeDistribution<'a> {
    sol: &'a Stage3Solution,
    depth: f64,
}

impl VolumeDistribution<'_> {
    /// `G({0}) = F(v_M)`.
    pub fn atom(&self) -> f64 {
        self.sol.model.cdf(self.sol.cutoff)
    }

    pub fn max_volume(&self) -> f64 {
        self.depth * self.sol.max_volume_tilde()
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x < 0.0 {
            return Ok(0.0);
        }
        if x == 0.0 {
            return Ok(self.atom());
        }
        if x >= self.max_volume() {
            return Ok(1.0);
        }
        let w = self.sol.invert_volume_tilde(x / self.depth)?;
        Ok(self.sol.model.cdf(w))
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if p <= self.atom() {
            if p < 0.0 {
                return Err(domain(format!("quantile probability {p} outside [0, 1]")));
            }
            return Ok(0.0);
        }
        let v = self.sol.model.quantile(p)?;
        Ok(self.depth * self.sol.volume_tilde(v)?)
    }
}

impl VolumeLaw for VolumeDistribution<'_> {
    /// Integrated in volume space against the density `g(x) = f(w)/Q′(w)`,
    /// `Q(w) = x`.
    fn partial_second_moment(&self, q: f64) -> Result<f64> {
        let top = q.min(self.max_volume());
        if top <= 0.0 {
            return Ok(0.0);
        }
        let mut failure = None;
        let value = integrate(
            |x| {
                let r = (|| -> Result<f64> {
                    let w = self.sol.invert_volume_tilde(x / self.depth)?;
                    let slope = self.depth * self.sol.volume_tilde_slope(w)?;
                    Ok(x * x * self.sol.model.density(w) / slope)
                })();
                r.unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    0.0
                })
            },
            0.0,
            top,
            Tolerance::new(1e-14, 1e-11, 2000)?,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

// 8-point Gauss–Legendre rule on [-1, 1].
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Cubic Hermite tables of `Q̃`, `Φ/L` and `A(v) = ∫_v^{v̄} Q̃ dF` on a
/// uniform grid over `[v_M, v̄]`, with exact nodal values and slopes.
#[derive(Debug, Clone)]
pub struct ScheduleTable {
    lo: f64,
    hi: f64,
    step: f64,
    a: f64,
    q: Vec<f64>,
    dq: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    upper: Vec<f64>,
    dupper: Vec<f64>,
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * d1
}

impl ScheduleTable {
    fn build(sol: &Stage3Solution, n: usize) -> Result<Self> {
        let lo = sol.cutoff;
        let hi = sol.v_bar();
        let step = (hi - lo) / n as f64;
        let a = sol.a();
        let model = sol.model;

        // Per interval: Q̃ at the left node, ∫Q̃²dF and ∫Q̃dF over the interval.
        let cells: Vec<Result<(f64, f64, f64)>> = par::map_indexed(n, None, |k| {
            let left = lo + step * k as f64;
            let mid = left + 0.5 * step;
            let mut sq = 0.0;
            let mut first = 0.0;
            for (x, w) in GL8_X.iter().zip(GL8_W) {
                for u in [mid - 0.5 * step * x, mid + 0.5 * step * x] {
                    let qt = sol.volume_tilde(u)?;
                    let f = model.density(u);
                    sq += w * qt * qt * f;
                    first += w * qt * f;
                }
            }
            let q_left = if k == 0 { 0.0 } else { sol.volume_tilde(left)? };
            Ok((q_left, 0.5 * step * sq, 0.5 * step * first))
        });

        let mut q = Vec::with_capacity(n + 1);
        let mut phi = Vec::with_capacity(n + 1);
        let mut sq_cells = Vec::with_capacity(n);
        let mut first_cells = Vec::with_capacity(n);
        let mut acc = 0.0;
        phi.push(0.0);
        for cell in cells {
            let (q_left, sq, first) = cell?;
            q.push(q_left);
            acc += 2.0 * a * sq;
            phi.push(acc);
            sq_cells.push(sq);
            first_cells.push(first);
        }
        q.push(sol.max_volume_tilde());
        let mut upper = vec![0.0; n + 1];
        for k in (0..n).rev() {
            upper[k] = upper[k + 1] + first_cells[k];
        }
        let dq: Vec<f64> = (0..=n)
            .map(|k| {
                let v = lo + step * k as f64;
                0.5 + a * q[k] * model.density(v)
            })
            .collect();
        let dphi = (0..=n)
            .map(|k| 2.0 * a * q[k] * q[k] * model.density(lo + step * k as f64))
            .collect();
        let dupper = (0..=n)
            .map(|k| -q[k] * model.density(lo + step * k as f64))
            .collect();
        Ok(Self {
            lo,
            hi,
            step,
            a,
            q,
            dq,
            phi,
            dphi,
            upper,
            dupper,
        })
    }

    fn locate(&self, v: f64) -> (usize, f64) {
        let n = self.q.len() - 1;
        let s = ((v - self.lo) / self.step).clamp(0.0, n as f64);
        let k = (s.floor() as usize).min(n - 1);
        (k, s - k as f64)
    }

    fn interp(&self, y: &[f64], d: &[f64], v: f64) -> f64 {
        let (k, t) = self.locate(v);
        hermite(y[k], y[k + 1], d[k], d[k + 1], self.step, t)
    }

    pub fn cutoff(&self) -> f64 {
        self.lo
    }

    pub fn volume_tilde(&self, v: f64) -> f64 {
        if v <= self.lo {
            0.0
        } else if v >= self.hi {
            *self.q.last().expect("nonempty table")
        } else {
            self.interp(&self.q, &self.dq, v).max(0.0)
        }
    }

    pub fn phi_per_depth(&self, v: f64) -> f64 {
        if v <= self.lo {
            0.0
        } else if v >= self.hi {
            self.phi_max()
        } else {
            self.interp(&self.phi, &self.dphi, v).max(0.0)
        }
    }

    /// `∫_{max(v, v_M)}^{v̄} Q̃ dF`.
    pub fn upper_first_moment(&self, v: f64) -> f64 {
        if v <= self.lo {
            self.upper[0]
        } else if v >= self.hi {
            0.0
        } else {
            self.interp(&self.upper, &self.dupper, v).max(0.0)
        }
    }

    /// `Φ(v̄)/L`.
    pub fn phi_max(&self) -> f64 {
        *self.phi.last().expect("nonempty table")
    }

    /// Generalized inverse of `Φ/L`: zero fees map to the cutoff and fees at
    /// or above `Φ(v̄)/L` to `v̄`.
    pub fn inverse_phi_per_depth(&self, p: f64) -> Result<f64> {
        if p <= 0.0 {
            return Ok(self.lo);
        }
        if p >= self.phi_max() {
            return Ok(self.hi);
        }
        let k = self.phi.partition_point(|&x| x <= p).clamp(1, self.phi.len() - 1) - 1;
        let g = |t: f64| {
            hermite(self.phi[k], self.phi[k + 1], self.dphi[k], self.dphi[k + 1], self.step, t) - p
        };
        let t = match Bracket::new(g, 0.0, 1.0) {
            Ok(b) => find_root(g, &b, Tolerance::new(1e-15, 0.0, 200)?)?,
            // Flat cell at rounding level: take the left node.
            Err(Error::NoSignChange { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(self.lo + self.step * (k as f64 + t))
    }

    /// `∫_{x > Φ⁻¹(φ)} x dG / L` for a fee per unit depth `p`: the volume
    /// mass of competitors that execute ahead of a bid `p`.
    pub fn upper_moment_beaten_by(&self, p: f64) -> Result<f64> {
        if p >= self.phi_max() {
            return Ok(0.0);
        }
        Ok(self.upper_first_moment(self.inverse_phi_per_depth(p)?))
    }

    pub fn m_minus_one(&self) -> f64 {
        self.a
    }
}
