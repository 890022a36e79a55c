//! Deterministic numerical kernels shared by the solvers: a bracketed
//! root finder that tolerates sign-only (overflowed) evaluations, globally
//! adaptive Gauss–Kronrod quadrature, and log-scaled exponential integrals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol >= 0.0) || max_iter == 0 {
            return Err(domain(format!(
                "invalid tolerance abs={abs_tol} rel={rel_tol} max_iter={max_iter}"
            )));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_iter,
        })
    }

    /// Accuracy used for inner quadratures of the equilibrium solvers.
    pub fn quadrature() -> Self {
        Self {
            abs_tol: 1e-15,
            rel_tol: 1e-13,
            max_iter: 2000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// Result of evaluating a root-finding target. Overflowed evaluations carry
/// only their sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eval {
    Value(f64),
    OverflowNegative,
    OverflowPositive,
}

impl Eval {
    pub fn sign(self) -> Sign {
        match self {
            Eval::Value(v) if v > 0.0 => Sign::Positive,
            Eval::Value(v) if v < 0.0 => Sign::Negative,
            Eval::Value(_) => Sign::Zero,
            Eval::OverflowNegative => Sign::Negative,
            Eval::OverflowPositive => Sign::Positive,
        }
    }

    /// Value with overflow mapped to signed infinity.
    fn as_f64(self) -> f64 {
        match self {
            Eval::Value(v) => v,
            Eval::OverflowNegative => f64::NEG_INFINITY,
            Eval::OverflowPositive => f64::INFINITY,
        }
    }
}

impl From<f64> for Eval {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Eval::Value(v)
        } else if v > 0.0 {
            Eval::OverflowPositive
        } else {
            Eval::OverflowNegative
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub f_lo_sign: Sign,
    pub f_hi_sign: Sign,
}

impl Bracket {
    /// Evaluates `f` at both ends and checks that a root is enclosed.
    pub fn new<F, E>(mut f: F, lo: f64, hi: f64) -> Result<Self>
    where
        F: FnMut(f64) -> E,
        E: Into<Eval>,
    {
        if !(lo < hi) {
            return Err(domain(format!("bracket requires lo < hi, got [{lo}, {hi}]")));
        }
        let bracket = Self {
            lo,
            hi,
            f_lo_sign: f(lo).into().sign(),
            f_hi_sign: f(hi).into().sign(),
        };
        if bracket.encloses_root() {
            Ok(bracket)
        } else {
            Err(Error::NoSignChange { lo, hi })
        }
    }

    fn encloses_root(&self) -> bool {
        self.f_lo_sign == Sign::Zero
            || self.f_hi_sign == Sign::Zero
            || self.f_lo_sign != self.f_hi_sign
    }
}

/// Brent-style root finder. Inverse quadratic and secant steps are taken only
/// when the three points carry finite values; otherwise it bisects.
pub fn find_root<F, E>(mut f: F, bracket: &Bracket, tol: Tolerance) -> Result<f64>
where
    F: FnMut(f64) -> E,
    E: Into<Eval>,
{
    if !bracket.encloses_root() {
        return Err(Error::NoSignChange {
            lo: bracket.lo,
            hi: bracket.hi,
        });
    }
    let mut a = bracket.lo;
    let mut b = bracket.hi;
    let mut fa = f(a).into().as_f64();
    let mut fb = f(b).into().as_f64();
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo: a, hi: b });
    }
    let mut c = b;
    let mut fc = fb;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * (tol.abs_tol + tol.rel_tol * b.abs());
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 || (fb.is_finite() && fb.abs() <= tol.abs_tol) {
            return Ok(b);
        }
        let interpolate = e.abs() >= tol1
            && fa.abs() > fb.abs()
            && fa.is_finite()
            && fb.is_finite()
            && fc.is_finite();
        if interpolate {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0)),
                    (qa - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b).into().as_f64();
    }
    Err(Error::MaxIterExceeded {
        what: "find_root",
        iterations: tol.max_iter,
    })
}

// 15-point Kronrod nodes (nonnegative half) with embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<Segment> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_sum = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok(Segment {
        a,
        b,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        abs_value: abs_sum * half.abs(),
    })
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Subdivides the segment with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol·|I|)`. The request is floored at
/// a small multiple of the rounding level of `∫|f|`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    if !(a <= b) {
        return Err(domain(format!("integrate requires a <= b, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let first = kronrod(&mut f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut total_abs = first.abs_value;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut splits = 0usize;
    loop {
        let target = tol
            .abs_tol
            .max(tol.rel_tol * total.abs())
            .max(50.0 * f64::EPSILON * total_abs);
        if total_err <= target {
            // Re-sum in a fixed order to limit accumulated cancellation.
            let mut segs: Vec<Segment> = heap.into_vec();
            segs.sort_by(|x, y| x.a.total_cmp(&y.a));
            return Ok(segs.iter().map(|s| s.value).sum());
        }
        if splits >= tol.max_iter {
            return Err(Error::MaxIterExceeded {
                what: "integrate",
                iterations: splits,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Cannot split further in floating point.
            return Err(Error::MaxIterExceeded {
                what: "integrate",
                iterations: splits,
            });
        }
        let left = kronrod(&mut f, worst.a, mid)?;
        let right = kronrod(&mut f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_abs += left.abs_value + right.abs_value - worst.abs_value;
        heap.push(left);
        heap.push(right);
        splits += 1;
    }
}

/// `mantissa · e^{log_magnitude}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScaled {
    pub log_magnitude: f64,
    pub mantissa: f64,
}

impl LogScaled {
    pub fn value(&self) -> f64 {
        if self.mantissa == 0.0 {
            0.0
        } else {
            self.mantissa * self.log_magnitude.exp()
        }
    }

    /// Natural log of the represented (positive) value.
    pub fn ln(&self) -> f64 {
        self.log_magnitude + self.mantissa.ln()
    }
}

const EXPONENT_SCAN_POINTS: usize = 128;

/// `∫_a^b e^{exponent(u)} du` with the largest exponent factored out, so the
/// integrand handed to the quadrature never exceeds one (up to scan resolution).
pub fn exp_integral_stable<F: Fn(f64) -> f64>(
    exponent: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<LogScaled> {
    if !(a <= b) {
        return Err(domain(format!("integrate requires a <= b, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(LogScaled {
            log_magnitude: 0.0,
            mantissa: 0.0,
        });
    }
    let step = (b - a) / EXPONENT_SCAN_POINTS as f64;
    let mut shift = f64::NEG_INFINITY;
    for i in 0..=EXPONENT_SCAN_POINTS {
        let u = if i == EXPONENT_SCAN_POINTS { b } else { a + step * i as f64 };
        let g = exponent(u);
        if g.is_nan() {
            return Err(Error::NonFinite { at: u });
        }
        shift = shift.max(g);
    }
    if !shift.is_finite() {
        return Err(Error::NonFinite { at: a });
    }
    let mantissa = integrate(|u| (exponent(u) - shift).exp(), a, b, tol)?;
    Ok(LogScaled {
        log_magnitude: shift,
        mantissa,
    })
}
