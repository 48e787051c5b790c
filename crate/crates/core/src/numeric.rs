//! Scalar numerics: normal distribution helpers, adaptive Gauss-Kronrod
//! quadrature (finite and infinite ranges), bisection and golden-section
//! search.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use libm::{erfc, exp, fabs, log, sqrt};

use crate::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * exp(-0.5 * x * x)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `P(X > x)` for a standard normal, accurate far in the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile function: rational initial guess refined by
/// one Halley step.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let p_low = 0.024_25;
    let x = if p < p_low {
        let q = sqrt(-2.0 * log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = sqrt(-2.0 * log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley refinement; the residual is taken on the smaller tail.
    let e = if x < 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_sf(x) };
    let u = e * sqrt(2.0 * PI) * exp(0.5 * x * x);
    x - u / (1.0 + 0.5 * x * u)
}

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
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// One 15-point Kronrod rule with embedded 7-point Gauss error estimate.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, fabs((kronrod - gauss) * h))
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { abs_tol: 1e-10, rel_tol: 0.0, max_intervals: 4000 }
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
/// Either bound may be infinite.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    integrate_with(f, a, b, QuadratureOptions::default())
}

pub fn integrate_with(f: impl Fn(f64) -> f64, a: f64, b: f64, opts: QuadratureOptions) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if a > b {
        return integrate_with(f, b, a, opts).map(|v| -v);
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&mut |x| f(x), a, b, opts),
        (true, false) => adaptive(
            &mut |t| {
                let u = 1.0 - t;
                f(a + t / u) / (u * u)
            },
            0.0,
            1.0,
            opts,
        ),
        (false, true) => adaptive(
            &mut |t| {
                let u = 1.0 - t;
                f(b - t / u) / (u * u)
            },
            0.0,
            1.0,
            opts,
        ),
        (false, false) => adaptive(
            &mut |t| {
                let u = 1.0 - t * t;
                f(t / u) * (1.0 + t * t) / (u * u)
            },
            -1.0,
            1.0,
            opts,
        ),
    }
}

fn adaptive(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, opts: QuadratureOptions) -> Result<f64> {
    let guard = |v: f64| if v.is_finite() { v } else { 0.0 };
    let mut g = |x: f64| guard(f(x));
    let (v, e) = gk15(&mut g, a, b);
    let mut parts: Vec<(f64, f64, f64, f64)> = alloc::vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > opts.abs_tol.max(opts.rel_tol * fabs(total)) {
        if parts.len() >= opts.max_intervals {
            return Err(Error::Quadrature { a, b, error: err });
        }
        let (worst, _) = parts.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("non-empty");
        let (lo, hi, pv, pe) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            // Interval collapsed to machine precision.
            return Err(Error::Quadrature { a, b, error: err });
        }
        let (v1, e1) = gk15(&mut g, lo, mid);
        let (v2, e2) = gk15(&mut g, mid, hi);
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated rounding from the incremental updates.
    Ok(parts.iter().map(|p| p.2).sum())
}

/// Bisection for a sign change of `f` on `[lo, hi]`, to interval width
/// `tol`.
pub fn bisect(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    what: &'static str,
) -> Result<f64> {
    let mut flo = f(lo)?;
    let fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NotBracketed { lo, hi, what });
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for the maximizer of a unimodal `f` on `[lo, hi]`.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// `ceil(x)` tolerant to representation error just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    libm::ceil(x - 1e-9)
}

/// `floor(x)` tolerant to representation error just below an integer.
pub(crate) fn floor_tol(x: f64) -> f64 {
    libm::floor(x + 1e-9)
}
