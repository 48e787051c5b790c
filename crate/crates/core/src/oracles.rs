//! Optimal bounded designs for reference problems with known structure.
//!
//! Each oracle returns the optimal criterion value `Phi*` (always
//! `log det`), the `(1 - alpha)`-quantile `C*` of the directional derivative
//! at the optimum, the parameters of the optimal selection region and, when
//! symmetry determines it, the optimal matrix itself.

use alloc::format;

use libm::{asin, exp, lgamma, log, pow, sqrt};

use crate::criteria::{phi, CriterionSpec};
use crate::linalg::Matrix;
use crate::numeric::{bisect, golden_max, integrate_with, normal_pdf, normal_quantile, normal_sf, QuadratureOptions};
use crate::{Error, Result};

const ROOT_TOL: f64 = 1e-12;

fn quad_opts() -> QuadratureOptions {
    QuadratureOptions { abs_tol: 1e-13, rel_tol: 0.0, max_intervals: 4000 }
}

/// Parameters of the optimal selection region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `(-inf, -a] U [-b, b] U [a, inf)` for a scalar standard normal.
    QuadNormal { a: f64, b: f64 },
    /// `||x|| >= radius`, with `M* = rho I`.
    Ball { radius: f64, rho: f64 },
    /// Normal part outside `radius`; `discrete_mass` of the `mu`-mass on
    /// the atoms `(+-1, +-1)` is selected as well.
    Mixture { radius: f64, rho: f64, discrete_mass: f64 },
    /// Spheres `1..boundary` fully selected (the boundary one partly).
    Spheres { boundary: usize, rho: f64 },
    /// `[1/2 - a, 1/2 + b] U [1 - (alpha - a - b), 1]` on `[0, 1]`.
    UnitInterval { a: f64, b: f64 },
    /// Square `[-1, 1]^2` outside the disk of the given radius.
    Square { radius: f64, rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub alpha: f64,
    pub phi_star: f64,
    pub c_star: f64,
    pub region: Region,
    pub m_star: Option<Matrix>,
}

fn check_alpha(alpha: f64, allow_one: bool) -> Result<()> {
    let ok = alpha > 0.0 && (alpha < 1.0 || (allow_one && alpha == 1.0));
    if !ok {
        let hi = if allow_one { "]" } else { ")" };
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1{hi}, got {alpha}")));
    }
    Ok(())
}

fn log_det(m: &Matrix) -> Result<f64> {
    phi(&CriterionSpec::log_det(m.dim())?, m)
}

fn inverse(m: &Matrix) -> Result<Matrix> {
    crate::criteria::checked_inverse(m)
}

/// `int_lo^hi x^j phi(x) dx` by quadrature.
fn normal_moment(j: i32, lo: f64, hi: f64) -> Result<f64> {
    integrate_with(|x| pow(x, j as f64) * normal_pdf(x), lo, hi, quad_opts())
}

/// Information matrix of `f = (1, x, x^2)` on the symmetric three-interval
/// region, normalized by `alpha`.
fn quad_normal_matrix(alpha: f64, a: f64, b: f64) -> Result<Matrix> {
    let m = |j| -> Result<f64> { Ok(2.0 * (normal_moment(j, 0.0, b)? + normal_moment(j, a, f64::INFINITY)?) / alpha) };
    let (m0, m2, m4) = (m(0)?, m(2)?, m(4)?);
    Ok(Matrix::from_row_major(3, &[m0, 0.0, m2, 0.0, m2, 0.0, m2, 0.0, m4]))
}

fn quad_features(x: f64) -> [f64; 3] {
    [1.0, x, x * x]
}

/// Inner radius `b` making the region mass `alpha`, given `a`.
fn quad_normal_b(alpha: f64, a: f64) -> Result<f64> {
    let target = 0.5 * alpha - normal_sf(a);
    if target <= 0.0 {
        return Ok(0.0);
    }
    let hi = normal_quantile(0.5 + target).max(0.0) + 1.0;
    bisect(|b| Ok(normal_moment(0, 0.0, b)? - target), 0.0, hi, ROOT_TOL, "inner interval")
}

/// Quadratic regression `f(x) = (1, x, x^2)` on standard normal `x`.
pub fn oracle_quad_normal(alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha, false)?;
    let gap = |a: f64| -> Result<f64> {
        let b = quad_normal_b(alpha, a)?;
        let inv = inverse(&quad_normal_matrix(alpha, a, b)?)?;
        Ok(inv.quad_form(&quad_features(a)) - inv.quad_form(&quad_features(b)))
    };
    let a_min = normal_quantile(1.0 - 0.5 * alpha);
    let a = bisect(gap, a_min, a_min + 10.0, ROOT_TOL, "outer interval")?;
    let b = quad_normal_b(alpha, a)?;
    let m = quad_normal_matrix(alpha, a, b)?;
    let inv = inverse(&m)?;
    Ok(OracleResult {
        alpha,
        phi_star: log_det(&m)?,
        c_star: inv.quad_form(&quad_features(a)) - 3.0,
        region: Region::QuadNormal { a, b },
        m_star: Some(m),
    })
}

/// `mu`-mass of the region of [`oracle_quad_normal`].
pub fn quad_normal_region_mass(a: f64, b: f64) -> Result<f64> {
    Ok(2.0 * (normal_moment(0, 0.0, b)? + normal_moment(0, a, f64::INFINITY)?))
}

/// Density of `||X||` for `X ~ N(0, I_d)`.
fn chi_pdf(d: usize, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let k = d as f64;
    let log_norm = (0.5 * k - 1.0) * core::f64::consts::LN_2 + lgamma(0.5 * k);
    exp((k - 1.0) * log(r) - 0.5 * r * r - log_norm)
}

fn chi_tail_moment(d: usize, j: i32, r: f64) -> Result<f64> {
    integrate_with(|t| pow(t, j as f64) * chi_pdf(d, t), r, f64::INFINITY, quad_opts())
}

/// Multilinear regression `M(x) = x x^T`, `x ~ N(0, I_d)`, by quadrature.
pub fn oracle_multilinear_normal(alpha: f64, d: usize) -> Result<OracleResult> {
    check_alpha(alpha, false)?;
    if d < 2 {
        return Err(Error::InvalidConfig(format!("dimension must be >= 2, got {d}")));
    }
    let hi = sqrt(d as f64) + 40.0;
    let radius = bisect(|r| Ok(chi_tail_moment(d, 0, r)? - alpha), 0.0, hi, ROOT_TOL, "ball radius")?;
    let rho = chi_tail_moment(d, 2, radius)? / (d as f64 * alpha);
    Ok(ball_result(alpha, d, radius, rho))
}

/// Closed form of [`oracle_multilinear_normal`] for `d = 2`.
pub fn oracle_multilinear_normal_2d(alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha, false)?;
    Ok(ball_result(alpha, 2, sqrt(-2.0 * log(alpha)), 1.0 - log(alpha)))
}

fn ball_result(alpha: f64, d: usize, radius: f64, rho: f64) -> OracleResult {
    let df = d as f64;
    OracleResult {
        alpha,
        phi_star: df * log(rho),
        c_star: radius * radius / rho - df,
        region: Region::Ball { radius, rho },
        m_star: Some(Matrix::identity(d).scaled(rho)),
    }
}

/// Half-normal, half-discrete mixture in dimension 2: `N(0, I_2)` with
/// weight 1/2 and atoms of weight 1/8 at `(+-1, +-1)`.
pub fn oracle_mixture_normal_discrete(alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha, true)?;
    let e = core::f64::consts::E;
    let t1 = 1.0 / (2.0 * e);
    let t2 = t1 + 0.5;
    let (phi_star, r2, discrete_mass) = if alpha <= t1 {
        (2.0 * log(1.0 - log(2.0 * alpha)), -2.0 * log(2.0 * alpha), 0.0)
    } else if alpha <= t2 {
        (2.0 * log(1.0 + 1.0 / (2.0 * e * alpha)), 2.0, alpha - t1)
    } else {
        let u = 2.0 * alpha - 1.0;
        let inner = if u < 1.0 { 1.0 - u * log(u) / (2.0 * alpha) } else { 1.0 };
        (2.0 * log(inner), if u < 1.0 { -2.0 * log(u) } else { 0.0 }, 0.5)
    };
    let rho = exp(0.5 * phi_star);
    Ok(OracleResult {
        alpha,
        phi_star,
        c_star: r2 / rho - 2.0,
        region: Region::Mixture { radius: sqrt(r2), rho, discrete_mass },
        m_star: Some(Matrix::identity(2).scaled(rho)),
    })
}

/// Equal-weight mixture of uniform distributions on three nested spheres.
pub fn oracle_three_spheres(alpha: f64, d: usize, radii: (f64, f64, f64)) -> Result<OracleResult> {
    check_alpha(alpha, true)?;
    let (r1, r2, r3) = radii;
    if !(r1 > r2 && r2 > r3 && r3 > 0.0) {
        return Err(Error::InvalidConfig(format!("radii must satisfy r1 > r2 > r3 > 0, got {radii:?}")));
    }
    if d < 2 {
        return Err(Error::InvalidConfig(format!("dimension must be >= 2, got {d}")));
    }
    let df = d as f64;
    let third = 1.0 / 3.0;
    let (rho, boundary, rb) = if alpha <= third {
        (r1 * r1 / df, 1, r1)
    } else if alpha <= 2.0 * third {
        ((r1 * r1 * third + (alpha - third) * r2 * r2) / (alpha * df), 2, r2)
    } else {
        (((r1 * r1 + r2 * r2) * third + (alpha - 2.0 * third) * r3 * r3) / (alpha * df), 3, r3)
    };
    Ok(OracleResult {
        alpha,
        phi_star: df * log(rho),
        c_star: rb * rb / rho - df,
        region: Region::Spheres { boundary, rho },
        m_star: Some(Matrix::identity(d).scaled(rho)),
    })
}

/// `det` of the IBOSS limit matrix for `f(x) = (x, x^2)`, `x ~ U[0, 1]`.
pub fn oracle_quad01_iboss(alpha: f64) -> Result<f64> {
    check_alpha(alpha, true)?;
    let a = alpha;
    Ok(a * a * (pow(a, 4.0) + 25.0 - 40.0 * a + 26.0 * a * a - 8.0 * a * a * a) / 960.0)
}

/// `int_lo^hi (x^2, x^3, x^4) dx`, exact.
fn unit_moments(lo: f64, hi: f64) -> [f64; 3] {
    let p = |k: i32| (pow(hi, k as f64) - pow(lo, k as f64)) / k as f64;
    [p(3), p(4), p(5)]
}

/// Information matrix for `f(x) = (x, x^2)` with `mu / alpha` on a union of
/// disjoint subintervals of `[0, 1]`.
pub fn unit_interval_matrix(alpha: f64, intervals: &[(f64, f64)]) -> Matrix {
    let mut s = [0.0; 3];
    for &(lo, hi) in intervals {
        let m = unit_moments(lo, hi);
        for i in 0..3 {
            s[i] += m[i];
        }
    }
    Matrix::from_row_major(2, &[s[0] / alpha, s[1] / alpha, s[1] / alpha, s[2] / alpha])
}

fn unit_region(alpha: f64, a: f64, b: f64) -> [(f64, f64); 2] {
    [(0.5 - a, 0.5 + b), (1.0 - (alpha - a - b), 1.0)]
}

/// Optimal bounded design for `f(x) = (x, x^2)`, `x ~ U[0, 1]`, found by
/// maximizing `log det` over the two-interval family.
pub fn oracle_quad01(alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha, true)?;
    let objective = |a: f64, b: f64| -> f64 {
        let m = unit_interval_matrix(alpha, &unit_region(alpha, a, b));
        log_det(&m).unwrap_or(f64::NEG_INFINITY)
    };
    let a_lo = (alpha - 0.5).max(0.0);
    let a_hi = alpha.min(0.5);
    let best_b = |a: f64| golden_max(|b| objective(a, b), 0.0, alpha - a, 1e-13);
    let a = golden_max(|a| objective(a, best_b(a)), a_lo, a_hi, 1e-13);
    let b = best_b(a);
    let m = unit_interval_matrix(alpha, &unit_region(alpha, a, b));
    let inv = inverse(&m)?;
    let x = 0.5 - a;
    Ok(OracleResult {
        alpha,
        phi_star: log_det(&m)?,
        c_star: inv.quad_form(&[x, x * x]) - 2.0,
        region: Region::UnitInterval { a, b },
        m_star: Some(m),
    })
}

/// Mass `1 + pi R^2/4 - sqrt(R^2 - 1) - R^2 asin(1/R)` of the square outside
/// a disk of radius `R in [1, sqrt 2]`, under the uniform law on `[-1,1]^2`.
fn square_outer_mass(r: f64) -> f64 {
    1.0 + core::f64::consts::PI * r * r / 4.0 - sqrt(r * r - 1.0) - r * r * asin(1.0 / r)
}

/// Multilinear regression with intercept, `x ~ U([-1, 1]^2)`.
pub fn oracle_uniform_square(alpha: f64) -> Result<OracleResult> {
    check_alpha(alpha, true)?;
    let pi = core::f64::consts::PI;
    let (radius, rho) = if alpha >= 1.0 - pi / 4.0 {
        let r = 2.0 * sqrt((1.0 - alpha) / pi);
        (r, (2.0 / 3.0 - 2.0 * (1.0 - alpha) * (1.0 - alpha) / pi) / (2.0 * alpha))
    } else {
        let r = bisect(|r| Ok(square_outer_mass(r) - alpha), 1.0, core::f64::consts::SQRT_2, ROOT_TOL, "disk radius")?;
        let r2 = r * r;
        let r4 = r2 * r2;
        let inner = 2.0 / 3.0 + pi * r4 / 8.0 - 0.5 * r4 * asin(1.0 / r) - sqrt(r2 - 1.0) * (r2 + 2.0) / 6.0;
        (r, inner / (2.0 * alpha))
    };
    Ok(OracleResult {
        alpha,
        phi_star: 2.0 * log(rho),
        c_star: radius * radius / rho - 2.0,
        region: Region::Square { radius, rho },
        m_star: Some(Matrix::from_diag(&[1.0, rho, rho])),
    })
}

/// IBOSS limit matrix `diag(1, D1, D2)` for the uniform square.
pub fn uniform_square_iboss(alpha: f64) -> Result<Matrix> {
    check_alpha(alpha, true)?;
    let a = alpha;
    let d1 = (8.0 - 5.0 * a + a * a) / 12.0;
    let d2 = (8.0 - 11.0 * a + 4.0 * a * a) / (3.0 * (2.0 - a) * (2.0 - a));
    Ok(Matrix::from_diag(&[1.0, d1, d2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn quad_normal_half() {
        let o = oracle_quad_normal(0.5).unwrap();
        let Region::QuadNormal { a, b } = o.region else { panic!() };
        assert!((a - 1.0280).abs() < 5e-4, "a={a}");
        assert!((b - 0.2482).abs() < 5e-4, "b={b}");
        assert!((o.phi_star - 1.6354).abs() < 5e-4, "phi={}", o.phi_star);
        assert!((o.c_star + 1.2470).abs() < 5e-4, "c={}", o.c_star);
        assert!((quad_normal_region_mass(a, b).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn quad_normal_tenth() {
        let o = oracle_quad_normal(0.1).unwrap();
        let Region::QuadNormal { a, b } = o.region else { panic!() };
        assert!((a - 1.8842).abs() < 5e-4, "a={a}");
        assert!((b - 0.0507).abs() < 5e-4, "b={b}");
        assert!((o.phi_star - 3.2963).abs() < 5e-4, "phi={}", o.phi_star);
        assert!((o.c_star + 0.8513).abs() < 5e-4, "c={}", o.c_star);
        assert!((quad_normal_region_mass(a, b).unwrap() - 0.1).abs() < 1e-8);
    }

    #[test]
    fn multilinear_closed_form_agrees() {
        for &alpha in &[0.01, 0.1, 0.5, 0.9] {
            let q = oracle_multilinear_normal(alpha, 2).unwrap();
            let c = oracle_multilinear_normal_2d(alpha).unwrap();
            let (Region::Ball { radius: rq, rho: pq }, Region::Ball { radius: rc, rho: pc }) = (q.region, c.region)
            else {
                panic!()
            };
            assert!((rq - rc).abs() < 1e-8 && (pq - pc).abs() < 1e-8, "alpha={alpha}");
        }
        let o = oracle_multilinear_normal_2d(0.5).unwrap();
        let Region::Ball { radius, rho } = o.region else { panic!() };
        assert!((rho - 1.693_147_180_559_945).abs() < 1e-12);
        assert!((radius - 1.177_410_022_515_474_6).abs() < 1e-12);
    }

    #[test]
    fn multilinear_derivative_in_alpha() {
        for d in [2, 3, 5] {
            let alpha = 0.2;
            let h = 1e-4;
            let fd = (oracle_multilinear_normal(alpha + h, d).unwrap().phi_star
                - oracle_multilinear_normal(alpha - h, d).unwrap().phi_star)
                / (2.0 * h);
            let c = oracle_multilinear_normal(alpha, d).unwrap().c_star / alpha;
            assert!((fd - c).abs() <= 1e-4 * c.abs(), "d={d} fd={fd} c/alpha={c}");
        }
    }

    #[test]
    fn mixture_branches() {
        let e = core::f64::consts::E;
        let o = oracle_mixture_normal_discrete(0.5).unwrap();
        assert!((o.phi_star - 2.0 * log(1.0 + 1.0 / e)).abs() < 1e-14);
        assert!((o.phi_star - 0.626_523).abs() < 1e-6);
        let o = oracle_mixture_normal_discrete(0.02).unwrap();
        assert!((o.phi_star - 2.0 * log(1.0 - log(0.04))).abs() < 1e-14);
        assert!((o.phi_star - 2.8791).abs() < 1e-4);
        for t in [1.0 / (2.0 * e), 1.0 / (2.0 * e) + 0.5] {
            let l = oracle_mixture_normal_discrete(t * (1.0 - 1e-13)).unwrap();
            let r = oracle_mixture_normal_discrete(t * (1.0 + 1e-13)).unwrap();
            assert!((l.phi_star - r.phi_star).abs() < 1e-10, "t={t}");
            assert!((l.c_star - r.c_star).abs() < 1e-10, "t={t}");
        }
        // Full selection: mu has covariance I_2 (both halves).
        assert!(oracle_mixture_normal_discrete(1.0).unwrap().phi_star.abs() < 1e-15);
    }

    #[test]
    fn spheres_branches() {
        let radii = (3.0, 2.0, 1.0);
        let o = oracle_three_spheres(0.2, 3, radii).unwrap();
        assert!((o.phi_star - 3.0 * log(3.0)).abs() < 1e-14);
        assert_eq!(o.c_star, 0.0);
        for t in [1.0 / 3.0, 2.0 / 3.0] {
            let l = oracle_three_spheres(t - 1e-13, 3, radii).unwrap();
            let r = oracle_three_spheres(t + 1e-13, 3, radii).unwrap();
            assert!((l.phi_star - r.phi_star).abs() < 1e-10, "t={t}");
        }
        let full = oracle_three_spheres(1.0, 3, radii).unwrap();
        // Uniform mixture: E[x x^T] = mean(r_i^2) / d * I.
        let direct = 3.0 * log((9.0 + 4.0 + 1.0) / 3.0 / 3.0);
        assert!((full.phi_star - direct).abs() < 1e-14);
        assert!(oracle_three_spheres(0.5, 3, (1.0, 2.0, 3.0)).is_err());
    }

    #[test]
    fn quad01_polynomial() {
        assert!((oracle_quad01_iboss(1.0).unwrap() - 1.0 / 240.0).abs() < 1e-17);
        assert!(oracle_quad01_iboss(1e-6).unwrap() < 1e-12);
        // Against the exact moments of mu / alpha on [0, a/2] U [1 - a/2, 1].
        for &a in &[0.05, 0.3, 0.5, 0.9] {
            let m = unit_interval_matrix(a, &[(0.0, a / 2.0), (1.0 - a / 2.0, 1.0)]);
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            assert!((det - oracle_quad01_iboss(a).unwrap()).abs() < 1e-15, "alpha={a}");
        }
    }

    #[test]
    fn quad01_optimum_structure() {
        // Equal directional derivative at the three inner boundaries.
        let o = oracle_quad01(0.3).unwrap();
        let Region::UnitInterval { a, b } = o.region else { panic!() };
        assert!(a > b);
        let inv = inverse(o.m_star.as_ref().unwrap()).unwrap();
        let d = |x: f64| inv.quad_form(&[x, x * x]);
        let ends = [0.5 - a, 0.5 + b, 1.0 - (0.3 - a - b)];
        for w in ends.windows(2) {
            assert!((d(w[0]) - d(w[1])).abs() < 1e-5, "{ends:?}");
        }
        // Beyond the switch point the region is the single interval [1 - alpha, 1].
        let below = oracle_quad01(0.74).unwrap();
        let above = oracle_quad01(0.77).unwrap();
        let Region::UnitInterval { a: a_below, .. } = below.region else { panic!() };
        let Region::UnitInterval { a: a_above, .. } = above.region else { panic!() };
        assert!(a_below - 0.24 > 1e-4);
        assert!((a_above - 0.27).abs() < 1e-6);
        assert!(o.phi_star > log_det(&unit_interval_matrix(0.3, &[(0.0, 0.15), (0.85, 1.0)])).unwrap());
    }

    #[test]
    fn uniform_square_limits() {
        let one = oracle_uniform_square(1.0).unwrap();
        let Region::Square { rho, .. } = one.region else { panic!() };
        assert!((rho - 1.0 / 3.0).abs() < 1e-15);
        let t = 1.0 - core::f64::consts::PI / 4.0;
        let l = oracle_uniform_square(t - 1e-12).unwrap();
        let r = oracle_uniform_square(t + 1e-12).unwrap();
        assert!((l.phi_star - r.phi_star).abs() < 1e-8);
        // det(M*) = rho^2 approaches 1 like sqrt(alpha).
        let tiny = oracle_uniform_square(1e-6).unwrap();
        assert!((exp(tiny.phi_star) - 1.0).abs() < 5e-3);
        let iboss = uniform_square_iboss(1e-9).unwrap();
        let det: f64 = iboss.diag().iter().product();
        assert!((det - 4.0 / 9.0).abs() < 1e-8);
    }

    #[test]
    fn c_star_non_positive_and_phi_monotone() {
        let grid: Vec<f64> = (1..=50).map(|i| i as f64 / 51.0).collect();
        let runs: [&dyn Fn(f64) -> OracleResult; 5] = [
            &|a| oracle_quad_normal(a).unwrap(),
            &|a| oracle_multilinear_normal(a, 3).unwrap(),
            &|a| oracle_mixture_normal_discrete(a).unwrap(),
            &|a| oracle_three_spheres(a, 4, (3.0, 2.0, 1.0)).unwrap(),
            &|a| oracle_uniform_square(a).unwrap(),
        ];
        for (idx, run) in runs.iter().enumerate() {
            let mut prev = f64::INFINITY;
            for &a in &grid {
                let o = run(a);
                assert!(o.c_star <= 1e-12, "oracle {idx} alpha={a} c={}", o.c_star);
                assert!(o.phi_star <= prev + 1e-12, "oracle {idx} alpha={a}");
                prev = o.phi_star;
            }
        }
    }
}
