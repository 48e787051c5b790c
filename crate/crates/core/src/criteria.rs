//! Concave design criteria and the running information matrix.
//!
//! Two criterion families are supported: `log det M` and `-tr(M^-q)` for
//! `q > -1`, `q != 0`. Both take the value `-inf` on singular matrices.
//!
//! [`InfoState`] holds the running normalized information matrix of the
//! selected points. For `log det` and integer-power criteria it also keeps
//! `M^-1` up to date by Sherman-Morrison updates for rank-one elementary
//! matrices, re-factorizing every `refresh_period` selections to bound
//! floating drift.

use alloc::format;
use alloc::vec::Vec;

use libm::{exp, pow};

use crate::linalg::{dot, Matrix};
use crate::{Error, Result};

/// Reciprocal condition estimates below this are treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Selections between two direct re-factorizations of the maintained inverse.
pub const DEFAULT_REFRESH_PERIOD: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriterionKind {
    /// `Phi(M) = log det M`.
    LogDet,
    /// `Phi(M) = -tr(M^-power)`.
    NegTraceInvPow { power: f64 },
}

/// A concave criterion together with the parameter dimension `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionSpec {
    kind: CriterionKind,
    dim: usize,
}

impl CriterionSpec {
    pub fn log_det(dim: usize) -> Result<Self> {
        Self::new(CriterionKind::LogDet, dim)
    }

    pub fn neg_trace_inv_pow(dim: usize, power: f64) -> Result<Self> {
        Self::new(CriterionKind::NegTraceInvPow { power }, dim)
    }

    pub fn new(kind: CriterionKind, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!("criterion dimension must be >= 2, got {dim}")));
        }
        if let CriterionKind::NegTraceInvPow { power } = kind {
            if !(power > -1.0) || power == 0.0 || !power.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "trace criterion power must lie in (-1, inf) \\ {{0}}, got {power}"
                )));
            }
        }
        Ok(CriterionSpec { kind, dim })
    }

    pub fn kind(&self) -> CriterionKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The power as a positive integer, when it is one.
    pub fn integer_power(&self) -> Option<u32> {
        match self.kind {
            CriterionKind::NegTraceInvPow { power } if power >= 1.0 && power == libm::floor(power) && power < 64.0 => {
                Some(power as u32)
            }
            _ => None,
        }
    }

    /// Whether `M^-1` can stand in for the gradient computations, so that an
    /// inverse maintained by rank-one updates pays off.
    pub fn admits_inverse_updates(&self) -> bool {
        matches!(self.kind, CriterionKind::LogDet) || self.integer_power().is_some()
    }
}

/// Elementary information matrix `M(x)` contributed by one design point.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementaryInfo {
    /// `weight * f f^T`; `weight` is the Fisher information for location.
    RankOne { f: Vec<f64>, weight: f64 },
    /// A general symmetric nonnegative definite matrix.
    Full(Matrix),
}

impl ElementaryInfo {
    /// `f f^T` with unit weight.
    pub fn unit(f: Vec<f64>) -> Self {
        ElementaryInfo::RankOne { f, weight: 1.0 }
    }

    pub fn rank_one(f: Vec<f64>, weight: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::InvalidConfig(format!("rank-one weight must be positive, got {weight}")));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("regression vector"));
        }
        Ok(ElementaryInfo::RankOne { f, weight })
    }

    /// Validates symmetry (exact) and nonnegative definiteness.
    pub fn full(m: Matrix) -> Result<Self> {
        let asym = m.max_asymmetry();
        if asym != 0.0 {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        if !m.is_finite() {
            return Err(Error::NonFinite("elementary matrix"));
        }
        let lmin = m.symmetric_eigen().min_value();
        if lmin < -1e-12 * m.max_abs().max(1.0) {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: lmin });
        }
        Ok(ElementaryInfo::Full(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            ElementaryInfo::RankOne { f, .. } => f.len(),
            ElementaryInfo::Full(m) => m.dim(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        match self {
            ElementaryInfo::RankOne { f, weight } => Matrix::outer(f, *weight),
            ElementaryInfo::Full(m) => m.clone(),
        }
    }

    /// `tr[A M(x)]` for symmetric `A`.
    pub fn trace_with(&self, a: &Matrix) -> f64 {
        match self {
            ElementaryInfo::RankOne { f, weight } => weight * a.quad_form(f),
            ElementaryInfo::Full(m) => a.trace_product(m),
        }
    }
}

fn check_matrix(spec: &CriterionSpec, m: &Matrix) -> Result<()> {
    if m.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, actual: m.dim() });
    }
    let asym = m.max_asymmetry();
    if asym > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

fn check_elementary(spec: &CriterionSpec, e: &ElementaryInfo) -> Result<()> {
    if e.dim() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, actual: e.dim() });
    }
    Ok(())
}

/// Inverse by Cholesky, refusing matrices whose reciprocal condition
/// estimate is below [`SINGULAR_RCOND`].
pub fn checked_inverse(m: &Matrix) -> Result<Matrix> {
    let ch = m.cholesky().ok_or(Error::Singular { rcond: 0.0 })?;
    let rcond = ch.rcond_estimate();
    if rcond < SINGULAR_RCOND {
        return Err(Error::Singular { rcond });
    }
    Ok(ch.inverse())
}

fn matrix_power(a: &Matrix, k: u32) -> Matrix {
    let mut out = a.clone();
    for _ in 1..k {
        out = out.mul(a);
    }
    out.symmetrize();
    out
}

/// Criterion value; `-inf` for singular (or numerically singular) `m`.
pub fn phi(spec: &CriterionSpec, m: &Matrix) -> Result<f64> {
    check_matrix(spec, m)?;
    let Some(ch) = m.cholesky() else {
        return Ok(f64::NEG_INFINITY);
    };
    if ch.rcond_estimate() < SINGULAR_RCOND {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(match spec.kind {
        CriterionKind::LogDet => ch.log_det(),
        CriterionKind::NegTraceInvPow { power } => match spec.integer_power() {
            Some(k) => -matrix_power(&ch.inverse(), k).trace(),
            None => -m.symmetric_eigen().values.iter().map(|&l| pow(l, -power)).sum::<f64>(),
        },
    })
}

/// Gradient: `M^-1` for `log det`, `q M^-(q+1)` for `-tr(M^-q)`.
pub fn grad_phi(spec: &CriterionSpec, m: &Matrix) -> Result<Matrix> {
    check_matrix(spec, m)?;
    let inv = checked_inverse(m)?;
    Ok(match spec.kind {
        CriterionKind::LogDet => inv,
        CriterionKind::NegTraceInvPow { power } => match spec.integer_power() {
            Some(k) => matrix_power(&inv, k + 1).scaled(power),
            None => m.symmetric_eigen().map(|l| power * pow(l, -(power + 1.0))),
        },
    })
}

/// Precomputed directional-derivative evaluator at a fixed matrix `M`:
/// `F(M, M(x)) = tr[grad(M) M(x)] - tr[grad(M) M]`.
#[derive(Debug, Clone)]
pub struct Scorer {
    gradient: Matrix,
    offset: f64,
}

impl Scorer {
    /// Builds the evaluator from an [`InfoState`], reusing its maintained
    /// inverse when valid.
    pub fn new(spec: &CriterionSpec, state: &InfoState) -> Result<Scorer> {
        let m = state.m();
        check_matrix(spec, m)?;
        match (spec.kind, state.m_inv()) {
            (CriterionKind::LogDet, Some(inv)) => Ok(Scorer { gradient: inv.clone(), offset: spec.dim as f64 }),
            (CriterionKind::NegTraceInvPow { power }, Some(inv)) if spec.integer_power().is_some() => {
                let k = spec.integer_power().expect("checked");
                let inv_k = matrix_power(inv, k);
                let offset = power * inv_k.trace();
                let mut gradient = inv_k.mul(inv).scaled(power);
                gradient.symmetrize();
                Ok(Scorer { gradient, offset })
            }
            _ => Self::from_matrix(spec, m),
        }
    }

    /// Builds the evaluator by factorizing `m` directly.
    pub fn from_matrix(spec: &CriterionSpec, m: &Matrix) -> Result<Scorer> {
        let gradient = grad_phi(spec, m)?;
        let offset = match spec.kind {
            CriterionKind::LogDet => spec.dim as f64,
            CriterionKind::NegTraceInvPow { .. } => gradient.trace_product(m),
        };
        Ok(Scorer { gradient, offset })
    }

    pub fn gradient(&self) -> &Matrix {
        &self.gradient
    }

    /// `tr[grad M(x)] - tr[grad M]`. For a rank-one `log det` input this is
    /// `w f^T M^-1 f - p`.
    #[inline]
    pub fn score(&self, e: &ElementaryInfo) -> f64 {
        e.trace_with(&self.gradient) - self.offset
    }
}

/// Directional derivative `F(M, M(x)) = tr[grad Phi(M) (M(x) - M)]`.
pub fn dir_derivative(spec: &CriterionSpec, state: &InfoState, e: &ElementaryInfo) -> Result<f64> {
    check_elementary(spec, e)?;
    Ok(Scorer::new(spec, state)?.score(e))
}

/// D-efficiency `[det(m) / det(m_star)]^(1/p)`.
pub fn d_efficiency(spec: &CriterionSpec, m: &Matrix, m_star: &Matrix) -> Result<f64> {
    if spec.kind != CriterionKind::LogDet {
        return Err(Error::Unsupported("D-efficiency requires the log det criterion"));
    }
    let a = phi(spec, m)?;
    let b = phi(spec, m_star)?;
    if !a.is_finite() {
        return Err(Error::Singular { rcond: m.rcond_estimate() });
    }
    if !b.is_finite() {
        return Err(Error::Singular { rcond: m_star.rcond_estimate() });
    }
    Ok(exp((a - b) / spec.dim as f64))
}

/// Running normalized information matrix of the selected points.
#[derive(Debug, Clone)]
pub struct InfoState {
    m: Matrix,
    m_inv: Option<Matrix>,
    count: u64,
    refresh_period: u64,
    since_refresh: u64,
    track_inverse: bool,
}

impl InfoState {
    /// Empty state (zero matrix, no selections) for `spec`.
    pub fn new(spec: &CriterionSpec) -> Self {
        Self::with_refresh_period(spec, DEFAULT_REFRESH_PERIOD)
    }

    pub fn with_refresh_period(spec: &CriterionSpec, refresh_period: u64) -> Self {
        InfoState {
            m: Matrix::zeros(spec.dim),
            m_inv: None,
            count: 0,
            refresh_period: refresh_period.max(1),
            since_refresh: 0,
            track_inverse: spec.admits_inverse_updates(),
        }
    }

    /// State holding an already averaged matrix `m` over `count` points.
    pub fn from_matrix(spec: &CriterionSpec, m: Matrix, count: u64) -> Result<Self> {
        check_matrix(spec, &m)?;
        let mut s = Self::new(spec);
        s.m = m;
        s.m.symmetrize();
        s.count = count;
        if s.track_inverse {
            s.m_inv = checked_inverse(&s.m).ok();
        }
        Ok(s)
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    /// The maintained inverse, when valid.
    pub fn m_inv(&self) -> Option<&Matrix> {
        self.m_inv.as_ref()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn refresh_period(&self) -> u64 {
        self.refresh_period
    }

    pub fn tracks_inverse(&self) -> bool {
        self.track_inverse
    }

    pub fn is_singular(&self) -> bool {
        self.m.rcond_estimate() < SINGULAR_RCOND
    }

    /// `||M M^-1 - I||_F`, or `None` without a valid inverse.
    pub fn inverse_residual(&self) -> Option<f64> {
        let inv = self.m_inv.as_ref()?;
        Some(self.m.mul(inv).sub(&Matrix::identity(self.m.dim())).frobenius_norm())
    }

    /// Drops the maintained inverse; it is rebuilt on the next update.
    pub fn invalidate_inverse(&mut self) {
        self.m_inv = None;
    }

    /// Recomputes the inverse from `M` by direct factorization.
    pub fn refresh_inverse(&mut self) {
        self.since_refresh = 0;
        self.m_inv = if self.track_inverse { checked_inverse(&self.m).ok() } else { None };
    }

    /// Averages one more selected point into the matrix:
    /// `M <- M + [M(x) - M] / (n + 1)`.
    pub fn select_update(&mut self, e: &ElementaryInfo) {
        let n = self.count as f64;
        let inv_n1 = 1.0 / (n + 1.0);
        match e {
            ElementaryInfo::RankOne { f, weight } => {
                let p = self.m.dim();
                for i in 0..p {
                    let wi = weight * f[i];
                    for j in i..p {
                        let v = self.m[(i, j)];
                        self.m[(i, j)] = v + (wi * f[j] - v) * inv_n1;
                    }
                }
                self.m.mirror_upper();
                if self.count > 0 {
                    if let Some(inv) = self.m_inv.as_mut() {
                        if !sherman_morrison_average(inv, f, *weight, n) {
                            self.m_inv = None;
                        }
                    }
                } else {
                    self.m_inv = None;
                }
            }
            ElementaryInfo::Full(mat) => {
                self.m.add_scaled(&mat.sub(&self.m), inv_n1);
                self.m.symmetrize();
                self.m_inv = None;
            }
        }
        self.count += 1;
        self.after_change();
    }

    /// `M <- M + s w f f^T` without changing the count; the building block
    /// of exchange moves.
    pub fn rank_one_adjust(&mut self, f: &[f64], s: f64) {
        self.m.add_outer(f, s);
        if let Some(inv) = self.m_inv.as_mut() {
            if !sherman_morrison(inv, f, s) {
                self.m_inv = None;
            }
        }
        self.after_change();
    }

    /// `M <- M + s A` without changing the count.
    pub fn full_adjust(&mut self, a: &Matrix, s: f64) {
        self.m.add_scaled(a, s);
        self.m.symmetrize();
        self.m_inv = None;
        self.after_change();
    }

    fn after_change(&mut self) {
        if !self.track_inverse {
            return;
        }
        self.since_refresh += 1;
        if self.m_inv.is_none() || self.since_refresh >= self.refresh_period {
            self.refresh_inverse();
        }
    }
}

/// In-place inverse update for `M' = (n M + w f f^T) / (n + 1)`:
/// `M'^-1 = (1 + 1/n) [M^-1 - w M^-1 f f^T M^-1 / (n + w f^T M^-1 f)]`.
/// Returns `false` when the denominator is unusable.
fn sherman_morrison_average(inv: &mut Matrix, f: &[f64], w: f64, n: f64) -> bool {
    let g = inv.mul_vec(f);
    let denom = n + w * dot(f, &g);
    if !(denom > 0.0) || !denom.is_finite() {
        return false;
    }
    let scale = 1.0 + 1.0 / n;
    let c = w / denom;
    let p = inv.dim();
    for i in 0..p {
        for j in i..p {
            inv[(i, j)] = scale * (inv[(i, j)] - c * g[i] * g[j]);
        }
    }
    inv.mirror_upper();
    true
}

/// In-place inverse update for `M' = M + s f f^T`.
fn sherman_morrison(inv: &mut Matrix, f: &[f64], s: f64) -> bool {
    let g = inv.mul_vec(f);
    let denom = 1.0 + s * dot(f, &g);
    if !(denom > f64::EPSILON) || !denom.is_finite() {
        return false;
    }
    let c = s / denom;
    let p = inv.dim();
    for i in 0..p {
        for j in i..p {
            inv[(i, j)] -= c * g[i] * g[j];
        }
    }
    inv.mirror_upper();
    true
}
