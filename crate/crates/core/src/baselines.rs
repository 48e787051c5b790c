//! Comparison selectors: sequential exchange with a fixed number of points,
//! and IBOSS (coordinate-wise extreme selection) with its large-sample
//! limit for independent coordinates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::criteria::{phi, CriterionSpec, InfoState};
use crate::linalg::{dot, Matrix};
use crate::numeric::{integrate, normal_pdf, normal_quantile};
use crate::{Error, Result};

/// Identity used to detect a candidate that is already in the active set.
#[derive(Debug, Clone, PartialEq)]
pub enum MemberKey {
    /// Position in a finite dataset.
    Index(u64),
    /// Exact coordinates of a generated point.
    Point(Vec<f64>),
}

/// One candidate for the exchange selector: `w f f^T` with an identity key.
#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub key: MemberKey,
    pub f: Vec<f64>,
    pub weight: f64,
}

impl Member {
    pub fn new(key: MemberKey, f: Vec<f64>) -> Self {
        Member { key, f, weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExchangeRule {
    /// Swap the member maximizing the determinant ratio, if it increases.
    Exact,
    /// Swap the member with the smallest `h^T M^-1 h` when the candidate's
    /// `g^T M^-1 g` is larger, ignoring the cross term.
    #[default]
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExchangeOutcome {
    /// Added while filling the initial `n` slots.
    Filled,
    /// Already in the active set.
    Duplicate,
    Rejected,
    /// Replaced the member previously at this slot.
    Swapped {
        slot: usize,
    },
}

/// Log-scale increases at or below this are not worth a swap; keeps the
/// accepted swaps monotone under rounding.
const MIN_LOG_GAIN: f64 = 1e-10;

/// D-optimal exchange over a fixed-size active set of rank-one members.
#[derive(Debug, Clone)]
pub struct ExchangeState {
    n: usize,
    rule: ExchangeRule,
    members: Vec<Member>,
    /// `w h^T M^-1 h` per member, valid while `leverage_valid`.
    leverage: Vec<f64>,
    leverage_valid: bool,
    info: InfoState,
    spec: CriterionSpec,
    k: u64,
    phi: f64,
}

impl ExchangeState {
    pub fn new(dim: usize, n: usize, rule: ExchangeRule) -> Result<Self> {
        let spec = CriterionSpec::log_det(dim)?;
        if n < dim {
            return Err(Error::InvalidConfig(format!("exchange size n={n} is below p={dim}")));
        }
        Ok(ExchangeState {
            n,
            rule,
            members: Vec::with_capacity(n),
            leverage: Vec::new(),
            leverage_valid: false,
            info: InfoState::new(&spec),
            spec,
            k: 0,
            phi: f64::NEG_INFINITY,
        })
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn info(&self) -> &InfoState {
        &self.info
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn rule(&self) -> ExchangeRule {
        self.rule
    }

    /// Average of the active members' elementary matrices, accumulated from
    /// scratch.
    pub fn reaccumulate(&self) -> Matrix {
        let p = self.spec.dim();
        let mut m = Matrix::zeros(p);
        for mem in &self.members {
            m.add_outer(&mem.f, mem.weight);
        }
        m.scale(1.0 / self.members.len().max(1) as f64);
        m
    }

    fn refresh_leverage(&mut self) -> Result<()> {
        let inv = match self.info.m_inv() {
            Some(inv) => inv,
            None => {
                self.info.refresh_inverse();
                self.info.m_inv().ok_or(Error::Singular { rcond: self.info.m().rcond_estimate() })?
            }
        };
        self.leverage = self.members.iter().map(|m| m.weight * inv.quad_form(&m.f)).collect();
        self.leverage_valid = true;
        Ok(())
    }

    /// Offers one candidate.
    pub fn consider(&mut self, x: Member) -> Result<ExchangeOutcome> {
        let p = self.spec.dim();
        if x.f.len() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: x.f.len() });
        }
        if !(x.weight > 0.0) {
            return Err(Error::InvalidConfig(format!("member weight must be positive, got {}", x.weight)));
        }
        self.k += 1;
        if self.members.len() < self.n {
            self.info.select_update(&crate::criteria::ElementaryInfo::RankOne { f: x.f.clone(), weight: x.weight });
            self.members.push(x);
            self.leverage_valid = false;
            self.phi = phi(&self.spec, self.info.m())?;
            return Ok(ExchangeOutcome::Filled);
        }
        if self.members.iter().any(|m| m.key == x.key) {
            return Ok(ExchangeOutcome::Duplicate);
        }
        if !self.leverage_valid {
            self.refresh_leverage()?;
        }
        let inv = self.info.m_inv().expect("leverage refresh leaves a valid inverse");
        let sw = libm::sqrt(x.weight);
        let g: Vec<f64> = x.f.iter().map(|v| sw * v).collect();
        let inv_g = inv.mul_vec(&g);
        let a = dot(&g, &inv_g);
        let n = self.n as f64;

        let slot = match self.rule {
            ExchangeRule::Simplified => {
                let (slot, b) = self
                    .leverage
                    .iter()
                    .copied()
                    .enumerate()
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("active set is non-empty");
                if a > b {
                    Some(slot)
                } else {
                    None
                }
            }
            ExchangeRule::Exact => {
                // det ratio - 1 = [a - b + (c^2 - a b) / n] / n.
                let mut best: Option<(usize, f64)> = None;
                for (i, mem) in self.members.iter().enumerate() {
                    let b = self.leverage[i];
                    let c = libm::sqrt(mem.weight) * dot(&mem.f, &inv_g);
                    let delta = (a - b + (c * c - a * b) / n) / n;
                    if best.is_none_or(|(_, d)| delta > d) {
                        best = Some((i, delta));
                    }
                }
                best.filter(|&(_, d)| libm::log1p(d) > MIN_LOG_GAIN).map(|(i, _)| i)
            }
        };
        let Some(slot) = slot else {
            return Ok(ExchangeOutcome::Rejected);
        };
        let old = core::mem::replace(&mut self.members[slot], x);
        let new = &self.members[slot];
        self.info.rank_one_adjust(&new.f, new.weight / n);
        self.info.rank_one_adjust(&old.f, -old.weight / n);
        self.leverage_valid = false;
        self.phi = phi(&self.spec, self.info.m())?;
        Ok(ExchangeOutcome::Swapped { slot })
    }
}

/// Per-coordinate selection counts `(largest, smallest)` hitting `n`
/// exactly: `r = floor(n / 2d)` each, remainder pairs to the leading
/// coordinates, an odd leftover as one extra largest on the last.
pub fn iboss_counts(n: usize, d: usize) -> Vec<(usize, usize)> {
    if d == 0 {
        return Vec::new();
    }
    let r = n / (2 * d);
    let rem = n - 2 * d * r;
    let mut counts = vec![(r, r); d];
    for c in counts.iter_mut().take(rem / 2) {
        c.0 += 1;
        c.1 += 1;
    }
    if rem % 2 == 1 {
        counts[d - 1].0 += 1;
    }
    counts
}

/// IBOSS selection of `n` of the given points, inspecting coordinates in
/// `order` (default `0..d`). Returns indices in selection order.
pub fn iboss_select(points: &[Vec<f64>], n: usize, order: Option<&[usize]>) -> Result<Vec<usize>> {
    let total = points.len();
    if n > total {
        return Err(Error::InvalidConfig(format!("cannot select n={n} of N={total} points")));
    }
    if total == 0 {
        return Ok(Vec::new());
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidConfig("points have no coordinates".into()));
    }
    if let Some(bad) = points.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: bad.len() });
    }
    let default_order: Vec<usize> = (0..d).collect();
    let order = order.unwrap_or(&default_order);
    if order.len() != d || order.iter().any(|&c| c >= d) {
        return Err(Error::InvalidConfig(format!("coordinate order {order:?} is not a permutation of 0..{d}")));
    }
    let counts = iboss_counts(n, d);
    let mut alive: Vec<usize> = (0..total).collect();
    let mut picked = Vec::with_capacity(n);
    for (&coord, &(hi, lo)) in order.iter().zip(&counts) {
        alive.sort_unstable_by(|&i, &j| points[i][coord].total_cmp(&points[j][coord]).then(i.cmp(&j)));
        let hi = hi.min(alive.len());
        picked.extend(alive.drain(alive.len() - hi..).rev());
        let lo = lo.min(alive.len());
        picked.extend(alive.drain(..lo));
    }
    debug_assert_eq!(picked.len(), n);
    Ok(picked)
}

/// A one-dimensional marginal distribution.
pub trait Marginal {
    fn mean(&self) -> f64;
    fn second_moment(&self) -> f64;
    fn quantile(&self, u: f64) -> f64;
    fn density(&self, x: f64) -> f64;

    /// `int_a^b x^order density(x) dx`.
    fn partial_moment(&self, order: i32, a: f64, b: f64) -> Result<f64> {
        integrate(|x| libm::pow(x, order as f64) * self.density(x), a, b)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl Marginal for StandardNormal {
    fn mean(&self) -> f64 {
        0.0
    }

    fn second_moment(&self) -> f64 {
        1.0
    }

    fn quantile(&self, u: f64) -> f64 {
        normal_quantile(u)
    }

    fn density(&self, x: f64) -> f64 {
        normal_pdf(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Uniform {
    pub lo: f64,
    pub hi: f64,
}

impl Marginal for Uniform {
    fn mean(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    fn second_moment(&self) -> f64 {
        (self.hi * self.hi * self.hi - self.lo * self.lo * self.lo) / (3.0 * (self.hi - self.lo))
    }

    fn quantile(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }

    fn density(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            1.0 / (self.hi - self.lo)
        } else {
            0.0
        }
    }
}

/// Large-sample limit of `(1/n) sum x x^T` over the IBOSS selection of
/// `n = floor(alpha N)` of `N` points with independent coordinates
/// (inspected in the order given), as `N -> inf`.
pub fn v_iboss_asymptotic(marginals: &[&dyn Marginal], alpha: f64) -> Result<Matrix> {
    let d = marginals.len();
    if d == 0 {
        return Err(Error::Empty("marginals"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let df = d as f64;
    let mut pi = vec![0.0; d];
    let mut s = vec![0.0; d];
    let mut m = vec![0.0; d];
    if alpha < 1.0 {
        for (k, marg) in marginals.iter().enumerate() {
            let kf = (k + 1) as f64;
            let denom = df - (kf - 1.0) * alpha;
            pi[k] = (1.0 - alpha) * denom / (df - kf * alpha);
            let tail = alpha / (2.0 * denom);
            let lo = marg.quantile(tail);
            let hi = marg.quantile(1.0 - tail);
            s[k] = marg.partial_moment(2, lo, hi)?;
            m[k] = marg.partial_moment(1, lo, hi)?;
        }
    }
    let mut v = Matrix::zeros(d);
    for k in 0..d {
        v[(k, k)] = (marginals[k].second_moment() - pi[k] * s[k]) / alpha;
        for j in (k + 1)..d {
            let cross = if alpha < 1.0 { pi[k] * pi[j] / (1.0 - alpha) * m[k] * m[j] } else { 0.0 };
            v[(k, j)] = (marginals[k].mean() * marginals[j].mean() - cross) / alpha;
        }
    }
    v.mirror_upper();
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(f: Vec<f64>) -> Member {
        Member::new(MemberKey::Point(f.clone()), f)
    }

    #[test]
    fn exact_exchange_example() {
        let mut ex = ExchangeState::new(2, 2, ExchangeRule::Exact).unwrap();
        ex.consider(unit(vec![1.0, 0.0])).unwrap();
        ex.consider(unit(vec![0.0, 1.0])).unwrap();
        assert!((ex.phi() - libm::log(0.25)).abs() < 1e-15);
        let out = ex.consider(unit(vec![2.0, 0.0])).unwrap();
        assert_eq!(out, ExchangeOutcome::Swapped { slot: 0 });
        assert!(ex.phi().abs() < 1e-14);
        assert_eq!(ex.members()[1].f, vec![0.0, 1.0]);
        assert!(ex.info().inverse_residual().unwrap() < 1e-14);
    }

    #[test]
    fn duplicate_is_a_no_op() {
        let mut ex = ExchangeState::new(2, 2, ExchangeRule::Simplified).unwrap();
        ex.consider(unit(vec![1.0, 0.0])).unwrap();
        ex.consider(unit(vec![0.0, 1.0])).unwrap();
        let before = ex.info().m().clone();
        assert_eq!(ex.consider(unit(vec![1.0, 0.0])).unwrap(), ExchangeOutcome::Duplicate);
        assert_eq!(ex.info().m(), &before);
        let by_index = Member::new(MemberKey::Index(7), vec![3.0, 3.0]);
        let mut ex = ExchangeState::new(2, 2, ExchangeRule::Simplified).unwrap();
        ex.consider(by_index.clone()).unwrap();
        ex.consider(unit(vec![0.0, 1.0])).unwrap();
        assert_eq!(ex.consider(by_index).unwrap(), ExchangeOutcome::Duplicate);
    }

    #[test]
    fn exchange_rejects_small_sets() {
        assert!(ExchangeState::new(3, 2, ExchangeRule::Exact).is_err());
    }

    #[test]
    fn iboss_one_dimension() {
        let pts: Vec<Vec<f64>> = [-3.0, -1.0, 0.0, 2.0, 5.0].iter().map(|&x| vec![x]).collect();
        let mut sel = iboss_select(&pts, 2, None).unwrap();
        sel.sort_unstable();
        assert_eq!(sel, vec![0, 4]);
        let all = iboss_select(&pts, 5, None).unwrap();
        assert_eq!(all.len(), 5);
        assert!(iboss_select(&pts, 6, None).is_err());
    }

    #[test]
    fn iboss_order_matters() {
        // The first axis inspected takes the diagonal extremes, leaving the
        // second axis to pick different points depending on the order.
        let pts =
            vec![vec![3.0, 3.0], vec![-3.0, -3.0], vec![0.0, 2.0], vec![0.0, -2.0], vec![2.0, 0.0], vec![-2.0, 0.0]];
        let mut a = iboss_select(&pts, 4, Some(&[0, 1])).unwrap();
        let mut b = iboss_select(&pts, 4, Some(&[1, 0])).unwrap();
        a.sort_unstable();
        b.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
        assert_eq!(b, vec![0, 1, 4, 5]);
    }

    #[test]
    fn iboss_rounding() {
        assert_eq!(iboss_counts(12, 3), vec![(2, 2); 3]);
        assert_eq!(iboss_counts(15, 3), vec![(3, 3), (2, 2), (3, 2)]);
        for n in 0..40 {
            let total: usize = iboss_counts(n, 4).iter().map(|c| c.0 + c.1).sum();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn v_iboss_uniform_square() {
        let u = Uniform { lo: -1.0, hi: 1.0 };
        for &a in &[0.05, 0.2, 0.5, 0.8] {
            let v = v_iboss_asymptotic(&[&u, &u], a).unwrap();
            let d1 = (8.0 - 5.0 * a + a * a) / 12.0;
            let d2 = (8.0 - 11.0 * a + 4.0 * a * a) / (3.0 * (2.0 - a) * (2.0 - a));
            assert!((v[(0, 0)] - d1).abs() < 1e-9, "alpha={a}");
            assert!((v[(1, 1)] - d2).abs() < 1e-9, "alpha={a}");
            assert!(v[(0, 1)].abs() < 1e-10);
        }
        let v = v_iboss_asymptotic(&[&u, &u], 1.0).unwrap();
        assert!((v[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((v[(1, 1)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn v_iboss_normal_symmetric() {
        let n = StandardNormal;
        let v = v_iboss_asymptotic(&[&n, &n, &n], 0.1).unwrap();
        assert_eq!(v.max_asymmetry(), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(v[(i, j)].abs() <= 1e-10);
                }
            }
        }
    }
}
