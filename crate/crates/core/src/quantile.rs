//! Recursive estimation of the `(1 - alpha)`-quantile of a slowly drifting
//! score distribution, together with a kernel-type estimate of the score
//! density at that quantile.
//!
//! The quantile gain is `beta_k / (k + 1)^q` with
//! `beta_k = min(1 / f_k, beta0 k^gamma)`; the density estimate uses the
//! shrinking window `h_k = h / k^gamma`.

use alloc::format;
use alloc::vec::Vec;

use libm::pow;

use crate::numeric::{ceil_tol, floor_tol};
use crate::{Error, Result};

/// Step-size and bandwidth schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileConfig {
    /// Tail fraction; the estimator targets the `(1 - alpha)`-quantile.
    pub alpha: f64,
    /// Gain exponent `q`.
    pub q_exp: f64,
    /// Bandwidth exponent `gamma`, with `0 < gamma < q - 1/2`.
    pub gamma: f64,
    /// Lower bound `eps2` on `beta_k`.
    pub beta_floor: f64,
    /// Relative floor on the initial window `h`; the effective floor is
    /// `h_floor * max(1, |C|)`.
    pub h_floor: f64,
}

impl QuantileConfig {
    pub const DEFAULT_Q_EXP: f64 = 0.625;
    pub const DEFAULT_GAMMA: f64 = 0.1;
    pub const DEFAULT_H_FLOOR: f64 = 1e-9;

    /// Default schedule (`q = 5/8`, `gamma = 1/10`, no `beta` floor).
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = QuantileConfig {
            alpha,
            q_exp: Self::DEFAULT_Q_EXP,
            gamma: Self::DEFAULT_GAMMA,
            beta_floor: 0.0,
            h_floor: Self::DEFAULT_H_FLOOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.q_exp > 0.5 && self.q_exp <= 1.0) {
            return Err(Error::InvalidConfig(format!("q must lie in (1/2, 1], got {}", self.q_exp)));
        }
        if !(self.gamma > 0.0 && self.gamma < self.q_exp - 0.5) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, q - 1/2) = (0, {}), got {}",
                self.q_exp - 0.5,
                self.gamma
            )));
        }
        if !(self.beta_floor >= 0.0) || !self.beta_floor.is_finite() {
            return Err(Error::InvalidConfig(format!("beta floor must be >= 0, got {}", self.beta_floor)));
        }
        if !(self.h_floor > 0.0) || !self.h_floor.is_finite() {
            return Err(Error::InvalidConfig(format!("h floor must be > 0, got {}", self.h_floor)));
        }
        Ok(())
    }
}

/// Indices (1-based, ascending order statistics) used by the initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitIndices {
    /// `ceil((1 - alpha) k0)`.
    pub quantile: usize,
    /// `ceil((1 - alpha/2) k0)`.
    pub upper: usize,
    /// `max(floor((1 - 3 alpha/2) k0), 1)`.
    pub lower: usize,
}

impl InitIndices {
    pub fn new(alpha: f64, k0: usize) -> Self {
        let k = k0 as f64;
        let clamp = |i: f64| (i as usize).clamp(1, k0);
        InitIndices {
            quantile: clamp(ceil_tol((1.0 - alpha) * k)),
            upper: clamp(ceil_tol((1.0 - 0.5 * alpha) * k)),
            lower: clamp(floor_tol((1.0 - 1.5 * alpha) * k).max(1.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileState {
    c_hat: f64,
    f_hat: f64,
    beta0: f64,
    h_base: f64,
    k: u64,
}

impl QuantileState {
    /// Initializes from the first `k0` scores, with `k = k0`.
    pub fn init_from_sample(cfg: &QuantileConfig, scores: &[f64]) -> Result<Self> {
        Self::init_with_alpha(cfg, scores, cfg.alpha)
    }

    /// As [`init_from_sample`](Self::init_from_sample) with an overriding
    /// tail fraction.
    pub fn init_with_alpha(cfg: &QuantileConfig, scores: &[f64], alpha: f64) -> Result<Self> {
        let k0 = scores.len();
        if k0 < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 initial scores, got {k0}")));
        }
        if scores.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("initial score"));
        }
        let mut zeta: Vec<f64> = scores.to_vec();
        zeta.sort_by(f64::total_cmp);
        let idx = InitIndices::new(alpha, k0);
        let c_hat = zeta[idx.quantile - 1];
        let floor = cfg.h_floor * c_hat.abs().max(1.0);
        let h = (zeta[idx.upper - 1] - zeta[idx.lower - 1]).max(floor);
        // upper > lower unless k0 is tiny; guard the division all the same.
        let spread = idx.upper.saturating_sub(idx.lower).max(1);
        let beta0 = k0 as f64 / spread as f64;
        let h_k0 = h / pow(k0 as f64, cfg.gamma);
        let hits = zeta.iter().filter(|&&z| (z - c_hat).abs() <= h_k0).count();
        let f_hat = hits as f64 / (2.0 * k0 as f64 * h_k0);
        Ok(QuantileState { c_hat, f_hat, beta0, h_base: h, k: k0 as u64 })
    }

    /// Builds a state from explicit components.
    pub fn from_parts(c_hat: f64, f_hat: f64, beta0: f64, h_base: f64, k: u64) -> Result<Self> {
        if !c_hat.is_finite() || !(f_hat >= 0.0) || !(beta0 > 0.0) || !(h_base > 0.0) || k == 0 {
            return Err(Error::InvalidConfig(format!(
                "invalid quantile state: c={c_hat} f={f_hat} beta0={beta0} h={h_base} k={k}"
            )));
        }
        Ok(QuantileState { c_hat, f_hat, beta0, h_base, k })
    }

    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    pub fn f_hat(&self) -> f64 {
        self.f_hat
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn h_base(&self) -> f64 {
        self.h_base
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    /// Window `h_k = h / k^gamma`.
    pub fn bandwidth(&self, cfg: &QuantileConfig, k: u64) -> f64 {
        self.h_base / pow(k as f64, cfg.gamma)
    }

    /// `beta_k = max(eps2, min(1 / f_k, beta0 k^gamma))`.
    pub fn beta(&self, cfg: &QuantileConfig, k: u64) -> f64 {
        let cap = self.beta0 * pow(k as f64, cfg.gamma);
        let b = if self.f_hat > 0.0 { (1.0 / self.f_hat).min(cap) } else { cap };
        b.max(cfg.beta_floor)
    }

    /// One recursion step at the current `k` driven by score `z`.
    pub fn step(&mut self, cfg: &QuantileConfig, z: f64) -> Result<()> {
        self.step_with_alpha(cfg, z, cfg.alpha)
    }

    /// As [`step`](Self::step) with an overriding tail fraction.
    pub fn step_with_alpha(&mut self, cfg: &QuantileConfig, z: f64, alpha: f64) -> Result<()> {
        if !z.is_finite() {
            return Err(Error::NonFinite("quantile score"));
        }
        let beta = self.beta(cfg, self.k);
        self.advance(cfg, z, beta, alpha);
        Ok(())
    }

    pub(crate) fn advance(&mut self, cfg: &QuantileConfig, z: f64, beta: f64, alpha: f64) {
        let k1 = (self.k + 1) as f64;
        let gain = pow(k1, -cfg.q_exp);
        let c_old = self.c_hat;
        let hit = if z >= c_old { 1.0 } else { 0.0 };
        self.c_hat = c_old + beta * gain * (hit - alpha);
        let h1 = self.h_base / pow(k1, cfg.gamma);
        let inside = if (z - c_old).abs() <= h1 { 1.0 / (2.0 * h1) } else { 0.0 };
        self.f_hat += gain * (inside - self.f_hat);
        self.k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> QuantileConfig {
        QuantileConfig::new(alpha).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(QuantileConfig::new(0.0).is_err());
        assert!(QuantileConfig::new(1.0).is_err());
        let mut c = cfg(0.1);
        c.gamma = 0.2;
        assert!(c.validate().is_err());
        c.gamma = 0.1;
        c.q_exp = 0.5;
        assert!(c.validate().is_err());
        c.q_exp = 1.0;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn init_arithmetic_half() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        let c = cfg(0.5);
        let idx = InitIndices::new(0.5, 10);
        assert_eq!((idx.quantile, idx.upper, idx.lower), (5, 8, 2));
        let s = QuantileState::init_from_sample(&c, &scores).unwrap();
        assert_eq!(s.c_hat(), 5.0);
        assert_eq!(s.h_base(), 6.0);
        assert!((s.beta0() - 10.0 / 6.0).abs() < 1e-15);
        assert_eq!(s.k(), 10);
        // Window 6 / 10^0.1 ~ 4.77 around 5 covers 1..=9.
        let h = 6.0 / libm::pow(10.0, 0.1);
        assert!((s.f_hat() - 9.0 / (20.0 * h)).abs() < 1e-15);
    }

    #[test]
    fn init_indices_tenth() {
        let idx = InitIndices::new(0.1, 15);
        assert_eq!(idx.quantile, 14);
        assert_eq!(idx.lower, 12);
        assert_eq!(idx.upper, 15);
    }

    #[test]
    fn init_constant_scores_clamps_window() {
        let c = cfg(0.2);
        let s = QuantileState::init_from_sample(&c, &[3.0; 12]).unwrap();
        assert_eq!(s.c_hat(), 3.0);
        assert_eq!(s.h_base(), c.h_floor * 3.0);
        assert!(QuantileState::init_from_sample(&c, &[1.0]).is_err());
    }

    #[test]
    fn beta_branches() {
        let mut c = cfg(0.1);
        let zero = QuantileState::from_parts(0.0, 0.0, 2.0, 1.0, 1).unwrap();
        assert_eq!(zero.beta(&c, 1), 2.0);
        let dense = QuantileState::from_parts(0.0, 10.0, 2.0, 1.0, 1).unwrap();
        assert!((dense.beta(&c, 1) - 0.1).abs() < 1e-16);
        c.beta_floor = 0.5;
        assert_eq!(dense.beta(&c, 1), 0.5);
    }

    #[test]
    fn step_arithmetic() {
        let c = cfg(0.1);
        let mut s = QuantileState { c_hat: 0.0, f_hat: 0.0, beta0: 1.0, h_base: 1.0, k: 0 };
        s.advance(&c, 1.0, 1.0, 0.1);
        assert!((s.c_hat() - 0.9).abs() < 1e-15);
        let mut s = QuantileState { c_hat: 0.0, f_hat: 0.0, beta0: 1.0, h_base: 1.0, k: 0 };
        s.advance(&c, -1.0, 1.0, 0.1);
        assert!((s.c_hat() + 0.1).abs() < 1e-15);
        // |z - C_old| = 1 <= h_1 = 1, so f jumps to 1 / 2 with unit gain.
        assert_eq!(s.f_hat(), 0.5);
        assert_eq!(s.k(), 1);
    }

    #[test]
    fn step_rejects_non_finite() {
        let c = cfg(0.1);
        let mut s = QuantileState::from_parts(0.0, 1.0, 1.0, 1.0, 5).unwrap();
        assert!(s.step(&c, f64::INFINITY).is_err());
        assert!(s.step(&c, f64::NAN).is_err());
        assert_eq!(s.k(), 5);
    }
}
