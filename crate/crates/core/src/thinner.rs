//! Online thinning of a candidate stream.
//!
//! Each candidate is scored by the directional derivative of the criterion
//! at the current information matrix of the selected points, and kept when
//! the score reaches the running estimate of its `(1 - alpha)`-quantile.
//! The matrix moves on the slow `1/n` scale, the threshold on the faster
//! `k^-q` scale.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::criteria::{phi, CriterionSpec, ElementaryInfo, InfoState, Scorer, DEFAULT_REFRESH_PERIOD};
use crate::linalg::Matrix;
use crate::quantile::{QuantileConfig, QuantileState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Mode {
    /// Keep a fraction `alpha` of an unbounded stream.
    FixedAlpha,
    /// Keep exactly `n_target` of `horizon` candidates by forcing selections
    /// or rejections when the quota demands it.
    TruncateForce { n_target: u64, horizon: u64 },
    /// Keep exactly `n_target` of `horizon` candidates, retargeting the tail
    /// fraction to `(n_target - n_k) / (horizon - k)` at every step.
    AdaptiveAlpha { n_target: u64, horizon: u64 },
    /// Second pass against a frozen matrix and threshold.
    ReplayPhase2 { frozen_m: Matrix, frozen_threshold: f64, n_target: u64, horizon: u64 },
}

impl Mode {
    fn quota(&self) -> Option<(u64, u64)> {
        match *self {
            Mode::FixedAlpha => None,
            Mode::TruncateForce { n_target, horizon }
            | Mode::AdaptiveAlpha { n_target, horizon }
            | Mode::ReplayPhase2 { n_target, horizon, .. } => Some((n_target, horizon)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThinnerConfig {
    pub criterion: CriterionSpec,
    pub alpha: f64,
    pub mode: Mode,
    /// Number of initially selected candidates; at least `p`.
    pub k0: usize,
    /// Minimal selection rate `eps1`; `0` disables the safeguard.
    pub eps1: f64,
    pub quantile: QuantileConfig,
    /// Seeds the permutations of [`run_replay`]. Plain thinning draws no
    /// random numbers.
    pub seed: u64,
    pub refresh_period: u64,
}

impl ThinnerConfig {
    /// Fixed-`alpha` configuration with `k0 = 5p`, `q = 5/8`,
    /// `gamma = 1/10`, `eps1 = 0`.
    pub fn new(criterion: CriterionSpec, alpha: f64) -> Result<Self> {
        let cfg = ThinnerConfig {
            criterion,
            alpha,
            mode: Mode::FixedAlpha,
            k0: 5 * criterion.dim(),
            eps1: 0.0,
            quantile: QuantileConfig::new(alpha)?,
            seed: 0,
            refresh_period: DEFAULT_REFRESH_PERIOD,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Quota configuration keeping `n` of `horizon` candidates with
    /// `alpha = n / horizon`.
    pub fn with_quota(criterion: CriterionSpec, n: u64, horizon: u64, adaptive: bool) -> Result<Self> {
        if horizon == 0 || n == 0 || n >= horizon {
            return Err(Error::InvalidConfig(format!("need 0 < n < N, got n={n} N={horizon}")));
        }
        let mut cfg = Self::new(criterion, n as f64 / horizon as f64)?;
        cfg.mode = if adaptive {
            Mode::AdaptiveAlpha { n_target: n, horizon }
        } else {
            Mode::TruncateForce { n_target: n, horizon }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.k0 < self.criterion.dim() {
            return Err(Error::InvalidConfig(format!(
                "k0 = {} is below the parameter dimension {}",
                self.k0,
                self.criterion.dim()
            )));
        }
        if self.k0 < 2 {
            return Err(Error::InvalidConfig(format!("k0 must be >= 2, got {}", self.k0)));
        }
        if !(self.eps1 >= 0.0 && self.eps1 < self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "eps1 must lie in [0, alpha) = [0, {}), got {}",
                self.alpha, self.eps1
            )));
        }
        self.quantile.validate()?;
        if let Some((n, horizon)) = self.mode.quota() {
            if n > horizon {
                return Err(Error::InvalidConfig(format!("quota n={n} exceeds horizon N={horizon}")));
            }
            if !matches!(self.mode, Mode::ReplayPhase2 { .. }) && n < self.k0 as u64 {
                return Err(Error::InvalidConfig(format!("quota n={n} is below k0={}", self.k0)));
            }
        }
        if let Mode::ReplayPhase2 { frozen_m, frozen_threshold, .. } = &self.mode {
            if frozen_m.dim() != self.criterion.dim() {
                return Err(Error::DimensionMismatch { expected: self.criterion.dim(), actual: frozen_m.dim() });
            }
            if !frozen_threshold.is_finite() {
                return Err(Error::NonFinite("frozen threshold"));
            }
        }
        Ok(())
    }
}

/// Why a decision departed from the plain threshold rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Forced {
    None,
    /// One of the initial, unconditionally selected candidates.
    Warmup,
    /// Selected because the selection rate fell to `eps1`.
    Eps1Force,
    /// Selected because every remaining candidate is needed.
    QuotaForceSelect,
    /// Rejected because the quota is full.
    QuotaForceReject,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    /// 1-based index of the candidate in the stream.
    pub k: u64,
    pub selected: bool,
    /// Raw directional derivative; NaN during warm-up.
    pub score: f64,
    /// Threshold in force when the decision was taken; NaN during warm-up.
    pub threshold: f64,
    pub forced: Forced,
    /// Criterion value of the selected points after the decision.
    pub phi_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Collecting,
    Running,
}

#[derive(Debug, Clone)]
pub struct Thinner {
    cfg: ThinnerConfig,
    info: InfoState,
    quant: Option<QuantileState>,
    scorer: Option<Scorer>,
    warmup: Vec<ElementaryInfo>,
    k: u64,
    phi: f64,
    phase: Phase,
}

impl Thinner {
    pub fn new(cfg: ThinnerConfig) -> Result<Self> {
        cfg.validate()?;
        let info = InfoState::with_refresh_period(&cfg.criterion, cfg.refresh_period);
        let (phase, scorer) = match &cfg.mode {
            Mode::ReplayPhase2 { frozen_m, .. } => {
                (Phase::Running, Some(Scorer::from_matrix(&cfg.criterion, frozen_m)?))
            }
            _ => (Phase::Collecting, None),
        };
        Ok(Thinner { cfg, info, quant: None, scorer, warmup: Vec::new(), k: 0, phi: f64::NEG_INFINITY, phase })
    }

    pub fn config(&self) -> &ThinnerConfig {
        &self.cfg
    }

    pub fn info(&self) -> &InfoState {
        &self.info
    }

    pub fn quantile(&self) -> Option<&QuantileState> {
        self.quant.as_ref()
    }

    /// Candidates seen so far.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Candidates selected so far.
    pub fn n_selected(&self) -> u64 {
        self.info.count()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Criterion value of the current selection.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Current threshold: the quantile estimate, or the frozen threshold in
    /// replay mode. NaN before initialization completes.
    pub fn threshold(&self) -> f64 {
        match (&self.cfg.mode, &self.quant) {
            (Mode::ReplayPhase2 { frozen_threshold, .. }, _) => *frozen_threshold,
            (_, Some(q)) => q.c_hat(),
            _ => f64::NAN,
        }
    }

    /// Tail fraction in force for the next candidate.
    pub fn current_alpha(&self) -> f64 {
        match self.cfg.mode {
            Mode::AdaptiveAlpha { n_target, horizon } => {
                let left = horizon.saturating_sub(self.k);
                if left == 0 {
                    return 0.0;
                }
                (n_target.saturating_sub(self.n_selected()) as f64 / left as f64).clamp(0.0, 1.0)
            }
            _ => self.cfg.alpha,
        }
    }

    /// Processes one candidate.
    pub fn observe(&mut self, x: &ElementaryInfo) -> Result<Decision> {
        let p = self.cfg.criterion.dim();
        if x.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, actual: x.dim() });
        }
        if let Some((_, horizon)) = self.cfg.mode.quota() {
            if self.k >= horizon {
                return Err(Error::HorizonExceeded { horizon });
            }
        }
        match self.phase {
            Phase::Collecting => self.collect(x),
            Phase::Running => self.decide(x),
        }
    }

    fn collect(&mut self, x: &ElementaryInfo) -> Result<Decision> {
        if let Some((n_target, _)) = self.cfg.mode.quota() {
            if self.n_selected() >= n_target {
                return Err(Error::InvalidConfig(format!(
                    "quota n={n_target} exhausted before the initial matrix became nonsingular"
                )));
            }
        }
        self.k += 1;
        self.info.select_update(x);
        self.warmup.push(x.clone());
        if self.warmup.len() >= self.cfg.k0 && !self.info.is_singular() {
            self.start_running()?;
        }
        self.phi = phi(&self.cfg.criterion, self.info.m())?;
        Ok(Decision {
            k: self.k,
            selected: true,
            score: f64::NAN,
            threshold: f64::NAN,
            forced: Forced::Warmup,
            phi_after: self.phi,
        })
    }

    fn start_running(&mut self) -> Result<()> {
        let scorer = Scorer::new(&self.cfg.criterion, &self.info)?;
        let scores: Vec<f64> = self.warmup.iter().map(|e| scorer.score(e)).collect();
        let alpha = self.current_alpha().clamp(f64::MIN_POSITIVE, 1.0);
        self.quant = Some(QuantileState::init_with_alpha(&self.cfg.quantile, &scores, alpha)?);
        self.scorer = Some(scorer);
        self.warmup = Vec::new();
        self.phase = Phase::Running;
        Ok(())
    }

    fn decide(&mut self, x: &ElementaryInfo) -> Result<Decision> {
        let scorer = self.scorer.as_ref().expect("running thinner has a scorer");
        let score = scorer.score(x);
        if !score.is_finite() {
            return Err(Error::NonFinite("candidate score"));
        }
        let threshold = self.threshold();
        let n_k = self.n_selected();
        let k = self.k;
        let alpha = self.current_alpha();

        let mut forced = Forced::None;
        if self.cfg.eps1 > 0.0 && n_k as f64 / k as f64 <= self.cfg.eps1 {
            forced = Forced::Eps1Force;
        }
        if let Some((n_target, horizon)) = self.cfg.mode.quota() {
            if n_k >= n_target {
                forced = Forced::QuotaForceReject;
            } else if n_target - n_k >= horizon - k {
                forced = Forced::QuotaForceSelect;
            }
        }
        let selected = match forced {
            Forced::None => score >= threshold,
            Forced::QuotaForceReject => false,
            _ => true,
        };

        if selected {
            self.info.select_update(x);
            if !matches!(self.cfg.mode, Mode::ReplayPhase2 { .. }) {
                self.scorer = Some(Scorer::new(&self.cfg.criterion, &self.info)?);
            }
            self.phi = phi(&self.cfg.criterion, self.info.m())?;
        }
        if let Some(q) = self.quant.as_mut() {
            q.step_with_alpha(&self.cfg.quantile, score, alpha)?;
        }
        self.k += 1;
        Ok(Decision { k: self.k, selected, score, threshold, forced, phi_after: self.phi })
    }
}

/// First phase of the two-pass scheme: thins `passes` copies of `data`
/// (each shuffled when `permute` is set) with fixed `alpha` and returns the
/// final matrix and threshold for a [`Mode::ReplayPhase2`] pass.
pub fn run_replay(cfg: &ThinnerConfig, data: &[ElementaryInfo], passes: usize, permute: bool) -> Result<(Matrix, f64)> {
    if data.is_empty() {
        return Err(Error::Empty("replay dataset"));
    }
    if passes == 0 {
        return Err(Error::InvalidConfig("replay needs at least one pass".into()));
    }
    let mut cfg = cfg.clone();
    cfg.mode = Mode::FixedAlpha;
    let mut thinner = Thinner::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(thinner.cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..passes {
        if permute {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            thinner.observe(&data[i])?;
        }
    }
    if thinner.phase != Phase::Running {
        return Err(Error::Singular { rcond: thinner.info.m().rcond_estimate() });
    }
    Ok((thinner.info.m().clone(), thinner.threshold()))
}

impl ThinnerConfig {
    /// Second-phase configuration from the output of [`run_replay`].
    pub fn replay_phase2(&self, frozen: (Matrix, f64), n_target: u64, horizon: u64) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.mode = Mode::ReplayPhase2 { frozen_m: frozen.0, frozen_threshold: frozen.1, n_target, horizon };
        cfg.validate()?;
        Ok(cfg)
    }
}
