//! Single experiment runs: stream, optional scrambler, selector, sinks.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use thin_core::baselines::{iboss_select, ExchangeOutcome, ExchangeRule, ExchangeState, Member, MemberKey};
use thin_core::criteria::{phi, CriterionSpec, ElementaryInfo};
use thin_core::linalg::Matrix;
use thin_core::scrambler::scramble;
use thin_core::thinner::{run_replay, Thinner, ThinnerConfig};

use crate::oracle::OracleName;
use crate::stream::{Source, StreamSpec};
use crate::trace::{TraceRecord, TraceWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Thinner,
    Exchange,
    Iboss,
}

impl FromStr for MethodKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "thinner" => MethodKind::Thinner,
            "exchange" => MethodKind::Exchange,
            "iboss" => MethodKind::Iboss,
            _ => bail!("unknown method {s:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeKind {
    #[default]
    Fixed,
    Force,
    Adaptive,
}

impl FromStr for ModeKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fixed" => ModeKind::Fixed,
            "force" => ModeKind::Force,
            "adaptive" => ModeKind::Adaptive,
            _ => bail!("unknown mode {s:?}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CriterionChoice {
    #[default]
    LogDet,
    /// `-tr(M^-q)`.
    TraceInvPow(f64),
}

impl CriterionChoice {
    pub fn spec(&self, p: usize) -> Result<CriterionSpec> {
        Ok(match *self {
            CriterionChoice::LogDet => CriterionSpec::log_det(p)?,
            CriterionChoice::TraceInvPow(q) => CriterionSpec::neg_trace_inv_pow(p, q)?,
        })
    }
}

impl FromStr for CriterionChoice {
    type Err = anyhow::Error;

    /// `logdet` or `trace:Q`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "logdet" => Ok(CriterionChoice::LogDet),
            Some(("trace", q)) => Ok(CriterionChoice::TraceInvPow(q.parse().context("bad criterion power")?)),
            _ => bail!("unknown criterion {s:?}"),
        }
    }
}

impl fmt::Display for CriterionChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriterionChoice::LogDet => write!(f, "logdet"),
            CriterionChoice::TraceInvPow(q) => write!(f, "trace:{q}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: MethodKind,
    /// Fraction to keep; derived from `n` and `N` when absent.
    pub alpha: Option<f64>,
    /// Number to keep; `floor(alpha N)` when absent.
    pub n: Option<u64>,
    pub mode: ModeKind,
    pub criterion: CriterionChoice,
    pub k0: Option<usize>,
    pub eps1: f64,
    pub q_exp: Option<f64>,
    pub gamma: Option<f64>,
    pub exchange_rule: ExchangeRule,
    /// Passes of the two-pass replay scheme; `None` for plain thinning.
    pub replay_passes: Option<usize>,
    pub replay_permute: bool,
    pub scramble_buffer: Option<usize>,
}

impl MethodConfig {
    pub fn new(method: MethodKind) -> Self {
        MethodConfig {
            method,
            alpha: None,
            n: None,
            mode: ModeKind::Fixed,
            criterion: CriterionChoice::LogDet,
            k0: None,
            eps1: 0.0,
            q_exp: None,
            gamma: None,
            exchange_rule: ExchangeRule::default(),
            replay_passes: None,
            replay_permute: true,
            scramble_buffer: None,
        }
    }

    pub fn thinner(alpha: f64) -> Self {
        MethodConfig { alpha: Some(alpha), ..Self::new(MethodKind::Thinner) }
    }

    pub fn quota(method: MethodKind, n: u64, mode: ModeKind) -> Self {
        MethodConfig { n: Some(n), mode, ..Self::new(method) }
    }

    /// `(alpha, n)` for a stream of length `horizon`.
    fn resolve(&self, horizon: u64) -> Result<(f64, u64)> {
        ensure!(horizon > 0, "empty stream");
        match (self.alpha, self.n) {
            (Some(_), Some(_)) => bail!("give either alpha or n, not both"),
            (Some(a), None) => {
                ensure!(a > 0.0 && a < 1.0, "alpha must lie in (0, 1), got {a}");
                Ok((a, (a * horizon as f64).floor() as u64))
            }
            (None, Some(n)) => {
                ensure!(n > 0 && n <= horizon, "n must lie in [1, N = {horizon}], got {n}");
                Ok((n as f64 / horizon as f64, n))
            }
            (None, None) => bail!("either alpha or n is required"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub stream: StreamSpec,
    pub method: MethodConfig,
    pub oracle: Option<OracleName>,
    /// Replication index, selecting independent random streams.
    pub rep: u64,
}

/// Where a run reports, besides its summary.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub trace_path: Option<PathBuf>,
    /// Writes the candidates as fed to the selector (after scrambling).
    pub record_stream: Option<PathBuf>,
    pub collect_trace: bool,
    pub keep_selected: bool,
    /// Values of `k` at which to record the state.
    pub checkpoints: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub k: u64,
    pub n_k: u64,
    pub phi: f64,
    pub efficiency: Option<f64>,
    /// Frobenius distance to the optimal matrix.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: MethodKind,
    pub stream: String,
    pub model: String,
    pub criterion: String,
    pub seed: u64,
    pub rep: u64,
    pub horizon: u64,
    pub alpha: f64,
    pub n_target: u64,
    pub k: u64,
    pub n_selected: u64,
    pub phi: f64,
    pub threshold: Option<f64>,
    pub efficiency: Option<f64>,
    pub phi_star: Option<f64>,
    pub c_star: Option<f64>,
    pub runtime_secs: f64,
    pub m: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub m: Matrix,
    pub trace: Vec<TraceRecord>,
    /// Raw points of the final selection, when requested.
    pub selected: Vec<Vec<f64>>,
    pub checkpoints: Vec<Checkpoint>,
}

struct Sinks {
    writer: Option<TraceWriter<BufWriter<File>>>,
    recorder: Option<BufWriter<File>>,
    trace: Option<Vec<TraceRecord>>,
    checkpoints: Vec<u64>,
    next_checkpoint: usize,
    recorded: Vec<Checkpoint>,
    /// `(phi_star, p, M*)` when an oracle is attached and efficiencies apply.
    reference: Option<(f64, usize, Matrix)>,
}

impl Sinks {
    fn efficiency(&self, phi: f64) -> Option<f64> {
        self.reference.as_ref().map(|(phi_star, p, _)| ((phi - phi_star) / *p as f64).exp())
    }

    fn candidate(&mut self, raw: &[f64]) -> Result<()> {
        if let Some(w) = self.recorder.as_mut() {
            let line: Vec<String> = raw.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(",")).context("cannot write recorded stream")?;
        }
        Ok(())
    }

    fn push(&mut self, mut rec: TraceRecord, m: &Matrix) -> Result<()> {
        rec.efficiency = self.efficiency(rec.phi);
        while self.next_checkpoint < self.checkpoints.len() && self.checkpoints[self.next_checkpoint] <= rec.k {
            if self.checkpoints[self.next_checkpoint] == rec.k {
                self.recorded.push(Checkpoint {
                    k: rec.k,
                    n_k: rec.n_k,
                    phi: rec.phi,
                    efficiency: rec.efficiency,
                    distance: self.reference.as_ref().map(|(_, _, ms)| m.sub(ms).frobenius_norm()),
                });
            }
            self.next_checkpoint += 1;
        }
        if let Some(w) = self.writer.as_mut() {
            w.write(&rec)?;
        }
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
        Ok(())
    }

    fn finish(self) -> Result<(Vec<TraceRecord>, Vec<Checkpoint>)> {
        if let Some(w) = self.writer {
            w.finish().context("cannot write trace")?;
        }
        if let Some(mut r) = self.recorder {
            r.flush().context("cannot write recorded stream")?;
        }
        Ok((self.trace.unwrap_or_default(), self.recorded))
    }
}

struct Outcome {
    m: Matrix,
    phi: f64,
    k: u64,
    n_selected: u64,
    threshold: Option<f64>,
    selected: Vec<Vec<f64>>,
}

fn record(k: u64, selected: bool, n_k: u64, score: f64, threshold: f64, phi: f64) -> TraceRecord {
    TraceRecord { k, selected, n_k, score, threshold, phi, efficiency: None }
}

/// Runs one experiment end to end.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let points = cfg.stream.points(cfg.rep)?;
    let horizon = points.size_hint().0 as u64;
    let mut points = points.peekable();
    let raw_dim = match (cfg.stream.source.raw_dim(), points.peek()) {
        (Some(d), _) => d,
        (None, Some(p)) => p.len(),
        (None, None) => bail!("stream is empty"),
    };
    let model = cfg.stream.model();
    let p = model.dim(raw_dim)?;
    let spec = cfg.method.criterion.spec(p)?;
    let (alpha, n) = cfg.method.resolve(horizon)?;

    let oracle = match cfg.oracle {
        Some(name) => {
            let name = name.for_source(&cfg.stream.source);
            Some(name.evaluate_for(alpha, model, p).with_context(|| format!("oracle {name}"))?)
        }
        None => None,
    };
    let reference = match (&oracle, cfg.method.criterion) {
        (Some(o), CriterionChoice::LogDet) => Some((o.phi_star, p, o.m_star.clone().expect("checked by evaluate_for"))),
        _ => None,
    };

    let mut checkpoints = opts.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut sinks = Sinks {
        writer: match &opts.trace_path {
            Some(path) => Some(TraceWriter::create(path, reference.is_some())?),
            None => None,
        },
        recorder: match &opts.record_stream {
            Some(path) => {
                Some(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
            }
            None => None,
        },
        trace: opts.collect_trace.then(Vec::new),
        checkpoints,
        next_checkpoint: 0,
        recorded: Vec::new(),
        reference,
    };

    let candidates: Box<dyn Iterator<Item = Vec<f64>>> = match cfg.method.scramble_buffer {
        Some(b) => Box::new(scramble(points, b, cfg.stream.scramble_rng(cfg.rep))?),
        None => Box::new(points),
    };
    let mut checked = candidates.enumerate().map(|(i, x)| {
        ensure!(x.len() == raw_dim, "candidate {} has {} coordinates, expected {raw_dim}", i + 1, x.len());
        Ok(x)
    });
    let is_file = matches!(cfg.stream.source, Source::File { .. });

    let out = match cfg.method.method {
        MethodKind::Thinner => {
            let mut tc = match cfg.method.mode {
                _ if cfg.method.replay_passes.is_some() => ThinnerConfig::new(spec, alpha)?,
                ModeKind::Fixed => ThinnerConfig::new(spec, alpha)?,
                ModeKind::Force => ThinnerConfig::with_quota(spec, n, horizon, false)?,
                ModeKind::Adaptive => ThinnerConfig::with_quota(spec, n, horizon, true)?,
            };
            if let Some(k0) = cfg.method.k0 {
                tc.k0 = k0;
            }
            tc.eps1 = cfg.method.eps1;
            if let Some(q) = cfg.method.q_exp {
                tc.quantile.q_exp = q;
            }
            if let Some(g) = cfg.method.gamma {
                tc.quantile.gamma = g;
            }
            tc.seed = cfg.stream.seed ^ cfg.rep.rotate_left(32);
            tc.validate()?;
            match cfg.method.replay_passes {
                None => run_thinner(tc, &mut checked, model_fn(cfg), &mut sinks, opts.keep_selected)?,
                Some(passes) => {
                    let raw: Vec<Vec<f64>> = checked.by_ref().collect::<Result<_>>()?;
                    let data: Vec<ElementaryInfo> =
                        raw.iter().map(|x| ElementaryInfo::unit(model.features(x))).collect();
                    let frozen = run_replay(&tc, &data, passes, cfg.method.replay_permute)?;
                    let tc2 = tc.replay_phase2(frozen, n, horizon)?;
                    let mut it = raw.into_iter().map(Ok);
                    run_thinner(tc2, &mut it, model_fn(cfg), &mut sinks, opts.keep_selected)?
                }
            }
        }
        MethodKind::Exchange => {
            let mut st = ExchangeState::new(p, n as usize, cfg.method.exchange_rule)?;
            let mut slots: Vec<Vec<f64>> = Vec::new();
            let mut k = 0u64;
            for x in checked {
                let x = x?;
                sinks.candidate(&x)?;
                let f = model.features(&x);
                let key = if is_file { MemberKey::Index(k) } else { MemberKey::Point(x.clone()) };
                k += 1;
                let outcome = st.consider(Member::new(key, f))?;
                let selected = matches!(outcome, ExchangeOutcome::Filled | ExchangeOutcome::Swapped { .. });
                if opts.keep_selected {
                    match outcome {
                        ExchangeOutcome::Filled => slots.push(x),
                        ExchangeOutcome::Swapped { slot } => slots[slot] = x,
                        _ => {}
                    }
                }
                let rec = record(k, selected, st.members().len() as u64, f64::NAN, f64::NAN, st.phi());
                sinks.push(rec, st.info().m())?;
            }
            Outcome {
                m: st.info().m().clone(),
                phi: st.phi(),
                k,
                n_selected: st.members().len() as u64,
                threshold: None,
                selected: slots,
            }
        }
        MethodKind::Iboss => {
            let raw: Vec<Vec<f64>> = checked.collect::<Result<_>>()?;
            let chosen = iboss_select(&raw, n as usize, None)?;
            let mut mask = vec![false; raw.len()];
            let mut m = Matrix::zeros(p);
            for &i in &chosen {
                mask[i] = true;
                m.add_outer(&model.features(&raw[i]), 1.0);
            }
            m.scale(1.0 / chosen.len() as f64);
            let final_phi = phi(&spec, &m)?;
            let mut n_k = 0;
            for (i, x) in raw.iter().enumerate() {
                sinks.candidate(x)?;
                n_k += u64::from(mask[i]);
                let last = i + 1 == raw.len();
                let rec =
                    record(i as u64 + 1, mask[i], n_k, f64::NAN, f64::NAN, if last { final_phi } else { f64::NAN });
                sinks.push(rec, &m)?;
            }
            let selected =
                if opts.keep_selected { chosen.iter().map(|&i| raw[i].clone()).collect() } else { Vec::new() };
            Outcome { m, phi: final_phi, k: raw.len() as u64, n_selected: n_k, threshold: None, selected }
        }
    };

    let efficiency = sinks.efficiency(out.phi);
    let (trace, checkpoints) = sinks.finish()?;
    let summary = Summary {
        method: cfg.method.method,
        stream: cfg.stream.source.to_string(),
        model: model.to_string(),
        criterion: cfg.method.criterion.to_string(),
        seed: cfg.stream.seed,
        rep: cfg.rep,
        horizon,
        alpha,
        n_target: n,
        k: out.k,
        n_selected: out.n_selected,
        phi: out.phi,
        threshold: out.threshold,
        efficiency,
        phi_star: oracle.as_ref().map(|o| o.phi_star),
        c_star: oracle.as_ref().map(|o| o.c_star),
        runtime_secs: start.elapsed().as_secs_f64(),
        m: (0..p).map(|i| out.m.row(i).to_vec()).collect(),
    };
    Ok(RunReport { summary, m: out.m, trace, selected: out.selected, checkpoints })
}

fn model_fn(cfg: &ExperimentConfig) -> impl Fn(&[f64]) -> Vec<f64> {
    let model = cfg.stream.model();
    move |x| model.features(x)
}

fn run_thinner(
    tc: ThinnerConfig,
    candidates: &mut dyn Iterator<Item = Result<Vec<f64>>>,
    features: impl Fn(&[f64]) -> Vec<f64>,
    sinks: &mut Sinks,
    keep_selected: bool,
) -> Result<Outcome> {
    let mut th = Thinner::new(tc)?;
    let mut selected = Vec::new();
    for x in candidates {
        let x = x?;
        sinks.candidate(&x)?;
        let d = th.observe(&ElementaryInfo::unit(features(&x)))?;
        if keep_selected && d.selected {
            selected.push(x);
        }
        let rec = record(d.k, d.selected, th.n_selected(), d.score, d.threshold, d.phi_after);
        sinks.push(rec, th.info().m())?;
    }
    let threshold = th.threshold();
    Ok(Outcome {
        m: th.info().m().clone(),
        phi: th.phi(),
        k: th.k(),
        n_selected: th.n_selected(),
        threshold: threshold.is_finite().then_some(threshold),
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_alpha_and_n() {
        let m = MethodConfig::thinner(0.1);
        assert_eq!(m.resolve(1000).unwrap(), (0.1, 100));
        let q = MethodConfig::quota(MethodKind::Thinner, 50, ModeKind::Force);
        assert_eq!(q.resolve(200).unwrap(), (0.25, 50));
        assert!(MethodConfig { n: Some(5), ..MethodConfig::thinner(0.1) }.resolve(10).is_err());
        assert!(MethodConfig::new(MethodKind::Iboss).resolve(10).is_err());
    }

    #[test]
    fn parse_choices() {
        assert_eq!("trace:1".parse::<CriterionChoice>().unwrap(), CriterionChoice::TraceInvPow(1.0));
        assert_eq!("logdet".parse::<CriterionChoice>().unwrap().to_string(), "logdet");
        assert!("det".parse::<CriterionChoice>().is_err());
        assert_eq!("adaptive".parse::<ModeKind>().unwrap(), ModeKind::Adaptive);
        assert_eq!("iboss".parse::<MethodKind>().unwrap(), MethodKind::Iboss);
    }
}
