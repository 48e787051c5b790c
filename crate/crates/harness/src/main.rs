use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thin_core::baselines::ExchangeRule;
use thin_harness::experiment::CriterionChoice;
use thin_harness::histogram::{epanechnikov, write_table};
use thin_harness::oracle::oracle_json;
use thin_harness::replicate::log_checkpoints;
use thin_harness::{
    run_experiment, run_replications, ExperimentConfig, MethodConfig, MethodKind, ModeKind, Model, OracleName,
    RunOptions, Source, StreamSpec,
};

#[derive(Parser)]
#[command(name = "thin", version, about = "Streaming selection of informative design points")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one selector over one stream.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Per-candidate trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the candidates, as fed to the selector, one per line.
        #[arg(long)]
        record_stream: Option<PathBuf>,
        /// Kernel density table of the selected (scalar) points.
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Histogram bandwidth; defaults to the range over 1000.
        #[arg(long)]
        bandwidth: Option<f64>,
    },
    /// Print the optimal design of a reference problem.
    Oracle {
        /// quad-normal, multilinear[:D], mixture, spheres[:D], quad01 or uniform-square.
        example: OracleName,
        #[arg(long)]
        alpha: f64,
    },
    /// Run independent replications in parallel and aggregate them.
    Replicate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 10)]
        reps: u64,
        /// Log-spaced checkpoints per decade of k.
        #[arg(long, default_value_t = 10)]
        per_decade: usize,
        /// Include every run's summary in the output.
        #[arg(long)]
        runs: bool,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// normal:D, uniform:D, quadratic-normal, mixture, spheres:D[:R1,R2,R3],
    /// ramp, sine[:NU] or file:PATH.
    #[arg(long)]
    stream: Source,
    /// identity, intercept, poly:DEG or poly-noint:DEG; defaults by stream.
    #[arg(long)]
    model: Option<Model>,
    #[arg(long, default_value = "thinner")]
    method: MethodKind,
    #[arg(long, conflicts_with = "n")]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Stream length N (all rows for files when omitted).
    #[arg(long)]
    horizon: Option<u64>,
    /// fixed, force or adaptive.
    #[arg(long, default_value = "fixed")]
    mode: ModeKind,
    /// logdet or trace:Q.
    #[arg(long, default_value = "logdet")]
    criterion: CriterionChoice,
    #[arg(long)]
    k0: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    eps1: f64,
    #[arg(long)]
    q_exp: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Use the exact determinant ratio in the exchange selector.
    #[arg(long)]
    exact_exchange: bool,
    /// Two-pass scheme: number of first-phase passes.
    #[arg(long)]
    replay_passes: Option<usize>,
    /// Keep the data order between first-phase passes.
    #[arg(long)]
    no_permute: bool,
    #[arg(long)]
    scramble_buffer: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attach an oracle: quad-normal, multilinear, mixture, spheres, quad01, uniform-square.
    #[arg(long)]
    oracle: Option<OracleName>,
    /// Write the JSON summary here instead of standard output.
    #[arg(long)]
    summary: Option<PathBuf>,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let n_total = match (&self.source_is_file(), self.horizon) {
            (true, h) => h.unwrap_or(0),
            (false, Some(h)) => h,
            (false, None) => bail!("--horizon is required for generated streams"),
        };
        let method = MethodConfig {
            method: self.method,
            alpha: self.alpha,
            n: self.n,
            mode: self.mode,
            criterion: self.criterion,
            k0: self.k0,
            eps1: self.eps1,
            q_exp: self.q_exp,
            gamma: self.gamma,
            exchange_rule: if self.exact_exchange { ExchangeRule::Exact } else { ExchangeRule::Simplified },
            replay_passes: self.replay_passes,
            replay_permute: !self.no_permute,
            scramble_buffer: self.scramble_buffer,
        };
        Ok(ExperimentConfig {
            stream: StreamSpec { source: self.stream.clone(), n_total, seed: self.seed, model: self.model },
            method,
            oracle: self.oracle,
            rep: 0,
        })
    }

    fn source_is_file(&self) -> bool {
        matches!(self.stream, Source::File { .. })
    }

    fn emit(&self, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        match &self.summary {
            Some(path) => fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display())),
            None => {
                println!("{text}");
                Ok(())
            }
        }
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { exp, trace, record_stream, histogram, bandwidth } => {
            let cfg = exp.config()?;
            let opts = RunOptions {
                trace_path: trace,
                record_stream,
                keep_selected: histogram.is_some(),
                ..RunOptions::default()
            };
            let report = run_experiment(&cfg, &opts)?;
            if let Some(path) = histogram {
                if report.selected.first().is_some_and(|x| x.len() != 1) {
                    bail!("histograms need scalar points");
                }
                let xs: Vec<f64> = report.selected.iter().map(|x| x[0]).collect();
                write_table(&path, &epanechnikov(&xs, bandwidth, None)?)?;
            }
            exp.emit(&serde_json::to_value(&report.summary)?)
        }
        Command::Oracle { example, alpha } => {
            let o = example.evaluate(alpha)?;
            println!("{}", serde_json::to_string_pretty(&oracle_json(&example, &o))?);
            Ok(())
        }
        Command::Replicate { exp, reps, per_decade, runs } => {
            let cfg = exp.config()?;
            let horizon = match cfg.stream.n_total {
                0 => cfg.stream.points(0)?.size_hint().0 as u64,
                n => n,
            };
            let opts = RunOptions { checkpoints: log_checkpoints(10, horizon, per_decade), ..RunOptions::default() };
            let (agg, reports) = run_replications(&cfg, reps, &opts)?;
            let mut value = json!({ "aggregate": agg });
            if runs {
                value["runs"] = json!(reports.iter().map(|r| &r.summary).collect::<Vec<_>>());
            }
            exp.emit(&value)?;
            if !agg.failures.is_empty() {
                bail!("{} of {reps} replications failed", agg.failures.len());
            }
            Ok(())
        }
    }
}
