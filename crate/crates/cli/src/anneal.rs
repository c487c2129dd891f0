use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde::{Deserialize, Serialize};
use sqa_core::anneal::{build_schedule, default_beta, run_sqa as anneal, Readout, SqaOptions};
use sqa_core::path_integral::default_trotter_number;
use sqa_core::sa::{run_sa as anneal_sa, SaSchedule};
use sqa_core::{KernelKind, RngStream};

use crate::config::{self, build_cost, overlay, CostName};
use crate::output::{self, Envelope, Format};
use crate::Common;

#[derive(Subcommand, Debug)]
pub enum SqaAction {
    Run(SqaArgs),
}

#[derive(Subcommand, Debug)]
pub enum SaAction {
    Run(SaArgs),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SqaConfig {
    pub cost: CostName,
    pub n: usize,
    pub alpha: f64,
    pub zeta: f64,
    /// `None`: `n^(epsilon/2)` capped at 10
    pub beta: Option<f64>,
    pub epsilon: f64,
    /// `None`: `ceil(n^2 beta^(3/2))`
    #[serde(rename = "L")]
    pub trotter: Option<usize>,
    pub kernel: KernelKind,
    pub replicas: usize,
    pub seed: u64,
    pub c: f64,
    pub steps_per_s: usize,
    pub readout: Readout,
    pub abort_jump_threshold: Option<u32>,
    pub track_oracle: bool,
    pub snapshot_every: Option<usize>,
}

impl Default for SqaConfig {
    fn default() -> Self {
        SqaConfig {
            cost: CostName::Spike,
            n: 16,
            alpha: 1.0 / 3.0,
            zeta: 0.0,
            beta: None,
            epsilon: 1.0,
            trotter: None,
            kernel: KernelKind::WorldlineHeatBath,
            replicas: 100,
            seed: 0,
            c: 1.0,
            steps_per_s: 1,
            readout: Readout::FirstSlice,
            abort_jump_threshold: None,
            track_oracle: true,
            snapshot_every: None,
        }
    }
}

#[derive(Args, Debug)]
pub struct SqaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    cost: Option<CostName>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Trotter number.
    #[arg(long = "L", alias = "trotter")]
    trotter: Option<usize>,
    #[arg(long)]
    kernel: Option<KernelKind>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Schedule spacing constant: spacing <= c / (beta n ln n).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    steps_per_s: Option<usize>,
    #[arg(long, value_parser = parse_readout)]
    readout: Option<Readout>,
    #[arg(long)]
    abort_jump_threshold: Option<u32>,
    /// Skip the per-grid-point oracle comparison.
    #[arg(long)]
    no_oracle: bool,
    /// Stream replica-0 configurations here as JSON lines.
    #[arg(long, requires = "snapshot_every")]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    snapshot_every: Option<usize>,
}

fn parse_readout(s: &str) -> std::result::Result<Readout, String> {
    match s {
        "first_slice" | "first-slice" => Ok(Readout::FirstSlice),
        "any_slice" | "any-slice" => Ok(Readout::AnySlice),
        other => Err(format!("unknown readout `{other}` (first-slice, any-slice)")),
    }
}

pub fn resolve_sqa(args: &SqaArgs) -> Result<SqaConfig> {
    let mut cfg: SqaConfig = config::load(args.common.config.as_deref())?;
    overlay!(cfg, args; cost, n, alpha, zeta, epsilon, kernel, replicas, seed, c, steps_per_s, readout);
    if args.beta.is_some() {
        cfg.beta = args.beta;
    }
    if args.trotter.is_some() {
        cfg.trotter = args.trotter;
    }
    if args.abort_jump_threshold.is_some() {
        cfg.abort_jump_threshold = args.abort_jump_threshold;
    }
    if args.snapshot_every.is_some() {
        cfg.snapshot_every = args.snapshot_every;
    }
    if args.no_oracle {
        cfg.track_oracle = false;
    }
    // fill in the derived defaults so the report records what actually ran
    let beta = cfg.beta.unwrap_or_else(|| default_beta(cfg.n, cfg.epsilon));
    cfg.beta = Some(beta);
    if cfg.trotter.is_none() {
        cfg.trotter = Some(default_trotter_number(cfg.n, beta));
    }
    anyhow::ensure!(cfg.trotter != Some(0), "invalid parameter `L`: must be >= 1");
    Ok(cfg)
}

pub fn run_sqa(action: SqaAction, timing: bool) -> Result<()> {
    let SqaAction::Run(args) = action;
    let cfg = resolve_sqa(&args)?;
    let cost = build_cost(cfg.cost, cfg.n, cfg.alpha, cfg.zeta)?;
    let beta = cfg.beta.unwrap();
    let mut schedule = build_schedule(cfg.n, beta, cfg.c, cfg.steps_per_s)?;
    if let Some(t) = cfg.abort_jump_threshold {
        schedule.abort_jump_threshold = t;
    }
    let mut options = SqaOptions::new(cfg.trotter.unwrap(), cfg.kernel, cfg.replicas);
    options.readout = cfg.readout;
    options.track_oracle = cfg.track_oracle;
    options.snapshot_every = cfg.snapshot_every;
    let mut report = anneal(&cost, &schedule, &options, &RngStream::new(cfg.seed))?;
    if !timing {
        report.clear_timing();
    }
    let snapshots = std::mem::take(&mut report.snapshots);
    if let Some(path) = &args.snapshots {
        let mut w = output::sink(Some(path))?;
        for snap in &snapshots {
            serde_json::to_writer(&mut w, snap)?;
            writeln!(w)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
    }
    match args.common.format.unwrap_or(Format::Json) {
        Format::Json => output::write_json(args.common.out.as_deref(), &Envelope::new(cfg, report)),
        Format::Csv => output::write_csv(
            args.common.out.as_deref(),
            &["s", "active", "tv_to_oracle", "mean_spike_time", "mean_spike_time_sq", "oracle_spike_time"],
            report.per_s.iter().map(|r| {
                let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                vec![
                    r.s.to_string(),
                    r.active.to_string(),
                    opt(r.tv_to_oracle),
                    opt(r.mean_spike_time),
                    opt(r.mean_spike_time_sq),
                    opt(r.oracle_spike_time),
                ]
            }),
        ),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaConfig {
    pub cost: CostName,
    pub n: usize,
    pub alpha: f64,
    pub zeta: f64,
    pub replicas: usize,
    pub seed: u64,
    /// `None`: `T_0 = n`
    pub t0: Option<f64>,
    pub t_final: f64,
    pub ratio: f64,
    pub steps_per_t: usize,
    pub flip_size: usize,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            cost: CostName::Spike,
            n: 16,
            alpha: 1.0 / 3.0,
            zeta: 0.0,
            replicas: 100,
            seed: 0,
            t0: None,
            t_final: 0.1,
            ratio: 0.95,
            steps_per_t: 100,
            flip_size: 1,
        }
    }
}

#[derive(Args, Debug)]
pub struct SaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    cost: Option<CostName>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    steps_per_t: Option<usize>,
    /// Bits flipped per proposal.
    #[arg(long)]
    flip_size: Option<usize>,
}

pub fn resolve_sa(args: &SaArgs) -> Result<SaConfig> {
    let mut cfg: SaConfig = config::load(args.common.config.as_deref())?;
    overlay!(cfg, args; cost, n, alpha, zeta, replicas, seed, t_final, ratio, steps_per_t, flip_size);
    if args.t0.is_some() {
        cfg.t0 = args.t0;
    }
    cfg.t0 = Some(cfg.t0.unwrap_or(cfg.n as f64));
    Ok(cfg)
}

pub fn run_sa(action: SaAction, timing: bool) -> Result<()> {
    let SaAction::Run(args) = action;
    let cfg = resolve_sa(&args)?;
    let cost = build_cost(cfg.cost, cfg.n, cfg.alpha, cfg.zeta)?;
    let schedule = SaSchedule::geometric(cfg.t0.unwrap(), cfg.t_final, cfg.ratio, cfg.steps_per_t, cfg.flip_size)?;
    let mut report = anneal_sa(&cost, &schedule, &RngStream::new(cfg.seed), cfg.replicas)?;
    if !timing {
        report.clear_timing();
    }
    match args.common.format.unwrap_or(Format::Json) {
        Format::Json => output::write_json(args.common.out.as_deref(), &Envelope::new(cfg, report)),
        Format::Csv => output::write_csv(
            args.common.out.as_deref(),
            &["s", "temperature", "tv_to_oracle", "mean_spike_time", "mean_weight"],
            report.per_s.iter().map(|r| {
                vec![
                    r.s.to_string(),
                    r.temperature.to_string(),
                    r.tv_to_oracle.map(|v| v.to_string()).unwrap_or_default(),
                    r.mean_spike_time.map(|v| v.to_string()).unwrap_or_default(),
                    r.mean_weight.to_string(),
                ]
            }),
        ),
    }
}
