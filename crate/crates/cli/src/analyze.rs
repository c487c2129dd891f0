use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sqa_core::chain::instances::{planted_barrier_pair, shortest_paths, sqa_pair, trap_chain, BarrierSpec};
use sqa_core::chain::{
    congestion, dirichlet_gap, gap_certificate, leaky_walk_analysis, most_paths_comparison, substochastic_gap,
    ChainSpec, ComparisonReport, CongestionReport, ExplicitChain, GapCertificate, LeakyTrace, Reference,
    SubstochasticReport,
};
use sqa_core::RngStream;

use crate::config;
use crate::output::{self, Envelope};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Instance {
    /// birth-death pair with a suppressed band
    Barrier,
    /// spikeless vs spike SQA heat-bath chains
    SqaPair,
    /// random chain with a planted low-mass bad set
    Trap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub trotter: usize,
    pub beta: f64,
    pub s: f64,
    pub alpha: f64,
    /// `Omega_theta` holds the configurations with spike time at least this
    pub threshold: usize,
}

impl Default for PairParams {
    fn default() -> Self {
        PairParams {
            n: 2,
            trotter: 3,
            beta: 10.0,
            s: 0.9,
            alpha: 1.0 / 3.0,
            threshold: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrapParams {
    pub states: usize,
    pub trap: usize,
    pub trap_mass: f64,
    pub seed: u64,
    pub t_max: usize,
}

impl Default for TrapParams {
    fn default() -> Self {
        TrapParams {
            states: 50,
            trap: 2,
            trap_mass: 1e-3,
            seed: 0,
            t_max: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub instance: Option<Instance>,
    /// single chain in the `{states, P, pi}` form
    pub chain: Option<PathBuf>,
    pub easy: Option<PathBuf>,
    pub hard: Option<PathBuf>,
    pub theta: Option<f64>,
    pub barrier: BarrierSpec,
    pub pair: PairParams,
    pub trap: TrapParams,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    instance: Option<Instance>,
    #[arg(long, conflicts_with_all = ["instance", "easy", "hard"])]
    chain: Option<PathBuf>,
    #[arg(long, requires = "hard")]
    easy: Option<PathBuf>,
    #[arg(long, requires = "easy")]
    hard: Option<PathBuf>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ChainReport {
    pub states: usize,
    pub reversible: bool,
    pub gap: f64,
    pub congestion: CongestionReport,
    pub certificate: GapCertificate,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrapReport {
    pub restricted: SubstochasticReport,
    pub leaky: LeakyTrace,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnalyzeReport {
    Comparison(Box<ComparisonReport>),
    Chain(ChainReport),
    Trap(TrapReport),
}

fn read_chain(path: &Path) -> Result<ExplicitChain> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: ChainSpec = serde_json::from_str(&text).with_context(|| format!("parsing chain {}", path.display()))?;
    ExplicitChain::from_spec(&spec).with_context(|| format!("chain {}", path.display()))
}

pub fn resolve(args: &AnalyzeArgs) -> Result<AnalyzeConfig> {
    let mut cfg: AnalyzeConfig = config::load(args.common.config.as_deref())?;
    if args.instance.is_some() {
        cfg.instance = args.instance;
    }
    if args.chain.is_some() {
        cfg.chain = args.chain.clone();
    }
    if args.easy.is_some() {
        cfg.easy = args.easy.clone();
        cfg.hard = args.hard.clone();
    }
    if args.theta.is_some() {
        cfg.theta = args.theta;
    }
    if let Some(seed) = args.seed {
        cfg.trap.seed = seed;
    }
    if let Some(t) = args.threshold {
        cfg.pair.threshold = t;
    }
    let modes = [cfg.instance.is_some(), cfg.chain.is_some(), cfg.easy.is_some() || cfg.hard.is_some()];
    match modes.iter().filter(|&&m| m).count() {
        1 => Ok(cfg),
        0 => bail!("invalid parameter `instance`: give --instance, --chain, or --easy with --hard"),
        _ => bail!("invalid parameter `instance`: --instance, --chain and --easy/--hard are exclusive"),
    }
}

fn analyze(cfg: &AnalyzeConfig) -> Result<AnalyzeReport> {
    if let Some(path) = &cfg.chain {
        let chain = read_chain(path)?;
        let paths = shortest_paths(&chain, &vec![true; chain.len()])?;
        let cong = congestion(&chain, &paths, Reference::CompleteGraph)?;
        let certificate = gap_certificate(&chain, &cong, Reference::CompleteGraph, 1e-10)?;
        return Ok(AnalyzeReport::Chain(ChainReport {
            states: chain.len(),
            reversible: chain.is_reversible(),
            gap: dirichlet_gap(&chain)?,
            congestion: cong,
            certificate,
        }));
    }
    if let (Some(easy), Some(hard)) = (&cfg.easy, &cfg.hard) {
        let (easy, hard) = (read_chain(easy)?, read_chain(hard)?);
        let theta = cfg.theta.context("invalid parameter `theta`: required with --easy/--hard")?;
        let paths = shortest_paths(&easy, &vec![true; easy.len()])?;
        return Ok(AnalyzeReport::Comparison(Box::new(most_paths_comparison(&easy, &paths, &hard, theta)?)));
    }
    Ok(match cfg.instance.unwrap() {
        Instance::Barrier => {
            let mut spec = cfg.barrier.clone();
            if let Some(t) = cfg.theta {
                spec.theta = t;
            }
            let pair = planted_barrier_pair(&spec)?;
            AnalyzeReport::Comparison(Box::new(most_paths_comparison(&pair.easy, &pair.paths, &pair.hard, pair.theta)?))
        }
        Instance::SqaPair => {
            let p = &cfg.pair;
            let pair = sqa_pair(p.n, p.trotter, p.beta, p.s, p.alpha)?;
            let theta = match cfg.theta {
                Some(t) => t,
                None => pair.theta_for_spike_time(p.threshold)?,
            };
            AnalyzeReport::Comparison(Box::new(most_paths_comparison(&pair.easy, &pair.paths, &pair.hard, theta)?))
        }
        Instance::Trap => {
            let t = &cfg.trap;
            let (chain, good) = trap_chain(t.states, t.trap, t.trap_mass, &mut RngStream::new(t.seed))?;
            let paths = shortest_paths(&chain, &good)?;
            let restricted = substochastic_gap(&chain, &good, &paths)?;
            let pi_g = restricted.pi_g;
            let mu: Vec<f64> = (0..chain.len())
                .map(|x| if good[x] { chain.pi()[x] / pi_g } else { 0.0 })
                .collect();
            let leaky = leaky_walk_analysis(&chain, &good, &mu, t.t_max, restricted.rho)?;
            AnalyzeReport::Trap(TrapReport { restricted, leaky })
        }
    })
}

pub fn run(args: AnalyzeArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    anyhow::ensure!(
        args.common.format.is_none_or(|f| f == output::Format::Json),
        "invalid parameter `format`: analyze writes JSON"
    );
    let report = analyze(&cfg)?;
    output::write_json(args.common.out.as_deref(), &Envelope::new(cfg, report))
}
