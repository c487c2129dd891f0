use anyhow::Result;
use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sqa_core::oracle::{self, OracleMarginal};

use crate::config::{self, build_cost, overlay, parse_grid, CostName};
use crate::output::{self, Envelope, Format};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MarginalChoice {
    Ground,
    Thermal,
    Trotter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub cost: CostName,
    pub n: usize,
    pub alpha: f64,
    pub zeta: f64,
    pub beta: Option<f64>,
    #[serde(rename = "L")]
    pub trotter: Option<usize>,
    pub s_grid: String,
    /// `None`: Trotter if `L` is set, thermal if `beta` is set, else ground
    pub marginal: Option<MarginalChoice>,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            cost: CostName::Spike,
            n: 16,
            alpha: 1.0 / 3.0,
            zeta: 0.0,
            beta: None,
            trotter: None,
            s_grid: "0:0.05:0.95".into(),
            marginal: None,
        }
    }
}

#[derive(Args, Debug)]
pub struct OracleArgs {
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
    #[arg(long = "L", alias = "trotter")]
    trotter: Option<usize>,
    /// Grid `a:step:b`, inclusive.
    #[arg(long)]
    s_grid: Option<String>,
    #[arg(long, value_enum)]
    marginal: Option<MarginalChoice>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleRow {
    pub s: f64,
    pub gap: f64,
    pub marginal: OracleMarginal,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OracleReport {
    pub marginal_kind: MarginalChoice,
    pub rows: Vec<OracleRow>,
}

pub fn resolve(args: &OracleArgs) -> Result<OracleConfig> {
    let mut cfg: OracleConfig = config::load(args.common.config.as_deref())?;
    overlay!(cfg, args; cost, n, alpha, zeta, s_grid);
    if args.beta.is_some() {
        cfg.beta = args.beta;
    }
    if args.trotter.is_some() {
        cfg.trotter = args.trotter;
    }
    if args.marginal.is_some() {
        cfg.marginal = args.marginal;
    }
    let kind = cfg.marginal.unwrap_or(match (cfg.trotter, cfg.beta) {
        (Some(_), Some(_)) => MarginalChoice::Trotter,
        (_, Some(_)) => MarginalChoice::Thermal,
        _ => MarginalChoice::Ground,
    });
    cfg.marginal = Some(kind);
    match kind {
        MarginalChoice::Thermal => anyhow::ensure!(cfg.beta.is_some(), "invalid parameter `beta`: thermal marginal needs beta"),
        MarginalChoice::Trotter => {
            anyhow::ensure!(cfg.beta.is_some(), "invalid parameter `beta`: Trotter marginal needs beta");
            anyhow::ensure!(cfg.trotter.is_some_and(|l| l >= 1), "invalid parameter `L`: Trotter marginal needs L >= 1");
        }
        MarginalChoice::Ground => {}
    }
    Ok(cfg)
}

pub fn run(args: OracleArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    let cost = build_cost(cfg.cost, cfg.n, cfg.alpha, cfg.zeta)?;
    let grid = parse_grid(&cfg.s_grid)?;
    let kind = cfg.marginal.unwrap();
    let rows = grid
        .par_iter()
        .map(|&s| {
            let marginal = match kind {
                MarginalChoice::Ground => oracle::ground_marginal(&cost, s)?,
                MarginalChoice::Thermal => oracle::thermal_marginal(&cost, s, cfg.beta.unwrap())?,
                MarginalChoice::Trotter => oracle::trotter_marginal(&cost, s, cfg.beta.unwrap(), cfg.trotter.unwrap())?,
            };
            Ok(OracleRow {
                s,
                gap: oracle::gap(&cost, s)?,
                marginal,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match args.common.format.unwrap_or(Format::Csv) {
        Format::Json => output::write_json(
            args.common.out.as_deref(),
            &Envelope::new(cfg, OracleReport {
                marginal_kind: kind,
                rows,
            }),
        ),
        Format::Csv => output::write_csv(
            args.common.out.as_deref(),
            &["s", "gap", "k", "prob"],
            rows.iter().flat_map(|r| {
                r.marginal
                    .probs
                    .iter()
                    .enumerate()
                    .map(move |(k, p)| vec![r.s.to_string(), r.gap.to_string(), k.to_string(), p.to_string()])
            }),
        ),
    }
}
