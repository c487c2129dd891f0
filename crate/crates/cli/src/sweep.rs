use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use sqa_core::diagnostics::{
    mixing_sweep, separation_benchmark, BenchmarkConfig, BenchmarkRow, MixingEstimate, MixingSweepConfig, PowerFit, CSV_HEADER,
};

use crate::output::{self, Envelope, Format};

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Benchmark description; `"mode": "mixing"` selects the mixing scan.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SweepConfig {
    Separation(BenchmarkConfig),
    Mixing(MixingSweepConfig),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepReport {
    Separation { rows: Vec<BenchmarkRow> },
    Mixing {
        rows: Vec<MixingEstimate>,
        fit: Option<PowerFit>,
        update_fit: Option<PowerFit>,
        censored: bool,
    },
}

pub fn resolve(args: &SweepArgs) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.config.display()))?;
    let obj = value.as_object_mut().context("sweep config must be a JSON object")?;
    let mode = match obj.remove("mode") {
        None => "separation".to_string(),
        Some(serde_json::Value::String(m)) => m,
        Some(other) => bail!("invalid parameter `mode`: expected a string, got {other}"),
    };
    let context = || format!("parsing {} as a {mode} sweep", args.config.display());
    let mut cfg = match mode.as_str() {
        "separation" => SweepConfig::Separation(serde_json::from_value(value).with_context(context)?),
        "mixing" => SweepConfig::Mixing(serde_json::from_value(value).with_context(context)?),
        other => bail!("invalid parameter `mode`: unknown sweep mode `{other}` (separation, mixing)"),
    };
    match &mut cfg {
        SweepConfig::Separation(c) => {
            c.seed = args.seed.unwrap_or(c.seed);
            c.replicas = args.replicas.unwrap_or(c.replicas);
        }
        SweepConfig::Mixing(c) => {
            c.seed = args.seed.unwrap_or(c.seed);
            c.replicas = args.replicas.unwrap_or(c.replicas);
        }
    }
    Ok(cfg)
}

pub fn run(args: SweepArgs) -> Result<()> {
    let cfg = resolve(&args)?;
    let format = args.format.unwrap_or(Format::Csv);
    let out = args.out.as_deref();
    match &cfg {
        SweepConfig::Separation(c) => {
            let rows = separation_benchmark(c)?;
            match format {
                Format::Csv => output::write_csv(out, &CSV_HEADER, rows.iter().flat_map(|r| r.csv_records(c.alpha, c.zeta))),
                Format::Json => output::write_json(out, &Envelope::new(cfg.clone(), SweepReport::Separation { rows })),
            }
        }
        SweepConfig::Mixing(c) => {
            let sweep = mixing_sweep(c)?;
            match format {
                Format::Csv => output::write_csv(
                    out,
                    &CSV_HEADER,
                    sweep.rows.iter().map(|r| r.csv_record(c.alpha, c.zeta, c.seed)),
                ),
                Format::Json => {
                    // the envelope already carries the config
                    let report = SweepReport::Mixing {
                        rows: sweep.rows,
                        fit: sweep.fit,
                        update_fit: sweep.update_fit,
                        censored: sweep.censored,
                    };
                    output::write_json(out, &Envelope::new(cfg.clone(), report))
                }
            }
        }
    }
}
