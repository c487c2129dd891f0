//! Defaults, then the JSON config file, then command-line flags.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sqa_core::SymmetricCost;

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// `field = flag` for every flag that was given.
macro_rules! overlay {
    ($cfg:expr, $args:expr; $($field:ident),+ $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $cfg.$field = v.into(); } )+
    };
}
pub(crate) use overlay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CostName {
    #[default]
    Spike,
    Spikeless,
}

pub fn build_cost(name: CostName, n: usize, alpha: f64, zeta: f64) -> Result<SymmetricCost> {
    Ok(match name {
        CostName::Spike => SymmetricCost::spike(n, alpha, zeta)?,
        CostName::Spikeless => SymmetricCost::spikeless(n)?,
    })
}

/// `a:step:b`, inclusive of `b` up to rounding.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || format!("invalid parameter `s_grid`: expected a:step:b, got {spec:?}");
    anyhow::ensure!(parts.len() == 3, bad());
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(bad)?;
    let (a, step, b) = (nums[0], nums[1], nums[2]);
    anyhow::ensure!(step > 0.0 && b >= a && a.is_finite() && b.is_finite(), bad());
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
}
