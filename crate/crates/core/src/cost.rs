//! Cost functions on `{0,1}^n` that depend only on the Hamming weight.
//!
//! The spike family adds a barrier of height `n^alpha` on the open weight
//! interval `(n/4 - n^zeta/2, n/4 + n^zeta/2)` on top of the plain Hamming
//! weight. Costs are stored as an `(n+1)`-entry table indexed by weight so the
//! samplers can evaluate them with a single lookup.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SqaError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Spikeless,
    Spike { alpha: f64, zeta: f64 },
    Custom,
}

/// A Hamming-symmetric cost `f(z) = values[|z|]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricCost {
    n: usize,
    kind: CostKind,
    values: Vec<f64>,
}

/// Indicator of the spike interval, `1_S(k) = 1` iff `lower < k < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeIndicator {
    pub n: usize,
    pub lower: f64,
    pub upper: f64,
}

impl SpikeIndicator {
    /// Interval centred on `n/4` with width `n^zeta`.
    pub fn new(n: usize, zeta: f64) -> Result<Self> {
        if !zeta.is_finite() || zeta < 0.0 {
            return Err(SqaError::param("zeta", format!("must be finite and >= 0, got {zeta}")));
        }
        let centre = n as f64 / 4.0;
        let half = (n as f64).powf(zeta) / 2.0;
        Ok(SpikeIndicator {
            n,
            lower: centre - half,
            upper: centre + half,
        })
    }

    /// Arbitrary open interval of Hamming weights; used where the spike
    /// family degenerates (tiny `n`).
    pub fn with_interval(n: usize, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower > upper {
            return Err(SqaError::param("interval", format!("({lower}, {upper}) is not a valid interval")));
        }
        Ok(SpikeIndicator { n, lower, upper })
    }

    #[inline]
    pub fn contains(&self, weight: usize) -> bool {
        let k = weight as f64;
        self.lower < k && k < self.upper
    }

    #[inline]
    pub fn indicator(&self, weight: usize) -> u32 {
        u32::from(self.contains(weight))
    }

    /// Hamming weights inside the interval, ascending.
    pub fn weights(&self) -> Vec<usize> {
        (0..=self.n).filter(|&k| self.contains(k)).collect()
    }

    /// Dense 0/1 mask over weights `0..=n`.
    pub fn mask(&self) -> Vec<bool> {
        (0..=self.n).map(|k| self.contains(k)).collect()
    }
}

impl SymmetricCost {
    /// `f(z) = |z|`.
    pub fn spikeless(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(SqaError::param("n", "must be positive"));
        }
        Ok(SymmetricCost {
            n,
            kind: CostKind::Spikeless,
            values: (0..=n).map(|k| k as f64).collect(),
        })
    }

    /// Hamming weight plus a spike of height `n^alpha` over the weights
    /// strictly inside `(n/4 - n^zeta/2, n/4 + n^zeta/2)`.
    pub fn spike(n: usize, alpha: f64, zeta: f64) -> Result<Self> {
        if n < 4 {
            return Err(SqaError::param("n", format!("spike cost needs n >= 4, got {n}")));
        }
        if !alpha.is_finite() {
            return Err(SqaError::param("alpha", format!("must be finite, got {alpha}")));
        }
        let indicator = SpikeIndicator::new(n, zeta)?;
        let height = (n as f64).powf(alpha);
        let values = (0..=n)
            .map(|k| if indicator.contains(k) { k as f64 + height } else { k as f64 })
            .collect();
        Ok(SymmetricCost {
            n,
            kind: CostKind::Spike { alpha, zeta },
            values,
        })
    }

    /// Arbitrary table over weights `0..=n`; `n = values.len() - 1`.
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(SqaError::param("values", "need at least two entries (n >= 1)"));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(SqaError::param("values", format!("non-finite entry {bad}")));
        }
        Ok(SymmetricCost {
            n: values.len() - 1,
            kind: CostKind::Custom,
            values,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cost of any string with Hamming weight `k`.
    #[inline]
    pub fn at_weight(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Cost of a bit string.
    pub fn eval(&self, z: &[bool]) -> Result<f64> {
        if z.len() != self.n {
            return Err(SqaError::LengthMismatch {
                expected: self.n,
                actual: z.len(),
            });
        }
        Ok(self.values[z.iter().filter(|&&b| b).count()])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// The spike indicator matching this cost, if it belongs to the spike family.
    pub fn spike_indicator(&self) -> Option<SpikeIndicator> {
        match self.kind {
            CostKind::Spike { zeta, .. } => SpikeIndicator::new(self.n, zeta).ok(),
            _ => None,
        }
    }

    /// Smallest weight right of the spike, i.e. the local minimum the
    /// barrier creates. `None` when the interval holds no integer.
    pub fn local_minimum_weight(&self) -> Option<usize> {
        let ind = self.spike_indicator()?;
        if ind.weights().is_empty() {
            return None;
        }
        let k = ind.upper.ceil() as usize;
        (k <= self.n).then_some(k)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostRepr {
    n: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zeta: Option<f64>,
    values: Vec<f64>,
}

impl Serialize for SymmetricCost {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (kind, alpha, zeta) = match self.kind {
            CostKind::Spikeless => ("spikeless", None, None),
            CostKind::Spike { alpha, zeta } => ("spike", Some(alpha), Some(zeta)),
            CostKind::Custom => ("custom", None, None),
        };
        CostRepr {
            n: self.n,
            kind: kind.to_string(),
            alpha,
            zeta,
            values: self.values.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SymmetricCost {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = CostRepr::deserialize(deserializer)?;
        let cost = match repr.kind.as_str() {
            "spikeless" => SymmetricCost::spikeless(repr.n),
            "spike" => {
                let alpha = repr.alpha.ok_or_else(|| D::Error::missing_field("alpha"))?;
                let zeta = repr.zeta.ok_or_else(|| D::Error::missing_field("zeta"))?;
                SymmetricCost::spike(repr.n, alpha, zeta)
            }
            "custom" => SymmetricCost::custom(repr.values.clone()),
            other => return Err(D::Error::unknown_variant(other, &["spikeless", "spike", "custom"])),
        }
        .map_err(D::Error::custom)?;
        if cost.n != repr.n || cost.values.len() != repr.values.len() {
            return Err(D::Error::custom(format!(
                "table has {} entries but n = {}",
                repr.values.len(),
                repr.n
            )));
        }
        if cost.values.iter().zip(&repr.values).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
            return Err(D::Error::custom("values do not match the declared kind"));
        }
        Ok(cost)
    }
}
