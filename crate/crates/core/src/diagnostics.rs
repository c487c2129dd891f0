//! Estimators on sampler output: Hamming-weight marginals, spike-time moments
//! and tails, first-passage mixing estimates, and the SA/SQA benchmark table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::{build_schedule, run_sqa, sample_initial, Readout, SqaOptions};
use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};
use crate::kernels::{Kernel, KernelKind};
use crate::oracle::{self, OracleMarginal, SpikeTimeMoments};
use crate::path_integral::{spike_time, PathIntegralSystem, WorldlineConfiguration};
use crate::rng::RngStream;
use crate::sa::{run_sa, SaSchedule};

pub const DEFAULT_BATCHES: usize = 16;

/// Fixed column order of benchmark and sweep CSV output.
pub const CSV_HEADER: [&str; 13] = [
    "n", "alpha", "zeta", "beta", "L", "s", "kernel", "sweeps", "tv", "st_mean", "st_m2", "success", "seed",
];

/// Empirical Hamming-weight histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub n: usize,
    pub counts: Vec<u64>,
    pub samples: u64,
    /// Per-weight standard error of the frequency.
    pub standard_errors: Vec<f64>,
}

fn batch_se(values: &[f64]) -> f64 {
    let b = values.len() as f64;
    let mean = values.iter().sum::<f64>() / b;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

impl MarginalEstimate {
    /// Independent samples: binomial standard errors.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(SqaError::Malformed("marginal needs at least one weight".into()));
        }
        let samples: u64 = counts.iter().sum();
        let nf = samples.max(1) as f64;
        let standard_errors = counts
            .iter()
            .map(|&c| {
                let p = c as f64 / nf;
                (p * (1.0 - p) / nf).sqrt()
            })
            .collect();
        Ok(MarginalEstimate {
            n: counts.len() - 1,
            counts,
            samples,
            standard_errors,
        })
    }

    /// A correlated stream of weights: standard errors from `batches` batch means.
    pub fn from_weights(n: usize, weights: &[u32], batches: usize) -> Result<Self> {
        let mut counts = vec![0u64; n + 1];
        for &w in weights {
            let w = w as usize;
            if w > n {
                return Err(SqaError::param("weight", format!("{w} exceeds n = {n}")));
            }
            counts[w] += 1;
        }
        let mut est = Self::from_counts(counts)?;
        if batches >= 2 && weights.len() >= 2 * batches {
            let size = weights.len() / batches;
            let mut freq = vec![vec![0.0; batches]; n + 1];
            for (b, chunk) in weights.chunks_exact(size).take(batches).enumerate() {
                for &w in chunk {
                    freq[w as usize][b] += 1.0 / size as f64;
                }
            }
            est.standard_errors = freq.iter().map(|f| batch_se(f)).collect();
        }
        Ok(est)
    }

    pub fn probs(&self) -> Vec<f64> {
        let nf = self.samples.max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / nf).collect()
    }

    pub fn mass_on(&self, ind: &SpikeIndicator) -> f64 {
        let p = self.probs();
        ind.weights().into_iter().filter(|&k| k <= self.n).map(|k| p[k]).sum()
    }

    /// Pools two estimates; the result does not depend on merge order.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(SqaError::LengthMismatch {
                expected: self.n + 1,
                actual: other.n + 1,
            });
        }
        let samples = self.samples + other.samples;
        let (a, b, t) = (self.samples as f64, other.samples as f64, samples.max(1) as f64);
        Ok(MarginalEstimate {
            n: self.n,
            counts: self.counts.iter().zip(&other.counts).map(|(x, y)| x + y).collect(),
            samples,
            standard_errors: self
                .standard_errors
                .iter()
                .zip(&other.standard_errors)
                .map(|(u, v)| ((a * u).powi(2) + (b * v).powi(2)).sqrt() / t)
                .collect(),
        })
    }
}

/// `1/2 sum_k |hat Pi(k) - Pi(k)|`.
pub fn tv_to_oracle(est: &MarginalEstimate, oracle: &OracleMarginal) -> Result<f64> {
    if est.n != oracle.n() {
        return Err(SqaError::LengthMismatch {
            expected: oracle.n() + 1,
            actual: est.n + 1,
        });
    }
    Ok(oracle.total_variation(&est.probs()))
}

/// Expected TV between an `m`-sample empirical marginal and `probs`, to
/// leading order in `1/m`.
pub fn noise_floor(probs: &[f64], m: usize) -> f64 {
    let m = m.max(1) as f64;
    0.5 * probs
        .iter()
        .map(|&p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * m)).sqrt())
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub threshold: f64,
    /// empirical `Pr[ST >= b]`
    pub frequency: f64,
    pub standard_error: f64,
    /// `<ST>/b`
    pub first_moment_bound: f64,
    /// `<ST^2>/b^2`
    pub second_moment_bound: f64,
}

impl TailEstimate {
    /// Frequency below both moment bounds within `sigmas` combined errors.
    pub fn within_bounds(&self, stats: &SpikeTimeStats, sigmas: f64) -> bool {
        let b = self.threshold;
        let s1 = (self.standard_error.powi(2) + (stats.mean_se / b).powi(2)).sqrt();
        let s2 = (self.standard_error.powi(2) + (stats.second_se / (b * b)).powi(2)).sqrt();
        self.frequency <= self.first_moment_bound + sigmas * s1 && self.frequency <= self.second_moment_bound + sigmas * s2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeTimeStats {
    pub trotter: usize,
    pub samples: usize,
    /// `<ST>`
    pub mean: f64,
    /// `<ST^2>`
    pub second: f64,
    pub mean_se: f64,
    pub second_se: f64,
    pub tails: Vec<TailEstimate>,
}

impl SpikeTimeStats {
    /// Moments of a correlated stream of spike times, errors by batch means.
    pub fn from_values(values: &[u32], trotter: usize, thresholds: &[f64], batches: usize) -> Result<Self> {
        if values.is_empty() {
            return Err(SqaError::Malformed("no spike-time samples".into()));
        }
        if let Some(b) = thresholds.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(SqaError::param("threshold", format!("must be positive, got {b}")));
        }
        let m = values.len() as f64;
        let mean = values.iter().map(|&v| v as f64).sum::<f64>() / m;
        let second = values.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / m;
        let mut series: Vec<(&str, Box<dyn Fn(u32) -> f64>)> =
            vec![("mean", Box::new(|v| v as f64)), ("second", Box::new(|v| (v as f64).powi(2)))];
        for &b in thresholds {
            series.push(("tail", Box::new(move |v| if v as f64 >= b { 1.0 } else { 0.0 })));
        }
        let errors: Vec<f64> = series
            .iter()
            .map(|(_, g)| {
                if batches >= 2 && values.len() >= 2 * batches {
                    let size = values.len() / batches;
                    let means: Vec<f64> = values
                        .chunks_exact(size)
                        .take(batches)
                        .map(|c| c.iter().map(|&v| g(v)).sum::<f64>() / size as f64)
                        .collect();
                    batch_se(&means)
                } else {
                    let mu = values.iter().map(|&v| g(v)).sum::<f64>() / m;
                    let var = values.iter().map(|&v| (g(v) - mu).powi(2)).sum::<f64>() / m;
                    (var / m).sqrt()
                }
            })
            .collect();
        let tails = thresholds
            .iter()
            .enumerate()
            .map(|(i, &b)| TailEstimate {
                threshold: b,
                frequency: values.iter().filter(|&&v| v as f64 >= b).count() as f64 / m,
                standard_error: errors[2 + i],
                first_moment_bound: mean / b,
                second_moment_bound: second / (b * b),
            })
            .collect();
        Ok(SpikeTimeStats {
            trotter,
            samples: values.len(),
            mean,
            second,
            mean_se: errors[0],
            second_se: errors[1],
            tails,
        })
    }

    /// `<ST>/L`, comparable to the oracle spike expectation.
    pub fn per_slice_mean(&self) -> (f64, f64) {
        let l = self.trotter as f64;
        (self.mean / l, self.mean_se / l)
    }

    pub fn compare(&self, exact: &SpikeTimeMoments) -> SpikeTimeComparison {
        let z = |est: f64, se: f64, target: f64| {
            let d = (est - target).abs();
            if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        SpikeTimeComparison {
            mean: self.mean,
            exact_mean: exact.mean,
            mean_z: z(self.mean, self.mean_se, exact.mean),
            second: self.second,
            exact_second: exact.second,
            second_z: z(self.second, self.second_se, exact.second),
        }
    }
}

/// Normalised deviations of sampled spike-time moments from the exact ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeTimeComparison {
    pub mean: f64,
    pub exact_mean: f64,
    pub mean_z: f64,
    pub second: f64,
    pub exact_second: f64,
    pub second_z: f64,
}

pub fn spike_time_stats(
    trajectory: &[WorldlineConfiguration],
    ind: &SpikeIndicator,
    thresholds: &[f64],
) -> Result<SpikeTimeStats> {
    let trotter = trajectory.first().map(|x| x.trotter()).unwrap_or(0);
    let values: Vec<u32> = trajectory.iter().map(|x| spike_time(x, ind) as u32).collect();
    SpikeTimeStats::from_values(&values, trotter, thresholds, DEFAULT_BATCHES)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub replicas: usize,
    pub burn_in: usize,
    /// Recorded samples per replica after burn-in.
    pub samples: usize,
    /// Sweeps between recorded samples.
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

impl SamplingPlan {
    /// Half of `sweeps` is discarded as burn-in.
    pub fn from_budget(replicas: usize, sweeps: usize) -> Self {
        SamplingPlan {
            replicas,
            burn_in: sweeps / 2,
            samples: sweeps - sweeps / 2,
            thin: 1,
        }
    }

    pub fn total_samples(&self) -> usize {
        self.replicas * self.samples
    }
}

/// Readings from fixed-`s` sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySample {
    pub plan: SamplingPlan,
    pub kernel: KernelKind,
    pub s: f64,
    pub beta: f64,
    pub trotter: usize,
    /// slice-0 weight at every recorded sample
    pub marginal: MarginalEstimate,
    pub spike: Option<SpikeTimeStats>,
}

/// Runs `plan.replicas` chains at fixed `s`, each started from an exact
/// `s = 0` draw. Replica `r` uses substream `r`.
pub fn sample_stationary(
    sys: &PathIntegralSystem,
    kind: KernelKind,
    plan: &SamplingPlan,
    ind: Option<&SpikeIndicator>,
    thresholds: &[f64],
    rng: &RngStream,
) -> Result<StationarySample> {
    if plan.replicas == 0 || plan.samples == 0 {
        return Err(SqaError::param("samples", "need at least one replica and one recorded sweep"));
    }
    let sys0 = sys.at_s(0.0)?;
    let runs: Vec<(Vec<u32>, Vec<u32>)> = (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng.substream(r as u64);
            let mut x = sample_initial(&sys0, &mut rng)?;
            let mut kernel = Kernel::new(kind);
            kernel.sweeps(sys, &mut x, &mut rng, plan.burn_in)?;
            let mut w = Vec::with_capacity(plan.samples);
            let mut st = Vec::with_capacity(if ind.is_some() { plan.samples } else { 0 });
            for _ in 0..plan.samples {
                kernel.sweeps(sys, &mut x, &mut rng, plan.thin.max(1))?;
                w.push(x.slice_weight(0) as u32);
                if let Some(ind) = ind {
                    st.push(spike_time(&x, ind) as u32);
                }
            }
            Ok((w, st))
        })
        .collect::<Result<_>>()?;
    let weights: Vec<u32> = runs.iter().flat_map(|r| r.0.iter().copied()).collect();
    let times: Vec<u32> = runs.iter().flat_map(|r| r.1.iter().copied()).collect();
    let batches = if plan.replicas >= DEFAULT_BATCHES { plan.replicas.min(64) } else { DEFAULT_BATCHES };
    let batches = if plan.replicas % batches == 0 { batches } else { DEFAULT_BATCHES };
    let spike = match ind {
        Some(_) => Some(SpikeTimeStats::from_values(&times, sys.trotter(), thresholds, batches)?),
        None => None,
    };
    Ok(StationarySample {
        plan: *plan,
        kernel: kind,
        s: sys.s(),
        beta: sys.beta(),
        trotter: sys.trotter(),
        marginal: MarginalEstimate::from_weights(sys.n(), &weights, batches)?,
        spike,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// exact draw from the `s = 0` distribution
    Warm,
    /// every slice parked at one weight on the spike, no jumps; a heuristic
    /// worst case
    Adversarial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingPlan {
    pub replicas: usize,
    pub max_sweeps: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingTime {
    pub start: Start,
    /// first sweep count with TV below tolerance, or the budget
    pub sweeps: usize,
    /// `true` when the budget ran out, so `sweeps` is only a lower bound
    pub lower_bound: bool,
    pub tv: f64,
    /// TV at `t = 0, 1, 2, 4, ...`
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    pub n: usize,
    pub trotter: usize,
    pub beta: f64,
    pub s: f64,
    pub kernel: KernelKind,
    pub replicas: usize,
    pub tolerance: f64,
    pub noise_floor: f64,
    pub warm: MixingTime,
    pub adversarial: MixingTime,
}

/// Weight used for the adversarial start.
pub fn adversarial_weight(cost: &SymmetricCost) -> usize {
    match cost.spike_indicator().map(|i| i.weights()).filter(|w| !w.is_empty()) {
        Some(w) => w[w.len() / 2],
        None => cost.n(),
    }
}

fn first_passage(
    sys: &PathIntegralSystem,
    kind: KernelKind,
    oracle: &[f64],
    plan: &MixingPlan,
    start: Start,
    rng: &RngStream,
) -> Result<MixingTime> {
    let n = sys.n();
    let sys0 = sys.at_s(0.0)?;
    let parked = adversarial_weight(sys.cost());
    let mut chains: Vec<(WorldlineConfiguration, RngStream, Kernel)> = (0..plan.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng.substream(r as u64);
            let x = match start {
                Start::Warm => sample_initial(&sys0, &mut rng)?,
                Start::Adversarial => WorldlineConfiguration::from_fn(n, sys.trotter(), |j, _| j < parked),
            };
            Ok((x, rng, Kernel::new(kind)))
        })
        .collect::<Result<_>>()?;
    let tv_now = |chains: &[(WorldlineConfiguration, RngStream, Kernel)]| {
        let mut h = vec![0.0; n + 1];
        for (x, _, _) in chains {
            h[x.slice_weight(0)] += 1.0 / plan.replicas as f64;
        }
        0.5 * h.iter().zip(oracle).map(|(a, b)| (a - b).abs()).sum::<f64>()
    };
    let mut curve = Vec::new();
    let mut next = 0usize;
    let mut t = 0usize;
    loop {
        let tv = tv_now(&chains);
        if t == next {
            curve.push((t, tv));
            next = if t == 0 { 1 } else { 2 * t };
        }
        if tv < plan.tolerance || t >= plan.max_sweeps {
            if curve.last().map(|c| c.0) != Some(t) {
                curve.push((t, tv));
            }
            return Ok(MixingTime {
                start,
                sweeps: t,
                lower_bound: tv >= plan.tolerance,
                tv,
                curve,
            });
        }
        chains
            .par_iter_mut()
            .try_for_each(|(x, rng, kernel)| kernel.sweep(sys, x, rng))?;
        t += 1;
    }
}

/// Sweeps until the slice-0 weight histogram over replicas is within
/// `plan.tolerance` of `oracle`, from a warm and an adversarial start.
pub fn mixing_steps_estimate(
    sys: &PathIntegralSystem,
    kind: KernelKind,
    oracle: &OracleMarginal,
    plan: &MixingPlan,
    rng: &RngStream,
) -> Result<MixingEstimate> {
    if oracle.n() != sys.n() {
        return Err(SqaError::LengthMismatch {
            expected: sys.n() + 1,
            actual: oracle.n() + 1,
        });
    }
    if plan.replicas == 0 {
        return Err(SqaError::param("replicas", "must be >= 1"));
    }
    let floor = noise_floor(&oracle.probs, plan.replicas);
    if !(plan.tolerance > floor) {
        return Err(SqaError::param(
            "tolerance",
            format!("{} is not above the noise floor {floor:.4} of {} replicas", plan.tolerance, plan.replicas),
        ));
    }
    let warm = first_passage(sys, kind, &oracle.probs, plan, Start::Warm, &rng.substream(0))?;
    let adversarial = first_passage(sys, kind, &oracle.probs, plan, Start::Adversarial, &rng.substream(1))?;
    Ok(MixingEstimate {
        n: sys.n(),
        trotter: sys.trotter(),
        beta: sys.beta(),
        s: sys.s(),
        kernel: kind,
        replicas: plan.replicas,
        tolerance: plan.tolerance,
        noise_floor: floor,
        warm,
        adversarial,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// coefficient of determination on the log scale
    pub r_squared: f64,
}

/// Least-squares fit of `y = c x^k` on log-log axes.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(SqaError::Malformed("power-law fit needs two positive points".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(SqaError::Malformed("power-law fit needs two distinct x".into()));
    }
    let k = sxy / sxx;
    Ok(PowerFit {
        exponent: k,
        prefactor: (my - k * mx).exp(),
        r_squared: if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingSweepConfig {
    pub ns: Vec<usize>,
    pub alpha: f64,
    pub zeta: f64,
    pub beta: f64,
    pub s: f64,
    /// `L = max(trotter_min, ceil(trotter_per_n * n))`
    #[serde(default = "default_trotter_per_n")]
    pub trotter_per_n: f64,
    #[serde(default = "default_trotter_min")]
    pub trotter_min: usize,
    pub kernel: KernelKind,
    pub replicas: usize,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingSweep {
    pub config: MixingSweepConfig,
    pub rows: Vec<MixingEstimate>,
    /// fit of `max(warm, adversarial)` sweeps against `n`
    pub fit: Option<PowerFit>,
    /// same, in elementary updates `sweeps * n * L`
    pub update_fit: Option<PowerFit>,
    /// some start ran out of budget, so the fit is biased low
    pub censored: bool,
}

impl MixingEstimate {
    pub fn sweeps(&self) -> usize {
        self.warm.sweeps.max(self.adversarial.sweeps)
    }

    pub fn csv_record(&self, alpha: f64, zeta: f64, seed: u64) -> Vec<String> {
        let tv = if self.warm.sweeps >= self.adversarial.sweeps { self.warm.tv } else { self.adversarial.tv };
        vec![
            self.n.to_string(),
            alpha.to_string(),
            zeta.to_string(),
            self.beta.to_string(),
            self.trotter.to_string(),
            self.s.to_string(),
            self.kernel.to_string(),
            self.sweeps().to_string(),
            tv.to_string(),
            String::new(),
            String::new(),
            String::new(),
            seed.to_string(),
        ]
    }
}

/// Mixing estimate per `n` on the spike cost; `n` index `i` uses substream `i`.
pub fn mixing_sweep(config: &MixingSweepConfig) -> Result<MixingSweep> {
    let root = RngStream::new(config.seed);
    let plan = MixingPlan {
        replicas: config.replicas,
        max_sweeps: config.max_sweeps,
        tolerance: config.tolerance,
    };
    let rows = config
        .ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let cost = SymmetricCost::spike(n, config.alpha, config.zeta)?;
            let l = ((config.trotter_per_n * n as f64).ceil() as usize).max(config.trotter_min);
            let sys = PathIntegralSystem::new(cost.clone(), l, config.beta, config.s)?;
            let exact = oracle::trotter_marginal(&cost, config.s, config.beta, l)?;
            mixing_steps_estimate(&sys, config.kernel, &exact, &plan, &root.substream(i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.sweeps() as f64)).collect();
    let ops: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.n as f64, (r.sweeps() * r.n * r.trotter) as f64))
        .collect();
    Ok(MixingSweep {
        censored: rows.iter().any(|r| r.warm.lower_bound || r.adversarial.lower_bound),
        fit: fit_power_law(&pts).ok(),
        update_fit: fit_power_law(&ops).ok(),
        config: config.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub ns: Vec<usize>,
    pub alpha: f64,
    pub zeta: f64,
    pub beta: f64,
    /// Trotter number; `None` uses `max(trotter_min, ceil(trotter_per_n * n))`.
    #[serde(default)]
    pub trotter: Option<usize>,
    #[serde(default = "default_trotter_per_n")]
    pub trotter_per_n: f64,
    #[serde(default = "default_trotter_min")]
    pub trotter_min: usize,
    pub kernel: KernelKind,
    /// schedule spacing constant
    pub c: f64,
    pub steps_per_s: usize,
    pub replicas: usize,
    #[serde(default)]
    pub readout: Readout,
    /// SA temperature ladder; the number of steps per temperature is set by
    /// the matched budget.
    #[serde(default = "default_sa_t0")]
    pub sa_t0: f64,
    #[serde(default = "default_sa_t_final")]
    pub sa_t_final: f64,
    #[serde(default = "default_sa_ratio")]
    pub sa_ratio: f64,
    /// Grid used for the minimum oracle gap.
    #[serde(default = "default_gap_points")]
    pub gap_points: usize,
    pub seed: u64,
}

fn default_trotter_per_n() -> f64 {
    1.0
}
fn default_trotter_min() -> usize {
    8
}
fn default_sa_t0() -> f64 {
    4.0
}
fn default_sa_t_final() -> f64 {
    0.1
}
fn default_sa_ratio() -> f64 {
    0.95
}
fn default_gap_points() -> usize {
    101
}

impl BenchmarkConfig {
    pub fn trotter_for(&self, n: usize) -> usize {
        self.trotter
            .unwrap_or_else(|| ((self.trotter_per_n * n as f64).ceil() as usize).max(self.trotter_min))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub trotter: usize,
    pub beta: f64,
    pub s_max: f64,
    pub kernel: KernelKind,
    /// SQA sweeps per replica
    pub sweeps: usize,
    /// elementary bit operations per replica, shared by both methods
    pub bit_ops: u64,
    pub sqa_success: f64,
    pub sqa_aborts: usize,
    pub sa_success: f64,
    pub sa_trapped: Option<f64>,
    pub sa_steps_per_t: usize,
    pub min_gap: f64,
    pub min_gap_s: f64,
    /// largest per-grid-point `<ST>` seen during the anneal, and `<ST^2>` there
    pub st_mean: f64,
    pub st_m2: f64,
    pub st_peak_s: f64,
    /// TV of the final SQA marginal to the final Trotter oracle
    pub sqa_tv: Option<f64>,
    pub sa_tv: Option<f64>,
    pub seed: u64,
}

impl BenchmarkRow {
    /// Two CSV records in [`CSV_HEADER`] order, one per method.
    pub fn csv_records(&self, alpha: f64, zeta: f64) -> [Vec<String>; 2] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            vec![
                self.n.to_string(),
                alpha.to_string(),
                zeta.to_string(),
                self.beta.to_string(),
                self.trotter.to_string(),
                self.s_max.to_string(),
                self.kernel.to_string(),
                self.sweeps.to_string(),
                opt(self.sqa_tv),
                self.st_mean.to_string(),
                self.st_m2.to_string(),
                self.sqa_success.to_string(),
                self.seed.to_string(),
            ],
            vec![
                self.n.to_string(),
                alpha.to_string(),
                zeta.to_string(),
                String::new(),
                String::new(),
                "1".into(),
                "sa".into(),
                self.bit_ops.to_string(),
                opt(self.sa_tv),
                String::new(),
                String::new(),
                self.sa_success.to_string(),
                self.seed.to_string(),
            ],
        ]
    }
}

/// One SQA anneal and one SA run per `n`, with SA given the same number of
/// single-bit operations as an SQA replica (`sweeps * n * L`).
pub fn separation_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    let root = RngStream::new(config.seed);
    config
        .ns
        .iter()
        .enumerate()
        .map(|(i, &n)| benchmark_row(config, n, &root.substream(i as u64)))
        .collect()
}

fn benchmark_row(config: &BenchmarkConfig, n: usize, rng: &RngStream) -> Result<BenchmarkRow> {
    let cost = SymmetricCost::spike(n, config.alpha, config.zeta)?;
    let trotter = config.trotter_for(n);
    let schedule = build_schedule(n, config.beta, config.c, config.steps_per_s)?;
    let mut options = SqaOptions::new(trotter, config.kernel, config.replicas);
    options.readout = config.readout;
    let sqa = run_sqa(&cost, &schedule, &options, &rng.substream(0))?;
    let sweeps = schedule.s_values.len() * schedule.steps_per_s;
    let bit_ops = (sweeps * n * trotter) as u64;

    let ladder = SaSchedule::geometric(config.sa_t0, config.sa_t_final, config.sa_ratio, 1, 1)?;
    let per_t = (bit_ops as usize).div_ceil(ladder.temperatures.len());
    let sa_schedule = SaSchedule {
        steps_per_t: per_t,
        ..ladder
    };
    let sa = run_sa(&cost, &sa_schedule, &rng.substream(1), config.replicas)?;

    let points = config.gap_points.max(2);
    let s_max = schedule.s_max();
    let grid: Vec<f64> = (0..points).map(|k| s_max * k as f64 / (points - 1) as f64).collect();
    let gaps = grid
        .par_iter()
        .map(|&s| Ok((s, oracle::gap(&cost, s)?)))
        .collect::<Result<Vec<_>>>()?;
    let (min_gap_s, min_gap) = gaps.into_iter().fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let peak = sqa
        .per_s
        .iter()
        .filter(|r| r.active > 0)
        .max_by(|a, b| a.mean_spike_time.unwrap_or(0.0).total_cmp(&b.mean_spike_time.unwrap_or(0.0)));
    Ok(BenchmarkRow {
        n,
        trotter,
        beta: config.beta,
        s_max,
        kernel: config.kernel,
        sweeps,
        bit_ops,
        sqa_success: sqa.success_rate,
        sqa_aborts: sqa.aborts,
        sa_success: sa.success_rate,
        sa_trapped: sa.trapped_fraction,
        sa_steps_per_t: per_t,
        min_gap,
        min_gap_s,
        st_mean: peak.and_then(|r| r.mean_spike_time).unwrap_or(0.0),
        st_m2: peak.and_then(|r| r.mean_spike_time_sq).unwrap_or(0.0),
        st_peak_s: peak.map(|r| r.s).unwrap_or(0.0),
        sqa_tv: sqa.per_s.last().and_then(|r| r.tv_to_oracle),
        sa_tv: sa.per_s.last().and_then(|r| r.tv_to_oracle),
        seed: rng.seed(),
    })
}
