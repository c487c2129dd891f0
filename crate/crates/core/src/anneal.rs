//! The discretised annealing path, warm-started sampling along it, and the
//! jump-count abort rule.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};
use crate::kernels::{resample_worldline, HeatBathScratch, Kernel, KernelKind};
use crate::oracle::{self, SECTOR_CAP};
use crate::path_integral::{spike_time, ConfigSnapshot, PathIntegralSystem, WorldlineConfiguration};
use crate::rng::RngStream;

/// Inverse temperature `n^(epsilon/2)`, capped at 10.
pub fn default_beta(n: usize, epsilon: f64) -> f64 {
    (n as f64).powf(epsilon / 2.0).min(10.0)
}

/// `ceil(10 beta ln n)`, at least 1.
pub fn default_abort_threshold(n: usize, beta: f64) -> u32 {
    ((10.0 * beta * (n as f64).ln()).ceil() as u32).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub s_values: Vec<f64>,
    pub steps_per_s: usize,
    pub beta: f64,
    pub abort_jump_threshold: u32,
}

impl AnnealSchedule {
    pub fn s_max(&self) -> f64 {
        *self.s_values.last().unwrap_or(&0.0)
    }

    pub fn spacing(&self) -> f64 {
        self.s_values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_values.is_empty() {
            return Err(SqaError::param("s_values", "schedule is empty"));
        }
        if self.s_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SqaError::param("s_values", "must be strictly increasing"));
        }
        if self.s_values[0] < 0.0 || self.s_max() >= 1.0 {
            return Err(SqaError::param("s_values", "must lie in [0, 1)"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(SqaError::param("beta", format!("must be finite and > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Uniform grid on `[0, 1 - 1/n]` with spacing at most `c / (beta n ln n)`.
pub fn build_schedule(n: usize, beta: f64, c: f64, steps_per_s: usize) -> Result<AnnealSchedule> {
    if !(c.is_finite() && c > 0.0) {
        return Err(SqaError::param("c", format!("must be finite and > 0, got {c}")));
    }
    if n == 0 {
        return Err(SqaError::param("n", "must be >= 1"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(SqaError::param("beta", format!("must be finite and > 0, got {beta}")));
    }
    let s_max = 1.0 - 1.0 / n as f64;
    let bound = c / (beta * n as f64 * (n as f64).ln());
    let intervals = if s_max == 0.0 {
        0
    } else {
        ((s_max / bound).ceil() as usize).max(1)
    };
    let s_values = if intervals == 0 {
        vec![0.0]
    } else {
        (0..=intervals)
            .map(|i| if i == intervals { s_max } else { s_max * i as f64 / intervals as f64 })
            .collect()
    };
    Ok(AnnealSchedule {
        s_values,
        steps_per_s,
        beta,
        abort_jump_threshold: default_abort_threshold(n, beta),
    })
}

/// Outcome of comparing two energy tables `E_1`, `E_2` on one domain with
/// `p_i ∝ e^{-E_i}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeBound {
    /// `max_x |E_1(x) - E_2(x)|`
    pub delta: f64,
    /// `|log Z_1 / Z_2|`
    pub log_z_ratio: f64,
    /// `max_x |log p_1(x) / p_2(x)|`
    pub max_log_p_ratio: f64,
}

impl StepsizeBound {
    pub fn holds(&self, slack: f64) -> bool {
        self.log_z_ratio <= self.delta + slack && self.max_log_p_ratio <= 2.0 * self.delta + slack
    }
}

fn log_sum_exp_neg(e: &[f64]) -> f64 {
    let min = e.iter().copied().fold(f64::INFINITY, f64::min);
    -min + e.iter().map(|v| (min - v).exp()).sum::<f64>().ln()
}

pub fn stepsize_bound(e1: &[f64], e2: &[f64]) -> Result<StepsizeBound> {
    if e1.len() != e2.len() {
        return Err(SqaError::LengthMismatch {
            expected: e1.len(),
            actual: e2.len(),
        });
    }
    if e1.is_empty() {
        return Err(SqaError::param("energies", "empty table"));
    }
    let delta = e1.iter().zip(e2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let (z1, z2) = (log_sum_exp_neg(e1), log_sum_exp_neg(e2));
    let max_log_p_ratio = e1
        .iter()
        .zip(e2)
        .map(|(a, b)| ((-a - z1) - (-b - z2)).abs())
        .fold(0.0, f64::max);
    Ok(StepsizeBound {
        delta,
        log_z_ratio: (z1 - z2).abs(),
        max_log_p_ratio,
    })
}

/// Step-size comparison of the path-integral distributions of two systems on
/// the same `(n, L)`, by exhaustive enumeration (`nL <= 20`).
pub fn warm_start_check(a: &PathIntegralSystem, b: &PathIntegralSystem) -> Result<StepsizeBound> {
    if a.n() != b.n() || a.trotter() != b.trotter() {
        return Err(SqaError::param("systems", "need identical n and L"));
    }
    let bits = a.n() * a.trotter();
    if bits > 20 {
        return Err(SqaError::param("n*L", format!("enumeration limited to nL <= 20, got {bits}")));
    }
    let (e1, e2): (Vec<f64>, Vec<f64>) = (0..1usize << bits)
        .map(|i| {
            let x = WorldlineConfiguration::from_index(a.n(), a.trotter(), i);
            (-a.log_weight(&x), -b.log_weight(&x))
        })
        .unzip();
    stepsize_bound(&e1, &e2)
}

/// Which slices count towards success at the end of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    #[default]
    FirstSlice,
    AnySlice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqaOptions {
    pub trotter: usize,
    pub kernel: KernelKind,
    pub replicas: usize,
    #[serde(default)]
    pub readout: Readout,
    /// Compare each grid point against the exact Trotter marginal.
    #[serde(default = "yes")]
    pub track_oracle: bool,
    /// Interval whose occupation is reported as the spike time; defaults to
    /// the cost's own spike.
    #[serde(default)]
    pub indicator: Option<SpikeIndicator>,
    /// Record replica 0 every this many sweeps.
    #[serde(default)]
    pub snapshot_every: Option<usize>,
}

fn yes() -> bool {
    true
}

impl SqaOptions {
    pub fn new(trotter: usize, kernel: KernelKind, replicas: usize) -> Self {
        SqaOptions {
            trotter,
            kernel,
            replicas,
            readout: Readout::FirstSlice,
            track_oracle: true,
            indicator: None,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqaParams {
    pub n: usize,
    pub cost: SymmetricCost,
    pub beta: f64,
    #[serde(rename = "L")]
    pub trotter: usize,
    pub kernel: KernelKind,
    pub replicas: usize,
    pub seed: u64,
    pub steps_per_s: usize,
    pub grid_points: usize,
    pub s_max: f64,
    pub abort_jump_threshold: u32,
    pub readout: Readout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSRow {
    pub s: f64,
    /// replicas still running after this grid point
    pub active: usize,
    pub tv_to_oracle: Option<f64>,
    pub mean_spike_time: Option<f64>,
    /// `<ST^2>` over active replicas
    pub mean_spike_time_sq: Option<f64>,
    pub oracle_spike_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub init_ms: u64,
    pub sampling_ms: u64,
    pub oracle_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub s_index: usize,
    pub sweep: usize,
    pub config: ConfigSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqaReport {
    pub params: SqaParams,
    pub per_s: Vec<PerSRow>,
    pub success_rate: f64,
    pub successes: usize,
    pub aborts: usize,
    /// first-slice weight histogram of the initial state
    pub initial_marginal: Vec<f64>,
    /// first-slice weight histogram at the end, over completed replicas
    pub final_marginal: Vec<f64>,
    pub wall_ms: u64,
    pub timing: Timing,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<SnapshotRecord>,
}

impl SqaReport {
    pub fn clear_timing(&mut self) {
        self.wall_ms = 0;
        self.timing = Timing {
            init_ms: 0,
            sampling_ms: 0,
            oracle_ms: 0,
        };
    }
}

struct ReplicaOutcome {
    initial_weight: usize,
    /// first-slice weight and spike time after each completed grid point
    trace: Vec<(u32, u32)>,
    aborted: bool,
    success: bool,
    snapshots: Vec<SnapshotRecord>,
}

/// Exact draw from the `s = 0` path-integral distribution, where worldlines
/// are independent.
pub fn sample_initial(sys0: &PathIntegralSystem, rng: &mut RngStream) -> Result<WorldlineConfiguration> {
    let mut x = WorldlineConfiguration::zeros(sys0.n(), sys0.trotter());
    let mut scratch = HeatBathScratch::default();
    for qubit in 0..sys0.n() {
        resample_worldline(sys0, &mut x, qubit, rng, &mut scratch)?;
    }
    Ok(x)
}

fn run_replica(
    systems: &[PathIntegralSystem],
    schedule: &AnnealSchedule,
    options: &SqaOptions,
    ind: &SpikeIndicator,
    mut rng: RngStream,
    record: bool,
) -> Result<ReplicaOutcome> {
    let mut x = sample_initial(&systems[0].at_s(0.0)?, &mut rng)?;
    let initial_weight = x.slice_weight(0);
    let mut kernel = Kernel::new(options.kernel);
    let mut trace = Vec::with_capacity(systems.len());
    let mut snapshots = Vec::new();
    let mut aborted = false;
    'grid: for (i, sys) in systems.iter().enumerate() {
        for sweep in 0..schedule.steps_per_s {
            kernel.sweep(sys, &mut x, &mut rng)?;
            if x.max_jumps() > schedule.abort_jump_threshold {
                aborted = true;
                break 'grid;
            }
            if record && options.snapshot_every.is_some_and(|k| k > 0 && (sweep + 1) % k == 0) {
                snapshots.push(SnapshotRecord {
                    s_index: i,
                    sweep: sweep + 1,
                    config: x.to_snapshot(),
                });
            }
        }
        trace.push((x.slice_weight(0) as u32, spike_time(&x, ind) as u32));
    }
    let success = !aborted
        && match options.readout {
            Readout::FirstSlice => x.slice_weight(0) == 0,
            Readout::AnySlice => x.slice_weights().contains(&0),
        };
    Ok(ReplicaOutcome {
        initial_weight,
        trace,
        aborted,
        success,
        snapshots,
    })
}

fn ms(since: Instant) -> u64 {
    since.elapsed().as_millis() as u64
}

fn histogram(n: usize, weights: impl Iterator<Item = usize>) -> Vec<f64> {
    let mut h = vec![0.0; n + 1];
    let mut count = 0usize;
    for w in weights {
        h[w] += 1.0;
        count += 1;
    }
    if count > 0 {
        h.iter_mut().for_each(|v| *v /= count as f64);
    }
    h
}

/// Runs independent replicas along the schedule. Replica `r` draws from
/// substream `r` of `rng`, so results do not depend on thread count.
pub fn run_sqa(
    cost: &SymmetricCost,
    schedule: &AnnealSchedule,
    options: &SqaOptions,
    rng: &RngStream,
) -> Result<SqaReport> {
    let start = Instant::now();
    schedule.validate()?;
    if options.replicas == 0 {
        return Err(SqaError::param("replicas", "must be >= 1"));
    }
    let n = cost.n();
    let systems: Vec<PathIntegralSystem> = schedule
        .s_values
        .iter()
        .map(|&s| PathIntegralSystem::new(cost.clone(), options.trotter, schedule.beta, s))
        .collect::<Result<_>>()?;
    let ind = match options.indicator.or_else(|| cost.spike_indicator()) {
        Some(ind) => ind,
        None => SpikeIndicator::with_interval(n, -1.0, -1.0)?,
    };
    let has_spike = options.indicator.is_some() || cost.spike_indicator().is_some();
    let init_ms = ms(start);

    let sampling = Instant::now();
    let outcomes: Vec<ReplicaOutcome> = (0..options.replicas)
        .into_par_iter()
        .map(|r| run_replica(&systems, schedule, options, &ind, rng.substream(r as u64), r == 0))
        .collect::<Result<_>>()?;
    let sampling_ms = ms(sampling);

    let aborts = outcomes.iter().filter(|o| o.aborted).count();
    if aborts == options.replicas {
        return Err(SqaError::AllReplicasAborted {
            aborted: aborts,
            replicas: options.replicas,
        });
    }

    let oracle_start = Instant::now();
    let oracles: Vec<Option<Vec<f64>>> = if options.track_oracle && n <= SECTOR_CAP {
        schedule
            .s_values
            .par_iter()
            .map(|&s| oracle::trotter_marginal(cost, s, schedule.beta, options.trotter).map(|m| Some(m.probs)))
            .collect::<Result<_>>()?
    } else {
        vec![None; schedule.s_values.len()]
    };
    let oracle_ms = ms(oracle_start);

    let l = options.trotter as f64;
    let per_s = schedule
        .s_values
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let rows: Vec<(u32, u32)> = outcomes.iter().filter_map(|o| o.trace.get(i).copied()).collect();
            let active = rows.len();
            let hist = histogram(n, rows.iter().map(|r| r.0 as usize));
            let tv = oracles[i]
                .as_ref()
                .filter(|_| active > 0)
                .map(|p| 0.5 * hist.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>());
            let mean_st = (has_spike && active > 0)
                .then(|| rows.iter().map(|r| r.1 as f64).sum::<f64>() / active as f64);
            let mean_st_sq = (has_spike && active > 0)
                .then(|| rows.iter().map(|r| (r.1 as f64).powi(2)).sum::<f64>() / active as f64);
            let oracle_st = oracles[i]
                .as_ref()
                .filter(|_| has_spike)
                .map(|p| l * ind.weights().iter().map(|&k| p[k]).sum::<f64>());
            PerSRow {
                s,
                active,
                tv_to_oracle: tv,
                mean_spike_time: mean_st,
                mean_spike_time_sq: mean_st_sq,
                oracle_spike_time: oracle_st,
            }
        })
        .collect();

    let successes = outcomes.iter().filter(|o| o.success).count();
    let completed: Vec<&ReplicaOutcome> = outcomes.iter().filter(|o| !o.aborted).collect();
    let final_marginal = histogram(
        n,
        completed.iter().filter_map(|o| o.trace.last().map(|t| t.0 as usize)),
    );
    let initial_marginal = histogram(n, outcomes.iter().map(|o| o.initial_weight));
    let snapshots = outcomes.into_iter().next().map(|o| o.snapshots).unwrap_or_default();

    Ok(SqaReport {
        params: SqaParams {
            n,
            cost: cost.clone(),
            beta: schedule.beta,
            trotter: options.trotter,
            kernel: options.kernel,
            replicas: options.replicas,
            seed: rng.seed(),
            steps_per_s: schedule.steps_per_s,
            grid_points: schedule.s_values.len(),
            s_max: schedule.s_max(),
            abort_jump_threshold: schedule.abort_jump_threshold,
            readout: options.readout,
        },
        per_s,
        success_rate: successes as f64 / options.replicas as f64,
        successes,
        aborts,
        initial_marginal,
        final_marginal,
        wall_ms: ms(start),
        timing: Timing {
            init_ms,
            sampling_ms,
            oracle_ms,
        },
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn schedule_spacing_example() {
        let sched = build_schedule(16, 4.0, 1.0, 10).unwrap();
        let bound = 1.0 / (4.0 * 16.0 * 16f64.ln());
        assert!((bound - 0.00564).abs() < 1e-5);
        assert!(sched.spacing() <= bound + 1e-15);
        assert_eq!(sched.s_values.len(), 168);
        assert_eq!(sched.s_values[0], 0.0);
        assert_eq!(sched.s_max(), 0.9375);
        assert_eq!(sched.abort_jump_threshold, (40.0 * 16f64.ln()).ceil() as u32);
    }

    #[test]
    fn coarse_schedule_clips_to_endpoints() {
        let sched = build_schedule(4, 1.0, 1e6, 1).unwrap();
        assert_eq!(sched.s_values, vec![0.0, 0.75]);
        let single = build_schedule(1, 1.0, 1.0, 1).unwrap();
        assert_eq!(single.s_values, vec![0.0]);
        assert!(build_schedule(8, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn default_beta_is_capped() {
        assert!((default_beta(16, 1.0) - 4.0).abs() < 1e-15);
        assert_eq!(default_beta(1_000_000, 1.0), 10.0);
    }

    #[test]
    fn identical_tables_give_zero_bounds() {
        let e = vec![0.3, -1.0, 2.5, 0.0];
        let b = stepsize_bound(&e, &e).unwrap();
        assert_eq!(b.delta, 0.0);
        assert!(b.log_z_ratio.abs() < 1e-15 && b.max_log_p_ratio.abs() < 1e-15);
    }

    #[test]
    fn constant_shift_leaves_distribution() {
        let e1 = vec![0.3, -1.0, 2.5, 0.0];
        let e2: Vec<f64> = e1.iter().map(|v| v + 0.7).collect();
        let b = stepsize_bound(&e1, &e2).unwrap();
        assert!((b.delta - 0.7).abs() < 1e-15);
        assert!((b.log_z_ratio - 0.7).abs() < 1e-14);
        assert!(b.max_log_p_ratio < 1e-14);
    }

    #[test]
    fn random_perturbation_example() {
        let mut rng = RngStream::new(5);
        let e1: Vec<f64> = (0..100).map(|_| 5.0 * rng.uniform()).collect();
        let e2: Vec<f64> = e1.iter().map(|v| v + 0.1 * (2.0 * rng.uniform() - 1.0)).collect();
        let b = stepsize_bound(&e1, &e2).unwrap();
        assert!(b.delta <= 0.1);
        assert!(b.max_log_p_ratio <= 0.2);
    }

    proptest! {
        #[test]
        fn stepsize_lemma(
            base in proptest::collection::vec(-20.0f64..20.0, 1..64),
            noise in proptest::collection::vec(-1.0f64..1.0, 64),
            scale in 0.0f64..3.0,
        ) {
            let e2: Vec<f64> = base.iter().zip(&noise).map(|(a, d)| a + scale * d).collect();
            let b = stepsize_bound(&base, &e2).unwrap();
            prop_assert!(b.holds(1e-12), "{b:?}");
        }
    }

    #[test]
    fn warm_start_ratio_on_small_instance() {
        let cost = SymmetricCost::custom(vec![0.0, 1.0 + 2f64.powf(1.0 / 3.0), 2.0]).unwrap();
        let sched = build_schedule(2, 2.0, 1.0, 1).unwrap();
        for w in sched.s_values.windows(2) {
            let a = PathIntegralSystem::new(cost.clone(), 3, sched.beta, w[0]).unwrap();
            let b = PathIntegralSystem::new(cost.clone(), 3, sched.beta, w[1]).unwrap();
            let bound = warm_start_check(&a, &b).unwrap();
            assert!(bound.holds(1e-12));
        }
    }

    #[test]
    fn zero_sweeps_returns_initial_marginal() {
        let cost = SymmetricCost::spike(8, 1.0 / 3.0, 0.0).unwrap();
        let sched = build_schedule(8, 2.0, 4.0, 0).unwrap();
        let opts = SqaOptions::new(8, KernelKind::WorldlineHeatBath, 4000);
        let rep = run_sqa(&cost, &sched, &opts, &RngStream::new(1)).unwrap();
        assert_eq!(rep.final_marginal, rep.initial_marginal);
        assert_eq!(rep.aborts, 0);
        // the s = 0 slice marginal is Binomial(8, 1/2)
        let tv0 = rep.per_s[0].tv_to_oracle.unwrap();
        assert!(tv0 < 0.03, "tv {tv0}");
    }

    #[test]
    fn reports_are_deterministic() {
        let cost = SymmetricCost::spike(6, 1.0 / 3.0, 0.0).unwrap();
        let sched = build_schedule(6, 2.0, 4.0, 2).unwrap();
        let opts = SqaOptions::new(6, KernelKind::Metropolis, 16);
        let mut a = run_sqa(&cost, &sched, &opts, &RngStream::new(9)).unwrap();
        let mut b = run_sqa(&cost, &sched, &opts, &RngStream::new(9)).unwrap();
        a.clear_timing();
        b.clear_timing();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn all_aborted_is_an_error() {
        let cost = SymmetricCost::spikeless(4).unwrap();
        let mut sched = build_schedule(4, 2.0, 4.0, 2).unwrap();
        sched.abort_jump_threshold = 0;
        let opts = SqaOptions::new(32, KernelKind::WorldlineHeatBath, 8);
        match run_sqa(&cost, &sched, &opts, &RngStream::new(2)) {
            Err(SqaError::AllReplicasAborted { aborted: 8, replicas: 8 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spikeless_anneal_matches_final_oracle() {
        // s_max = 1 - 1/n leaves (1 - p(s_max))^n ~ 0.93 ground mass on weight 0
        let cost = SymmetricCost::spikeless(16).unwrap();
        let sched = build_schedule(16, 10.0, 4.0, 4).unwrap();
        let opts = SqaOptions::new(16, KernelKind::WorldlineHeatBath, 400);
        let rep = run_sqa(&cost, &sched, &opts, &RngStream::new(4)).unwrap();
        let p0 = oracle::trotter_marginal(&cost, sched.s_max(), 10.0, 16).unwrap().probs[0];
        let se = (p0 * (1.0 - p0) / 400.0).sqrt();
        assert!((rep.success_rate - p0).abs() < 4.0 * se, "{} vs {p0}", rep.success_rate);
        assert!(rep.success_rate >= 0.9);
    }
}
