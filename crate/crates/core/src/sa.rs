//! Classical simulated annealing on `f(|z|)` with k-bit-flip Metropolis moves.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::Timing;
use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};
use crate::oracle::binomial;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaSchedule {
    pub temperatures: Vec<f64>,
    pub steps_per_t: usize,
    pub flip_size: usize,
}

impl SaSchedule {
    /// `T_i = t0 ratio^i` while above `t_final`, then `t_final` itself.
    pub fn geometric(t0: f64, t_final: f64, ratio: f64, steps_per_t: usize, flip_size: usize) -> Result<Self> {
        if !(t0.is_finite() && t_final > 0.0 && t0 >= t_final) {
            return Err(SqaError::param("temperatures", format!("need t0 >= t_final > 0, got {t0}, {t_final}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(SqaError::param("ratio", format!("must lie in (0, 1), got {ratio}")));
        }
        let mut temperatures = Vec::new();
        let mut t = t0;
        while t > t_final {
            temperatures.push(t);
            t *= ratio;
        }
        temperatures.push(t_final);
        let sched = SaSchedule {
            temperatures,
            steps_per_t,
            flip_size,
        };
        Ok(sched)
    }

    /// Ladder from `T = n` down to `0.1` with ratio `0.95`.
    pub fn default_for(n: usize, steps_per_t: usize) -> Result<Self> {
        Self::geometric((n as f64).max(0.1), 0.1, 0.95, steps_per_t, 1)
    }

    pub fn total_steps(&self) -> usize {
        self.temperatures.len() * self.steps_per_t
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.temperatures.is_empty() {
            return Err(SqaError::param("temperatures", "schedule is empty"));
        }
        if self.temperatures.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SqaError::param("temperatures", "must be strictly decreasing"));
        }
        if !(self.temperatures.iter().all(|t| t.is_finite() && *t > 0.0)) {
            return Err(SqaError::param("temperatures", "must be finite and > 0"));
        }
        if self.flip_size == 0 || self.flip_size > n {
            return Err(SqaError::param("flip_size", format!("need 1 <= k <= n = {n}, got {}", self.flip_size)));
        }
        Ok(())
    }
}

/// A bit string with its cached Hamming weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaState {
    bits: Vec<bool>,
    weight: usize,
}

impl SaState {
    pub fn new(bits: Vec<bool>) -> Self {
        let weight = bits.iter().filter(|&&b| b).count();
        SaState { bits, weight }
    }

    pub fn random(n: usize, rng: &mut RngStream) -> Self {
        Self::new((0..n).map(|_| rng.coin()).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn weight(&self) -> usize {
        self.weight
    }
}

/// One Metropolis move: flip `k` distinct uniformly chosen bits, accept with
/// `min(1, exp((f(z) - f(y)) / T))`. Returns whether the move was accepted.
pub fn sa_step(cost: &SymmetricCost, z: &mut SaState, t: f64, k: usize, rng: &mut RngStream) -> bool {
    let n = z.bits.len();
    let (new_weight, accepted) = if k == 1 {
        let i = rng.below(n);
        let w = if z.bits[i] { z.weight - 1 } else { z.weight + 1 };
        let ok = accept(cost, z.weight, w, t, rng);
        if ok {
            z.bits[i] = !z.bits[i];
        }
        (w, ok)
    } else {
        let picks = index::sample(rng, n, k);
        let ones = picks.iter().filter(|&i| z.bits[i]).count();
        let w = z.weight + k - 2 * ones;
        let ok = accept(cost, z.weight, w, t, rng);
        if ok {
            for i in picks.iter() {
                z.bits[i] = !z.bits[i];
            }
        }
        (w, ok)
    };
    if accepted {
        z.weight = new_weight;
    }
    accepted
}

#[inline]
fn accept(cost: &SymmetricCost, from: usize, to: usize, t: f64, rng: &mut RngStream) -> bool {
    let delta = cost.at_weight(from) - cost.at_weight(to);
    delta >= 0.0 || rng.uniform() < (delta / t).exp()
}

/// Gibbs weight marginal `C(n,k) e^{-f(k)/T} / Z`.
pub fn gibbs_marginal(cost: &SymmetricCost, t: f64) -> Vec<f64> {
    let n = cost.n();
    let fmin = cost.values().iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = (0..=n)
        .map(|k| binomial(n, k) * (-(cost.at_weight(k) - fmin) / t).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

/// Exact SA kernel at fixed temperature on all `2^n` strings (`n <= 12`).
pub fn sa_transition_matrix(cost: &SymmetricCost, t: f64, k: usize) -> Result<DMatrix<f64>> {
    let n = cost.n();
    if n > 12 {
        return Err(SqaError::param("n", format!("explicit SA kernel limited to n <= 12, got {n}")));
    }
    if k == 0 || k > n {
        return Err(SqaError::param("flip_size", format!("need 1 <= k <= n, got {k}")));
    }
    let dim = 1usize << n;
    let masks: Vec<usize> = (0..dim).filter(|m| m.count_ones() as usize == k).collect();
    let rate = 1.0 / masks.len() as f64;
    let mut p = DMatrix::zeros(dim, dim);
    for z in 0..dim {
        let fz = cost.at_weight(z.count_ones() as usize);
        let mut moved = 0.0;
        for &m in &masks {
            let y = z ^ m;
            let a = ((fz - cost.at_weight(y.count_ones() as usize)) / t).exp().min(1.0);
            p[(z, y)] += rate * a;
            moved += rate * a;
        }
        p[(z, z)] += 1.0 - moved;
    }
    Ok(p)
}

/// Single-bit-flip SA step lumped onto Hamming weights: from weight `w` the
/// walk proposes `w - 1` with probability `w/n` and `w + 1` otherwise.
pub fn sa_weight_step(cost: &SymmetricCost, dist: &[f64], t: f64) -> Vec<f64> {
    let n = cost.n();
    let nf = n as f64;
    let acc = |from: usize, to: usize| ((cost.at_weight(from) - cost.at_weight(to)) / t).exp().min(1.0);
    let mut out = vec![0.0; n + 1];
    for (w, &p) in dist.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let mut stay = p;
        if w > 0 {
            let m = p * w as f64 / nf * acc(w, w - 1);
            out[w - 1] += m;
            stay -= m;
        }
        if w < n {
            let m = p * (n - w) as f64 / nf * acc(w, w + 1);
            out[w + 1] += m;
            stay -= m;
        }
        out[w] += stay;
    }
    out
}

/// Exact final weight distribution of single-bit-flip SA from a uniform
/// random string.
pub fn sa_exact_final_marginal(cost: &SymmetricCost, schedule: &SaSchedule) -> Result<Vec<f64>> {
    let n = cost.n();
    schedule.validate(n)?;
    if schedule.flip_size != 1 {
        return Err(SqaError::param("flip_size", "the lumped recursion covers k = 1 only"));
    }
    let scale = 0.5f64.powi(n as i32);
    let mut dist: Vec<f64> = (0..=n).map(|k| binomial(n, k) * scale).collect();
    for &t in &schedule.temperatures {
        for _ in 0..schedule.steps_per_t {
            dist = sa_weight_step(cost, &dist, t);
        }
    }
    Ok(dist)
}

/// Where k-bit-flip proposals from a string of weight `w` land relative to `ind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProposalStats {
    pub n: usize,
    pub weight: usize,
    pub flip_size: usize,
    pub samples: usize,
    /// fraction of proposals landing strictly below the interval
    pub below_fraction: f64,
    /// fraction of proposals landing inside the interval
    pub on_interval_fraction: f64,
    /// exact probability of landing below, from the hypergeometric law
    pub below_exact: f64,
}

/// Exact probability that flipping `k` distinct random bits of a weight-`w`
/// string yields a weight below `threshold`.
pub fn crossing_probability(n: usize, w: usize, k: usize, threshold: f64) -> f64 {
    let total = binomial(n, k);
    (0..=k.min(w))
        .filter(|&h| k <= n - w + h)
        .filter(|&h| ((w + k) as f64 - 2.0 * h as f64) < threshold)
        .map(|h| binomial(w, h) * binomial(n - w, k - h) / total)
        .sum()
}

pub fn proposal_statistics(
    n: usize,
    w: usize,
    k: usize,
    ind: &SpikeIndicator,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ProposalStats> {
    if w > n || k == 0 || k > n {
        return Err(SqaError::param("flip_size", format!("need w <= n and 1 <= k <= n (n={n}, w={w}, k={k})")));
    }
    let bits: Vec<bool> = (0..n).map(|i| i < w).collect();
    let mut below = 0usize;
    let mut on = 0usize;
    for _ in 0..samples {
        let ones = index::sample(rng, n, k).iter().filter(|&i| bits[i]).count();
        let nw = w + k - 2 * ones;
        if (nw as f64) <= ind.lower {
            below += 1;
        } else if ind.contains(nw) {
            on += 1;
        }
    }
    Ok(ProposalStats {
        n,
        weight: w,
        flip_size: k,
        samples,
        below_fraction: below as f64 / samples as f64,
        on_interval_fraction: on as f64 / samples as f64,
        below_exact: crossing_probability(n, w, k, ind.lower.floor() + 1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaParams {
    pub n: usize,
    pub cost: SymmetricCost,
    pub t0: f64,
    pub t_final: f64,
    pub temperatures: usize,
    pub steps_per_t: usize,
    pub flip_size: usize,
    pub replicas: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaRow {
    /// position along the ladder, `i / (m - 1)`
    pub s: f64,
    pub temperature: f64,
    pub tv_to_oracle: Option<f64>,
    /// fraction of replicas on the spike
    pub mean_spike_time: Option<f64>,
    pub mean_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaReport {
    pub params: SaParams,
    pub per_s: Vec<SaRow>,
    pub success_rate: f64,
    pub successes: usize,
    /// never nonzero; kept so SA and SQA reports share a schema
    pub aborts: usize,
    /// fraction of replicas ending at the weight just right of the spike
    pub trapped_fraction: Option<f64>,
    pub initial_marginal: Vec<f64>,
    pub final_marginal: Vec<f64>,
    pub wall_ms: u64,
    pub timing: Timing,
}

impl SaReport {
    pub fn clear_timing(&mut self) {
        self.wall_ms = 0;
        self.timing = Timing {
            init_ms: 0,
            sampling_ms: 0,
            oracle_ms: 0,
        };
    }
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

/// Independent SA replicas from uniformly random strings. Replica `r` uses
/// substream `r` of `rng`.
pub fn run_sa(cost: &SymmetricCost, schedule: &SaSchedule, rng: &RngStream, replicas: usize) -> Result<SaReport> {
    let start = Instant::now();
    let n = cost.n();
    schedule.validate(n)?;
    if replicas == 0 {
        return Err(SqaError::param("replicas", "must be >= 1"));
    }
    let sampling = Instant::now();
    let traces: Vec<(usize, Vec<u32>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng.substream(r as u64);
            let mut z = SaState::random(n, &mut rng);
            let initial = z.weight();
            let mut trace = Vec::with_capacity(schedule.temperatures.len());
            for &t in &schedule.temperatures {
                for _ in 0..schedule.steps_per_t {
                    sa_step(cost, &mut z, t, schedule.flip_size, &mut rng);
                }
                trace.push(z.weight() as u32);
            }
            (initial, trace)
        })
        .collect();
    let sampling_ms = sampling.elapsed().as_millis() as u64;

    let oracle_start = Instant::now();
    let ind = cost.spike_indicator();
    let m = schedule.temperatures.len();
    let per_s = schedule
        .temperatures
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let hist = histogram(n, traces.iter().map(|(_, tr)| tr[i] as usize));
            let gibbs = gibbs_marginal(cost, t);
            let tv = 0.5 * hist.iter().zip(&gibbs).map(|(a, b)| (a - b).abs()).sum::<f64>();
            SaRow {
                s: if m > 1 { i as f64 / (m - 1) as f64 } else { 1.0 },
                temperature: t,
                tv_to_oracle: Some(tv),
                mean_spike_time: ind.map(|ind| ind.weights().iter().map(|&k| hist[k]).sum()),
                mean_weight: traces.iter().map(|(_, tr)| tr[i] as f64).sum::<f64>() / replicas as f64,
            }
        })
        .collect();
    let oracle_ms = oracle_start.elapsed().as_millis() as u64;

    let finals: Vec<usize> = traces.iter().map(|(_, tr)| *tr.last().unwrap() as usize).collect();
    let successes = finals.iter().filter(|&&w| w == 0).count();
    let trapped_fraction = cost
        .local_minimum_weight()
        .map(|k| finals.iter().filter(|&&w| w == k).count() as f64 / replicas as f64);
    Ok(SaReport {
        params: SaParams {
            n,
            cost: cost.clone(),
            t0: schedule.temperatures[0],
            t_final: *schedule.temperatures.last().unwrap(),
            temperatures: m,
            steps_per_t: schedule.steps_per_t,
            flip_size: schedule.flip_size,
            replicas,
            seed: rng.seed(),
        },
        per_s,
        success_rate: successes as f64 / replicas as f64,
        successes,
        aborts: 0,
        trapped_fraction,
        initial_marginal: histogram(n, traces.iter().map(|(w, _)| *w)),
        final_marginal: histogram(n, finals.into_iter()),
        wall_ms: start.elapsed().as_millis() as u64,
        timing: Timing {
            init_ms: 0,
            sampling_ms,
            oracle_ms,
        },
    })
}
