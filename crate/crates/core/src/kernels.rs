//! The two reversible Markov kernels on worldline configurations.
//!
//! Both are lazy: with probability 1/2 a step leaves the state untouched.
//!
//! * Metropolis: pick one of the `nL` sites uniformly, flip it with
//!   probability `min(1, pi(x')/pi(x))`.
//! * Worldline heat bath: pick a qubit uniformly and redraw its whole
//!   worldline from the conditional distribution given the other worldlines.
//!   The conditional is a periodic two-state chain; it is sampled exactly
//!   with 2x2 transfer matrices by drawing the first slice from the diagonal
//!   of the cyclic product and then sampling forward against the suffix
//!   products, conditioned on closing the cycle.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};
use crate::path_integral::{worldline_jumps, PathIntegralSystem, WorldlineConfiguration};
use crate::rng::RngStream;

/// Largest state space for explicit transition matrices.
pub const MAX_EXPLICIT_STATES: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Metropolis,
    #[serde(alias = "heat_bath", alias = "heat-bath")]
    WorldlineHeatBath,
}

impl KernelKind {
    /// Elementary steps that make up one sweep: `nL` flips or `n` worldline draws.
    pub fn steps_per_sweep(self, n: usize, trotter: usize) -> usize {
        match self {
            KernelKind::Metropolis => n * trotter,
            KernelKind::WorldlineHeatBath => n,
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelKind::Metropolis => "metropolis",
            KernelKind::WorldlineHeatBath => "heat-bath",
        })
    }
}

impl FromStr for KernelKind {
    type Err = SqaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(KernelKind::Metropolis),
            "heat-bath" | "heat_bath" | "worldline_heat_bath" | "worldline-heat-bath" => {
                Ok(KernelKind::WorldlineHeatBath)
            }
            other => Err(SqaError::param("kernel", format!("unknown kernel `{other}`"))),
        }
    }
}

/// One lazy single-site Metropolis step. Returns whether a flip happened.
#[inline]
pub fn metropolis_step(sys: &PathIntegralSystem, x: &mut WorldlineConfiguration, rng: &mut RngStream) -> bool {
    let l = sys.trotter();
    let sites = sys.n() * l;
    // one draw for both the lazy coin and the site
    let site = rng.below(2 * sites);
    if site >= sites {
        return false;
    }
    let (j, k) = (site / l, site % l);
    let accept = sys.flip_acceptance(x, j, k);
    if accept >= 1.0 || rng.uniform() < accept {
        x.flip(j, k);
        true
    } else {
        false
    }
}

/// Reusable buffers for the transfer-matrix sampler.
#[derive(Debug, Clone, Default)]
pub struct HeatBathScratch {
    weights: Vec<f64>,
    suffix: Vec<[f64; 4]>,
    line: Vec<u8>,
}

/// Conditional law of one worldline given the rest, in transfer-matrix form.
struct Conditional<'a> {
    tanh: f64,
    /// `w_k(1) / w_k(0)` per slice
    weights: &'a [f64],
    /// normalised suffix products `T_k T_{k+1} ... T_{L-1}`, row-major 2x2
    suffix: &'a [[f64; 4]],
    log_scale: f64,
}

#[inline]
fn transfer(w1: f64, tanh: f64) -> [f64; 4] {
    // T(a, b) = w(a) * (1 if a == b else tanh), rows indexed by a
    [1.0, tanh, w1 * tanh, w1]
}

#[inline]
fn mul2(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

fn build_conditional<'a>(
    sys: &PathIntegralSystem,
    x: &WorldlineConfiguration,
    qubit: usize,
    scratch: &'a mut HeatBathScratch,
    track_scale: bool,
) -> Result<Conditional<'a>> {
    let l = sys.trotter();
    let tanh = sys.tanh_omega();
    scratch.weights.clear();
    scratch.weights.extend((0..l).map(|k| {
        let h = x.slice_weight(k) - x.get(qubit, k) as usize;
        sys.step_ratio(h)
    }));
    scratch.suffix.resize(l, [0.0; 4]);
    let mut log_scale = 0.0;
    let mut acc = [1.0, 0.0, 0.0, 1.0];
    for k in (0..l).rev() {
        let t = transfer(scratch.weights[k], tanh);
        let prod = mul2(&t, &acc);
        let scale = prod.iter().copied().fold(0.0f64, f64::max);
        if !(scale.is_finite() && scale > 0.0) {
            return Err(SqaError::Numerical(format!(
                "transfer product degenerated at slice {k} (scale {scale})"
            )));
        }
        let inv = scale.recip();
        acc = prod.map(|v| v * inv);
        if track_scale {
            log_scale += scale.ln();
        }
        scratch.suffix[k] = acc;
    }
    Ok(Conditional {
        tanh,
        weights: &scratch.weights,
        suffix: &scratch.suffix,
        log_scale,
    })
}

impl Conditional<'_> {
    fn sample_into(&self, rng: &mut RngStream, line: &mut Vec<u8>) {
        let l = self.weights.len();
        let full = &self.suffix[0];
        let (p0, p1) = (full[0], full[3]);
        let first = usize::from(rng.uniform() * (p0 + p1) >= p0);
        line.clear();
        line.push(first as u8);
        let mut prev = first;
        for k in 0..l - 1 {
            let t = transfer(self.weights[k], self.tanh);
            let next = &self.suffix[k + 1];
            let w0 = t[prev * 2] * next[first];
            let w1 = t[prev * 2 + 1] * next[2 + first];
            let b = usize::from(rng.uniform() * (w0 + w1) >= w0);
            line.push(b as u8);
            prev = b;
        }
    }
}

/// Redraws the worldline of `qubit` exactly from its conditional distribution.
pub fn resample_worldline(
    sys: &PathIntegralSystem,
    x: &mut WorldlineConfiguration,
    qubit: usize,
    rng: &mut RngStream,
    scratch: &mut HeatBathScratch,
) -> Result<()> {
    let mut line = std::mem::take(&mut scratch.line);
    {
        let cond = build_conditional(sys, x, qubit, scratch, false)?;
        cond.sample_into(rng, &mut line);
    }
    x.set_worldline(qubit, &line);
    scratch.line = line;
    Ok(())
}

/// One lazy heat-bath worldline step. Returns whether a worldline was redrawn.
pub fn worldline_heat_bath_step(
    sys: &PathIntegralSystem,
    x: &mut WorldlineConfiguration,
    rng: &mut RngStream,
    scratch: &mut HeatBathScratch,
) -> Result<bool> {
    if rng.coin() {
        return Ok(false);
    }
    let qubit = rng.below(sys.n());
    resample_worldline(sys, x, qubit, rng, scratch)?;
    Ok(true)
}

/// Log normaliser of the conditional distribution of worldline `qubit`,
/// on the same scale as the worldline's own terms in `log_weight`.
pub fn conditional_log_partition(
    sys: &PathIntegralSystem,
    x: &WorldlineConfiguration,
    qubit: usize,
    scratch: &mut HeatBathScratch,
) -> Result<f64> {
    let base: f64 = (0..sys.trotter())
        .map(|k| {
            let h = x.slice_weight(k) - x.get(qubit, k) as usize;
            -sys.field() * sys.cost().at_weight(h)
        })
        .sum();
    let cond = build_conditional(sys, x, qubit, scratch, true)?;
    let trace = cond.suffix[0][0] + cond.suffix[0][3];
    Ok(base + cond.log_scale + trace.ln())
}

/// Log of the terms of `log_weight` that involve worldline `qubit` when it is
/// set to `line`, all other worldlines held fixed.
pub fn worldline_log_weight(sys: &PathIntegralSystem, x: &WorldlineConfiguration, qubit: usize, line: &[u8]) -> f64 {
    let cost: f64 = (0..sys.trotter())
        .map(|k| {
            let h = x.slice_weight(k) - x.get(qubit, k) as usize + line[k] as usize;
            sys.cost().at_weight(h)
        })
        .sum();
    -sys.field() * cost + worldline_jumps(line) as f64 * sys.log_tanh_omega()
}

/// `pi(worldline qubit = line | other worldlines)`.
pub fn conditional_probability(
    sys: &PathIntegralSystem,
    x: &WorldlineConfiguration,
    qubit: usize,
    line: &[u8],
    scratch: &mut HeatBathScratch,
) -> Result<f64> {
    let log_z = conditional_log_partition(sys, x, qubit, scratch)?;
    Ok((worldline_log_weight(sys, x, qubit, line) - log_z).exp())
}

/// A kernel together with its scratch space.
#[derive(Debug, Clone)]
pub struct Kernel {
    kind: KernelKind,
    scratch: HeatBathScratch,
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Self {
        Kernel {
            kind,
            scratch: HeatBathScratch::default(),
        }
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn step(&mut self, sys: &PathIntegralSystem, x: &mut WorldlineConfiguration, rng: &mut RngStream) -> Result<bool> {
        match self.kind {
            KernelKind::Metropolis => Ok(metropolis_step(sys, x, rng)),
            KernelKind::WorldlineHeatBath => worldline_heat_bath_step(sys, x, rng, &mut self.scratch),
        }
    }

    pub fn sweep(&mut self, sys: &PathIntegralSystem, x: &mut WorldlineConfiguration, rng: &mut RngStream) -> Result<()> {
        let steps = self.kind.steps_per_sweep(sys.n(), sys.trotter());
        match self.kind {
            KernelKind::Metropolis => {
                for _ in 0..steps {
                    metropolis_step(sys, x, rng);
                }
            }
            KernelKind::WorldlineHeatBath => {
                for _ in 0..steps {
                    worldline_heat_bath_step(sys, x, rng, &mut self.scratch)?;
                }
            }
        }
        debug_assert!(x.caches_consistent());
        Ok(())
    }

    pub fn sweeps(
        &mut self,
        sys: &PathIntegralSystem,
        x: &mut WorldlineConfiguration,
        rng: &mut RngStream,
        count: usize,
    ) -> Result<()> {
        for _ in 0..count {
            self.sweep(sys, x, rng)?;
        }
        Ok(())
    }
}

fn check_enumerable(sys: &PathIntegralSystem) -> Result<usize> {
    let bits = sys.n() * sys.trotter();
    if bits >= usize::BITS as usize || (1usize << bits) > MAX_EXPLICIT_STATES {
        return Err(SqaError::param(
            "n*L",
            format!("explicit matrices need 2^(nL) <= {MAX_EXPLICIT_STATES}, got nL = {bits}"),
        ));
    }
    Ok(1usize << bits)
}

/// Normalised stationary distribution over all `2^(nL)` configurations,
/// indexed as in [`WorldlineConfiguration::from_index`].
pub fn enumerate_stationary(sys: &PathIntegralSystem) -> Result<DVector<f64>> {
    let states = check_enumerable(sys)?;
    let logs: Vec<f64> = (0..states)
        .map(|i| sys.log_weight(&WorldlineConfiguration::from_index(sys.n(), sys.trotter(), i)))
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pi = DVector::from_iterator(states, logs.iter().map(|&v| (v - max).exp()));
    let total = pi.sum();
    pi /= total;
    Ok(pi)
}

/// Exact transition matrix of a kernel on an enumerable instance. Rows are
/// source states indexed as in [`WorldlineConfiguration::from_index`].
pub fn transition_matrix(sys: &PathIntegralSystem, kind: KernelKind) -> Result<DMatrix<f64>> {
    let states = check_enumerable(sys)?;
    let (n, l) = (sys.n(), sys.trotter());
    let mut p = DMatrix::<f64>::zeros(states, states);
    let mut scratch = HeatBathScratch::default();
    for from in 0..states {
        let x = WorldlineConfiguration::from_index(n, l, from);
        let mut moved = 0.0;
        match kind {
            KernelKind::Metropolis => {
                let rate = 1.0 / (2.0 * (n * l) as f64);
                for j in 0..n {
                    for k in 0..l {
                        let accept = sys.log_weight_delta_flip(&x, j, k).exp().min(1.0);
                        let to = from ^ (1 << (j * l + k));
                        p[(from, to)] += rate * accept;
                        moved += rate * accept;
                    }
                }
            }
            KernelKind::WorldlineHeatBath => {
                let rate = 1.0 / (2.0 * n as f64);
                let log_z: Vec<f64> = (0..n)
                    .map(|i| conditional_log_partition(sys, &x, i, &mut scratch))
                    .collect::<Result<_>>()?;
                for (i, &lz) in log_z.iter().enumerate() {
                    let mask = ((1usize << l) - 1) << (i * l);
                    for w in 0..(1usize << l) {
                        let line: Vec<u8> = (0..l).map(|k| ((w >> k) & 1) as u8).collect();
                        let prob = (worldline_log_weight(sys, &x, i, &line) - lz).exp();
                        let to = (from & !mask) | (w << (i * l));
                        if to != from {
                            p[(from, to)] += rate * prob;
                            moved += rate * prob;
                        }
                    }
                }
            }
        }
        p[(from, from)] += 1.0 - moved;
    }
    Ok(p)
}

/// Detailed-balance and stationarity audit of an explicit kernel matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityReport {
    pub kernel: KernelKind,
    pub states: usize,
    /// `max |pi(x)P(x,y) - pi(y)P(y,x)|`
    pub max_detailed_balance_violation: f64,
    /// same, relative to the larger of the two flows
    pub max_relative_balance_violation: f64,
    /// `max |(pi P)(y) - pi(y)|`
    pub max_stationarity_violation: f64,
    pub max_row_sum_error: f64,
    pub min_holding_probability: f64,
}

impl StationarityReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_detailed_balance_violation < tolerance
            && self.max_stationarity_violation < tolerance
            && self.max_row_sum_error < tolerance
    }
}

/// Builds the kernel's explicit matrix and checks it against the stationary
/// weights computed independently from `log_weight`.
pub fn stationarity_check(sys: &PathIntegralSystem, kind: KernelKind) -> Result<StationarityReport> {
    let p = transition_matrix(sys, kind)?;
    let pi = enumerate_stationary(sys)?;
    let states = pi.len();
    let mut balance: f64 = 0.0;
    let mut relative: f64 = 0.0;
    let mut row_err: f64 = 0.0;
    let mut holding = f64::INFINITY;
    for x in 0..states {
        row_err = row_err.max((p.row(x).sum() - 1.0).abs());
        holding = holding.min(p[(x, x)]);
        for y in (x + 1)..states {
            let a = pi[x] * p[(x, y)];
            let b = pi[y] * p[(y, x)];
            let diff = (a - b).abs();
            balance = balance.max(diff);
            if a.max(b) > 0.0 {
                relative = relative.max(diff / a.max(b));
            }
        }
    }
    let flowed = p.tr_mul(&pi);
    let stationarity = (flowed - &pi).amax();
    Ok(StationarityReport {
        kernel: kind,
        states,
        max_detailed_balance_violation: balance,
        max_relative_balance_violation: relative,
        max_stationarity_violation: stationarity,
        max_row_sum_error: row_err,
        min_holding_probability: holding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::SymmetricCost;

    fn system(values: Vec<f64>, l: usize, beta: f64, s: f64) -> PathIntegralSystem {
        PathIntegralSystem::new(SymmetricCost::custom(values).unwrap(), l, beta, s).unwrap()
    }

    #[test]
    fn kernel_names_parse() {
        assert_eq!("metropolis".parse::<KernelKind>().unwrap(), KernelKind::Metropolis);
        assert_eq!("heat-bath".parse::<KernelKind>().unwrap(), KernelKind::WorldlineHeatBath);
        assert!("gibbs".parse::<KernelKind>().is_err());
        let json = serde_json::to_string(&KernelKind::WorldlineHeatBath).unwrap();
        assert_eq!(json, "\"worldline_heat_bath\"");
    }

    #[test]
    fn pair_creation_acceptance_is_tanh_squared() {
        // beta (1 - s) / L = 0.03125 with zero cost change
        let values = vec![0.0; 3];
        let sys = system(values, 32, 2.0, 0.5);
        assert!((sys.omega() - 0.03125).abs() < 1e-15);
        let x = WorldlineConfiguration::zeros(2, 32);
        let accept = sys.log_weight_delta_flip(&x, 0, 5).exp().min(1.0);
        assert!((accept - 0.03125f64.tanh().powi(2)).abs() < 1e-15);
        assert!((accept - 9.759e-4).abs() < 1e-6);
    }

    #[test]
    fn acceptance_table_matches_weight_delta() {
        let mut rng = RngStream::new(12);
        for (n, l) in [(1usize, 1usize), (3, 2), (4, 5), (2, 7)] {
            let values: Vec<f64> = (0..=n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
            let sys = system(values, l, 2.5, 0.6);
            for _ in 0..50 {
                let x = WorldlineConfiguration::from_fn(n, l, |_, _| rng.coin());
                for j in 0..n {
                    for k in 0..l {
                        let direct = sys.log_weight_delta_flip(&x, j, k).exp().min(1.0);
                        assert!((sys.flip_acceptance(&x, j, k) - direct).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn downhill_pair_removal_always_accepted() {
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(1).unwrap(), 6, 2.0, 0.5).unwrap();
        let x = WorldlineConfiguration::from_spins(1, 6, vec![0, 0, 1, 0, 0, 0]).unwrap();
        assert!(sys.log_weight_delta_flip(&x, 0, 2).exp().min(1.0) == 1.0);
    }

    #[test]
    fn conditional_sums_to_one_and_matches_enumeration() {
        let sys = PathIntegralSystem::new(SymmetricCost::spike(4, 0.5, 0.0).unwrap(), 5, 2.0, 0.6).unwrap();
        let x = WorldlineConfiguration::from_fn(4, 5, |j, k| (j + 2 * k) % 3 == 0);
        let mut scratch = HeatBathScratch::default();
        for qubit in 0..4 {
            let mut total = 0.0;
            let mut brute = Vec::new();
            for w in 0..32usize {
                let line: Vec<u8> = (0..5).map(|k| ((w >> k) & 1) as u8).collect();
                total += conditional_probability(&sys, &x, qubit, &line, &mut scratch).unwrap();
                let mut y = x.clone();
                y.set_worldline(qubit, &line);
                brute.push(sys.log_weight(&y));
            }
            assert!((total - 1.0).abs() < 1e-12);
            let max = brute.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = brute.iter().map(|v| (v - max).exp()).sum();
            for (w, lw) in brute.iter().enumerate() {
                let line: Vec<u8> = (0..5).map(|k| ((w >> k) & 1) as u8).collect();
                let p = conditional_probability(&sys, &x, qubit, &line, &mut scratch).unwrap();
                assert!((p - (lw - max).exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spikeless_conditional_is_single_worldline_law() {
        let n = 3;
        let l = 4;
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(n).unwrap(), l, 2.0, 0.3).unwrap();
        let x = WorldlineConfiguration::from_fn(n, l, |j, k| (j + k) % 2 == 1);
        let mut scratch = HeatBathScratch::default();
        let field = sys.field();
        let tanh = sys.tanh_omega();
        let weight = |line: &[u8]| {
            let ones: f64 = line.iter().map(|&b| b as f64).sum();
            (-field * ones).exp() * tanh.powi(worldline_jumps(line) as i32)
        };
        let all: Vec<Vec<u8>> = (0..16usize).map(|w| (0..l).map(|k| ((w >> k) & 1) as u8).collect()).collect();
        let z: f64 = all.iter().map(|line| weight(line)).sum();
        for line in &all {
            let p = conditional_probability(&sys, &x, 1, line, &mut scratch).unwrap();
            assert!((p - weight(line) / z).abs() < 1e-13);
        }
    }

    #[test]
    fn vanishing_bond_weight_freezes_worldlines() {
        // omega ~ 1e-13: every jump costs ~1e-26
        let sys = PathIntegralSystem::new(SymmetricCost::spike(4, 1.0, 0.0).unwrap(), 6, 1.0, 1.0 - 6e-13).unwrap();
        let x = WorldlineConfiguration::from_fn(4, 6, |j, k| j == 0 || (j == 1 && k < 3));
        let mut rng = RngStream::new(3);
        let mut scratch = HeatBathScratch::default();
        let mut ones = 0usize;
        let draws = 20_000;
        for _ in 0..draws {
            let mut y = x.clone();
            resample_worldline(&sys, &mut y, 3, &mut rng, &mut scratch).unwrap();
            let line = y.worldline(3);
            assert!(line.iter().all(|&b| b == line[0]));
            ones += line[0] as usize;
        }
        let prod = |b: usize| -> f64 {
            (0..6)
                .map(|k| (-sys.field() * sys.cost().at_weight(x.slice_weight(k) + b)).exp())
                .product()
        };
        let expected = prod(1) / (prod(0) + prod(1));
        let freq = ones as f64 / draws as f64;
        let se = (expected * (1.0 - expected) / draws as f64).sqrt();
        assert!((freq - expected).abs() < 4.0 * se, "freq {freq} expected {expected}");
    }

    #[test]
    fn heat_bath_frequencies_match_enumeration() {
        // n = 2, L = 6, spike on weight 1
        let sys = system(vec![0.0, 1.0 + 2f64.powf(1.0 / 3.0), 2.0], 6, 3.0, 0.5);
        let x = WorldlineConfiguration::from_fn(2, 6, |j, k| j == 0 && k % 3 == 0);
        let mut scratch = HeatBathScratch::default();
        let exact: Vec<f64> = (0..64usize)
            .map(|w| {
                let line: Vec<u8> = (0..6).map(|k| ((w >> k) & 1) as u8).collect();
                let mut y = x.clone();
                y.set_worldline(1, &line);
                sys.log_weight(&y)
            })
            .collect();
        let max = exact.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = exact.iter().map(|v| (v - max).exp()).sum();
        let exact: Vec<f64> = exact.iter().map(|v| (v - max).exp() / z).collect();

        let draws = 1_000_000usize;
        let mut counts = [0usize; 64];
        let mut rng = RngStream::new(2024);
        let mut y = x.clone();
        for _ in 0..draws {
            resample_worldline(&sys, &mut y, 1, &mut rng, &mut scratch).unwrap();
            let w = y.worldline(1).iter().enumerate().fold(0usize, |acc, (k, &b)| acc | ((b as usize) << k));
            counts[w] += 1;
        }
        for w in 0..64 {
            let freq = counts[w] as f64 / draws as f64;
            let se = (exact[w] * (1.0 - exact[w]) / draws as f64).sqrt().max(1e-7);
            assert!((freq - exact[w]).abs() < 4.0 * se + 1e-6, "worldline {w}: {freq} vs {}", exact[w]);
        }
    }

    #[test]
    fn heat_bath_draw_ignores_current_worldline() {
        let sys = PathIntegralSystem::new(SymmetricCost::spike(4, 0.5, 0.0).unwrap(), 4, 2.0, 0.4).unwrap();
        let a = WorldlineConfiguration::from_fn(4, 4, |j, k| j == 1 || (j == 2 && k == 0));
        let mut b = a.clone();
        b.set_worldline(2, &[1, 1, 0, 1]);
        let mut sa = HeatBathScratch::default();
        let mut sb = HeatBathScratch::default();
        for w in 0..16usize {
            let line: Vec<u8> = (0..4).map(|k| ((w >> k) & 1) as u8).collect();
            let pa = conditional_probability(&sys, &a, 2, &line, &mut sa).unwrap();
            let pb = conditional_probability(&sys, &b, 2, &line, &mut sb).unwrap();
            assert!((pa - pb).abs() < 1e-14);
        }
    }

    #[test]
    fn explicit_matrices_are_reversible() {
        for kind in [KernelKind::Metropolis, KernelKind::WorldlineHeatBath] {
            let sys = PathIntegralSystem::new(SymmetricCost::spikeless(1).unwrap(), 2, 2.0, 0.5).unwrap();
            let r = stationarity_check(&sys, kind).unwrap();
            assert_eq!(r.states, 4);
            assert!(r.max_detailed_balance_violation < 1e-12, "{r:?}");

            let spike = system(vec![0.0, 1.0 + 2f64.powf(1.0 / 3.0), 2.0], 2, 2.0, 0.5);
            let r = stationarity_check(&spike, kind).unwrap();
            assert_eq!(r.states, 16);
            assert!(r.max_stationarity_violation < 1e-12, "{r:?}");
            assert!(r.max_relative_balance_violation < 1e-10, "{r:?}");
            assert!(r.min_holding_probability >= 0.5 - 1e-15);
        }
    }

    #[test]
    fn metropolis_frequencies_match_matrix() {
        // n = 1, L = 3: eight states
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(1).unwrap(), 3, 1.5, 0.4).unwrap();
        let p = transition_matrix(&sys, KernelKind::Metropolis).unwrap();
        let steps = 1_000_000usize;
        let mut counts = vec![[0usize; 8]; 8];
        let mut visits = [0usize; 8];
        let mut rng = RngStream::new(77);
        let mut x = WorldlineConfiguration::zeros(1, 3);
        for _ in 0..steps {
            let from = x.to_index();
            metropolis_step(&sys, &mut x, &mut rng);
            counts[from][x.to_index()] += 1;
            visits[from] += 1;
        }
        for from in 0..8 {
            for to in 0..8 {
                let nv = visits[from] as f64;
                let freq = counts[from][to] as f64 / nv;
                let q = p[(from, to)];
                let se = (q * (1.0 - q) / nv).sqrt();
                assert!((freq - q).abs() <= 4.0 * se + 1e-9, "{from}->{to}: {freq} vs {q}");
            }
        }
    }

    #[test]
    fn both_kernels_reach_extremes() {
        let sys = PathIntegralSystem::new(SymmetricCost::spike(4, 0.5, 0.0).unwrap(), 2, 2.0, 0.5).unwrap();
        for kind in [KernelKind::Metropolis, KernelKind::WorldlineHeatBath] {
            let p = transition_matrix(&sys, kind).unwrap();
            let states = p.nrows();
            let mut reach = vec![false; states];
            reach[0] = true;
            let mut frontier = vec![0usize];
            while let Some(s) = frontier.pop() {
                for t in 0..states {
                    if p[(s, t)] > 0.0 && !reach[t] {
                        reach[t] = true;
                        frontier.push(t);
                    }
                }
            }
            assert!(reach.iter().all(|&r| r), "{kind} not irreducible");
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(4).unwrap(), 4, 1.0, 0.5).unwrap();
        assert!(transition_matrix(&sys, KernelKind::Metropolis).is_err());
    }
}
