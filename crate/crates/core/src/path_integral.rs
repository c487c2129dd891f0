//! Suzuki–Trotter state space of the transverse-field system.
//!
//! A configuration is an `n x L` binary array: row `j` is the worldline of
//! qubit `j`, column `k` is time slice `k`. Slices are periodic, slice `L`
//! wraps to slice `0`. Its unnormalised stationary weight is
//!
//! ```text
//! exp(-(beta s / L) * sum_k f(|x_k|)) * tanh(omega)^(total jumps),  omega = beta (1 - s) / L
//! ```
//!
//! with the global `cosh(omega)^(nL)` factor dropped.

use serde::{Deserialize, Serialize};

use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};

/// `ceil(n^2 beta^(3/2))`, the Trotter number that keeps the splitting error
/// at relative order `1/n`.
pub fn default_trotter_number(n: usize, beta: f64) -> usize {
    let nf = n as f64;
    let raw = nf * nf * beta * beta.sqrt();
    let nearest = raw.round();
    let value = if (raw - nearest).abs() <= 1e-9 * raw.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (value as usize).max(1)
}

/// Parameters of one point on the annealing path together with the derived
/// constants the samplers need.
#[derive(Debug, Clone)]
pub struct PathIntegralSystem {
    cost: SymmetricCost,
    trotter: usize,
    beta: f64,
    s: f64,
    omega: f64,
    field: f64,
    tanh_omega: f64,
    log_tanh_omega: f64,
    /// `exp(-field * (f(h+1) - f(h)))` for `h in 0..n`.
    step_ratio: Vec<f64>,
    /// `min(1, pi(x')/pi(x))` for a single flip, by (slice weight, spin, jump change)
    flip_accept: Vec<f64>,
}

impl PathIntegralSystem {
    pub fn new(cost: SymmetricCost, trotter: usize, beta: f64, s: f64) -> Result<Self> {
        if trotter == 0 {
            return Err(SqaError::param("L", "Trotter number must be at least 1"));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(SqaError::param("beta", format!("must be > 0, got {beta}")));
        }
        if !(s.is_finite() && (0.0..1.0).contains(&s)) {
            return Err(SqaError::param("s", format!("must lie in [0, 1), got {s}")));
        }
        let omega = beta * (1.0 - s) / trotter as f64;
        let tanh_omega = omega.tanh();
        if tanh_omega <= 0.0 {
            return Err(SqaError::param("s", format!("tanh(omega) underflows at omega = {omega:e}")));
        }
        let field = beta * s / trotter as f64;
        let step_ratio = cost
            .values()
            .windows(2)
            .map(|w| (-field * (w[1] - w[0])).exp())
            .collect();
        let log_tanh_omega = tanh_omega.ln();
        let n = cost.n();
        let mut flip_accept = vec![0.0; (n + 1) * 6];
        for h in 0..=n {
            for here in 0..2usize {
                let target = if here == 0 { h + 1 } else { h.wrapping_sub(1) };
                if target > n {
                    continue;
                }
                let cost_delta = cost.at_weight(target) - cost.at_weight(h);
                for jd in 0..3 {
                    let delta = -field * cost_delta + (2 * jd as i32 - 2) as f64 * log_tanh_omega;
                    flip_accept[(h * 2 + here) * 3 + jd] = delta.exp().min(1.0);
                }
            }
        }
        Ok(PathIntegralSystem {
            cost,
            trotter,
            beta,
            s,
            omega,
            field,
            tanh_omega,
            log_tanh_omega,
            step_ratio,
            flip_accept,
        })
    }

    /// Same system at a different point of the annealing path.
    pub fn at_s(&self, s: f64) -> Result<Self> {
        Self::new(self.cost.clone(), self.trotter, self.beta, s)
    }

    pub fn cost(&self) -> &SymmetricCost {
        &self.cost
    }
    pub fn n(&self) -> usize {
        self.cost.n()
    }
    pub fn trotter(&self) -> usize {
        self.trotter
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn s(&self) -> f64 {
        self.s
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    /// `beta s / L`, the weight of one slice's cost in the exponent.
    pub fn field(&self) -> f64 {
        self.field
    }
    pub fn tanh_omega(&self) -> f64 {
        self.tanh_omega
    }
    pub fn log_tanh_omega(&self) -> f64 {
        self.log_tanh_omega
    }
    #[inline]
    pub(crate) fn step_ratio(&self, h: usize) -> f64 {
        self.step_ratio[h]
    }

    /// `min(1, exp(log_weight_delta_flip(x, j, k)))` from a lookup table.
    #[inline]
    pub(crate) fn flip_acceptance(&self, x: &WorldlineConfiguration, j: usize, k: usize) -> f64 {
        let l = self.trotter;
        let row = &x.spins[j * l..(j + 1) * l];
        let here = row[k];
        // neighbours equal to `here` turn into jumps after the flip
        let eq = if l > 1 {
            let prev = row[if k == 0 { l - 1 } else { k - 1 }];
            let next = row[if k + 1 == l { 0 } else { k + 1 }];
            usize::from(prev == here) + usize::from(next == here)
        } else {
            1
        };
        self.flip_accept[(x.slice_weights[k] as usize * 2 + here as usize) * 3 + eq]
    }

    /// Log of the unnormalised stationary weight of `x`.
    pub fn log_weight(&self, x: &WorldlineConfiguration) -> f64 {
        debug_assert_eq!(x.n(), self.n());
        debug_assert_eq!(x.trotter(), self.trotter);
        let cost: f64 = x.slice_weights.iter().map(|&h| self.cost.at_weight(h as usize)).sum();
        -self.field * cost + x.total_jumps() as f64 * self.log_tanh_omega
    }

    /// `log_weight(flip(x, j, k)) - log_weight(x)` from the cached slice
    /// weights, touching only slice `k` and the two bonds around `(j, k)`.
    #[inline]
    pub fn log_weight_delta_flip(&self, x: &WorldlineConfiguration, j: usize, k: usize) -> f64 {
        let l = self.trotter;
        let here = x.get(j, k);
        let h = x.slice_weights[k] as usize;
        let cost_delta = if here == 0 {
            self.cost.at_weight(h + 1) - self.cost.at_weight(h)
        } else {
            self.cost.at_weight(h - 1) - self.cost.at_weight(h)
        };
        let mut jump_delta = 0i32;
        if l > 1 {
            let prev = if k == 0 { l - 1 } else { k - 1 };
            let next = if k + 1 == l { 0 } else { k + 1 };
            for nb in [prev, next] {
                jump_delta += if x.get(j, nb) == here { 1 } else { -1 };
            }
        }
        -self.field * cost_delta + jump_delta as f64 * self.log_tanh_omega
    }

    /// Number of slices whose Hamming weight lies on the spike.
    pub fn spike_time(x: &WorldlineConfiguration, ind: &SpikeIndicator) -> usize {
        spike_time(x, ind)
    }
}

/// `ST(x)`: how many time slices have their Hamming weight inside the spike interval.
pub fn spike_time(x: &WorldlineConfiguration, ind: &SpikeIndicator) -> usize {
    x.slice_weights.iter().filter(|&&h| ind.contains(h as usize)).count()
}

/// Dense `n x L` spin array with cached slice weights and per-worldline jump counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldlineConfiguration {
    n: usize,
    trotter: usize,
    spins: Vec<u8>,
    slice_weights: Vec<u32>,
    jump_counts: Vec<u32>,
}

impl WorldlineConfiguration {
    pub fn zeros(n: usize, trotter: usize) -> Self {
        WorldlineConfiguration {
            n,
            trotter,
            spins: vec![0; n * trotter],
            slice_weights: vec![0; trotter],
            jump_counts: vec![0; n],
        }
    }

    /// Builds a configuration from `bit(j, k)`.
    pub fn from_fn(n: usize, trotter: usize, mut bit: impl FnMut(usize, usize) -> bool) -> Self {
        let mut spins = Vec::with_capacity(n * trotter);
        for j in 0..n {
            for k in 0..trotter {
                spins.push(u8::from(bit(j, k)));
            }
        }
        Self::from_spins(n, trotter, spins).expect("dimensions are consistent by construction")
    }

    /// Row-major spins, row `j` = worldline of qubit `j`.
    pub fn from_spins(n: usize, trotter: usize, spins: Vec<u8>) -> Result<Self> {
        if spins.len() != n * trotter {
            return Err(SqaError::LengthMismatch {
                expected: n * trotter,
                actual: spins.len(),
            });
        }
        if spins.iter().any(|&b| b > 1) {
            return Err(SqaError::Malformed("spins must be 0 or 1".into()));
        }
        let mut x = WorldlineConfiguration {
            n,
            trotter,
            spins,
            slice_weights: vec![0; trotter],
            jump_counts: vec![0; n],
        };
        x.recompute_caches();
        Ok(x)
    }

    /// Configuration indexed by `index in 0..2^(nL)`, bit `j*L + k` of the index.
    pub fn from_index(n: usize, trotter: usize, index: usize) -> Self {
        Self::from_fn(n, trotter, |j, k| (index >> (j * trotter + k)) & 1 == 1)
    }

    pub fn to_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }
    #[inline]
    pub fn trotter(&self) -> usize {
        self.trotter
    }
    #[inline]
    pub fn get(&self, j: usize, k: usize) -> u8 {
        self.spins[j * self.trotter + k]
    }
    pub fn spins(&self) -> &[u8] {
        &self.spins
    }
    pub fn worldline(&self, j: usize) -> &[u8] {
        &self.spins[j * self.trotter..(j + 1) * self.trotter]
    }
    pub fn slice(&self, k: usize) -> Vec<bool> {
        (0..self.n).map(|j| self.get(j, k) == 1).collect()
    }
    pub fn slice_weights(&self) -> &[u32] {
        &self.slice_weights
    }
    #[inline]
    pub fn slice_weight(&self, k: usize) -> usize {
        self.slice_weights[k] as usize
    }
    pub fn jump_counts(&self) -> &[u32] {
        &self.jump_counts
    }
    pub fn total_jumps(&self) -> u64 {
        self.jump_counts.iter().map(|&c| c as u64).sum()
    }
    pub fn max_jumps(&self) -> u32 {
        self.jump_counts.iter().copied().max().unwrap_or(0)
    }

    /// Flips spin `(j, k)` and updates the caches in O(1).
    #[inline]
    pub fn flip(&mut self, j: usize, k: usize) {
        let l = self.trotter;
        let idx = j * l + k;
        let old = self.spins[idx];
        if l > 1 {
            let row = &self.spins[j * l..(j + 1) * l];
            let prev = row[if k == 0 { l - 1 } else { k - 1 }];
            let next = row[if k + 1 == l { 0 } else { k + 1 }];
            // each neighbour equal to the old value becomes a new jump
            let before = u32::from(prev != old) + u32::from(next != old);
            let after = 2 - before;
            self.jump_counts[j] = self.jump_counts[j] + after - before;
        }
        self.spins[idx] = 1 - old;
        if old == 0 {
            self.slice_weights[k] += 1;
        } else {
            self.slice_weights[k] -= 1;
        }
    }

    /// Replaces worldline `j` wholesale.
    pub fn set_worldline(&mut self, j: usize, line: &[u8]) {
        let l = self.trotter;
        debug_assert_eq!(line.len(), l);
        for (k, &b) in line.iter().enumerate() {
            let idx = j * l + k;
            let old = self.spins[idx];
            if old != b {
                if b == 1 {
                    self.slice_weights[k] += 1;
                } else {
                    self.slice_weights[k] -= 1;
                }
                self.spins[idx] = b;
            }
        }
        self.jump_counts[j] = worldline_jumps(line);
    }

    fn recompute_caches(&mut self) {
        for k in 0..self.trotter {
            self.slice_weights[k] = (0..self.n).map(|j| self.get(j, k) as u32).sum();
        }
        for j in 0..self.n {
            self.jump_counts[j] = worldline_jumps(self.worldline(j));
        }
    }

    /// Whether the caches agree with a full recomputation from the spins.
    pub fn caches_consistent(&self) -> bool {
        let mut fresh = self.clone();
        fresh.recompute_caches();
        fresh.slice_weights == self.slice_weights && fresh.jump_counts == self.jump_counts
    }

    /// Cyclic shift of every worldline by `offset` slices.
    pub fn rotated(&self, offset: usize) -> Self {
        let l = self.trotter;
        Self::from_fn(self.n, l, |j, k| self.get(j, (k + offset) % l) == 1)
    }

    /// Worldlines reordered so that new row `j` is old row `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::from_fn(self.n, self.trotter, |j, k| self.get(perm[j], k) == 1)
    }

    pub fn to_snapshot(&self) -> ConfigSnapshot {
        let mut bytes = vec![0u8; self.spins.len().div_ceil(8)];
        for (i, &b) in self.spins.iter().enumerate() {
            if b == 1 {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        let bits = bytes.iter().map(|b| format!("{b:02x}")).collect();
        ConfigSnapshot {
            n: self.n,
            trotter: self.trotter,
            bits,
        }
    }

    pub fn from_snapshot(snap: &ConfigSnapshot) -> Result<Self> {
        let total = snap.n * snap.trotter;
        let hex = snap.bits.as_bytes();
        if hex.len() != 2 * total.div_ceil(8) {
            return Err(SqaError::Malformed(format!(
                "expected {} hex digits for a {}x{} array, got {}",
                2 * total.div_ceil(8),
                snap.n,
                snap.trotter,
                hex.len()
            )));
        }
        let mut spins = Vec::with_capacity(total);
        for i in 0..total {
            let byte = u8::from_str_radix(&snap.bits[2 * (i / 8)..2 * (i / 8) + 2], 16)
                .map_err(|e| SqaError::Malformed(format!("bad hex: {e}")))?;
            spins.push(u8::from(byte & (0x80 >> (i % 8)) != 0));
        }
        Self::from_spins(snap.n, snap.trotter, spins)
    }
}

/// Number of disagreeing neighbours around a periodic worldline.
pub fn worldline_jumps(line: &[u8]) -> u32 {
    let l = line.len();
    if l < 2 {
        return 0;
    }
    (0..l).filter(|&k| line[k] != line[(k + 1) % l]).count() as u32
}

/// Serialised configuration: row-major bits (row = worldline), packed
/// MSB-first into bytes and hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    pub n: usize,
    #[serde(rename = "L")]
    pub trotter: usize,
    pub bits: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use proptest::prelude::*;

    fn random_config(n: usize, l: usize, rng: &mut RngStream) -> WorldlineConfiguration {
        WorldlineConfiguration::from_fn(n, l, |_, _| rng.coin())
    }

    /// Term-by-term evaluation of the stationary weight, no caches.
    fn brute_log_weight(sys: &PathIntegralSystem, x: &WorldlineConfiguration) -> f64 {
        let (n, l) = (x.n(), x.trotter());
        let mut total = 0.0;
        for k in 0..l {
            let w = (0..n).filter(|&j| x.get(j, k) == 1).count();
            total -= sys.beta() * sys.s() / l as f64 * sys.cost().at_weight(w);
        }
        let mut product = 1.0f64;
        for j in 0..n {
            for k in 0..l {
                let next = (k + 1) % l;
                if x.get(j, k) != x.get(j, next) {
                    product *= (sys.beta() * (1.0 - sys.s()) / l as f64).tanh();
                }
            }
        }
        total + product.ln()
    }

    #[test]
    fn trotter_number_defaults() {
        assert_eq!(default_trotter_number(16, 4.0), 2048);
        assert_eq!(default_trotter_number(1, 1.0), 1);
        assert_eq!(default_trotter_number(8, 3.0), 333);
    }

    #[test]
    fn system_validates_and_derives_omega() {
        let c = SymmetricCost::spikeless(4).unwrap();
        let sys = PathIntegralSystem::new(c.clone(), 8, 2.0, 0.25).unwrap();
        assert!((sys.omega() - 2.0 * 0.75 / 8.0).abs() < 1e-15);
        assert!(PathIntegralSystem::new(c.clone(), 8, 2.0, 1.0).is_err());
        assert!(PathIntegralSystem::new(c.clone(), 0, 2.0, 0.5).is_err());
        assert!(PathIntegralSystem::new(c, 8, -1.0, 0.5).is_err());
    }

    #[test]
    fn log_weight_examples() {
        let c = SymmetricCost::spikeless(3).unwrap();
        let sys = PathIntegralSystem::new(c, 5, 2.0, 0.4).unwrap();
        assert_eq!(sys.log_weight(&WorldlineConfiguration::zeros(3, 5)), 0.0);

        let c1 = SymmetricCost::spikeless(1).unwrap();
        let sys1 = PathIntegralSystem::new(c1, 4, 2.0, 0.4).unwrap();
        let x = WorldlineConfiguration::from_spins(1, 4, vec![0, 0, 1, 1]).unwrap();
        let field = 2.0 * 0.4 / 4.0;
        let expected = -field * 2.0 + 2.0 * sys1.log_tanh_omega();
        assert!((sys1.log_weight(&x) - expected).abs() < 1e-14);
    }

    #[test]
    fn log_weight_matches_brute_force() {
        let mut rng = RngStream::new(5);
        let c = SymmetricCost::custom(vec![0.3, -1.2, 2.5]).unwrap();
        let sys = PathIntegralSystem::new(c, 4, 1.7, 0.6).unwrap();
        for _ in 0..50 {
            let x = random_config(2, 4, &mut rng);
            assert!((sys.log_weight(&x) - brute_log_weight(&sys, &x)).abs() < 1e-12);
        }
    }

    #[test]
    fn flip_delta_examples() {
        let c = SymmetricCost::spikeless(1).unwrap();
        let sys = PathIntegralSystem::new(c, 6, 3.0, 0.5).unwrap();
        let x = WorldlineConfiguration::zeros(1, 6);
        let field = 3.0 * 0.5 / 6.0;
        let d = sys.log_weight_delta_flip(&x, 0, 2);
        assert!((d - (2.0 * sys.log_tanh_omega() - field)).abs() < 1e-14);

        let x = WorldlineConfiguration::from_spins(1, 6, vec![0, 0, 1, 0, 0, 0]).unwrap();
        let d = sys.log_weight_delta_flip(&x, 0, 2);
        assert!((d - (-2.0 * sys.log_tanh_omega() + field)).abs() < 1e-14);
    }

    #[test]
    fn spike_time_examples() {
        let ind = SpikeIndicator::new(16, 0.0).unwrap();
        let zeros = WorldlineConfiguration::zeros(16, 7);
        assert_eq!(spike_time(&zeros, &ind), 0);
        let on_spike = WorldlineConfiguration::from_fn(16, 7, |j, _| j < 4);
        assert_eq!(spike_time(&on_spike, &ind), 7);

        let mut rng = RngStream::new(9);
        let ind = SpikeIndicator::new(8, 0.5).unwrap();
        for _ in 0..20 {
            let x = random_config(8, 10, &mut rng);
            let scan = (0..10)
                .filter(|&k| ind.contains(x.slice(k).iter().filter(|&&b| b).count()))
                .count();
            assert_eq!(spike_time(&x, &ind), scan);
        }
    }

    #[test]
    fn short_trotter_boundaries() {
        // L = 1: the only bond is a self-bond and never breaks.
        let x = WorldlineConfiguration::from_spins(2, 1, vec![1, 0]).unwrap();
        assert_eq!(x.total_jumps(), 0);
        // L = 2: both bonds join the same two slices.
        let x = WorldlineConfiguration::from_spins(1, 2, vec![0, 1]).unwrap();
        assert_eq!(x.total_jumps(), 2);
    }

    #[test]
    fn snapshot_round_trip() {
        let x = WorldlineConfiguration::from_spins(2, 5, vec![1, 0, 0, 1, 1, 0, 1, 1, 1, 0]).unwrap();
        let snap = x.to_snapshot();
        assert_eq!(snap.bits, "9b80");
        let json = serde_json::to_string(&snap).unwrap();
        assert_eq!(json, r#"{"n":2,"L":5,"bits":"9b80"}"#);
        let back = WorldlineConfiguration::from_snapshot(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, x);
        let bad = ConfigSnapshot { n: 2, trotter: 5, bits: "9d".into() };
        assert!(WorldlineConfiguration::from_snapshot(&bad).is_err());
    }

    proptest! {
        #[test]
        fn flip_delta_matches_recomputation(seed in any::<u64>(), n in 1usize..5, l in 1usize..7, s in 0.0f64..0.99) {
            let mut rng = RngStream::new(seed);
            let values: Vec<f64> = (0..=n).map(|_| 3.0 * rng.uniform() - 1.0).collect();
            let sys = PathIntegralSystem::new(SymmetricCost::custom(values).unwrap(), l, 2.5, s).unwrap();
            let mut x = random_config(n, l, &mut rng);
            for _ in 0..20 {
                let (j, k) = (rng.below(n), rng.below(l));
                let before = sys.log_weight(&x);
                let delta = sys.log_weight_delta_flip(&x, j, k);
                x.flip(j, k);
                prop_assert!(x.caches_consistent());
                prop_assert!((sys.log_weight(&x) - before - delta).abs() < 1e-12);
                prop_assert!(x.jump_counts().iter().all(|c| c % 2 == 0));
            }
        }

        #[test]
        fn weight_symmetries(seed in any::<u64>(), offset in 0usize..6) {
            let mut rng = RngStream::new(seed);
            let (n, l) = (4usize, 6usize);
            let sys = PathIntegralSystem::new(SymmetricCost::spike(n, 0.5, 0.0).unwrap(), l, 2.0, 0.7).unwrap();
            let x = random_config(n, l, &mut rng);
            let w = sys.log_weight(&x);
            prop_assert!(w.exp() > 0.0);
            prop_assert!((sys.log_weight(&x.rotated(offset)) - w).abs() < 1e-12);
            prop_assert!((sys.log_weight(&x.permuted(&[2, 0, 3, 1])) - w).abs() < 1e-12);
        }

        #[test]
        fn spikeless_weight_factorises(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let (n, l) = (3usize, 5usize);
            let sys = PathIntegralSystem::new(SymmetricCost::spikeless(n).unwrap(), l, 1.5, 0.3).unwrap();
            let single = PathIntegralSystem::new(SymmetricCost::spikeless(1).unwrap(), l, 1.5, 0.3).unwrap();
            let x = random_config(n, l, &mut rng);
            let parts: f64 = (0..n)
                .map(|j| {
                    let line = WorldlineConfiguration::from_spins(1, l, x.worldline(j).to_vec()).unwrap();
                    single.log_weight(&line)
                })
                .sum();
            prop_assert!((sys.log_weight(&x) - parts).abs() < 1e-12);
        }
    }
}
