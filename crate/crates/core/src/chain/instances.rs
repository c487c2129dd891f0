//! Named chains and path sets: toy chains, random reversible chains, and the
//! SQA kernels on enumerable instances with their fixed-order paths.

use std::collections::{HashSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::paths::{congestion, CanonicalPathSet, Path, Reference};
use super::ExplicitChain;
use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};
use crate::kernels::{enumerate_stationary, transition_matrix, KernelKind};
use crate::path_integral::{spike_time, PathIntegralSystem, WorldlineConfiguration};
use crate::rng::RngStream;

/// `P(x, y) = pi(y)`.
pub fn complete_graph(pi: &[f64]) -> Result<ExplicitChain> {
    let total: f64 = pi.iter().sum();
    let pi: Vec<f64> = pi.iter().map(|v| v / total).collect();
    let n = pi.len();
    ExplicitChain::new(DMatrix::from_fn(n, n, |_, y| pi[y]), pi, true)
}

/// `[[1-p, p], [q, 1-q]]`.
pub fn two_state(p: f64, q: f64) -> Result<ExplicitChain> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) || p + q == 0.0 {
        return Err(SqaError::param("p, q", format!("need probabilities with p + q > 0, got {p}, {q}")));
    }
    let m = DMatrix::from_row_slice(2, 2, &[1.0 - p, p, q, 1.0 - q]);
    ExplicitChain::new(m, vec![q / (p + q), p / (p + q)], true)
}

fn normalise(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Lazy Metropolis chain for `pi` with proposals uniform over the
/// neighbours in `adjacency`, scaled by the largest degree.
pub fn metropolis_on_graph(pi: &[f64], adjacency: &[Vec<usize>]) -> Result<ExplicitChain> {
    let n = pi.len();
    let pi = normalise(pi);
    let degree = adjacency.iter().map(Vec::len).max().unwrap_or(0).max(1) as f64;
    let mut p = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut out = 0.0;
        for &y in &adjacency[x] {
            let v = (pi[y] / pi[x]).min(1.0) / (2.0 * degree);
            p[(x, y)] = v;
            out += v;
        }
        p[(x, x)] = 1.0 - out;
    }
    ExplicitChain::new(p, pi, true)
}

/// Lazy Metropolis walk on the path `0 - 1 - ... - (N-1)`.
pub fn birth_death(pi: &[f64]) -> Result<ExplicitChain> {
    let n = pi.len();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|x| {
            let mut v = Vec::new();
            if x > 0 {
                v.push(x - 1);
            }
            if x + 1 < n {
                v.push(x + 1);
            }
            v
        })
        .collect();
    metropolis_on_graph(pi, &adjacency)
}

/// Ring plus random chords with probability `density`.
fn random_graph(states: usize, rng: &mut RngStream, density: f64) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); states];
    let link = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    };
    for x in 0..states {
        link(x, (x + 1) % states, &mut adj);
    }
    for x in 0..states {
        for y in (x + 2)..states {
            if rng.uniform() < density {
                link(x, y, &mut adj);
            }
        }
    }
    adj.iter_mut().for_each(|v| v.sort_unstable());
    adj
}

/// Reversible chain on a random connected graph with log-uniform target
/// weights in `[e^-3, 1]`.
pub fn random_reversible(states: usize, rng: &mut RngStream, density: f64) -> Result<ExplicitChain> {
    let w: Vec<f64> = (0..states).map(|_| (-3.0 * rng.uniform()).exp()).collect();
    metropolis_on_graph(&w, &random_graph(states, rng, density))
}

/// Random chain whose last `trap` states form a bad set of total mass
/// `trap_mass`. Returns the chain and the good-set mask.
pub fn trap_chain(states: usize, trap: usize, trap_mass: f64, rng: &mut RngStream) -> Result<(ExplicitChain, Vec<bool>)> {
    if trap == 0 || trap >= states || !(0.0 < trap_mass && trap_mass < 1.0) {
        return Err(SqaError::param("trap", "need 0 < trap < states and 0 < mass < 1"));
    }
    let mut w: Vec<f64> = (0..states).map(|_| (-3.0 * rng.uniform()).exp()).collect();
    let good: f64 = w[..states - trap].iter().sum();
    let bad: f64 = w[states - trap..].iter().sum();
    let scale = trap_mass / (1.0 - trap_mass) * good / bad;
    w[states - trap..].iter_mut().for_each(|v| *v *= scale);
    let chain = metropolis_on_graph(&w, &random_graph(states, rng, 0.15))?;
    let mask = (0..states).map(|x| x < states - trap).collect();
    Ok((chain, mask))
}

/// One-edge paths `x -> y` (trivial for `x = y`); edges need not exist.
pub fn direct_paths(chain: &ExplicitChain) -> CanonicalPathSet {
    CanonicalPathSet::from_fn(chain.len(), |x, y| {
        if x == y {
            Path::trivial(x)
        } else {
            Path::new(vec![x, y]).unwrap()
        }
    })
}

/// BFS shortest paths inside `subset`, lowest-index tie-breaking. Pairs
/// outside the subset are left unrouted.
pub fn shortest_paths(chain: &ExplicitChain, subset: &[bool]) -> Result<CanonicalPathSet> {
    let n = chain.len();
    let mut set = CanonicalPathSet::new(n);
    for x in (0..n).filter(|&x| subset[x]) {
        let mut parent = vec![usize::MAX; n];
        parent[x] = x;
        let mut queue = VecDeque::from([x]);
        while let Some(v) = queue.pop_front() {
            for &w in chain.neighbours(v) {
                if subset[w] && parent[w] == usize::MAX {
                    parent[w] = v;
                    queue.push_back(w);
                }
            }
        }
        for y in (0..n).filter(|&y| subset[y]) {
            if parent[y] == usize::MAX {
                return Err(SqaError::InvalidPath {
                    from: x,
                    to: y,
                    reason: "subset is disconnected".into(),
                });
            }
            let mut rev = vec![y];
            let mut v = y;
            while v != x {
                v = parent[v];
                rev.push(v);
            }
            rev.reverse();
            set.set(x, y, super::Routing::Single(Path::new(rev)?));
        }
    }
    Ok(set)
}

/// `x, x +- 1, ..., y` on a path graph.
pub fn monotone_paths(states: usize) -> CanonicalPathSet {
    CanonicalPathSet::from_fn(states, |x, y| {
        let v: Vec<usize> = if x <= y { (x..=y).collect() } else { (y..=x).rev().collect() };
        Path::new(v).unwrap()
    })
}

/// Geometric birth-death pair with a suppressed band.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSpec {
    pub states: usize,
    /// `pi~(i) ~ bias^i`.
    pub bias: f64,
    pub band_start: usize,
    pub band_end: usize,
    /// Band weights are multiplied by `e^{-suppression}`.
    pub suppression: f64,
    pub theta: f64,
}

impl Default for BarrierSpec {
    fn default() -> Self {
        BarrierSpec {
            states: 200,
            bias: 0.85,
            band_start: 95,
            band_end: 105,
            suppression: 20.0,
            theta: 2.0,
        }
    }
}

pub struct ChainPair {
    pub easy: ExplicitChain,
    pub hard: ExplicitChain,
    pub paths: CanonicalPathSet,
    pub theta: f64,
}

pub fn planted_barrier_pair(spec: &BarrierSpec) -> Result<ChainPair> {
    let BarrierSpec {
        states,
        bias,
        band_start,
        band_end,
        suppression,
        theta,
    } = *spec;
    if band_start > band_end || band_end > states || !(bias > 0.0) {
        return Err(SqaError::param("band", "need band_start <= band_end <= states and bias > 0"));
    }
    let easy_w: Vec<f64> = (0..states).map(|i| bias.powi(i as i32)).collect();
    let hard_w: Vec<f64> = easy_w
        .iter()
        .enumerate()
        .map(|(i, w)| if (band_start..band_end).contains(&i) { w * (-suppression).exp() } else { *w })
        .collect();
    Ok(ChainPair {
        easy: birth_death(&easy_w)?,
        hard: birth_death(&hard_w)?,
        paths: monotone_paths(states),
        theta,
    })
}

/// Kernel matrix and enumerated stationary law of an SQA instance.
pub fn sqa_chain(sys: &PathIntegralSystem, kind: KernelKind) -> Result<ExplicitChain> {
    let p = transition_matrix(sys, kind)?;
    let pi = enumerate_stationary(sys)?;
    ExplicitChain::new(p, pi.iter().copied().collect(), true)
}

fn ordered_paths(n: usize, trotter: usize, block: usize) -> CanonicalPathSet {
    let bits = n * trotter;
    let states = 1usize << bits;
    CanonicalPathSet::from_fn(states, |x, y| {
        let mut v = vec![x];
        let mut cur = x;
        for start in (0..bits).step_by(block) {
            let mask = ((1usize << block) - 1) << start;
            cur = (cur & !mask) | (y & mask);
            v.push(cur);
        }
        Path::new(v).unwrap()
    })
}

/// Heat-bath paths: replace worldlines `1..n` in order; `|gamma| = n`.
pub fn heat_bath_paths(n: usize, trotter: usize) -> CanonicalPathSet {
    ordered_paths(n, trotter, trotter)
}

/// Metropolis paths: for each qubit in order, set its slices in order;
/// `|gamma| = nL`.
pub fn metropolis_paths(n: usize, trotter: usize) -> CanonicalPathSet {
    ordered_paths(n, trotter, 1)
}

/// The encoding `eta` of a fixed-order path through its `t`-th bit block:
/// `z` takes blocks before the step from `y`, `eta` takes them from `x`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodingAudit {
    pub kernel: KernelKind,
    pub states: usize,
    pub path_length: usize,
    /// `eta` is one-to-one on the paths through each edge.
    pub injective: bool,
    /// max / min of `ln(pi(x) pi(y) / (pi(z) pi(eta)))` over edges and paths.
    pub max_log_ratio: f64,
    pub min_log_ratio: f64,
    /// max of `J(z) + J(eta) - J(x) - J(y)` in imaginary-time bonds.
    pub max_extra_broken_bonds: i64,
    pub ln_coth_omega: f64,
    pub rho: f64,
    /// `|gamma| e^{max_log_ratio} / min_e P(e)`.
    pub encoding_bound: f64,
}

pub fn encoding_audit(sys: &PathIntegralSystem, kind: KernelKind) -> Result<EncodingAudit> {
    let (n, l) = (sys.n(), sys.trotter());
    let chain = sqa_chain(sys, kind)?;
    let block = match kind {
        KernelKind::WorldlineHeatBath => l,
        KernelKind::Metropolis => 1,
    };
    let paths = ordered_paths(n, l, block);
    let rep = congestion(&chain, &paths, Reference::CompleteGraph)?;
    let states = chain.len();
    let bits = n * l;
    let log_pi: Vec<f64> = chain.pi().iter().map(|p| p.ln()).collect();
    let jumps: Vec<i64> = (0..states)
        .map(|i| WorldlineConfiguration::from_index(n, l, i).total_jumps() as i64)
        .collect();
    let mut seen = HashSet::new();
    let mut injective = true;
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut extra = i64::MIN;
    let mut min_p = f64::INFINITY;
    for x in 0..states {
        for y in 0..states {
            for start in (0..bits).step_by(block) {
                let low = (1usize << start) - 1;
                let blk = ((1usize << block) - 1) << start;
                let z = (y & low) | (x & !low);
                let z2 = (z & !blk) | (y & blk);
                if z == z2 {
                    continue;
                }
                let eta = (x & low) | (y & !low);
                injective &= seen.insert((z, z2, eta));
                let r = log_pi[x] + log_pi[y] - log_pi[z] - log_pi[eta];
                hi = hi.max(r);
                lo = lo.min(r);
                extra = extra.max(jumps[z] + jumps[eta] - jumps[x] - jumps[y]);
                min_p = min_p.min(chain.p()[(z, z2)]);
            }
        }
    }
    let path_length = bits / block;
    Ok(EncodingAudit {
        kernel: kind,
        states,
        path_length,
        injective,
        max_log_ratio: hi,
        min_log_ratio: lo,
        max_extra_broken_bonds: extra,
        ln_coth_omega: -sys.log_tanh_omega(),
        rho: rep.rho,
        encoding_bound: path_length as f64 * hi.exp() / min_p,
    })
}

/// Spikeless and spiked SQA chains on the same enumerable state space.
pub struct SqaPair {
    pub easy_system: PathIntegralSystem,
    pub hard_system: PathIntegralSystem,
    pub easy: ExplicitChain,
    pub hard: ExplicitChain,
    pub paths: CanonicalPathSet,
    pub indicator: SpikeIndicator,
}

/// Spike cost for the pair: the standard spike for `n >= 4`; for `n < 4`
/// the window would be empty, so the bump `n^alpha` sits on the middle
/// weights `(n/4, 3n/4)` widened to contain at least one weight.
pub fn pair_spike_cost(n: usize, alpha: f64, zeta: f64) -> Result<(SymmetricCost, SpikeIndicator)> {
    if n >= 4 {
        let cost = SymmetricCost::spike(n, alpha, zeta)?;
        let ind = cost.spike_indicator().unwrap();
        if !ind.weights().is_empty() {
            return Ok((cost, ind));
        }
    }
    let centre = n as f64 / 2.0;
    let ind = SpikeIndicator::with_interval(n, centre - 0.5 - 1e-9, centre + 0.5 + 1e-9)?;
    let height = (n as f64).powf(alpha);
    let values = (0..=n).map(|k| k as f64 + if ind.contains(k) { height } else { 0.0 }).collect();
    Ok((SymmetricCost::custom(values)?, ind))
}

pub fn sqa_pair(n: usize, trotter: usize, beta: f64, s: f64, alpha: f64) -> Result<SqaPair> {
    let (spike, indicator) = pair_spike_cost(n, alpha, 0.0)?;
    let easy_system = PathIntegralSystem::new(SymmetricCost::spikeless(n)?, trotter, beta, s)?;
    let hard_system = PathIntegralSystem::new(spike, trotter, beta, s)?;
    let kind = KernelKind::WorldlineHeatBath;
    Ok(SqaPair {
        easy: sqa_chain(&easy_system, kind)?,
        hard: sqa_chain(&hard_system, kind)?,
        paths: heat_bath_paths(n, trotter),
        easy_system,
        hard_system,
        indicator,
    })
}

impl SqaPair {
    pub fn spike_times(&self) -> Vec<usize> {
        let (n, l) = (self.easy_system.n(), self.easy_system.trotter());
        (0..self.easy.len())
            .map(|i| spike_time(&WorldlineConfiguration::from_index(n, l, i), &self.indicator))
            .collect()
    }

    /// `theta` with `Omega_theta = {ST >= threshold}`: the geometric mean of
    /// the largest `pi~/pi` below the threshold and the smallest at or above.
    pub fn theta_for_spike_time(&self, threshold: usize) -> Result<f64> {
        let st = self.spike_times();
        let ratio = |x: usize| self.easy.pi()[x] / self.hard.pi()[x];
        let below = (0..st.len()).filter(|&x| st[x] < threshold).map(ratio).fold(0.0, f64::max);
        let above = (0..st.len())
            .filter(|&x| st[x] >= threshold)
            .map(ratio)
            .fold(f64::INFINITY, f64::min);
        if !(below < above) || !above.is_finite() {
            return Err(SqaError::param("threshold", format!("spike time {threshold} does not separate pi~/pi")));
        }
        Ok((below * above).sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ordered_paths_have_fixed_length() {
        let hb = heat_bath_paths(2, 3);
        let p = hb.path(0b000_000, 0b101_011).unwrap();
        assert_eq!(p.states(), &[0, 0b000_011, 0b101_011]);
        let m = metropolis_paths(1, 4);
        assert_eq!(m.path(0b0000, 0b1010).unwrap().len(), 4);
    }

    #[test]
    fn shortest_paths_respect_subset() {
        let c = birth_death(&[1.0; 5]).unwrap();
        let mask = [true, true, true, false, true];
        assert!(shortest_paths(&c, &mask).is_err());
        let ok = shortest_paths(&c, &[true, true, true, false, false]).unwrap();
        assert_eq!(ok.path(2, 0).unwrap().states(), &[2, 1, 0]);
        assert!(ok.get(3, 0).is_none());
    }

    #[test]
    fn heat_bath_spikeless_congestion_is_two_n_squared() {
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(2).unwrap(), 3, 2.0, 0.5).unwrap();
        let a = encoding_audit(&sys, KernelKind::WorldlineHeatBath).unwrap();
        assert!(a.injective);
        assert_abs_diff_eq!(a.rho, 8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(a.max_log_ratio, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.min_log_ratio, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn metropolis_encoding_adds_a_bounded_number_of_bonds() {
        let sys = PathIntegralSystem::new(SymmetricCost::spikeless(1).unwrap(), 4, 2.0, 0.5).unwrap();
        let a = encoding_audit(&sys, KernelKind::Metropolis).unwrap();
        assert!(a.injective);
        assert!(a.rho.is_finite() && a.rho > 0.0);
        assert!(a.max_extra_broken_bonds <= 4);
        assert_abs_diff_eq!(a.max_log_ratio, a.max_extra_broken_bonds as f64 * a.ln_coth_omega, epsilon = 1e-9);
        assert!(a.rho <= a.encoding_bound);
    }

    #[test]
    fn pair_cost_for_two_qubits_bumps_the_middle() {
        let (c, ind) = pair_spike_cost(2, 1.0 / 3.0, 0.0).unwrap();
        assert_eq!(ind.weights(), vec![1]);
        assert_abs_diff_eq!(c.at_weight(1), 1.0 + 2f64.powf(1.0 / 3.0), epsilon = 1e-15);
    }
}
