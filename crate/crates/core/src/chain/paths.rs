use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dirichlet_gap, ExplicitChain};
use crate::error::{Result, SqaError};

/// A walk `x = v_0, v_1, ..., v_k = y`. Repeated consecutive states are idle
/// steps: they count towards `|path|` but load no edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    states: Vec<usize>,
}

impl Path {
    pub fn new(states: Vec<usize>) -> Result<Self> {
        if states.is_empty() {
            return Err(SqaError::Malformed("a path needs at least one state".into()));
        }
        Ok(Path { states })
    }

    pub fn trivial(x: usize) -> Self {
        Path { states: vec![x] }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn from(&self) -> usize {
        self.states[0]
    }

    pub fn to(&self) -> usize {
        *self.states.last().unwrap()
    }

    /// `|path|`: number of steps, idle ones included.
    pub fn len(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Non-idle steps `(v, w)`.
    pub fn moves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.states.windows(2).filter(|w| w[0] != w[1]).map(|w| (w[0], w[1]))
    }

    /// No state is visited twice once idle steps are collapsed.
    pub fn is_simple(&self) -> bool {
        let mut seen: Vec<usize> = self.states.clone();
        seen.dedup();
        let len = seen.len();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == len
    }

    pub fn reversed(&self) -> Path {
        let mut states = self.states.clone();
        states.reverse();
        Path { states }
    }

    /// `self` followed by `next`; `next` must start where `self` ends.
    pub fn concat(&self, next: &Path) -> Result<Path> {
        if self.to() != next.from() {
            return Err(SqaError::InvalidPath {
                from: self.from(),
                to: next.to(),
                reason: format!("legs meet at {} and {}", self.to(), next.from()),
            });
        }
        let mut states = self.states.clone();
        states.extend_from_slice(&next.states[1..]);
        Ok(Path { states })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Routing {
    Single(Path),
    /// Weighted paths; weights sum to one.
    Flow(Vec<(f64, Path)>),
}

impl Routing {
    fn weighted(&self) -> Vec<(f64, &Path)> {
        match self {
            Routing::Single(p) => vec![(1.0, p)],
            Routing::Flow(list) => list.iter().map(|(w, p)| (*w, p)).collect(),
        }
    }
}

/// Routes for ordered pairs `(x, y)`; pairs may be left unrouted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CanonicalPathSet {
    states: usize,
    routes: Vec<Option<Routing>>,
}

impl CanonicalPathSet {
    pub fn new(states: usize) -> Self {
        CanonicalPathSet {
            states,
            routes: vec![None; states * states],
        }
    }

    /// Single paths for every pair from `make(x, y)`.
    pub fn from_fn(states: usize, mut make: impl FnMut(usize, usize) -> Path) -> Self {
        let mut routes = Vec::with_capacity(states * states);
        for x in 0..states {
            for y in 0..states {
                routes.push(Some(Routing::Single(make(x, y))));
            }
        }
        CanonicalPathSet { states, routes }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn set(&mut self, x: usize, y: usize, routing: Routing) {
        self.routes[x * self.states + y] = Some(routing);
    }

    pub fn get(&self, x: usize, y: usize) -> Option<&Routing> {
        self.routes[x * self.states + y].as_ref()
    }

    /// The single path for `(x, y)`, if that pair is routed by one path.
    pub fn path(&self, x: usize, y: usize) -> Option<&Path> {
        match self.get(x, y) {
            Some(Routing::Single(p)) => Some(p),
            _ => None,
        }
    }

    /// Every pair `(x, y)` with both ends in `subset` is routed.
    pub fn covers(&self, subset: &[bool]) -> bool {
        (0..self.states).all(|x| (0..self.states).all(|y| !(subset[x] && subset[y]) || self.get(x, y).is_some()))
    }

    /// Endpoints, edge validity in `chain`, simplicity of single paths and
    /// unit flow weights.
    pub fn validate(&self, chain: &ExplicitChain) -> Result<()> {
        if self.states != chain.len() {
            return Err(SqaError::LengthMismatch {
                expected: chain.len(),
                actual: self.states,
            });
        }
        for x in 0..self.states {
            for y in 0..self.states {
                let Some(routing) = self.get(x, y) else { continue };
                let bad = |reason: String| SqaError::InvalidPath { from: x, to: y, reason };
                if let Routing::Flow(list) = routing {
                    let total: f64 = list.iter().map(|p| p.0).sum();
                    if list.iter().any(|p| !(p.0 >= 0.0)) || (total - 1.0).abs() > 1e-10 {
                        return Err(bad(format!("flow weights sum to {total}")));
                    }
                }
                for (_, path) in routing.weighted() {
                    if path.from() != x || path.to() != y {
                        return Err(bad(format!("path runs {} -> {}", path.from(), path.to())));
                    }
                    if let Some((v, w)) = path.moves().find(|&(v, w)| !chain.has_edge(v, w)) {
                        return Err(bad(format!("step {v} -> {w} has zero probability")));
                    }
                    if matches!(routing, Routing::Single(_)) && !path.is_simple() {
                        return Err(bad("path is not simple".into()));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Pair weights in the congestion sum.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// `pi(x) pi(y)` of the chain itself.
    CompleteGraph,
    /// `Q'(x, y)` of another chain on the same states.
    Chain(&'a ExplicitChain),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeLoad {
    pub from: usize,
    pub to: usize,
    pub load: f64,
    pub q: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CongestionReport {
    /// `max_e rho(e)`.
    pub rho: f64,
    pub worst_edge: Option<(usize, usize)>,
    /// Every edge carrying positive load.
    pub edges: Vec<EdgeLoad>,
    pub routed_pairs: usize,
}

impl CongestionReport {
    pub fn rho_on(&self, from: usize, to: usize) -> f64 {
        self.edges
            .iter()
            .find(|e| e.from == from && e.to == to)
            .map_or(0.0, |e| e.rho)
    }
}

/// `rho(e) = Q(e)^{-1} sum_{x,y} w(x,y) sum_Gamma nu(Gamma) |Gamma| n_e(Gamma)`,
/// where `n_e` counts traversals of `e`. Pairs `x = y` carry no load.
pub fn congestion(chain: &ExplicitChain, paths: &CanonicalPathSet, reference: Reference<'_>) -> Result<CongestionReport> {
    paths.validate(chain)?;
    let n = chain.len();
    if let Reference::Chain(other) = reference {
        if other.len() != n {
            return Err(SqaError::LengthMismatch { expected: n, actual: other.len() });
        }
    }
    let index = chain.edge_index();
    let weight = |x: usize, y: usize| match reference {
        Reference::CompleteGraph => chain.pi()[x] * chain.pi()[y],
        Reference::Chain(other) => other.q(x, y),
    };
    let (load, routed) = (0..n)
        .into_par_iter()
        .fold(
            || (vec![0.0; index.len()], 0usize),
            |(mut load, mut routed), x| {
                for y in 0..n {
                    if x == y {
                        continue;
                    }
                    let Some(routing) = paths.get(x, y) else { continue };
                    let w = weight(x, y);
                    if w == 0.0 {
                        continue;
                    }
                    routed += 1;
                    for (nu, path) in routing.weighted() {
                        let add = w * nu * path.len() as f64;
                        for (v, u) in path.moves() {
                            load[index.id(v, u).expect("validated")] += add;
                        }
                    }
                }
                (load, routed)
            },
        )
        .reduce(
            || (vec![0.0; index.len()], 0),
            |(mut a, ra), (b, rb)| {
                a.iter_mut().zip(&b).for_each(|(p, q)| *p += q);
                (a, ra + rb)
            },
        );
    Ok(summarise(chain, &load, routed))
}

pub(crate) fn summarise(chain: &ExplicitChain, load: &[f64], routed: usize) -> CongestionReport {
    let index = chain.edge_index();
    let mut edges = Vec::new();
    let mut rho = 0.0;
    let mut worst = None;
    for (e, &l) in load.iter().enumerate() {
        if l <= 0.0 {
            continue;
        }
        let (v, w) = index.endpoints(e);
        let q = chain.q(v, w);
        let r = l / q;
        if r > rho {
            rho = r;
            worst = Some((v, w));
        }
        edges.push(EdgeLoad { from: v, to: w, load: l, q, rho: r });
    }
    CongestionReport {
        rho,
        worst_edge: worst,
        edges,
        routed_pairs: routed,
    }
}

/// Spectral consequence of a congestion bound, as `lhs <= rhs`.
///
/// Complete-graph reference: `1/rho <= gap`. Chain reference `P'`:
/// `gap(P') <= max(pi/pi') rho gap(P)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapCertificate {
    pub gap: f64,
    pub reference_gap: Option<f64>,
    pub pi_ratio: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn gap_certificate(
    chain: &ExplicitChain,
    report: &CongestionReport,
    reference: Reference<'_>,
    slack: f64,
) -> Result<GapCertificate> {
    let gap = dirichlet_gap(chain)?;
    let (reference_gap, pi_ratio, lhs, rhs) = match reference {
        Reference::CompleteGraph => (None, None, 1.0 / report.rho, gap),
        Reference::Chain(other) => {
            let g = dirichlet_gap(other)?;
            let a = chain
                .pi()
                .iter()
                .zip(other.pi())
                .map(|(p, q)| p / q)
                .fold(0.0, f64::max);
            (Some(g), Some(a), g, a * report.rho * gap)
        }
    };
    Ok(GapCertificate {
        gap,
        reference_gap,
        pi_ratio,
        lhs,
        rhs,
        holds: lhs <= rhs + slack,
    })
}
