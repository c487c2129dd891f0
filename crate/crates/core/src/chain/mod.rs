//! Explicit finite Markov chains: Dirichlet forms and gaps, canonical paths
//! and congestion, the most-paths comparison and leaky (substochastic) walks.
//!
//! States are `0..len`. Chains carry a dense transition matrix, so they are
//! meant for state spaces up to [`MAX_CHAIN_STATES`].

mod comparison;
pub mod instances;
mod leaky;
mod paths;

pub use comparison::{most_paths_comparison, two_leg_flow, ComparisonReport, InequalityCheck};
pub use leaky::{leaky_walk_analysis, substochastic_gap, LeakyRow, LeakyTrace, SubstochasticReport};
pub use paths::{
    congestion, gap_certificate, CanonicalPathSet, CongestionReport, EdgeLoad, GapCertificate, Path, Reference,
    Routing,
};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqaError};

pub const MAX_CHAIN_STATES: usize = 10_000;
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const STATIONARITY_TOLERANCE: f64 = 1e-10;
pub const REVERSIBILITY_TOLERANCE: f64 = 1e-10;

/// Off-diagonal support of `P` in compressed rows.
#[derive(Debug, Clone)]
pub(crate) struct EdgeIndex {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl EdgeIndex {
    fn new(p: &DMatrix<f64>) -> Self {
        let n = p.nrows();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for x in 0..n {
            for y in 0..n {
                if x != y && p[(x, y)] > 0.0 {
                    targets.push(y);
                }
            }
            offsets.push(targets.len());
        }
        EdgeIndex { offsets, targets }
    }

    pub(crate) fn len(&self) -> usize {
        self.targets.len()
    }

    pub(crate) fn id(&self, v: usize, w: usize) -> Option<usize> {
        let row = &self.targets[self.offsets[v]..self.offsets[v + 1]];
        row.binary_search(&w).ok().map(|i| self.offsets[v] + i)
    }

    pub(crate) fn neighbours(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// `(v, w)` for edge id `e`.
    pub(crate) fn endpoints(&self, e: usize) -> (usize, usize) {
        let v = self.offsets.partition_point(|&o| o <= e) - 1;
        (v, self.targets[e])
    }
}

/// A finite chain `(Omega, P, pi)` with validated invariants.
#[derive(Debug, Clone)]
pub struct ExplicitChain {
    p: DMatrix<f64>,
    pi: Vec<f64>,
    reversible: bool,
    edges: EdgeIndex,
}

/// JSON form of a chain: rows of `P` and the stationary distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default)]
    pub states: Option<Vec<String>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    pub pi: Vec<f64>,
    #[serde(default = "default_true")]
    pub reversible: bool,
}

fn default_true() -> bool {
    true
}

impl ExplicitChain {
    /// Checks rows of `p` sum to one, `pi p = pi`, and detailed balance when
    /// `reversible` is set.
    pub fn new(p: DMatrix<f64>, pi: Vec<f64>, reversible: bool) -> Result<Self> {
        let n = p.nrows();
        if n == 0 || p.ncols() != n {
            return Err(SqaError::Malformed(format!("P must be square and nonempty, got {}x{}", n, p.ncols())));
        }
        if n > MAX_CHAIN_STATES {
            return Err(SqaError::param("states", format!("at most {MAX_CHAIN_STATES} states, got {n}")));
        }
        if pi.len() != n {
            return Err(SqaError::LengthMismatch { expected: n, actual: pi.len() });
        }
        if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SqaError::Malformed("P has negative or non-finite entries".into()));
        }
        if pi.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SqaError::Malformed("pi must be strictly positive".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > STATIONARITY_TOLERANCE {
            return Err(SqaError::Malformed(format!("pi sums to {total}")));
        }
        for x in 0..n {
            let row: f64 = p.row(x).sum();
            if (row - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(SqaError::Malformed(format!("row {x} of P sums to {row}")));
            }
        }
        let drift = stationarity_error(&p, &pi);
        if drift > STATIONARITY_TOLERANCE {
            return Err(SqaError::Malformed(format!("pi P differs from pi by {drift:e}")));
        }
        if reversible {
            let v = balance_violation(&p, &pi);
            if v > REVERSIBILITY_TOLERANCE {
                return Err(SqaError::NotReversible { violation: v });
            }
        }
        let edges = EdgeIndex::new(&p);
        Ok(ExplicitChain { p, pi, reversible, edges })
    }

    /// Chain from a stochastic matrix, solving for `pi`. Reversibility is
    /// detected rather than asserted.
    pub fn from_matrix(p: DMatrix<f64>) -> Result<Self> {
        let pi = stationary_distribution(&p)?;
        let reversible = balance_violation(&p, &pi) <= REVERSIBILITY_TOLERANCE;
        Self::new(p, pi, reversible)
    }

    pub fn from_spec(spec: &ChainSpec) -> Result<Self> {
        let n = spec.p.len();
        if let Some(names) = &spec.states {
            if names.len() != n {
                return Err(SqaError::LengthMismatch { expected: n, actual: names.len() });
            }
        }
        for row in &spec.p {
            if row.len() != n {
                return Err(SqaError::LengthMismatch { expected: n, actual: row.len() });
            }
        }
        let p = DMatrix::from_fn(n, n, |i, j| spec.p[i][j]);
        Self::new(p, spec.pi.clone(), spec.reversible)
    }

    pub fn to_spec(&self) -> ChainSpec {
        ChainSpec {
            states: None,
            p: (0..self.len()).map(|x| self.p.row(x).iter().copied().collect()).collect(),
            pi: self.pi.clone(),
            reversible: self.reversible,
        }
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    /// `Q(x, y) = pi(x) P(x, y)`.
    pub fn q(&self, x: usize, y: usize) -> f64 {
        self.pi[x] * self.p[(x, y)]
    }

    /// Number of directed off-diagonal edges.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbours(&self, x: usize) -> &[usize] {
        self.edges.neighbours(x)
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        self.edges.id(x, y).is_some()
    }

    pub(crate) fn edge_index(&self) -> &EdgeIndex {
        &self.edges
    }

    /// `(P + I) / 2`.
    pub fn lazy(&self) -> Result<Self> {
        let n = self.len();
        let p = (&self.p + DMatrix::<f64>::identity(n, n)) * 0.5;
        Self::new(p, self.pi.clone(), self.reversible)
    }

    /// `E(f) = 1/2 sum Q(x,y) (f(x) - f(y))^2`.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let mut total = 0.0;
        for x in 0..self.len() {
            for &y in self.neighbours(x) {
                total += self.q(x, y) * (f[x] - f[y]).powi(2);
            }
        }
        total / 2.0
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        let mean: f64 = f.iter().zip(&self.pi).map(|(v, p)| v * p).sum();
        f.iter().zip(&self.pi).map(|(v, p)| p * (v - mean).powi(2)).sum()
    }
}

/// `max_y |(pi P)(y) - pi(y)|`.
pub(crate) fn stationarity_error(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|y| ((0..n).map(|x| pi[x] * p[(x, y)]).sum::<f64>() - pi[y]).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn balance_violation(p: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    let mut worst = 0.0f64;
    for x in 0..n {
        for y in (x + 1)..n {
            worst = worst.max((pi[x] * p[(x, y)] - pi[y] * p[(y, x)]).abs());
        }
    }
    worst
}

/// Solves `pi (I - P) = 0`, `sum pi = 1` by replacing one equation.
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = p.nrows();
    let mut a = (DMatrix::<f64>::identity(n, n) - p).transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = nalgebra::DVector::zeros(n);
    b[n - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| SqaError::Numerical("stationary distribution is not unique".into()))?;
    Ok(sol.iter().map(|v| v.max(0.0)).collect())
}

/// `D^{1/2} M D^{-1/2}`, symmetrised.
pub(crate) fn symmetrised(m: &DMatrix<f64>, pi: &[f64]) -> DMatrix<f64> {
    let n = pi.len();
    let sq: Vec<f64> = pi.iter().map(|v| v.sqrt()).collect();
    let a = DMatrix::from_fn(n, n, |x, y| sq[x] * m[(x, y)] / sq[y]);
    (&a + a.transpose()) * 0.5
}

/// `1 - lambda_2` of the pi-symmetrised kernel of a reversible chain.
pub fn dirichlet_gap(chain: &ExplicitChain) -> Result<f64> {
    let v = balance_violation(&chain.p, &chain.pi);
    if v > REVERSIBILITY_TOLERANCE {
        return Err(SqaError::NotReversible { violation: v });
    }
    if chain.len() == 1 {
        return Ok(1.0);
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(symmetrised(&chain.p, &chain.pi))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(1.0 - eig[1])
}

/// `min <(I - M) f, f>_pi / Var_pi(f)` over `f` orthogonal to constants, for
/// any matrix `M` with `pi M = pi` (not necessarily stochastic or reversible).
pub fn form_gap(m: &DMatrix<f64>, pi: &[f64]) -> Result<f64> {
    let n = pi.len();
    if m.nrows() != n || m.ncols() != n {
        return Err(SqaError::LengthMismatch { expected: n, actual: m.nrows() });
    }
    if n == 1 {
        return Ok(1.0);
    }
    let total: f64 = pi.iter().sum();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut s = symmetrised(&(&eye - m), pi);
    // push the constant direction out of the bottom of the spectrum
    let u: Vec<f64> = pi.iter().map(|v| (v / total).sqrt()).collect();
    let lift = 4.0 + s.amax() * n as f64;
    let proj = DMatrix::from_fn(n, n, |x, y| u[x] * u[y]);
    let sp = (&eye - &proj) * &s * (&eye - &proj);
    s = sp + proj * lift;
    Ok(SymmetricEigen::new(s).eigenvalues.min())
}
