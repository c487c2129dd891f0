//! Substochastic restrictions `P_G` of a chain to a good set and the
//! filled-in chain `P_F = P_G + 1 phi`, `phi = pi (I - P_G)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::paths::{congestion, CanonicalPathSet, Reference};
use super::{form_gap, stationarity_error, symmetrised, ExplicitChain};
use crate::error::{Result, SqaError};

/// Violations below this are treated as rounding.
pub const LEAKY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubstochasticReport {
    pub states: usize,
    pub pi_g: f64,
    /// Congestion of the paths inside `Omega_G` against `pi(x) pi(y)`.
    pub rho: f64,
    /// `min <f, (I - P_G) f>_pi / <f, f>_pi` over `f` supported on `Omega_G`.
    pub lambda_raw: f64,
    /// Same, restricted to `f` with `sum_G pi f = 0`. `None` for one state.
    pub lambda_centered: Option<f64>,
    /// `lambda_raw >= 1/rho`.
    pub raw_holds: bool,
    /// `lambda_centered >= pi(Omega_G)/rho`, the form the comparison gives.
    pub centered_holds: Option<bool>,
}

fn restrict(chain: &ExplicitChain, good: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let m = good.len();
    let p = DMatrix::from_fn(m, m, |i, j| chain.p()[(good[i], good[j])]);
    (p, good.iter().map(|&x| chain.pi()[x]).collect())
}

/// Smallest eigenvalue of the restricted, symmetrised form of `I - P_G`.
pub fn substochastic_gap(chain: &ExplicitChain, omega_g: &[bool], paths: &CanonicalPathSet) -> Result<SubstochasticReport> {
    let n = chain.len();
    if omega_g.len() != n {
        return Err(SqaError::LengthMismatch { expected: n, actual: omega_g.len() });
    }
    let good: Vec<usize> = (0..n).filter(|&x| omega_g[x]).collect();
    if good.is_empty() {
        return Err(SqaError::Malformed("Omega_G is empty".into()));
    }
    let mut inner = CanonicalPathSet::new(n);
    for &x in &good {
        for &y in &good {
            let routing = paths.get(x, y).ok_or_else(|| SqaError::InvalidPath {
                from: x,
                to: y,
                reason: "Omega_G is disconnected under the paths".into(),
            })?;
            let path = match routing {
                super::Routing::Single(p) => vec![p],
                super::Routing::Flow(list) => list.iter().map(|(_, p)| p).collect(),
            };
            if let Some(v) = path.iter().flat_map(|p| p.states()).find(|&&v| !omega_g[v]) {
                return Err(SqaError::InvalidPath {
                    from: x,
                    to: y,
                    reason: format!("path leaves Omega_G at {v}"),
                });
            }
            inner.set(x, y, routing.clone());
        }
    }
    let rep = congestion(chain, &inner, Reference::CompleteGraph)?;
    let (p, pi) = restrict(chain, &good);
    let eye = DMatrix::<f64>::identity(good.len(), good.len());
    let lambda_raw = SymmetricEigen::new(symmetrised(&(&eye - &p), &pi)).eigenvalues.min();
    let pi_g: f64 = pi.iter().sum();
    let lambda_centered = if good.len() > 1 { Some(form_gap(&p, &pi)?) } else { None };
    let bound = if rep.rho > 0.0 { 1.0 / rep.rho } else { 0.0 };
    Ok(SubstochasticReport {
        states: good.len(),
        pi_g,
        rho: rep.rho,
        lambda_raw,
        lambda_centered,
        raw_holds: lambda_raw >= bound - LEAKY_SLACK,
        centered_holds: lambda_centered.map(|l| l >= pi_g * bound - LEAKY_SLACK),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakyRow {
    pub t: usize,
    /// `|| mu P_G^t - pi ||_1`.
    pub distance: f64,
    /// `M t pi(Omega_B) + e^{-t/rho} / pi_min`.
    pub bound: f64,
    /// `1 - mu P_G^t 1`.
    pub leaked: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeakyTrace {
    pub warm_constant: f64,
    pub pi_b: f64,
    pub pi_min: f64,
    pub rho: f64,
    pub phi_min: f64,
    /// `max |pi P_F - pi|`.
    pub stationarity_error: f64,
    pub gap_f: f64,
    /// `gap(P_F) >= 1/rho`.
    pub gap_f_holds: bool,
    /// Largest excess in `mu P_G^t <= mu P_F^t <= M pi` over all `t`.
    pub warm_violation: f64,
    /// Largest `distance - bound` over all `t`.
    pub max_violation: f64,
    pub violations: usize,
    pub t_max: usize,
    /// Rows at `t = 0, 1, 2, 4, ...` and `t_max`.
    pub rows: Vec<LeakyRow>,
}

impl LeakyTrace {
    pub fn holds(&self) -> bool {
        self.violations == 0 && self.warm_violation <= LEAKY_SLACK && self.stationarity_error <= 1e-10
    }
}

/// Tracks `mu P_G^t` and `mu P_F^t` for `t <= t_max` against the
/// leakage-plus-mixing bound with congestion `rho`.
pub fn leaky_walk_analysis(
    chain: &ExplicitChain,
    omega_g: &[bool],
    mu: &[f64],
    t_max: usize,
    rho: f64,
) -> Result<LeakyTrace> {
    let n = chain.len();
    if omega_g.len() != n || mu.len() != n {
        return Err(SqaError::LengthMismatch {
            expected: n,
            actual: omega_g.len().min(mu.len()),
        });
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(SqaError::param("rho", format!("must be positive, got {rho}")));
    }
    if mu.iter().enumerate().any(|(x, &m)| m < 0.0 || (m > 0.0 && !omega_g[x])) {
        return Err(SqaError::Malformed("mu must be a measure supported on Omega_G".into()));
    }
    let total: f64 = mu.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(SqaError::Malformed(format!("mu sums to {total}")));
    }
    let pi = chain.pi();
    let warm = mu.iter().zip(pi).map(|(m, p)| m / p).fold(0.0, f64::max);
    let pi_b: f64 = (0..n).filter(|&x| !omega_g[x]).map(|x| pi[x]).sum();
    let pi_min = pi.iter().copied().fold(f64::INFINITY, f64::min);

    let pg = DMatrix::from_fn(n, n, |x, y| if omega_g[x] && omega_g[y] { chain.p()[(x, y)] } else { 0.0 });
    let pi_v = DVector::from_column_slice(pi);
    let phi = &pi_v - pg.tr_mul(&pi_v);
    let phi_min = phi.min();
    if phi_min < -LEAKY_SLACK {
        return Err(SqaError::Malformed(format!(
            "fill-in measure has a negative entry {phi_min:e}; Omega_G and the chain are inconsistent"
        )));
    }
    let phi = phi.map(|v| v.max(0.0));
    let pf = &pg + DMatrix::from_fn(n, n, |_, y| phi[y]);
    let stat = stationarity_error(&pf, pi);
    let gap_f = form_gap(&pf, pi)?;

    let mut g = DVector::from_column_slice(mu);
    let mut f = g.clone();
    let mut warm_violation = 0.0f64;
    let mut max_violation = f64::NEG_INFINITY;
    let mut violations = 0;
    let mut rows = Vec::new();
    let mut next_row = 0usize;
    for t in 0..=t_max {
        let distance: f64 = g.iter().zip(pi).map(|(a, b)| (a - b).abs()).sum();
        let bound = warm * t as f64 * pi_b + (-(t as f64) / rho).exp() / pi_min;
        let excess = distance - bound;
        max_violation = max_violation.max(excess);
        if excess > LEAKY_SLACK {
            violations += 1;
        }
        for x in 0..n {
            warm_violation = warm_violation.max(g[x] - f[x]).max(f[x] - warm * pi[x]);
        }
        if t == next_row || t == t_max {
            rows.push(LeakyRow {
                t,
                distance,
                bound,
                leaked: 1.0 - g.sum(),
            });
            next_row = if t == 0 { 1 } else { 2 * t };
        }
        if t < t_max {
            g = pg.tr_mul(&g);
            let mass = f.sum();
            f = pg.tr_mul(&f) + &phi * mass;
        }
    }
    Ok(LeakyTrace {
        warm_constant: warm,
        pi_b,
        pi_min,
        rho,
        phi_min,
        stationarity_error: stat,
        gap_f,
        gap_f_holds: gap_f >= 1.0 / rho - LEAKY_SLACK,
        warm_violation,
        max_violation,
        violations,
        t_max,
        rows,
    })
}
