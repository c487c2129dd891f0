//! Brute-force versions of the sector oracles on the full `2^n` space.
//! Basis state `z` has qubit `j` equal to bit `j` of `z`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};

/// Largest `n` for dense diagonalisation.
pub const DENSE_CAP: usize = 12;

fn check(n: usize, cap: usize) -> Result<usize> {
    if n > cap {
        return Err(SqaError::param("n", format!("dense oracle limited to n <= {cap}, got {n}")));
    }
    Ok(1usize << n)
}

/// `H(s) = -(1-s) sum_j sigma^x_j + s diag f(|z|)`.
pub fn dense_hamiltonian(cost: &SymmetricCost, s: f64) -> Result<DMatrix<f64>> {
    let n = cost.n();
    let dim = check(n, DENSE_CAP)?;
    let mut h = DMatrix::zeros(dim, dim);
    for z in 0..dim {
        h[(z, z)] = s * cost.at_weight(z.count_ones() as usize);
        for j in 0..n {
            h[(z, z ^ (1 << j))] = -(1.0 - s);
        }
    }
    Ok(h)
}

/// All `2^n` eigenvalues, ascending.
pub fn dense_eigenvalues(cost: &SymmetricCost, s: f64) -> Result<Vec<f64>> {
    let mut e: Vec<f64> = dense_hamiltonian(cost, s)?.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// `e^{-t H}` scaled by `e^{t E_0}`, plus `E_0`.
fn shifted_propagators(cost: &SymmetricCost, s: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = SymmetricEigen::new(dense_hamiltonian(cost, s)?);
    Ok((eig.eigenvectors, eig.eigenvalues))
}

fn propagate(vectors: &DMatrix<f64>, energies: &DVector<f64>, e0: f64, t: f64) -> DMatrix<f64> {
    let d = DVector::from_iterator(energies.len(), energies.iter().map(|e| (-t * (e - e0)).exp()));
    vectors * DMatrix::from_diagonal(&d) * vectors.transpose()
}

fn weight_marginal(n: usize, diag: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut probs = vec![0.0; n + 1];
    for z in 0..(1usize << n) {
        probs[z.count_ones() as usize] += diag(z);
    }
    let total: f64 = probs.iter().sum();
    probs.iter().map(|p| p / total).collect()
}

pub fn dense_thermal_marginal(cost: &SymmetricCost, s: f64, beta: f64) -> Result<Vec<f64>> {
    let (v, e) = shifted_propagators(cost, s)?;
    let e0 = e.min();
    let rho = propagate(&v, &e, e0, beta);
    Ok(weight_marginal(cost.n(), |z| rho[(z, z)]))
}

/// `e^{B/L} = prod_j (cosh(omega) + sinh(omega) sigma^x_j)`.
fn transverse_factor(n: usize, omega: f64) -> DMatrix<f64> {
    let dim = 1usize << n;
    let (c, sh) = (omega.cosh(), omega.sinh());
    DMatrix::from_fn(dim, dim, |a, b| {
        let d = (a ^ b).count_ones() as i32;
        c.powi(n as i32 - d) * sh.powi(d)
    })
}

/// Raises `m` to `power` by squaring, rescaling to the max entry; returns the
/// scaled power and the log of the removed scale.
fn scaled_power(m: &DMatrix<f64>, power: usize) -> (DMatrix<f64>, f64) {
    let dim = m.nrows();
    let mut result = DMatrix::identity(dim, dim);
    let mut log_result = 0.0;
    let mut base = m.clone();
    let mut log_base = 0.0;
    let mut p = power;
    while p > 0 {
        if p & 1 == 1 {
            result = &result * &base;
            let sc = result.amax();
            result /= sc;
            log_result += log_base + sc.ln();
        }
        p >>= 1;
        if p > 0 {
            base = &base * &base;
            let sc = base.amax();
            base /= sc;
            log_base = 2.0 * log_base + sc.ln();
        }
    }
    (result, log_result)
}

/// `Tr[P_k (e^{A/L} e^{B/L})^L]` normalised, and `log Tr[...]`.
pub fn dense_trotter(cost: &SymmetricCost, s: f64, beta: f64, trotter: usize) -> Result<(Vec<f64>, f64)> {
    let n = cost.n();
    let dim = check(n, 8)?;
    let l = trotter as f64;
    let omega = beta * (1.0 - s) / l;
    let e = transverse_factor(n, omega);
    let m = DMatrix::from_fn(dim, dim, |a, b| {
        (-beta * s * cost.at_weight(a.count_ones() as usize) / l).exp() * e[(a, b)]
    });
    let (mp, log_scale) = scaled_power(&m, trotter);
    let probs = weight_marginal(n, |z| mp[(z, z)]);
    Ok((probs, mp.trace().ln() + log_scale))
}

/// `Tr[e^{-tau_1 H} S ... S e^{-(beta - tau_m) H}] / Tr[e^{-beta H}]` by dense products.
pub fn dense_correlator(cost: &SymmetricCost, s: f64, beta: f64, taus: &[f64], ind: &SpikeIndicator) -> Result<f64> {
    let n = cost.n();
    let dim = check(n, 8)?;
    let (v, e) = shifted_propagators(cost, s)?;
    let e0 = e.min();
    let proj = DMatrix::from_diagonal(&DVector::from_iterator(
        dim,
        (0..dim).map(|z| ind.indicator(z.count_ones() as usize) as f64),
    ));
    let mut m = DMatrix::<f64>::identity(dim, dim);
    let mut prev = 0.0;
    for &t in taus {
        m = m * propagate(&v, &e, e0, t - prev) * &proj;
        prev = t;
    }
    m *= propagate(&v, &e, e0, beta - prev);
    Ok(m.trace() / propagate(&v, &e, e0, beta).trace())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_qubit_dense_matches_closed_form() {
        let cost = SymmetricCost::spikeless(1).unwrap();
        let e = dense_eigenvalues(&cost, 0.5).unwrap();
        assert_abs_diff_eq!(e[0], (0.5 - 1.25f64.sqrt()) / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn scaled_power_matches_direct_product() {
        let m = DMatrix::from_row_slice(2, 2, &[1.3, 0.4, 0.4, 0.9]);
        let mut direct = DMatrix::<f64>::identity(2, 2);
        for _ in 0..13 {
            direct = &direct * &m;
        }
        let (p, log_scale) = scaled_power(&m, 13);
        let back = p * log_scale.exp();
        for (a, b) in back.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9 * b.abs());
        }
    }
}
