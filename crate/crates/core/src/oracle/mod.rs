//! Exact references for the permutation-symmetric transverse-field system
//! `H(s) = -(1-s) sum_j sigma^x_j + s f(|z|)`.
//!
//! Everything is computed block by block in the total-spin sectors: for
//! `J = n/2 - r` the block has dimension `n - 2r + 1`, basis states indexed by
//! Hamming weight `k = r..=n-r`, and appears `C(n,r) - C(n,r-1)` times.
//! [`dense`] holds the brute-force `2^n` versions used to validate the blocks.

pub mod dense;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cost::{SpikeIndicator, SymmetricCost};
use crate::error::{Result, SqaError};

/// Largest `n` accepted by the sector oracles.
pub const SECTOR_CAP: usize = 256;

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

/// Number of copies of the spin-`n/2 - r` block.
pub fn sector_multiplicity(n: usize, r: usize) -> f64 {
    if r == 0 {
        1.0
    } else {
        binomial(n, r) - binomial(n, r - 1)
    }
}

fn check_n(n: usize) -> Result<()> {
    if n > SECTOR_CAP {
        return Err(SqaError::param("n", format!("sector oracle limited to n <= {SECTOR_CAP}, got {n}")));
    }
    Ok(())
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(SqaError::param("s", format!("must lie in [0, 1], got {s}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(SqaError::param("beta", format!("must be finite and > 0, got {beta}")));
    }
    Ok(())
}

/// `sqrt(J(J+1) - m(m+1))` between weights `k+1` (lower `m`) and `k`, from doubled integers.
fn ladder(n: usize, r: usize, k: usize) -> f64 {
    let two_j = (n - 2 * r) as f64;
    let two_m = n as f64 - 2.0 * (k + 1) as f64;
    ((two_j * (two_j + 2.0) - two_m * (two_m + 2.0)) / 4.0).sqrt()
}

/// `S_x` restricted to the spin-`n/2 - r` block.
fn sector_sx(n: usize, r: usize) -> DMatrix<f64> {
    let dim = n - 2 * r + 1;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim - 1 {
        let v = ladder(n, r, r + i) / 2.0;
        m[(i, i + 1)] = v;
        m[(i + 1, i)] = v;
    }
    m
}

/// Block of `H(s)` for total spin `n/2 - r`, rows indexed by weight `r + i`.
pub fn build_sector_hamiltonian(cost: &SymmetricCost, s: f64, r: usize) -> Result<DMatrix<f64>> {
    let n = cost.n();
    if 2 * r > n {
        return Err(SqaError::param("r", format!("need 2r <= n, got r = {r}, n = {n}")));
    }
    let dim = n - 2 * r + 1;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        h[(i, i)] = s * cost.at_weight(r + i);
        if i + 1 < dim {
            let v = -(1.0 - s) * ladder(n, r, r + i);
            h[(i, i + 1)] = v;
            h[(i + 1, i)] = v;
        }
    }
    Ok(h)
}

/// Eigen-decomposition with ascending eigenvalues.
fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |row, col| {
        eig.eigenvectors[(row, order[col])]
    });
    (values, vectors)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorSpectrum {
    /// `n - 2J`
    pub r: usize,
    /// `2J`
    pub two_j: usize,
    pub multiplicity: f64,
    /// ascending
    pub eigenvalues: Vec<f64>,
    /// column `i` is the eigenvector of `eigenvalues[i]` over weights `r..=n-r`
    pub eigenvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetricSpectrum {
    pub n: usize,
    pub s: f64,
    pub sectors: Vec<SectorSpectrum>,
    pub ground_energy: f64,
    pub gap: f64,
}

impl SymmetricSpectrum {
    /// Full spectrum with multiplicities, ascending. Only sensible for small `n`.
    pub fn full_spectrum(&self) -> Vec<f64> {
        let mut all = Vec::new();
        for sector in &self.sectors {
            let copies = sector.multiplicity as usize;
            for &e in &sector.eigenvalues {
                all.extend(std::iter::repeat_n(e, copies));
            }
        }
        all.sort_by(f64::total_cmp);
        all
    }

    pub fn dimension(&self) -> f64 {
        self.sectors
            .iter()
            .map(|sec| sec.multiplicity * (sec.two_j + 1) as f64)
            .sum()
    }

    /// Which sector holds the ground state.
    pub fn ground_sector(&self) -> usize {
        self.sectors
            .iter()
            .min_by(|a, b| a.eigenvalues[0].total_cmp(&b.eigenvalues[0]))
            .map(|sec| sec.r)
            .unwrap_or(0)
    }
}

/// Spectrum of `H(s)` over all sectors.
pub fn spectrum(cost: &SymmetricCost, s: f64) -> Result<SymmetricSpectrum> {
    let n = cost.n();
    check_n(n)?;
    check_s(s)?;
    let mut sectors = Vec::with_capacity(n / 2 + 1);
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for r in 0..=n / 2 {
        let (values, vectors) = sorted_eigen(build_sector_hamiltonian(cost, s, r)?);
        let multiplicity = sector_multiplicity(n, r);
        levels.extend(values.iter().map(|&e| (e, multiplicity)));
        sectors.push(SectorSpectrum {
            r,
            two_j: n - 2 * r,
            multiplicity,
            eigenvalues: values,
            eigenvectors: vectors.column_iter().map(|c| c.iter().copied().collect()).collect(),
        });
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ground_energy = levels[0].0;
    let gap = if levels[0].1 > 1.0 || levels.len() < 2 {
        0.0
    } else {
        levels[1].0 - ground_energy
    };
    Ok(SymmetricSpectrum {
        n,
        s,
        sectors,
        ground_energy,
        gap,
    })
}

/// `E_1 - E_0` of `H(s)`.
pub fn gap(cost: &SymmetricCost, s: f64) -> Result<f64> {
    Ok(spectrum(cost, s)?.gap)
}

/// Gap at every point of `s_grid`.
pub fn gap_curve(cost: &SymmetricCost, s_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    s_grid.iter().map(|&s| Ok((s, gap(cost, s)?))).collect()
}

/// Level spacing `2 sqrt((1-s)^2 + s^2)` quoted for the spikeless system.
pub fn spikeless_gap(s: f64) -> f64 {
    2.0 * ((1.0 - s).powi(2) + s * s).sqrt()
}

/// Actual gap of the spikeless `H(s)`: the single-qubit gap `sqrt(4(1-s)^2 + s^2)`.
pub fn spikeless_qubit_gap(s: f64) -> f64 {
    (4.0 * (1.0 - s).powi(2) + s * s).sqrt()
}

/// Probability that one qubit reads 1 in the ground state of
/// `-(1-s) sigma^x + s |1><1|`.
pub fn spikeless_qubit_probability(s: f64) -> f64 {
    if s >= 1.0 {
        return 0.0;
    }
    let e0 = (s - spikeless_qubit_gap(s)) / 2.0;
    let ratio = -e0 / (1.0 - s);
    ratio * ratio / (1.0 + ratio * ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarginalKind {
    Ground,
    Thermal { beta: f64 },
    Trotter { beta: f64, trotter: usize },
}

/// Exact distribution of the Hamming weight, indexed `0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleMarginal {
    pub kind: MarginalKind,
    pub s: f64,
    pub probs: Vec<f64>,
}

impl OracleMarginal {
    pub fn n(&self) -> usize {
        self.probs.len() - 1
    }

    /// Mass on the weights inside `ind`.
    pub fn mass_on(&self, ind: &SpikeIndicator) -> f64 {
        ind.weights().into_iter().filter(|&k| k < self.probs.len()).map(|k| self.probs[k]).sum()
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

fn normalise(mut probs: Vec<f64>) -> Result<Vec<f64>> {
    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(SqaError::Numerical(format!("marginal normaliser is {total}")));
    }
    for p in &mut probs {
        *p = (*p / total).max(0.0);
    }
    Ok(probs)
}

/// `Binomial(n, p(s))`: the qubits of the spikeless ground state are independent.
pub fn spikeless_ground_marginal(n: usize, s: f64) -> Result<OracleMarginal> {
    check_s(s)?;
    let p = spikeless_qubit_probability(s);
    let probs = (0..=n)
        .map(|k| binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32))
        .collect();
    Ok(OracleMarginal {
        kind: MarginalKind::Ground,
        s,
        probs,
    })
}

/// Weight marginal of the ground state of `H(s)` (the symmetric sector).
pub fn ground_marginal(cost: &SymmetricCost, s: f64) -> Result<OracleMarginal> {
    check_n(cost.n())?;
    check_s(s)?;
    let (_, vectors) = sorted_eigen(build_sector_hamiltonian(cost, s, 0)?);
    let probs = normalise(vectors.column(0).iter().map(|v| v * v).collect())?;
    Ok(OracleMarginal {
        kind: MarginalKind::Ground,
        s,
        probs,
    })
}

/// Per-sector eigen-data of a positive transfer operator, `T = V diag(lambda) V^T`,
/// with eigenvalues kept as logarithms.
struct SectorTransfer {
    r: usize,
    multiplicity: f64,
    log_lambda: Vec<f64>,
    vectors: DMatrix<f64>,
}

/// Log of the largest eigenvalue across sectors (all sectors share the scale).
fn max_log(sectors: &[SectorTransfer]) -> f64 {
    sectors
        .iter()
        .flat_map(|sec| sec.log_lambda.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Thermal transfer data: `log lambda_i = -beta (E_i - E_0)`.
fn thermal_sectors(cost: &SymmetricCost, s: f64, beta: f64) -> Result<(Vec<SectorTransfer>, f64)> {
    let n = cost.n();
    check_n(n)?;
    check_s(s)?;
    check_beta(beta)?;
    let mut raw = Vec::new();
    for r in 0..=n / 2 {
        let (values, vectors) = sorted_eigen(build_sector_hamiltonian(cost, s, r)?);
        raw.push((r, values, vectors));
    }
    let e0 = raw
        .iter()
        .map(|(_, v, _)| v[0])
        .fold(f64::INFINITY, f64::min);
    let sectors = raw
        .into_iter()
        .map(|(r, values, vectors)| SectorTransfer {
            r,
            multiplicity: sector_multiplicity(n, r),
            log_lambda: values.iter().map(|e| -(e - e0)).collect(),
            vectors,
        })
        .collect();
    Ok((sectors, e0))
}

/// Trotter transfer data for `S = D^{1/2} e^{B/L} D^{1/2}` with
/// `D = e^{A/L}`, `A = -beta s f`, `B = beta (1-s) sum sigma^x`.
/// Returns the sectors and the log of the scale factor removed per slice.
fn trotter_sectors(cost: &SymmetricCost, s: f64, beta: f64, trotter: usize) -> Result<(Vec<SectorTransfer>, f64)> {
    let n = cost.n();
    check_n(n)?;
    check_s(s)?;
    check_beta(beta)?;
    if trotter == 0 {
        return Err(SqaError::param("L", "must be >= 1"));
    }
    let l = trotter as f64;
    let omega = beta * (1.0 - s) / l;
    let field = beta * s / l;
    let f_min = cost.values().iter().copied().fold(f64::INFINITY, f64::min);
    // removed per slice: e^{-field f_min} from D and e^{2 omega J_max} = e^{omega n} from e^{B/L}
    let log_shift = -field * f_min + omega * n as f64;
    let mut sectors = Vec::new();
    for r in 0..=n / 2 {
        let dim = n - 2 * r + 1;
        let (mu, u) = sorted_eigen(sector_sx(n, r));
        let ex = DVector::from_iterator(dim, mu.iter().map(|m| (2.0 * omega * m - omega * n as f64).exp()));
        let half_d = DVector::from_iterator(
            dim,
            (0..dim).map(|i| (-0.5 * field * (cost.at_weight(r + i) - f_min)).exp()),
        );
        let e = &u * DMatrix::from_diagonal(&ex) * u.transpose();
        let t = DMatrix::from_fn(dim, dim, |i, j| half_d[i] * e[(i, j)] * half_d[j]);
        let (lambda, vectors) = sorted_eigen((&t + t.transpose()) * 0.5);
        let log_lambda = lambda
            .iter()
            .map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
            .collect();
        sectors.push(SectorTransfer {
            r,
            multiplicity: sector_multiplicity(n, r),
            log_lambda,
            vectors,
        });
    }
    Ok((sectors, log_shift))
}

/// `probs[k] ∝ sum_sectors mult sum_i e^{power (log lambda_i - max)} V[k-r, i]^2`.
fn diagonal_marginal(n: usize, sectors: &[SectorTransfer], power: f64) -> Result<Vec<f64>> {
    let top = max_log(sectors);
    let mut probs = vec![0.0; n + 1];
    for sec in sectors {
        for (i, &ll) in sec.log_lambda.iter().enumerate() {
            let w = sec.multiplicity * (power * (ll - top)).exp();
            if w == 0.0 {
                continue;
            }
            for (row, p) in probs[sec.r..=n - sec.r].iter_mut().enumerate() {
                *p += w * sec.vectors[(row, i)].powi(2);
            }
        }
    }
    normalise(probs)
}

/// `probs[k] = Tr[P_k e^{-beta H}] / Tr[e^{-beta H}]`.
pub fn thermal_marginal(cost: &SymmetricCost, s: f64, beta: f64) -> Result<OracleMarginal> {
    let (sectors, _) = thermal_sectors(cost, s, beta)?;
    Ok(OracleMarginal {
        kind: MarginalKind::Thermal { beta },
        s,
        probs: diagonal_marginal(cost.n(), &sectors, beta)?,
    })
}

/// `probs[k] = Tr[P_k (e^{A/L} e^{B/L})^L] / Tr[(e^{A/L} e^{B/L})^L]`: the exact
/// weight marginal of one time slice under the path-integral distribution.
pub fn trotter_marginal(cost: &SymmetricCost, s: f64, beta: f64, trotter: usize) -> Result<OracleMarginal> {
    let (sectors, _) = trotter_sectors(cost, s, beta, trotter)?;
    Ok(OracleMarginal {
        kind: MarginalKind::Trotter { beta, trotter },
        s,
        probs: diagonal_marginal(cost.n(), &sectors, trotter as f64)?,
    })
}

fn log_trace(sectors: &[SectorTransfer], power: f64) -> f64 {
    let top = max_log(sectors);
    let sum: f64 = sectors
        .iter()
        .map(|sec| {
            sec.multiplicity * sec.log_lambda.iter().map(|&ll| (power * (ll - top)).exp()).sum::<f64>()
        })
        .sum();
    power * top + sum.ln()
}

/// `log Tr[(e^{A/L} e^{B/L})^L]`, including the `cosh(omega)^{nL}` factor that
/// the path-integral weights leave out.
pub fn trotter_log_partition(cost: &SymmetricCost, s: f64, beta: f64, trotter: usize) -> Result<f64> {
    let (sectors, log_shift) = trotter_sectors(cost, s, beta, trotter)?;
    let l = trotter as f64;
    Ok(log_trace(&sectors, l) + l * log_shift)
}

/// `log Tr[e^{-beta H}]`.
pub fn thermal_log_partition(cost: &SymmetricCost, s: f64, beta: f64) -> Result<f64> {
    let (sectors, e0) = thermal_sectors(cost, s, beta)?;
    Ok(log_trace(&sectors, beta) - beta * e0)
}

/// `<S>` in the Trotterized state, i.e. the marginal mass on the spike interval.
pub fn spike_expectation(
    cost: &SymmetricCost,
    s: f64,
    beta: f64,
    trotter: usize,
    ind: &SpikeIndicator,
) -> Result<f64> {
    Ok(trotter_marginal(cost, s, beta, trotter)?.mass_on(ind))
}

/// `<S>` in the thermal state.
pub fn thermal_spike_expectation(cost: &SymmetricCost, s: f64, beta: f64, ind: &SpikeIndicator) -> Result<f64> {
    Ok(thermal_marginal(cost, s, beta)?.mass_on(ind))
}

/// `V^T P_S V` restricted to one sector.
fn projected(sec: &SectorTransfer, n: usize, ind: &SpikeIndicator) -> DMatrix<f64> {
    let dim = n - 2 * sec.r + 1;
    let mask = DVector::from_iterator(dim, (0..dim).map(|i| ind.indicator(sec.r + i) as f64));
    sec.vectors.transpose() * DMatrix::from_diagonal(&mask) * &sec.vectors
}

/// First two moments of the spike time under the path-integral distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeTimeMoments {
    pub trotter: usize,
    /// `<ST>`
    pub mean: f64,
    /// `<ST^2>`
    pub second: f64,
    /// `C(g) = P(slice 0 and slice g both in S)` summed over `g`
    pub correlator_sum: f64,
}

impl SpikeTimeMoments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }
}

/// Two-slice spike correlator `C(g) = Tr[P_S T^g P_S T^{L-g}] / Tr[T^L]` for `g = 0..L`.
pub fn trotter_spike_correlator(
    cost: &SymmetricCost,
    s: f64,
    beta: f64,
    trotter: usize,
    ind: &SpikeIndicator,
) -> Result<Vec<f64>> {
    let n = cost.n();
    let (sectors, _) = trotter_sectors(cost, s, beta, trotter)?;
    let l = trotter as f64;
    let top = max_log(&sectors);
    let z = log_trace(&sectors, l);
    let mut out = vec![0.0; trotter];
    for sec in &sectors {
        let p = projected(sec, n, ind);
        let rel: Vec<f64> = sec.log_lambda.iter().map(|ll| ll - top).collect();
        for (g, c) in out.iter_mut().enumerate() {
            let g = g as f64;
            let mut acc = 0.0;
            for (i, &li) in rel.iter().enumerate() {
                for (j, &lj) in rel.iter().enumerate() {
                    let v = p[(i, j)];
                    if v != 0.0 {
                        acc += (g * li + (l - g) * lj + l * top - z).exp() * v * v;
                    }
                }
            }
            *c += sec.multiplicity * acc;
        }
    }
    Ok(out)
}

/// `<ST>` and `<ST^2>` from the marginal and the two-slice correlator.
pub fn spike_time_moments(
    cost: &SymmetricCost,
    s: f64,
    beta: f64,
    trotter: usize,
    ind: &SpikeIndicator,
) -> Result<SpikeTimeMoments> {
    let corr = trotter_spike_correlator(cost, s, beta, trotter, ind)?;
    let l = trotter as f64;
    let sum: f64 = corr.iter().sum();
    Ok(SpikeTimeMoments {
        trotter,
        mean: l * corr[0],
        second: l * sum,
        correlator_sum: sum,
    })
}

/// `Tr[e^{-tau_1 H} S e^{-(tau_2 - tau_1) H} S ... e^{-(beta - tau_m) H}] / Z`
/// for `m <= 4` sorted insertion times in `[0, beta]`.
pub fn imaginary_time_correlator(
    cost: &SymmetricCost,
    s: f64,
    beta: f64,
    taus: &[f64],
    ind: &SpikeIndicator,
) -> Result<f64> {
    if taus.len() > 4 {
        return Err(SqaError::param("taus", format!("at most 4 insertions, got {}", taus.len())));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(SqaError::param("taus", "insertion times must be sorted"));
    }
    if taus.iter().any(|&t| !(0.0..=beta).contains(&t)) {
        return Err(SqaError::param("taus", format!("insertion times must lie in [0, {beta}]")));
    }
    let n = cost.n();
    let (sectors, _) = thermal_sectors(cost, s, beta)?;
    let z = log_trace(&sectors, beta);
    let mut total = 0.0;
    for sec in &sectors {
        let dim = sec.log_lambda.len();
        let evolve = |t: f64| DMatrix::from_diagonal(&DVector::from_iterator(dim, sec.log_lambda.iter().map(|ll| (t * ll - t / beta * z).exp())));
        if taus.is_empty() {
            total += sec.multiplicity * evolve(beta).trace();
            continue;
        }
        let p = projected(sec, n, ind);
        // cyclic: fold the tail evolution into the head
        let mut m = evolve(beta - taus[taus.len() - 1] + taus[0]) * &p;
        for w in taus.windows(2) {
            m = m * evolve(w[1] - w[0]) * &p;
        }
        total += sec.multiplicity * m.trace();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_qubit_block() {
        let cost = SymmetricCost::spikeless(1).unwrap();
        let h = build_sector_hamiltonian(&cost, 0.5, 0).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 0.0);
        assert_abs_diff_eq!(h[(0, 1)], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(h[(1, 1)], 0.5);
        let spec = spectrum(&cost, 0.5).unwrap();
        let e = &spec.sectors[0].eigenvalues;
        assert_abs_diff_eq!(e[0], (0.5 - 1.25f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], (0.5 + 1.25f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[0], -0.30902, epsilon = 1e-5);
        assert_abs_diff_eq!(e[1], 0.80902, epsilon = 1e-5);
    }

    #[test]
    fn multiplicities_fill_the_space() {
        for n in 1..=30 {
            let cost = SymmetricCost::spikeless(n).unwrap();
            let spec = spectrum(&cost, 0.3).unwrap();
            assert_eq!(spec.dimension(), 2f64.powi(n as i32));
            assert_eq!(spec.ground_sector(), 0);
        }
        assert_eq!(sector_multiplicity(6, 2), 9.0);
    }

    #[test]
    fn transverse_field_levels() {
        let cost = SymmetricCost::spike(8, 0.5, 0.0).unwrap();
        let spec = spectrum(&cost, 0.0).unwrap();
        let levels = spec.full_spectrum();
        let mut k = 0;
        let mut idx = 0;
        while idx < levels.len() {
            let deg = binomial(8, k) as usize;
            for e in &levels[idx..idx + deg] {
                assert_abs_diff_eq!(*e, -8.0 + 2.0 * k as f64, epsilon = 1e-10);
            }
            idx += deg;
            k += 1;
        }
        assert_abs_diff_eq!(spec.gap, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn quoted_spikeless_spacing() {
        assert_abs_diff_eq!(spikeless_gap(0.0), 2.0);
        assert_abs_diff_eq!(spikeless_gap(0.5), 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn spikeless_gap_is_single_qubit_gap() {
        for n in 2..=10 {
            let cost = SymmetricCost::spikeless(n).unwrap();
            for i in 1..=9 {
                let s = i as f64 / 10.0;
                assert_abs_diff_eq!(gap(&cost, s).unwrap(), spikeless_qubit_gap(s), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn spikeless_ground_marginal_is_binomial() {
        let uniform = spikeless_ground_marginal(6, 0.0).unwrap();
        for k in 0..=6 {
            assert_abs_diff_eq!(uniform.probs[k], binomial(6, k) / 64.0, epsilon = 1e-15);
        }
        // p(1/2) from the 2x2 ground vector
        let h = build_sector_hamiltonian(&SymmetricCost::spikeless(1).unwrap(), 0.5, 0).unwrap();
        let (_, v) = sorted_eigen(h);
        assert_abs_diff_eq!(spikeless_qubit_probability(0.5), v[(1, 0)].powi(2), epsilon = 1e-14);
        // agrees with the sector ground state
        for &s in &[0.2, 0.5, 0.9] {
            let exact = ground_marginal(&SymmetricCost::spikeless(9).unwrap(), s).unwrap();
            let binom = spikeless_ground_marginal(9, s).unwrap();
            for k in 0..=9 {
                assert_abs_diff_eq!(exact.probs[k], binom.probs[k], epsilon = 1e-12);
            }
        }
        // n-fold convolution of the one-qubit marginal
        let one = spikeless_ground_marginal(1, 0.4).unwrap().probs;
        let mut conv = vec![1.0];
        for _ in 0..5 {
            let mut next = vec![0.0; conv.len() + 1];
            for (k, c) in conv.iter().enumerate() {
                next[k] += c * one[0];
                next[k + 1] += c * one[1];
            }
            conv = next;
        }
        let five = spikeless_ground_marginal(5, 0.4).unwrap().probs;
        for k in 0..=5 {
            assert_abs_diff_eq!(conv[k], five[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn high_temperature_thermal_is_uniform() {
        let cost = SymmetricCost::spike(10, 0.5, 0.2).unwrap();
        let m = thermal_marginal(&cost, 0.6, 1e-9).unwrap();
        for k in 0..=10 {
            assert_abs_diff_eq!(m.probs[k], binomial(10, k) / 1024.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn low_temperature_approaches_ground_state() {
        let cost = SymmetricCost::spike(12, 1.0 / 3.0, 0.0).unwrap();
        let ground = ground_marginal(&cost, 0.5).unwrap();
        let mut last = f64::INFINITY;
        for beta in [2.0, 4.0, 8.0, 16.0] {
            let th = thermal_marginal(&cost, 0.5, beta).unwrap();
            let tv = th.total_variation(&ground.probs);
            assert!(tv < last);
            last = tv;
        }
        assert!(last < 1e-4);
    }

    #[test]
    fn two_slice_single_qubit_marginal() {
        // n = 1, L = 2: four worldlines of weight exp(-field (z1 + z2)) tanh^jumps
        let cost = SymmetricCost::spikeless(1).unwrap();
        let (beta, s, l) = (1.7, 0.35, 2usize);
        let field = beta * s / l as f64;
        let tanh = (beta * (1.0 - s) / l as f64).tanh();
        let w00 = 1.0;
        let w11 = (-2.0 * field).exp();
        let w01 = (-field).exp() * tanh * tanh;
        let z = w00 + w11 + 2.0 * w01;
        let m = trotter_marginal(&cost, s, beta, l).unwrap();
        assert_abs_diff_eq!(m.probs[0], (w00 + w01) / z, epsilon = 1e-14);
        assert_abs_diff_eq!(m.probs[1], (w11 + w01) / z, epsilon = 1e-14);
        let cosh = (beta * (1.0 - s) / l as f64).cosh();
        let log_z = trotter_log_partition(&cost, s, beta, l).unwrap();
        assert_abs_diff_eq!(log_z, z.ln() + 2.0 * cosh.ln(), epsilon = 1e-13);
    }

    #[test]
    fn transverse_only_ignores_cost() {
        let a = SymmetricCost::spike(10, 0.9, 0.4).unwrap();
        let b = SymmetricCost::spikeless(10).unwrap();
        let ma = trotter_marginal(&a, 0.0, 3.0, 7).unwrap();
        let mb = trotter_marginal(&b, 0.0, 3.0, 7).unwrap();
        for k in 0..=10 {
            assert_abs_diff_eq!(ma.probs[k], mb.probs[k], epsilon = 1e-13);
        }
    }

    #[test]
    fn trotter_converges_to_thermal() {
        let cost = SymmetricCost::spike(4, 0.5, 0.0).unwrap();
        let thermal = thermal_marginal(&cost, 0.5, 2.0).unwrap();
        let errs: Vec<f64> = [4usize, 8, 16, 32, 64]
            .iter()
            .map(|&l| trotter_marginal(&cost, 0.5, 2.0, l).unwrap().total_variation(&thermal.probs))
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0] / 1.8, "{errs:?}");
        }
    }

    #[test]
    fn marginals_are_probability_vectors() {
        let cost = SymmetricCost::spike(40, 1.0 / 3.0, 0.0).unwrap();
        for m in [
            thermal_marginal(&cost, 0.4, 10.0).unwrap(),
            trotter_marginal(&cost, 0.4, 10.0, 16).unwrap(),
            ground_marginal(&cost, 0.4).unwrap(),
        ] {
            assert!(m.probs.iter().all(|&p| p >= 0.0));
            assert_abs_diff_eq!(m.probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_spike_mass() {
        let cost = SymmetricCost::spike(16, 1.0 / 3.0, 0.0).unwrap();
        let ind = cost.spike_indicator().unwrap();
        let m = thermal_spike_expectation(&cost, 0.0, 1e-10, &ind).unwrap();
        assert_abs_diff_eq!(m, binomial(16, 4) / 65536.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m, 0.02777, epsilon = 1e-5);
    }

    #[test]
    fn correlator_reductions() {
        let cost = SymmetricCost::spike(6, 0.5, 0.3).unwrap();
        let ind = cost.spike_indicator().unwrap();
        let (s, beta) = (0.4, 2.5);
        let single = imaginary_time_correlator(&cost, s, beta, &[0.7], &ind).unwrap();
        let thermal = thermal_spike_expectation(&cost, s, beta, &ind).unwrap();
        assert_abs_diff_eq!(single, thermal, epsilon = 1e-12);
        let same = imaginary_time_correlator(&cost, s, beta, &[1.1, 1.1, 1.1], &ind).unwrap();
        assert_abs_diff_eq!(same, thermal, epsilon = 1e-12);
        assert_abs_diff_eq!(imaginary_time_correlator(&cost, s, beta, &[], &ind).unwrap(), 1.0, epsilon = 1e-12);
        assert!(imaginary_time_correlator(&cost, s, beta, &[1.0, 0.5], &ind).is_err());
        assert!(imaginary_time_correlator(&cost, s, beta, &[0.1; 5], &ind).is_err());
    }

    #[test]
    fn spike_moments_bracket() {
        let cost = SymmetricCost::spike(8, 1.0 / 3.0, 0.0).unwrap();
        let ind = cost.spike_indicator().unwrap();
        let mom = spike_time_moments(&cost, 0.5, 3.0, 12, &ind).unwrap();
        let mass = spike_expectation(&cost, 0.5, 3.0, 12, &ind).unwrap();
        assert_abs_diff_eq!(mom.mean, 12.0 * mass, epsilon = 1e-12);
        // Cauchy-Schwarz and ST <= L
        assert!(mom.second >= mom.mean * mom.mean - 1e-12);
        assert!(mom.second <= 12.0 * mom.mean + 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let cost = SymmetricCost::spikeless(4).unwrap();
        assert!(thermal_marginal(&cost, 1.5, 1.0).is_err());
        assert!(trotter_marginal(&cost, 0.5, 1.0, 0).is_err());
        assert!(thermal_marginal(&cost, 0.5, -1.0).is_err());
        assert!(build_sector_hamiltonian(&cost, 0.5, 3).is_err());
        assert!(spectrum(&SymmetricCost::spikeless(300).unwrap(), 0.5).is_err());
    }
}
