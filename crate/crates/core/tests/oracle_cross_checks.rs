use sqa_core::cost::{SpikeIndicator, SymmetricCost};
use sqa_core::oracle::dense::{dense_correlator, dense_eigenvalues, dense_thermal_marginal, dense_trotter};
use sqa_core::oracle::{
    imaginary_time_correlator, spectrum, spike_time_moments, thermal_marginal, trotter_log_partition,
    trotter_marginal, trotter_spike_correlator,
};
use sqa_core::path_integral::{spike_time, PathIntegralSystem, WorldlineConfiguration};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn costs(n: usize) -> Vec<SymmetricCost> {
    let mut out = vec![SymmetricCost::spikeless(n).unwrap()];
    if n >= 4 {
        out.push(SymmetricCost::spike(n, 1.0 / 3.0, 0.0).unwrap());
        out.push(SymmetricCost::spike(n, 0.5, 0.4).unwrap());
    }
    out
}

#[test]
fn sector_spectrum_matches_dense_up_to_ten_qubits() {
    for n in 1..=10 {
        for cost in costs(n) {
            for &s in &[0.0, 0.3, 0.7, 1.0] {
                let sectors = spectrum(&cost, s).unwrap().full_spectrum();
                let dense = dense_eigenvalues(&cost, s).unwrap();
                assert!(max_diff(&sectors, &dense) < 1e-10, "n={n} s={s}");
            }
        }
    }
}

#[test]
fn thermal_marginal_matches_dense() {
    for n in [3, 6, 9] {
        for cost in costs(n) {
            for &(s, beta) in &[(0.2, 0.5), (0.6, 3.0), (0.9, 8.0)] {
                let a = thermal_marginal(&cost, s, beta).unwrap().probs;
                let b = dense_thermal_marginal(&cost, s, beta).unwrap();
                assert!(max_diff(&a, &b) < 1e-10, "n={n} s={s} beta={beta}");
            }
        }
    }
}

#[test]
fn trotter_marginal_matches_dense_transfer_matrix() {
    for n in [2, 4, 6] {
        for cost in costs(n) {
            for &(s, beta, l) in &[(0.3, 1.0, 3usize), (0.5, 4.0, 8), (0.8, 2.0, 17)] {
                let a = trotter_marginal(&cost, s, beta, l).unwrap().probs;
                let (b, log_z) = dense_trotter(&cost, s, beta, l).unwrap();
                assert!(max_diff(&a, &b) < 1e-10, "n={n} s={s} L={l}");
                let z = trotter_log_partition(&cost, s, beta, l).unwrap();
                assert!((z - log_z).abs() < 1e-9 * log_z.abs().max(1.0), "{z} vs {log_z}");
            }
        }
    }
}

fn enumerate(sys: &PathIntegralSystem) -> Vec<(WorldlineConfiguration, f64)> {
    let (n, l) = (sys.n(), sys.trotter());
    let states = 1usize << (n * l);
    let logs: Vec<(WorldlineConfiguration, f64)> = (0..states)
        .map(|i| {
            let x = WorldlineConfiguration::from_index(n, l, i);
            let w = sys.log_weight(&x);
            (x, w)
        })
        .collect();
    let max = logs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|p| (p.1 - max).exp()).sum();
    logs.into_iter().map(|(x, w)| (x, (w - max).exp() / z)).collect()
}

#[test]
fn trotter_oracle_matches_path_integral_enumeration() {
    let spike2 = SymmetricCost::custom(vec![0.0, 1.0 + 2f64.powf(1.0 / 3.0), 2.0]).unwrap();
    let spike4 = SymmetricCost::spike(4, 1.0 / 3.0, 0.0).unwrap();
    let cases = [
        (SymmetricCost::spikeless(1).unwrap(), 6usize, 2.0, 0.4),
        (spike2.clone(), 3, 3.0, 0.5),
        (spike2, 5, 1.0, 0.2),
        (spike4, 3, 2.0, 0.6),
    ];
    for (cost, l, beta, s) in cases {
        let sys = PathIntegralSystem::new(cost.clone(), l, beta, s).unwrap();
        let table = enumerate(&sys);
        let n = cost.n();
        let mut marginal = vec![0.0; n + 1];
        for (x, p) in &table {
            marginal[x.slice_weight(0)] += p;
        }
        let oracle = trotter_marginal(&cost, s, beta, l).unwrap().probs;
        assert!(max_diff(&marginal, &oracle) < 1e-12, "{marginal:?} vs {oracle:?}");

        // weight form plus the dropped cosh factor equals the trace form
        let states = 1usize << (n * l);
        let logs: Vec<f64> = (0..states)
            .map(|i| sys.log_weight(&WorldlineConfiguration::from_index(n, l, i)))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + logs.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let weight_form = log_sum + (n * l) as f64 * sys.omega().cosh().ln();
        let trace_form = trotter_log_partition(&cost, s, beta, l).unwrap();
        assert!((weight_form - trace_form).abs() < 1e-11, "{weight_form} vs {trace_form}");
    }
}

#[test]
fn spike_time_moments_match_enumeration() {
    let cost = SymmetricCost::custom(vec![0.0, 1.0 + 2f64.powf(1.0 / 3.0), 2.0]).unwrap();
    let ind = SpikeIndicator::with_interval(2, 0.5, 1.5).unwrap();
    for &(l, beta, s) in &[(3usize, 3.0, 0.5), (6, 2.0, 0.3)] {
        let sys = PathIntegralSystem::new(cost.clone(), l, beta, s).unwrap();
        let table = enumerate(&sys);
        let mean: f64 = table.iter().map(|(x, p)| p * spike_time(x, &ind) as f64).sum();
        let second: f64 = table.iter().map(|(x, p)| p * (spike_time(x, &ind) as f64).powi(2)).sum();
        let mom = spike_time_moments(&cost, s, beta, l, &ind).unwrap();
        assert!((mom.mean - mean).abs() < 1e-12);
        assert!((mom.second - second).abs() < 1e-12);

        let corr = trotter_spike_correlator(&cost, s, beta, l, &ind).unwrap();
        for (g, c) in corr.iter().enumerate() {
            let direct: f64 = table
                .iter()
                .filter(|(x, _)| ind.contains(x.slice_weight(0)) && ind.contains(x.slice_weight(g)))
                .map(|(_, p)| p)
                .sum();
            assert!((c - direct).abs() < 1e-12, "g={g}");
        }
    }
}

#[test]
fn imaginary_time_correlator_matches_dense() {
    let cost = SymmetricCost::spike(4, 0.5, 0.0).unwrap();
    let ind = cost.spike_indicator().unwrap();
    let beta = 3.0;
    for taus in [vec![0.0, 1.2], vec![0.4, 0.4], vec![0.3, 2.9], vec![0.1, 0.6, 1.7, 2.2]] {
        for &s in &[0.3, 0.6] {
            let a = imaginary_time_correlator(&cost, s, beta, &taus, &ind).unwrap();
            let b = dense_correlator(&cost, s, beta, &taus, &ind).unwrap();
            assert!((a - b).abs() < 1e-10, "taus={taus:?}: {a} vs {b}");
        }
    }
}
