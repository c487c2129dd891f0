"""Quick end-to-end check of the `sqa` extension module.

Build it first, e.g. `pip install --no-build-isolation -e crates/python`.
"""

import math

import sqa


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    cost = sqa.Cost.spike(8)
    assert cost.n == 8
    assert cost.spike_weights == [2], cost.spike_weights
    assert cost([True, True] + [False] * 6) == 2 + 2.0
    print(cost)

    flat = sqa.Cost.spikeless(6)
    assert close(flat.gap(0.0), 2.0)
    probs = flat.ground_marginal(0.0)
    assert all(close(p, math.comb(6, k) / 64) for k, p in enumerate(probs))

    exact = cost.trotter_marginal(0.5, 3.0, 32)
    assert close(sum(exact), 1.0)
    pi = sqa.PathIntegral(cost, L=32, beta=3.0, s=0.5)
    assert pi.L == 32 and 0 < pi.tanh_omega < 1
    sample = pi.sample_marginal(kernel="heat_bath", replicas=8, burn_in=500, samples=2000, seed=1)
    assert sample["tv"] < 0.05, sample["tv"]
    print(f"heat-bath marginal TV {sample['tv']:.4f}")

    report = sqa.run_sqa(sqa.Cost.spike(8), beta=2.0, L=16, replicas=32, seed=5)
    assert 0.0 <= report["success_rate"] <= 1.0
    again = sqa.run_sqa(sqa.Cost.spike(8), beta=2.0, L=16, replicas=32, seed=5)
    assert report["final_marginal"] == again["final_marginal"]
    print(f"sqa success {report['success_rate']:.3f}")

    mc = sqa.run_sa(cost, t0=4.0, steps_per_t=20, replicas=2000, seed=2)
    law = sqa.sa_exact_marginal(cost, t0=4.0, steps_per_t=20)
    assert abs(mc["success_rate"] - law[0]) < 4 * math.sqrt(law[0] * (1 - law[0]) / 2000) + 1e-3
    print(f"sa success {mc['success_rate']:.3f}, exact {law[0]:.3f}")

    pair = sqa.compare_sqa_pair()
    assert all(c["holds"] for c in pair["checks"])
    assert len(pair["omega_theta"]) == 8
    barrier = sqa.compare_barrier({"states": 40, "bias": 0.6, "band_start": 25, "band_end": 28})
    assert all(c["holds"] for c in barrier["checks"])

    try:
        sqa.Cost.spike(8).trotter_marginal(1.5, 1.0, 4)
    except ValueError as e:
        assert "`s`" in str(e)
    else:
        raise AssertionError("s > 1 accepted")

    rows = sqa.separation_benchmark({
        "ns": [4, 6], "alpha": 1 / 3, "zeta": 0.0, "beta": 2.0, "kernel": "heat_bath",
        "c": 1.0, "steps_per_s": 1, "replicas": 16, "seed": 3,
    })
    assert [r["n"] for r in rows] == [4, 6]
    print("smoke test passed")


if __name__ == "__main__":
    main()
