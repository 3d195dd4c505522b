"""Quick end-to-end check of the Python bindings.

    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/rrdps-*.whl
    python python/smoke_test.py
"""

import math

import rrdps_py as r


def close(a, b, tol):
    assert abs(a - b) <= tol, f"{a} vs {b}"


def main():
    close(r.h2(0.5), 1.0, 1e-15)
    close(r.phi(0.2, 0.2), 0.4, 1e-15)

    res = r.leakage_bound(65, 10, "unconstrained")
    assert res.converged and len(res.argmax) == 11
    close(res.iae, 0.513, 0.002)
    assert r.leakage_bound(3, 1, "constrained", 0.0).iae == 0.0

    close(r.tolerant_error(5, 1, "original"), 0.0289, 5e-4)
    assert r.tolerant_error(3, 1, "original") is None
    close(r.tolerant_error(3), 0.0811, 0.002)
    assert r.corollary_holds(8, 3)

    q, e = r.gain_and_error(16, 0.05, 20.0, dark_rate=0.0)
    assert q > 0 and math.isclose(e, 0.015, rel_tol=1e-12)

    rows = r.rate_sweep([16], [0.0, 20.0], ["original", "proposed"])
    assert len(rows) == 4
    by = {(p.variant, p.loss_db): p.key_rate for p in rows}
    for loss in (0.0, 20.0):
        assert by[("proposed", loss)] >= by[("original", loss)]

    d = r.decoy_analyze(0.13, 0.03, 0.0003, 3, 3.24e-3, 0.0176, 7.52e-4, 0.0195, 1.12e-5)
    close(d.r1, 8.14e-5, 0.05 * 8.14e-5)
    close(d.r2, 3.60e-4, 0.05 * 3.60e-4)

    l65 = r.recompute_l65()
    close(l65["iae_tagged"], 0.513, 0.002)

    m = r.Attack.identity(4, "injective").metrics()
    close(m.aggregate_error, 0.5, 1e-12)
    close(m.aggregate_info, 0.0, 1e-12)
    rep = r.Attack.with_family([[0.9, 0.3, 0.1], [0.3, 0.9, 0.2], [0.1, 0.2, 0.9]], "symmetric").verify()
    assert rep.passed, rep.violations

    s = r.monte_carlo_verify(3, trials=500, seed=1)
    assert s.violations == 0 and s.trials == 500
    b = r.brute_force_max_info(3, 0.1, budget=2000)
    assert b.best_info <= b.bound + 1e-9 and b.best_error <= 0.1 + 1e-12

    try:
        r.leakage_bound(3, 4, "unconstrained")
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("python bindings OK")


if __name__ == "__main__":
    main()
