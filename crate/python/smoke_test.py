"""Smoke test for the lmphc extension module.

Build and run from the workspace root:

    cargo build -p lmphc-py --features extension-module
    cp target/debug/liblmphc.so python/lmphc.so
    python3 python/smoke_test.py
"""

import json
import math

import lmphc


def main():
    bc = lmphc.find_beta_c(3, 0.0)
    assert abs(bc - 1.5 ** 1.5) < 1e-6, bc

    sol = lmphc.find_coexistence(1, 2.5, 0.0)
    assert sol["rho_minus"] < sol["rho_plus"]

    p = lmphc.ModelParams(1, 0.1, 0.0, 1.5, lam=0.2)
    ell_minus, ell_plus, ratio, zeta = p.scales()
    assert ell_minus > 0 and ell_plus >= ell_minus and ratio >= 1

    s = lmphc.Sampler(p, 2, seed=3)
    s.run(2000)
    assert len(s) == len(s.positions())
    assert math.isfinite(s.energy)
    assert s.snapshot().strip()

    assert lmphc.vaserstein_1d(0, [1.0], 2, [1.0]) == 2.0
    assert lmphc.discrepancy([[0.1], [0.2]], [[0.2]]) == 1

    value, stderr, bound = lmphc.truncated_hp(
        lmphc.ModelParams(1, 0.1, 0.3, 1.0, form="multibody"), [([0], 2), ([1], 1)], 2, 500, 1
    )
    assert math.isfinite(value) and stderr >= 0 and bound >= 0

    q = lmphc.ModelParams(1, 0.1, 0.0, 0.5, form="multibody")
    report = json.loads(lmphc.uniqueness_check(q, 3, 8.0, 0.5))
    assert 0 <= report["u"] < 1, report["u"]

    try:
        lmphc.ModelParams(1, 1.5, 0.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("gamma out of range accepted")

    print("lmphc", lmphc.__version__, "smoke test ok")


if __name__ == "__main__":
    main()
