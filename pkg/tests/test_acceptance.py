"""The thirteen acceptance criteria at their stated tolerances.

Each criterion prints one line ``CRITERION k PASS|FAIL: ...``.  Run directly
(``python3 tests/test_acceptance.py``) or through pytest (the lines bypass output
capture, so they appear in plain ``pytest`` runs too).
"""
from __future__ import annotations

import math
import sys
from functools import lru_cache

import numpy as np
import pytest
from scipy.special import zeta

from roughpert import Scenario, TimeGrid, beta, ext, gfact, neoclassical_check, sew, signature
from roughpert.functional import defect_report, max_level_diff
from roughpert.perturb import dev, lift
from roughpert.scenario import generate, random_increment, rng_for
from roughpert.verify import AXIOMS, verify_all, verify_sweep

GRIDS = (32, 64, 128, 256)
DEFAULT = Scenario()  # d=2, n=2, p=2.5, N=128


@lru_cache(maxsize=None)
def default_report():
    return verify_all(DEFAULT)


@lru_cache(maxsize=None)
def sweep_report():
    only = ["lift_addition", "associativity", "otimes_oplus_same_sewing", "almost_h_displacement"]
    return verify_sweep(DEFAULT, GRIDS, only=only)


def _check_line(name: str) -> tuple[bool, str]:
    c = default_report().get(name)
    return c.passed, f"{name}: error {c.error:.3e} <= tol {c.tol:.3e} ({c.status})"


def _sweep_line(name: str, need_decrease: bool) -> tuple[bool, str]:
    row = sweep_report().convergence[name]
    errs, tols = row["errors"], row["tols"]
    within = all(e <= t for e, t in zip(errs, tols))
    ok = within and (row["decreasing"] or not need_decrease)
    table = ", ".join(f"N={n}: {e:.2e}/{t:.2e}" for n, e, t in zip(row["grids"], errs, tols))
    return ok, f"{name} err/tol [{table}] decreasing={row['decreasing']}"


# ------------------------------------------------------------- criteria


def criterion_1():
    grid = TimeGrid.uniform(128)
    Xs = signature(grid, generate(DEFAULT).path, 3)
    worst = float(defect_report(Xs).max_defect_per_level.max())
    return worst <= 1e-10, f"Chen defect over all triples (N=128, n=3): {worst:.3e} <= 1e-10"


def criterion_2():
    g = generate(DEFAULT)
    out = sew(g.X, check=False).output
    err = float(max_level_diff(out, g.X).max())
    ok, line = _check_line("sewing_fixed_point")
    return ok and err <= 1e-12, f"direct {err:.3e} <= 1e-12; {line}"


def criterion_3():
    return _check_line("sewing_witness_independence")


def criterion_4():
    g = generate(DEFAULT)
    X2, X3 = signature(g.grid, g.path, 2), signature(g.grid, g.path, 3)
    e = float(max_level_diff(ext(X2), X3).max())
    q = float(max_level_diff(ext(X2, p=2.2), ext(X2, p=2.8)).max())
    return e <= 1e-8 and q <= 1e-9, f"ext vs level-3 signature {e:.3e} <= 1e-8; q vs q~ {q:.3e} <= 1e-9"


def criterion_5():
    return _check_line("pure_area_closed_form")


def criterion_6():
    rng = rng_for(2024, 6)
    worst = 0.0
    for k in range(50):
        level = (2, 3)[k % 2]
        I = random_increment(rng, TimeGrid.uniform(64), 2, level, 2.5)
        H = lift(I)
        worst = max(worst, float(np.abs(dev(H).values - I.values).max()))
        worst = max(worst, float(max_level_diff(lift(dev(H)).functional, H.functional).max()))
    ok, line = _check_line("dev_lift_inverses")
    return ok and worst <= 1e-8, f"50 independent instances {worst:.3e} <= 1e-8; suite {line}"


def criterion_7():
    return _sweep_line("lift_addition", need_decrease=True)


def criterion_8():
    return _sweep_line("associativity", need_decrease=True)


def criterion_9():
    c = default_report().get("identity_kernel")
    dev_min = c.details["min_nonzero_deviation"]
    ok = c.passed and dev_min >= 10 * c.details["kernel_tol"]
    return ok, f"X [+] 1 = X: {c.error:.3e} <= 1e-12; min nonzero deviation {dev_min:.3e} >= 10 x {c.details['kernel_tol']:.0e}"


def criterion_10():
    ok_sweep, line = _sweep_line("otimes_oplus_same_sewing", need_decrease=False)
    ok, line128 = _check_line("otimes_oplus_same_sewing")
    return ok and ok_sweep, f"{line128}; {line}"


def criterion_11():
    ok_sweep, line = _sweep_line("almost_h_displacement", need_decrease=False)
    c = default_report().get("almost_h_displacement")
    sep = c.details.get("min_separation", float("nan"))
    return c.passed and ok_sweep, f"forward/converse {c.error:.3e} <= {c.tol:.3e}; negative control separation {sep:.3e}; {line}"


def criterion_12():
    rows, ok = [], True
    for a in AXIOMS:
        c = default_report().get(f"vector_space.{a}")
        ok = ok and c.passed
        rows.append(f"{a} {c.error:.1e}/{c.tol:.1e}")
    return ok, "8 axioms x 20 instances at N=128: " + "; ".join(rows)


def criterion_13():
    rng = np.random.default_rng(13)
    holds = all(
        neoclassical_check(rng.uniform(1, 5), int(rng.integers(0, 10)), *rng.uniform(0, 10, 2)).holds
        for _ in range(1000)
    )
    b = abs(beta(2.0) - 2 * (1 + 2**1.5 * zeta(1.5)))
    sp = math.sqrt(math.pi)
    g = max(abs(gfact(0.5) - sp / 2), abs(gfact(1.5) - 3 * sp / 4), abs(gfact(-0.5) - sp), abs(gfact(4) - 24) / 24)
    suite = all(default_report().get(n).passed for n in ("neoclassical", "beta_zeta", "gamma_spot"))
    ok = holds and b <= 1e-6 and g <= 1e-10 and suite
    return ok, f"neo-classical 1000 tuples holds={holds}; |beta(2) - zeta oracle| {b:.1e} <= 1e-6; Gamma {g:.1e} <= 1e-10"


CRITERIA = [globals()[f"criterion_{k}"] for k in range(1, 14)]


@pytest.mark.parametrize("k", range(1, 14), ids=[f"criterion_{k}" for k in range(1, 14)])
def test_criterion(k, capsys):
    ok, msg = CRITERIA[k - 1]()
    with capsys.disabled():
        print(f"\nCRITERION {k:>2} {'PASS' if ok else 'FAIL'}: {msg}")
    assert ok, msg


if __name__ == "__main__":
    failures = 0
    for k, fn in enumerate(CRITERIA, start=1):
        ok, msg = fn()
        failures += not ok
        print(f"CRITERION {k:>2} {'PASS' if ok else 'FAIL'}: {msg}")
    sys.exit(1 if failures else 0)
