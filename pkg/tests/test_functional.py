import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughpert import AffineControl, GridFunctional, PVarControl, TimeGrid, defect, is_multiplicative, signature
from roughpert import tensor as tn
from roughpert.functional import (
    almost_mult_fit,
    chain_table,
    defect_report,
    increments_to_path,
    max_level_diff,
    path_to_increments,
    pvar_fit,
)
from roughpert.perturb import lift
from roughpert.scenario import midpoint_path, pure_area_path, rng_for, young_increment_path
from roughpert.tensor import DomainError, TruncatedTensor as T


def test_line_signature_levels():
    grid = TimeGrid.uniform(1)
    w = np.array([0.7, -0.4])
    X = signature(grid, np.array([[0, 0], w]), 3)
    v = X(0.0, 1.0)
    assert np.allclose(v.as_array(2), np.outer(w, w) / 2)
    assert np.allclose(v.as_array(3), np.einsum("i,j,k->ijk", w, w, w) / 6)


def test_l_shaped_path_area_by_hand():
    grid = TimeGrid.uniform(2)
    X = signature(grid, np.array([[0, 0], [1, 0], [1, 1]]), 2)
    # Chen product (1, e1, e1e1/2) (x) (1, e2, e2e2/2) by hand
    expected = np.array([[0.5, 1.0], [0.0, 0.5]])
    x2 = X(0.0, 1.0).as_array(2)
    assert np.allclose(x2, expected)
    assert 0.5 * (x2[0, 1] - x2[1, 0]) == pytest.approx(0.5)


def test_chen_and_partition_independence(rough_path):
    grid = TimeGrid.uniform(32)
    X = signature(grid, rough_path, 3)
    ok, rep = is_multiplicative(X, tol=1e-10)
    assert ok and rep.max_defect_per_level.max() <= 1e-10
    coarse = np.arange(0, 33, 4)
    chained = T.unit(2, 3)
    for a, b in zip(coarse, coarse[1:]):
        chained = chained @ X.at(a, b)
    assert chained.allclose(X.at(0, 32), atol=1e-10)


def test_defect_examples(rough_path):
    grid = TimeGrid.uniform(32)
    X = signature(grid, rough_path, 2)
    assert np.abs(defect(X, 0.25, 0.5, 0.75).data).max() <= 1e-12
    H = lift(young_increment_path(rng_for(1, 1), grid, 2, 2, 2.5, None, 0.5))
    Y = X.oplus(H.functional)
    assert np.abs(defect(Y, 0.25, 0.25, 0.75).data).max() <= 1e-12
    assert np.abs(defect(Y, 0.25, 0.75, 0.75).data).max() <= 1e-12
    # direct expansion of the level-2 defect of X (+) H
    s, u, t = 0.125, 0.5, 0.875
    x1, h1 = X(s, u)[1], H.functional(s, u)[1]
    y1, g1 = X(u, t)[1], H.functional(u, t)[1]
    expected = np.outer(h1, y1) + np.outer(x1, g1)
    assert np.allclose(defect(Y, s, u, t).as_array(2), expected, atol=1e-12)
    ok, _ = is_multiplicative(Y, tol=1e-10)
    assert not ok
    with pytest.raises(DomainError):
        defect(X, 0.5, 0.25, 0.75)
    with pytest.raises(DomainError):
        defect(X, 0.0, 0.01, 1.0)


def test_unit_functional_is_multiplicative(grid16):
    ok, rep = is_multiplicative(GridFunctional.unit(grid16, 2, 3))
    assert ok and rep.max_defect_per_level.max() == 0.0


def test_almost_mult_fit(rough_path):
    grid = TimeGrid.uniform(32)
    X = signature(grid, rough_path, 2)
    w = PVarControl(grid, rough_path, 2.5)
    assert almost_mult_fit(X, w, 1.2).K <= 1e-12
    H = lift(young_increment_path(rng_for(2, 1), grid, 2, 2, 2.5, None, 0.5))
    fit = almost_mult_fit(X.oplus(H.functional), w + AffineControl(1.0), 1.4)
    assert fit.ok and np.isfinite(fit.K)
    assert not almost_mult_fit(X.oplus(H.functional), AffineControl(0.0), 1.4).ok
    with pytest.raises(DomainError):
        almost_mult_fit(X, w, 1.0)


def test_almost_mult_fit_blows_up_for_large_theta():
    Ks = []
    for n in (16, 64):
        grid = TimeGrid.uniform(n)
        x = midpoint_path(rng_for(4, 0), 2, 0.45, n)
        X = signature(grid, x, 2)
        H = lift(young_increment_path(rng_for(4, 1), grid, 2, 2, 2.5, None, 0.5))
        Ks.append(almost_mult_fit(X.oplus(H.functional), PVarControl(grid, x, 2.5) + AffineControl(1.0), 3.0).K)
    assert Ks[1] > 4 * Ks[0]


def test_pvar_fit_examples(smooth_path):
    grid = TimeGrid.uniform(32)
    zero = signature(grid, np.zeros((33, 2)), 2)
    assert pvar_fit(zero, AffineControl(1.0), 2.5).K == 0.0
    line = signature(grid, np.outer(grid.times, [1.0, 2.0]), 3)
    assert np.isfinite(pvar_fit(line, AffineControl(5.0**1.25), 2.5).K)
    sig = signature(grid, smooth_path, 2)
    assert pvar_fit(sig, PVarControl(grid, smooth_path, 1.5), 1.5).ok
    assert not pvar_fit(sig, AffineControl(0.0), 2.5).ok


def test_path_increment_round_trip(grid16):
    rng = np.random.default_rng(3)
    v = rng.normal(size=(17, tn.size(2, 2)))
    v[:, 0] = 0
    v[0] = 0
    I = path_to_increments(grid16, v, 2, 2)
    assert np.allclose(increments_to_path(I), v)
    const = path_to_increments(grid16, np.zeros((17, 7)), 2, 2)
    assert np.abs(const.table).max() == 0.0


def test_increments_to_path_rejects_non_additive(grid16, rough_path):
    X = signature(TimeGrid.uniform(32), rough_path, 2)
    with pytest.raises(DomainError, match="not additive"):
        increments_to_path(X)


@pytest.mark.parametrize("kind", ["increments", "dense"])
def test_functional_json_round_trip(kind, rough_path):
    grid = TimeGrid.uniform(32)
    X = signature(grid, rough_path, 2)
    if kind == "dense":
        X = X.oplus(X).materialize()
    obj = json.loads(json.dumps(X.to_json()))
    assert obj["kind"] == kind
    assert np.array_equal(GridFunctional.from_json(obj).table, X.table)


def test_chain_table_matches_naive():
    rng = np.random.default_rng(9)
    cells = rng.normal(size=(6, tn.size(2, 2))) * 0.3
    cells[:, 0] = 1
    table = chain_table(cells, 2, 2)
    for i in range(7):
        for j in range(i, 7):
            prod = T.unit(2, 2)
            for k in range(i, j):
                prod = prod @ T(2, 2, cells[k])
            assert np.allclose(table[i, j], prod.data)


@given(st.integers(0, 2**31 - 1))
def test_signature_chen_property(seed):
    grid = TimeGrid.uniform(16)
    x = np.random.default_rng(seed).normal(size=(17, 2))
    rep = defect_report(signature(grid, x, 3))
    assert rep.max_defect_per_level.max() <= 1e-10 * max(1.0, np.abs(x).max() ** 3 * 16**3)


def test_max_level_diff_shape(rough_path):
    grid = TimeGrid.uniform(32)
    X = signature(grid, rough_path, 2)
    assert max_level_diff(X, X).shape == (3,)
    A = pure_area_path(grid, 2, 2, 2.5, 1.0)
    Y = X.add_top(A.level_path(2))
    assert max_level_diff(X, Y)[2] == pytest.approx(np.sqrt(2.0))
