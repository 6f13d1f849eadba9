import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughpert import tensor as tn
from roughpert.tensor import DomainError, ShapeError, TruncatedTensor as T


def unit_tensors(dim, level):
    n = tn.size(dim, level) - 1
    return st.lists(st.floats(-3, 3), min_size=n, max_size=n).map(
        lambda xs: T(dim, level, np.concatenate([[1.0], xs]))
    )


dims_levels = st.tuples(st.integers(1, 3), st.integers(0, 4))


def triples():
    return dims_levels.flatmap(lambda dl: st.tuples(*(unit_tensors(*dl) for _ in range(3))))


# ------------------------------------------------------------- worked examples


def test_otimes_single_cross_term():
    a = T.from_levels([1.0, [1.0, 0.0], np.zeros((2, 2))])
    b = T.from_levels([1.0, [0.0, 1.0], np.zeros((2, 2))])
    c = a @ b
    assert np.allclose(c[1], [1, 1])
    assert np.allclose(c.as_array(2), [[0, 1], [0, 0]])


def test_otimes_hand_convolution_one_dim():
    a = T.from_levels([1, [2], [3], [4]])
    b = T.from_levels([1, [5], [6], [7]])
    assert np.allclose((a @ b).data, [1, 7, 19, 38])


def test_oplus_componentwise():
    a = T.from_levels([1, [1], [2]])
    b = T.from_levels([1, [3], [4]])
    assert np.allclose(a.oplus(b).data, [1, 4, 6])


def test_scalar_tilde_examples():
    a = T.from_levels([1, [3]])
    assert np.allclose(a.scalar_tilde(-2).data, [1, -6])
    assert a.scalar_tilde(0).allclose(T.unit(1, 1))
    assert a.scalar_tilde(1).allclose(a)


def test_group_inverse_of_level_one_vector():
    v = np.array([0.3, -1.2])
    a = T.from_levels([1, v, np.zeros((2, 2))])
    inv = a.group_inverse()
    assert np.allclose(inv[1], -v)
    assert np.allclose(inv.as_array(2), np.outer(v, v))
    assert (a @ inv).allclose(T.unit(2, 2))


def test_level_norm_examples():
    a = T.from_levels([1, [3, 4]])
    assert a.level_norm(0) == 1.0
    assert a.level_norm(1) == pytest.approx(5.0)
    with pytest.raises(ShapeError):
        a.level_norm(2)


def test_truncate_and_zero_pad():
    a = T.from_levels([1, [1]])
    padded = a.zero_pad(2)
    assert padded.level == 2 and np.all(padded.as_array(2) == 0)
    assert padded.truncate(1).allclose(a)
    assert a.truncate(1).allclose(a)
    with pytest.raises(ShapeError):
        a.truncate(2)
    with pytest.raises(ShapeError):
        a.zero_pad(0)


def test_shape_and_domain_errors():
    with pytest.raises(ShapeError):
        T(2, 1, np.ones(4))
    with pytest.raises(ShapeError):
        T.unit(2, 2) @ T.unit(2, 1)
    with pytest.raises(ShapeError):
        T.unit(2, 2) @ T.unit(3, 2)
    bad = T.from_levels([2.0, [1.0]])
    with pytest.raises(DomainError):
        bad.oplus(T.unit(1, 1))
    with pytest.raises(DomainError):
        bad.group_inverse()
    with pytest.raises(DomainError):
        bad.scalar_tilde(2.0)
    with pytest.raises((ShapeError, DomainError, ValueError)):
        T(1, 1, np.array([1.0, np.nan]))


def test_json_round_trip_17_digits():
    a = T.from_levels([1, [1 / 3, 2 / 7], np.array([[0.1, 1e-17], [np.pi, -2.0]])])
    obj = json.loads(json.dumps(a.to_json()))
    assert obj["data"][1] == [1 / 3, 2 / 7]
    assert np.array_equal(T.from_json(obj).data, a.data)


def test_exp_of_vector_levels():
    w = np.array([0.5, -1.0])
    a = T.exp_of_vector(w, 3)
    assert np.allclose(a.as_array(2), np.outer(w, w) / 2)
    assert np.allclose(a.as_array(3), np.einsum("i,j,k->ijk", w, w, w) / 6)


# ------------------------------------------------------------- properties


@given(triples())
def test_otimes_associative(abc):
    a, b, c = abc
    lhs, rhs = (a @ b) @ c, a @ (b @ c)
    assert np.max(np.abs(lhs.data - rhs.data)) <= 1e-10 * max(1.0, np.abs(lhs.data).max())


@given(dims_levels.flatmap(lambda dl: unit_tensors(*dl)))
def test_unit_is_two_sided(a):
    one = T.unit(a.dim, a.level)
    assert np.array_equal((a @ one).data, a.data)
    assert np.array_equal((one @ a).data, a.data)
    assert np.array_equal(a.oplus(one).data, a.data)


@given(dims_levels.flatmap(lambda dl: unit_tensors(*dl)))
def test_group_inverse_is_inverse(a):
    inv = a.group_inverse()
    scale = max(1.0, float(np.abs(inv.data).max()))
    assert np.abs((a @ inv).data - T.unit(a.dim, a.level).data).max() <= 1e-10 * scale
    assert np.abs((inv @ a).data - T.unit(a.dim, a.level).data).max() <= 1e-10 * scale


@given(triples(), st.floats(-3, 3), st.floats(-3, 3))
def test_oplus_vector_space_axioms(abc, lam, mu):
    a, b, c = abc
    close = lambda x, y: np.abs(x.data - y.data).max() <= 1e-12 * max(1.0, np.abs(x.data).max())
    assert close(a.oplus(b), b.oplus(a))
    assert close(a.oplus(b).oplus(c), a.oplus(b.oplus(c)))
    assert close(a.oplus(a.scalar_tilde(-1)), T.unit(a.dim, a.level))
    assert close(a.oplus(b).scalar_tilde(lam), a.scalar_tilde(lam).oplus(b.scalar_tilde(lam)))
    assert close(a.scalar_tilde(lam + mu), a.scalar_tilde(lam).oplus(a.scalar_tilde(mu)))
    assert close(a.scalar_tilde(lam).scalar_tilde(mu), a.scalar_tilde(lam * mu))


@given(
    st.integers(1, 3).flatmap(
        lambda d: st.tuples(
            st.just(d),
            st.lists(st.floats(-2, 2), min_size=d, max_size=d),
            st.lists(st.floats(-2, 2), min_size=d * d, max_size=d * d),
        )
    )
)
def test_norm_admissible(args):
    d, v, w = args
    v, w = np.array(v), np.array(w)
    vw = np.kron(v, w)
    assert np.linalg.norm(vw) <= np.linalg.norm(v) * np.linalg.norm(w) * (1 + 1e-12) + 1e-12
    # permutation isometry on a pure tensor v (x) u (x) u'
    u = w[:d]
    pure = np.einsum("i,j,k->ijk", v, u, u[::-1])
    a = T.from_levels([1, np.zeros(d), np.zeros((d, d)), pure])
    perm = T.from_levels([1, np.zeros(d), np.zeros((d, d)), pure.transpose(2, 0, 1)])
    assert abs(a.level_norm(3) - perm.level_norm(3)) <= 1e-12 * max(1.0, a.level_norm(3))


@given(dims_levels.flatmap(lambda dl: unit_tensors(*dl)))
def test_exp_log_round_trip(a):
    d, n = a.dim, a.level
    back = tn.exp(tn.log(a.data, d, n), d, n)
    assert np.abs(back - a.data).max() <= 1e-8 * max(1.0, np.abs(a.data).max()) ** max(n, 1)


@given(dims_levels.flatmap(lambda dl: unit_tensors(*dl)))
def test_complete_top_level_agrees_below_top(a):
    d, n = a.dim, a.level
    full = tn.complete_top_level(a.data, d, n)
    assert full.shape[-1] == tn.size(d, n + 1)
    assert np.array_equal(full[: a.data.size], a.data)


def test_batched_mul_matches_pairwise():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, tn.size(2, 3)))
    b = rng.normal(size=(5, tn.size(2, 3)))
    a[:, 0] = b[:, 0] = 1
    batched = tn.mul(a, b, 2, 3)
    for k in range(5):
        assert np.allclose(batched[k], (T(2, 3, a[k]) @ T(2, 3, b[k])).data)
