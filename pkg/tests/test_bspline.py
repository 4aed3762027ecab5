import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpcolloc.bspline import (
    basis_all_ders,
    eval_all,
    eval_one,
    eval_tensor,
    greville,
    make_space,
    make_tensor_space,
)
from mpcolloc.errors import DomainError, ParameterError


def test_make_space_knot_vector_5_2_1():
    s = make_space(5, 2, 1)
    assert s.n == 9
    expect = np.array([0] * 6 + [0.5] * 3 + [1] * 6, dtype=float)
    np.testing.assert_array_equal(s.knots, expect)


def test_make_space_bernstein():
    for p in (3, 5, 6):
        s = make_space(p, p - 1, 0)
        assert s.n == p + 1
        np.testing.assert_array_equal(s.knots, [0.0] * (p + 1) + [1.0] * (p + 1))


def test_make_space_dimension_by_recursion_count():
    # independent oracle: count knot windows t_j < t_{j+p+1} (nonempty support)
    s = make_space(5, 2, 4)
    count = sum(
        1 for j in range(len(s.knots) - s.p - 1) if s.knots[j] < s.knots[j + s.p + 1]
    )
    assert s.n == count == 18


@pytest.mark.parametrize(
    "p,r,k,msg",
    [
        (0, -1, 0, "p >= 1"),
        (5, 5, 1, "r <= p-1"),
        (5, -2, 1, "-1 <= r"),
        (5, 2, -1, "k >= 0"),
    ],
)
def test_make_space_invalid(p, r, k, msg):
    with pytest.raises(ParameterError):
        make_space(p, r, k)


def test_mesh_size_identity():
    for k in range(0, 13):
        s = make_space(5, 2, k)
        assert s.h * (k + 1) == pytest.approx(1.0, abs=1e-16)
        assert len(s.knots) - s.p - 1 == s.n


@pytest.mark.parametrize("p,r,k", [(5, 2, 1), (5, 2, 4), (6, 2, 3), (6, 3, 2), (3, 2, 4)])
def test_partition_of_unity(p, r, k):
    s = make_space(p, r, k)
    rng = np.random.default_rng(1234)
    x = rng.uniform(0, 1, 50)
    table = eval_all(s, x, 0)
    np.testing.assert_allclose(table[:, 0, :].sum(axis=1), 1.0, atol=1e-13)


def test_endpoint_values():
    s = make_space(5, 2, 1)
    v = eval_all(s, 0.0, 0)[0]
    assert v[0] == pytest.approx(1.0)
    np.testing.assert_allclose(v[1:], 0.0, atol=0)
    v1 = eval_all(s, 1.0, 0)[0]
    assert v1[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(v1[:-1], 0.0, atol=0)


def finite_difference(space, j, x, d, step=1e-5):
    lo = eval_one(space, j, np.asarray(x) - step, d - 1)
    hi = eval_one(space, j, np.asarray(x) + step, d - 1)
    return (hi - lo) / (2 * step)


@pytest.mark.parametrize("p,r,k", [(6, 3, 2), (5, 2, 3)])
def test_derivatives_match_finite_differences(p, r, k):
    s = make_space(p, r, k)
    rng = np.random.default_rng(7)
    # keep a safe margin from knots so the FD stencil stays inside one span
    x = rng.uniform(0.02, 0.98, 20)
    x = x[np.min(np.abs(x[:, None] - s.breakpoints[None, :]), axis=1) > 5e-4]
    for d in range(1, 5):
        for j in range(s.n):
            got = eval_one(s, j, x, d)
            ref = finite_difference(s, j, x, d)
            scale = max(1.0, np.abs(ref).max())
            np.testing.assert_allclose(got, ref, rtol=0, atol=1e-6 * scale)


def test_local_support_exact():
    s = make_space(5, 2, 4)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, 200)
    table = eval_all(s, x, 2)
    for j in range(s.n):
        lo, hi = s.support(j)
        outside = (x < lo) | (x > hi)
        assert np.all(table[outside][:, :, j] == 0.0)


def test_orders_above_degree_are_zero():
    s = make_space(3, 2, 2)
    table = eval_all(s, np.array([0.3, 0.77]), 5)
    assert np.all(table[:, 4:, :] == 0.0)
    assert np.any(table[:, 3, :] != 0.0)


def test_out_of_domain_rejected():
    s = make_space(5, 2, 1)
    with pytest.raises(DomainError):
        eval_all(s, 1.0000001, 0)
    with pytest.raises(DomainError):
        eval_all(s, -0.1, 0)


def test_knot_one_sided_limits():
    # at an inner knot the tables come from the right span, at 1 from the left
    s = make_space(5, 2, 1)
    first_mid, _ = basis_all_ders(s, np.array([0.5]), 0)
    first_right, _ = basis_all_ders(s, np.array([0.5 + 1e-12]), 0)
    assert first_mid[0] == first_right[0]
    first_one, _ = basis_all_ders(s, np.array([1.0]), 0)
    assert first_one[0] == s.n - 1 - s.p


def test_greville_5_2_1():
    s = make_space(5, 2, 1)
    np.testing.assert_allclose(
        greville(s), [0, 0.1, 0.2, 0.3, 0.5, 0.7, 0.8, 0.9, 1.0], atol=1e-15
    )


def test_greville_bernstein():
    for p in (3, 5, 6):
        s = make_space(p, p - 1, 0)
        np.testing.assert_allclose(greville(s), np.arange(p + 1) / p, atol=1e-15)


@given(
    p=st.sampled_from([5, 6]),
    r=st.integers(min_value=2, max_value=3),
    k=st.integers(min_value=0, max_value=9),
)
@settings(max_examples=40, deadline=None)
def test_greville_symmetry(p, r, k):
    if r > p - 3:
        r = p - 3
    s = make_space(p, r, k)
    z = greville(s)
    np.testing.assert_allclose(z + z[::-1], 1.0, atol=1e-14)
    assert z[0] == 0.0 and z[-1] == 1.0
    assert np.all(np.diff(z) >= 0)


def test_tensor_partition_of_unity_and_corner():
    ts = make_tensor_space(5, 2, 2)
    table = eval_tensor(ts, (0.37, 0.83), (0, 0))
    assert table.sum() == pytest.approx(1.0, abs=1e-13)
    corner = eval_tensor(ts, (0.0, 0.0), (0, 0))
    assert corner[0, 0] == pytest.approx(1.0)
    assert np.count_nonzero(corner) == 1


def test_tensor_derivative_vs_fd():
    ts = make_tensor_space(5, 2, 2)
    xi = (0.31, 0.64)
    step = 1e-6
    got = eval_tensor(ts, xi, (1, 0))
    ref = (
        eval_tensor(ts, (xi[0] + step, xi[1]), (0, 0))
        - eval_tensor(ts, (xi[0] - step, xi[1]), (0, 0))
    ) / (2 * step)
    np.testing.assert_allclose(got, ref, atol=1e-6 * max(1.0, np.abs(ref).max()))


def test_tensor_is_product():
    ts = make_tensor_space(6, 3, 2)
    xi = (0.4, 0.9)
    t2 = eval_tensor(ts, xi, (1, 2))
    v1 = eval_all(ts.s1, xi[0], 1)[1]
    v2 = eval_all(ts.s2, xi[1], 2)[2]
    np.testing.assert_allclose(t2, np.outer(v1, v2), atol=1e-14)
