import numpy as np
import pytest

from mpcolloc.collocation import (
    ALL_SUPERCONVERGENT,
    CLUSTERED,
    GREVILLE,
    assemble_global,
    local_points,
    omission_set,
    reference_roots,
    superconvergent_1d,
)
from mpcolloc.errors import ParameterError
from mpcolloc.multipatch import pinwheel, two_patch_strip, unit_square
from mpcolloc.smoothspace import closed_form_dim


def test_reference_roots_5_2():
    got = reference_roots(5, 2)
    a = np.sqrt((6 + np.sqrt(21)) / 15)
    b = np.sqrt((6 - np.sqrt(21)) / 15)
    np.testing.assert_allclose(got, [-a, -b, b, a], atol=1e-15)


def test_reference_roots_6():
    for r in (2, 3):
        got = reference_roots(6, r)
        c = np.sqrt(31 / 99)
        np.testing.assert_allclose(got, [-1, -c, 0, c, 1], atol=1e-15)
    # roots of the quintic 99x^5 - 130x^3 + 31x
    poly = lambda x: 99 * x**5 - 130 * x**3 + 31 * x
    np.testing.assert_allclose(poly(got), 0.0, atol=1e-12)


def test_roots_solve_quartic():
    x = reference_roots(5, 2)
    np.testing.assert_allclose(15 * x**4 - 12 * x**2 + 1, 0.0, atol=1e-13)


def test_unsupported_pairs():
    with pytest.raises(ParameterError):
        superconvergent_1d(5, 3, 4)
    with pytest.raises(ParameterError):
        superconvergent_1d(5, 2, 1)


@pytest.mark.parametrize("k", range(2, 13))
def test_counts_and_deltas(k):
    s = superconvergent_1d(5, 2, k)
    assert s.all_points.size == 4 * (k + 1) + 2
    assert s.delta == k
    s2 = superconvergent_1d(6, 2, k)
    assert s2.all_points.size == 4 * (k + 1) + 1
    assert s2.delta == -2
    s3 = superconvergent_1d(6, 3, k)
    assert s3.all_points.size == 4 * (k + 1) + 1
    assert s3.delta == k - 2


@pytest.mark.parametrize("k", range(2, 13))
def test_omission_sets(k):
    s = omission_set(5, 2, k)
    assert s.size == k
    assert s.size == np.unique(s).size
    assert s.max() < 4 * (k + 1) + 2
    s3 = omission_set(6, 3, k)
    assert s3.size == k - 2
    if s3.size:
        assert s3.max() < 4 * (k + 1) + 1


def test_omission_examples():
    np.testing.assert_array_equal(omission_set(5, 2, 2), [4, 9])
    # (6,3): all inner knots except the first and the last (0-based indices)
    np.testing.assert_array_equal(omission_set(6, 3, 4), [8, 12])
    s = superconvergent_1d(6, 3, 4, clustered=True)
    dropped = np.setdiff1d(s.all_points, s.points)
    np.testing.assert_allclose(dropped, [2 / 5, 3 / 5], atol=1e-15)


@pytest.mark.parametrize("p,r", [(5, 2), (6, 2), (6, 3)])
@pytest.mark.parametrize("k", range(2, 13))
def test_clustered_count_equals_dimension(p, r, k):
    s = superconvergent_1d(p, r, k, clustered=True)
    assert s.points.size == p + 1 + k * (p - r)
    assert np.all(np.diff(s.points) > 0)
    assert s.points[0] == 0.0 and s.points[-1] == 1.0


def test_all_lists_contain_knots_for_p6():
    for r in (2, 3):
        s = superconvergent_1d(6, r, 5)
        knots = np.arange(7) / 6
        for t in knots:
            assert np.min(np.abs(s.all_points - t)) < 1e-15


def test_5_2_contains_endpoints_only_added():
    s = superconvergent_1d(5, 2, 4)
    assert s.all_points[0] == 0.0 and s.all_points[-1] == 1.0
    inner_knots = np.arange(1, 5) / 5
    for t in inner_knots:
        assert np.min(np.abs(s.all_points - t)) > 1e-3


def test_6_2_adds_second_greville():
    from mpcolloc.bspline import greville, make_space

    s = superconvergent_1d(6, 2, 3, clustered=True)
    z = greville(make_space(6, 2, 3))
    assert np.min(np.abs(s.points - z[1])) < 1e-15
    assert np.min(np.abs(s.points - z[-2])) < 1e-15
    assert s.points.size == s.all_points.size + 2


def test_local_points_greville_5_2_1():
    ts = local_points(5, 2, 1, GREVILLE)
    assert ts.size == 9
    grid = np.stack(np.meshgrid(ts, ts, indexing="ij"), axis=-1).reshape(-1, 2)
    assert grid.shape[0] == 81
    assert any((g == [0.0, 0.0]).all() for g in grid)
    # symmetry under coordinate swap
    ss = {tuple(np.round(g, 14)) for g in grid}
    assert all((b, a) in ss for (a, b) in ss)


def test_global_one_patch():
    dom = unit_square()
    pts = assemble_global(dom, 5, 2, 4, GREVILLE)
    n = 18
    assert pts.size == n * n
    assert pts.boundary_idx.size == 4 * n - 4
    assert pts.inner_idx.size == (n - 2) ** 2


def test_global_pinwheel_count_identity():
    for nu, k in [(3, 4), (5, 4), (3, 9)]:
        dom = pinwheel(nu)
        pts = assemble_global(dom, 5, 2, k, GREVILLE)
        n = 6 + 3 * k
        assert pts.size == nu * n * n - nu * n + 1


def test_global_clustered_even_k_matches_greville_count():
    dom = pinwheel(3)
    a = assemble_global(dom, 5, 2, 4, GREVILLE)
    b = assemble_global(dom, 5, 2, 4, CLUSTERED)
    assert a.size == b.size


def test_ratio_points_to_dim_decreases():
    dom = pinwheel(3)
    ratios = []
    for k in (2, 4, 8):
        pts = assemble_global(dom, 5, 2, k, GREVILLE)
        ratios.append(pts.size / closed_form_dim(dom, 5, 2, k))
    assert ratios[0] > ratios[1] > ratios[2] > 1.0


def test_no_near_duplicate_points():
    for dom in (two_patch_strip(), pinwheel(3)):
        pts = assemble_global(dom, 5, 2, 4, GREVILLE)
        d2 = ((pts.xy[:, None, :] - pts.xy[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        assert np.sqrt(d2.min()) > 1e-12 * dom.diameter


def test_owner_is_minimal_and_consistent():
    dom = pinwheel(3)
    pts = assemble_global(dom, 5, 2, 4, GREVILLE)
    # the center (inner vertex) appears once, owned by patch 0
    center = np.nonzero(np.linalg.norm(pts.xy, axis=1) < 1e-12)[0]
    assert center.size == 1
    assert pts.owner[center[0]] == 0
    # owner evaluation reproduces the global point
    for j in (0, 17, 333, center[0]):
        patch = dom.patches[pts.owner[j]]
        np.testing.assert_allclose(patch.evaluate([pts.local[j]])[0], pts.xy[j], atol=1e-13)


def test_boundary_points_lie_on_boundary():
    dom = two_patch_strip()
    pts = assemble_global(dom, 6, 2, 3, GREVILLE)
    b = pts.xy[pts.boundary_idx]
    on_edge = (
        (np.abs(b[:, 1]) < 1e-14)
        | (np.abs(b[:, 1] - 1) < 1e-14)
        | (np.abs(b[:, 0] - 1) < 1e-14)
        | (np.abs(b[:, 0] + 1) < 1e-14)
    )
    assert on_edge.all()
    # interface points (x = 0, 0 < y < 1) are interior
    inner = pts.xy[pts.inner_idx]
    assert np.any(np.abs(inner[:, 0]) < 1e-14)


def test_all_superconvergent_global_runs():
    dom = pinwheel(3)
    pts = assemble_global(dom, 5, 2, 4, ALL_SUPERCONVERGENT)
    assert pts.size > assemble_global(dom, 5, 2, 4, GREVILLE).size


def test_local_grid_tensor():
    from mpcolloc.collocation import local_grid

    g = local_grid(5, 2, 1, GREVILLE)
    assert g.shape == (81, 2)
    assert (g[0] == [0.0, 0.0]).all() and (g[-1] == [1.0, 1.0]).all()
