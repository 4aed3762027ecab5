import numpy as np
import pytest

from mpcolloc.bspline import eval_one, greville, make_space
from mpcolloc.errors import ParameterError
from mpcolloc.multipatch import (
    FramedSide,
    Patch,
    build_topology,
    pinwheel,
    two_patch_strip,
    unit_square,
)
from mpcolloc.smoothspace import (
    audit_smoothness,
    basis_interface_residual,
    boundary_edge_function,
    build_space,
    closed_form_dim,
    eval_basis_function,
    interface_edge_function,
    m_profile,
    make_aux_spaces,
    min_inner_knots,
    patch_function,
    smoothness_residual,
    vertex_function,
)


def l_shape():
    """Three unit squares around a boundary vertex of valency 3 at (1,1)."""
    return build_topology(
        [
            Patch(0, corners=[(0, 0), (1, 0), (0, 1), (1, 1)]),
            Patch(1, corners=[(1, 0), (2, 0), (1, 1), (2, 1)]),
            Patch(2, corners=[(0, 1), (1, 1), (0, 2), (1, 2)]),
        ],
        name="l-shape",
    )


# ----------------------------------------------------------------- profiles
def test_m_profiles_are_dual_to_transversal_jets():
    for (p, r, k) in [(5, 2, 4), (6, 2, 2), (6, 3, 3)]:
        aux = make_aux_spaces(p, r, k)
        z = np.zeros(1)
        jets = np.array(
            [[m_profile(aux, mi, z, e)[0] for e in range(3)] for mi in range(3)]
        )
        np.testing.assert_allclose(jets, np.eye(3), atol=1e-12)


def test_aux_space_dimensions():
    for (p, r, k) in [(5, 2, 4), (6, 2, 3), (6, 3, 4)]:
        aux = make_aux_spaces(p, r, k)
        n0, n1, n2 = aux.dims
        assert n0 == p + 1 + k * (p - r - 2)
        assert n1 == p + k * (p - r - 2)
        assert n2 == p - 1 + k * (p - r - 2)


# ---------------------------------------------------------------- dimension
def test_dimension_pinwheel3_is_735():
    dom = pinwheel(3)
    sp = build_space(dom, 5, 2, 4)
    assert sp.dim == 735
    assert sp.closed_form_dim() == 735


@pytest.mark.parametrize("nu,k", [(3, 4), (5, 4), (3, 6), (6, 5)])
def test_dimension_pinwheel_closed_form(nu, k):
    dom = pinwheel(nu)
    sp = build_space(dom, 5, 2, k)
    assert sp.dim == nu * (9 * k * k + 21 * k + 12) + 15
    assert sp.dim == sp.closed_form_dim()


def test_dimension_one_patch():
    dom = unit_square()
    for (p, r, k) in [(5, 2, 4), (6, 2, 2), (6, 3, 3)]:
        sp = build_space(dom, p, r, k)
        n = sp.n
        assert sp.dim == (n - 6) ** 2 + 12 * (n - 8) + 4 * 15
        assert sp.dim == sp.closed_form_dim()


def test_dimension_l_shape_and_strip():
    for dom in (l_shape(), two_patch_strip()):
        for (p, r) in [(5, 2), (6, 2), (6, 3)]:
            k = min_inner_knots(p, r)
            sp = build_space(dom, p, r, k)
            assert sp.dim == sp.closed_form_dim() == closed_form_dim(dom, p, r, k)


def test_vertex_function_counts():
    sp = build_space(pinwheel(3), 5, 2, 4)
    assert sp.counts["vertex-inner"] == 15
    assert sp.counts["vertex-v2"] == 3 * 18
    assert sp.counts["vertex-v1"] == 3 * 15
    sp2 = build_space(l_shape(), 5, 2, 4)
    assert sp2.counts["vertex-v3"] == 15
    assert sp2.counts["vertex-v2"] == 2 * 18
    assert sp2.counts["vertex-v1"] == 5 * 15


def test_build_space_rejects_bad_params():
    dom = unit_square()
    with pytest.raises(ParameterError, match="unsupported"):
        build_space(dom, 4, 2, 4)
    with pytest.raises(ParameterError, match="k too small"):
        build_space(dom, 5, 2, 2)
    with pytest.raises(ParameterError, match="k too small"):
        build_space(dom, 6, 3, 1)


# ------------------------------------------------------------ patch functions
def test_patch_function_is_local_bspline():
    sp = build_space(unit_square(), 5, 2, 4)
    fn = patch_function(sp, 0, 4, 5)
    z = greville(sp.space)
    got = eval_basis_function(fn, 0, (z[4], z[5]), (0, 0))
    ref = eval_one(sp.space, 4, np.array([z[4]]), 0)[0] * eval_one(
        sp.space, 5, np.array([z[5]]), 0
    )[0]
    assert got == pytest.approx(ref, rel=1e-14)
    with pytest.raises(ParameterError):
        patch_function(sp, 0, 2, 5)


def test_patch_function_vanishes_on_interfaces_and_boundary():
    dom = pinwheel(3)
    sp = build_space(dom, 5, 2, 4)
    fn = patch_function(sp, 0, 3, sp.n - 4)
    ts = np.linspace(0, 1, 11)
    for rec in dom.interfaces:
        for fs in rec.framed:
            pts = fs.from_frame.apply(np.stack([np.zeros(11), ts], axis=1))
            for d in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
                vals = fn.eval_points(fs.patch.index, pts, *d)
                assert np.abs(vals).max() <= 1e-12
    # zero on every other patch
    assert fn.eval_points(1, np.array([[0.4, 0.6]]), 0, 0)[0] == 0.0


# --------------------------------------------------------- boundary-edge fns
def test_boundary_edge_function_trace():
    dom = pinwheel(3)
    sp = build_space(dom, 5, 2, 4)
    fn = boundary_edge_function(sp, 0, 0, 5)
    rec = dom.boundary_edges[0]
    fs = rec.framed
    mid = fs.from_frame.apply(np.array([[0.0, 0.25]]))  # inside supp N_5 = [0, 0.4]
    assert abs(fn.eval_points(rec.patch, mid, 0, 0)[0]) > 1e-4
    # gradient/Hessian vanish on all interfaces
    ts = np.linspace(0, 1, 9)
    for irec in dom.interfaces:
        for side in irec.framed:
            pts = side.from_frame.apply(np.stack([np.zeros(9), ts], axis=1))
            for d in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]:
                assert np.abs(fn.eval_points(side.patch.index, pts, *d)).max() <= 1e-12
    # value and first two derivatives vanish at the edge endpoints
    for t in (0.0, 1.0):
        pt = fs.from_frame.apply(np.array([[0.0, t]]))
        for d in [(0, 0), (0, 1), (0, 2)]:
            assert abs(fn.eval_points(rec.patch, pt, *d)[0]) <= 1e-13


# --------------------------------------------------------- interface-edge fns
def test_interface_edge_smoothness_residuals():
    dom = pinwheel(3)
    sp = build_space(dom, 5, 2, 4)
    ts = np.linspace(0, 1, 20)
    for fn in sp.functions_of_kind("interface-edge"):
        res = basis_interface_residual(sp, fn, fn.where, ts)
        assert res.max_abs() <= 1e-10


def test_interface_edge_trace_is_raised_regularity_bspline():
    dom = two_patch_strip()
    sp = build_space(dom, 5, 2, 6)  # k=6 so the j1=0 family is nonempty
    rec = dom.interfaces[0]
    ts = np.linspace(0, 1, 13)
    for j2 in (5, 6):
        fn = interface_edge_function(sp, 0, 0, j2)
        fs = rec.framed[0]
        pts = fs.from_frame.apply(np.stack([np.zeros(13), ts], axis=1))
        got = fn.eval_points(fs.patch.index, pts, 0, 0)
        # the dihedral here is identity for side 0 of this domain
        ref = eval_one(sp.aux.s0, j2, ts, 0)
        np.testing.assert_allclose(got, ref, atol=1e-13)


def test_interface_edge_first_family_odd_symmetry():
    # mirrored unit squares: alpha = -/+1, beta = 0, so the first-derivative
    # family is equal and opposite on the two sides at the same frame point
    dom = two_patch_strip()
    sp = build_space(dom, 5, 2, 6)
    rec = dom.interfaces[0]
    ts = np.linspace(0, 1, 9)
    fn = interface_edge_function(sp, 0, 1, 5)
    u = np.stack([np.full(9, 0.13), ts], axis=1)
    va = fn.eval_points(rec.framed[0].patch.index, rec.framed[0].from_frame.apply(u), 0, 0)
    vb = fn.eval_points(rec.framed[1].patch.index, rec.framed[1].from_frame.apply(u), 0, 0)
    np.testing.assert_allclose(va, -vb, atol=1e-12)


def test_smoothness_residual_flags_broken_function():
    dom = two_patch_strip()
    sp = build_space(dom, 5, 2, 4)
    rec = dom.interfaces[0]
    s = sp.space

    # one-sided B-spline with support crossing the interface: discontinuous
    def broken(pi, pts, d1, d2):
        if pi != 0:
            return np.zeros(len(pts))
        return eval_one(s, 1, pts[:, 0], d1) * eval_one(s, 5, pts[:, 1], d2)

    res = smoothness_residual(broken, rec.framed, rec.gluing, np.linspace(0, 1, 20))
    assert res.max_abs() > 1e-3


def test_smoothness_residual_constant_function():
    dom = pinwheel(5)
    sp = build_space(dom, 5, 2, 4)

    def one(pi, pts, d1, d2):
        return np.ones(len(pts)) if (d1, d2) == (0, 0) else np.zeros(len(pts))

    for rec in dom.interfaces:
        res = smoothness_residual(one, rec.framed, rec.gluing, np.linspace(0, 1, 10))
        assert res.max_abs() <= 1e-12


# ------------------------------------------------------------- vertex classes
@pytest.mark.parametrize("domfn,klass", [(lambda: pinwheel(3), "inner"), (l_shape, "v3")])
def test_vertex_functions_smooth_and_c4(domfn, klass):
    dom = domfn()
    sp = build_space(dom, 5, 2, 4)
    iface_max, vertex_max = audit_smoothness(sp, n_points=12)
    assert max(iface_max) <= 1e-9
    for vid, worst in vertex_max.items():
        assert worst <= 1e-8


def test_vertex_v2_functions():
    dom = two_patch_strip()
    sp = build_space(dom, 5, 2, 4)
    v2s = dom.vertices_of_class("v2")
    assert sp.counts["vertex-v2"] == 18 * len(v2s)
    v = v2s[0]
    # j1 = 3, j2 = 0 is the plain B-spline N_{3,0} on the negative-alpha patch
    fn = vertex_function(sp, v.index, 3, 0)
    i0 = v.v2_gluing.neg_side
    fs = v.v2_framed[i0]
    assert fn.support_patches == [fs.patch.index]
    pt = fs.from_frame.apply(np.array([[0.21, 0.05]]))
    got = fn.eval_points(fs.patch.index, pt, 0, 0)[0]
    ref = eval_one(sp.space, 3, np.array([0.21]), 0)[0] * eval_one(
        sp.space, 0, np.array([0.05]), 0
    )[0]
    assert got == pytest.approx(ref, rel=1e-13)
    # all 18 are C2 across the shared interface
    ts = np.linspace(0, 1, 20)
    for fn in sp.functions_of_kind("vertex-v2"):
        if fn.where != v.index:
            continue
        res = smoothness_residual(
            lambda pi, pts, d1, d2: fn.eval_points(pi, pts, d1, d2),
            dom.interfaces[0].framed,
            dom.interfaces[0].gluing,
            ts,
        )
        assert res.max_abs() <= 1e-10


def test_vertex_v1_functions():
    dom = unit_square()
    sp = build_space(dom, 5, 2, 4)
    assert sp.counts["vertex-v1"] == 4 * 15
    for v in dom.vertices:
        f00 = vertex_function(sp, v.index, 0, 0)
        xi = dom.patches[0].invert(v.xy)
        assert eval_basis_function(f00, 0, xi, (0, 0)) == pytest.approx(1.0)
        for (j1, j2) in [(1, 0), (0, 1), (2, 2), (4, 0)]:
            fn = vertex_function(sp, v.index, j1, j2)
            assert eval_basis_function(fn, 0, xi, (0, 0)) == pytest.approx(0.0, abs=1e-14)


def test_all_functions_smooth_on_strip():
    # every basis function of a two-patch domain passes the residual oracle
    dom = two_patch_strip()
    sp = build_space(dom, 5, 2, 4)
    ts = np.linspace(0, 1, 20)
    worst = 0.0
    for fn in sp.basis:
        res = basis_interface_residual(sp, fn, 0, ts)
        worst = max(worst, res.max_abs())
    assert worst <= 1e-10


def test_p6_spaces_smooth():
    dom = pinwheel(3)
    for (p, r) in [(6, 2), (6, 3)]:
        sp = build_space(dom, p, r, min_inner_knots(p, r))
        ts = np.linspace(0, 1, 10)
        for fn in sp.basis:
            if fn.kind in ("interface-edge", "vertex-inner", "vertex-v2"):
                for rec in dom.interfaces:
                    res = basis_interface_residual(sp, fn, rec.index, ts)
                    assert res.max_abs() <= 1e-9


# -------------------------------------------------- global linear independence
def _greville_value_matrix(sp):
    from mpcolloc.bspline import greville

    dom = sp.domain
    z = greville(sp.space)
    rows = []
    for patch in dom.patches:
        X, Y = np.meshgrid(z, z, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        block = np.zeros((pts.shape[0], sp.dim))
        for fn in sp.basis:
            if patch.index in fn.pieces:
                block[:, fn.index] = fn.eval_points(patch.index, pts, 0, 0)
        rows.append(block)
    return np.concatenate(rows, axis=0)


@pytest.mark.parametrize(
    "domfn,p,r",
    [(unit_square, 5, 2), (two_patch_strip, 6, 2), (lambda: pinwheel(3), 5, 2)],
)
def test_linear_independence_at_greville(domfn, p, r):
    dom = domfn()
    k = min_inner_knots(p, r)
    sp = build_space(dom, p, r, k)
    A = _greville_value_matrix(sp)
    sv = np.linalg.svd(A, compute_uv=False)
    assert sv[-1] > 1e-10 * sv[0]


def test_constant_in_span():
    for domfn in (two_patch_strip, lambda: pinwheel(3)):
        dom = domfn()
        sp = build_space(dom, 5, 2, 4)
        A = _greville_value_matrix(sp)
        b = np.ones(A.shape[0])
        coef, *_ = np.linalg.lstsq(A, b, rcond=None)
        assert np.linalg.norm(A @ coef - b, ord=np.inf) <= 1e-10


def test_vertex_function_class_specific_constructors():
    from mpcolloc.smoothspace import (
        boundary_vertex_v1_function,
        boundary_vertex_v2_function,
        inner_vertex_function,
    )

    dom = pinwheel(3)
    sp = build_space(dom, 5, 2, 4)
    inner = dom.vertices_of_class("inner")[0]
    v2 = dom.vertices_of_class("v2")[0]
    v1 = dom.vertices_of_class("v1")[0]
    assert inner_vertex_function(sp, inner.index, 0, 0).kind == "vertex-inner"
    assert boundary_vertex_v2_function(sp, v2.index, 4, 2).kind == "vertex-v2"
    assert boundary_vertex_v1_function(sp, v1.index, 2, 2).kind == "vertex-v1"
    with pytest.raises(ParameterError, match="class"):
        inner_vertex_function(sp, v1.index, 0, 0)
    with pytest.raises(ParameterError, match="out of range"):
        boundary_vertex_v2_function(sp, v2.index, 2, 3)
