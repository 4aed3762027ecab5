"""Collocation system assembly and the two-stage least-squares solve.

Interior rows enforce the Laplacian at inner collocation points, evaluated
through the owning patch by the second-order chain rule: with J the
geometry Jacobian, physical gradient = J^{-T} grad_xi g and physical
Hessian = J^{-T} (H_xi g - sum_c (du/dx_c) H_xi F_c) J^{-1}; the row value
is the Hessian trace. Boundary rows sample function values at boundary
collocation points.

Both blocks are stored sparse (basis functions have local support). The
boundary stage is solved first over the boundary-active columns by dense
column-pivoted QR; its coefficients are then fixed, moved to the right-hand
side, and the interior stage solves the remaining columns: dense QR below
a size cutoff, above it a corrected-seminormal-equations solve (sparse
normal matrix, SuperLU factorization, two iterative-refinement sweeps).
Every interior solve is audited against the least-squares optimality
criterion ||A^T r|| <= 1e-10 ||A||_F ||r|| and fails loudly otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, ParameterError, RegularityError, SolverError

DENSE_CUTOFF = 3000

# basis kinds that may carry nonzero boundary trace
BOUNDARY_ACTIVE_KINDS = ("boundary-edge", "vertex-v1", "vertex-v2", "vertex-v3")


def _geometry_grids(patch, x1, x2):
    """Jacobian columns and component Hessians on a tensor grid."""
    d10 = patch.derivs_grid(x1, x2, 1, 0)
    d01 = patch.derivs_grid(x1, x2, 0, 1)
    d20 = patch.derivs_grid(x1, x2, 2, 0)
    d11 = patch.derivs_grid(x1, x2, 1, 1)
    d02 = patch.derivs_grid(x1, x2, 0, 2)
    return d10, d01, d20, d11, d02


def laplacian_from_jets(geo, g10, g01, g20, g11, g02):
    """Physical Laplacian values from parametric jets of g and the geometry.

    geo = (d10, d01, d20, d11, d02) of the map F on the same grid/points.
    """
    d10, d01, d20, d11, d02 = geo
    det = d10[..., 0] * d01[..., 1] - d10[..., 1] * d01[..., 0]
    scale = np.maximum(np.abs(d10).max(), np.abs(d01).max()) ** 2
    if np.any(np.abs(det) < 1e-12 * scale):
        raise RegularityError("geometry Jacobian is singular at an evaluation point")
    # J^{-T} rows: gradient transform
    inv = 1.0 / det
    # J = [[d10_x, d01_x], [d10_y, d01_y]]; J^{-1} = inv * [[d01_y, -d01_x], [-d10_y, d10_x]]
    i00 = inv * d01[..., 1]
    i01 = -inv * d01[..., 0]
    i10 = -inv * d10[..., 1]
    i11 = inv * d10[..., 0]
    # physical gradient u_x = i00*g10 + i01*g01 etc. (J^{-T} has entries i[ab] transposed)
    ux = i00 * g10 + i10 * g01
    uy = i01 * g10 + i11 * g01
    # modified parametric Hessian M = H_xi g - ux * H_xi F_1 - uy * H_xi F_2
    m20 = g20 - ux * d20[..., 0] - uy * d20[..., 1]
    m11 = g11 - ux * d11[..., 0] - uy * d11[..., 1]
    m02 = g02 - ux * d02[..., 0] - uy * d02[..., 1]
    # H_x = J^{-T} M J^{-1}; need only the trace
    # A = J^{-T} M: A[a,b] = sum_c i[ca] M[c,b]
    a00 = i00 * m20 + i10 * m11
    a01 = i00 * m11 + i10 * m02
    a10 = i01 * m20 + i11 * m11
    a11 = i01 * m11 + i11 * m02
    # trace(A J^{-1}) = A00*i00 + A01*i10 + A10*i01 + A11*i11
    return a00 * i00 + a01 * i10 + a10 * i01 + a11 * i11


def laplacian_pullback(patch, xi, g_jets):
    """Physical Laplacian at points xi from parametric jets (g10, g01, g20, g11, g02)."""
    xi = np.atleast_2d(xi)
    geo = (
        patch.derivs(xi, 1, 0),
        patch.derivs(xi, 0, 1),
        patch.derivs(xi, 2, 0),
        patch.derivs(xi, 1, 1),
        patch.derivs(xi, 0, 2),
    )
    return laplacian_from_jets(geo, *g_jets)


def divergence_form_laplacian(patch, xi, grad_eval, step=1e-6):
    """Divergence-form evaluation (1/|det J|) div(N grad g) by numeric flux
    differentiation; independent oracle for the chain-rule path."""
    xi = np.atleast_2d(xi)

    def flux(pts):
        d10 = patch.derivs(pts, 1, 0)
        d01 = patch.derivs(pts, 0, 1)
        det = d10[:, 0] * d01[:, 1] - d10[:, 1] * d01[:, 0]
        g10, g01 = grad_eval(pts)
        # N = |det J| (J^T J)^{-1}
        a = (d10 * d10).sum(axis=1)
        b = (d10 * d01).sum(axis=1)
        c = (d01 * d01).sum(axis=1)
        inv = 1.0 / (a * c - b * b)
        n00 = np.abs(det) * inv * c
        n01 = -np.abs(det) * inv * b
        n11 = np.abs(det) * inv * a
        return (
            n00 * g10 + n01 * g01,
            n01 * g10 + n11 * g01,
            np.abs(det),
        )

    e1 = np.array([step, 0.0])
    e2 = np.array([0.0, step])
    f1p, _, det0 = flux(xi + e1)
    f1m, _, _ = flux(xi - e1)
    _, f2p, _ = flux(xi + e2)
    _, f2m, _ = flux(xi - e2)
    _, _, det0 = flux(xi)
    return ((f1p - f1m) + (f2p - f2m)) / (2 * step) / det0


@dataclass
class CollocationSystem:
    space: object
    points: object
    interior: sp.csr_matrix = field(repr=False)
    boundary: sp.csr_matrix = field(repr=False)
    rhs_interior: np.ndarray = field(repr=False)
    rhs_boundary: np.ndarray = field(repr=False)
    active: np.ndarray = field(repr=False)  # boundary-active column mask


@dataclass
class Solution:
    space: object
    coeffs: np.ndarray
    residual_boundary: float
    residual_interior: float
    active: np.ndarray = field(repr=False)


def _box_ranges(ts, box):
    a1, b1, a2, b2 = box
    eps = 1e-14
    lo1 = np.searchsorted(ts, a1 - eps, side="left")
    hi1 = np.searchsorted(ts, b1 + eps, side="right")
    lo2 = np.searchsorted(ts, a2 - eps, side="left")
    hi2 = np.searchsorted(ts, b2 + eps, side="right")
    return lo1, hi1, lo2, hi2


def assemble(space, points, f, f1):
    """Assemble interior-Laplacian and boundary-value collocation blocks.

    f and f1 are vectorized callables of physical coordinates (x1, x2).
    """
    if points.per_patch[0].ts.size == 0:
        raise ParameterError("empty collocation point set")
    dom = space.domain
    nb = int(points.is_boundary.sum())
    ni = points.size - nb
    # global row id -> position within its block
    block_pos = np.zeros(points.size, dtype=np.int64)
    block_pos[points.inner_idx] = np.arange(ni)
    block_pos[points.boundary_idx] = np.arange(nb)
    is_b = points.is_boundary

    geo = {}
    for pp in points.per_patch:
        geo[pp.patch] = _geometry_grids(dom.patches[pp.patch], pp.ts, pp.ts)

    ri, ci, vi = [], [], []
    rb, cb, vb = [], [], []
    for fn in space.basis:
        col = fn.index
        for pi, piece in fn.pieces.items():
            pp = points.per_patch[pi]
            lo1, hi1, lo2, hi2 = _box_ranges(pp.ts, piece.box())
            if lo1 >= hi1 or lo2 >= hi2:
                continue
            rows = pp.row[lo1:hi1, lo2:hi2]
            mask = rows >= 0
            if not mask.any():
                continue
            x1 = pp.ts[lo1:hi1]
            x2 = pp.ts[lo2:hi2]
            gids = rows[mask]
            bmask = is_b[gids]
            geo_slice = tuple(g[lo1:hi1, lo2:hi2] for g in geo[pi])
            lap = laplacian_from_jets(
                geo_slice,
                piece.eval_grid(x1, x2, 1, 0),
                piece.eval_grid(x1, x2, 0, 1),
                piece.eval_grid(x1, x2, 2, 0),
                piece.eval_grid(x1, x2, 1, 1),
                piece.eval_grid(x1, x2, 0, 2),
            )[mask]
            inner_sel = ~bmask
            if inner_sel.any():
                ri.extend(block_pos[gids[inner_sel]])
                ci.extend([col] * int(inner_sel.sum()))
                vi.extend(lap[inner_sel])
            if bmask.any():
                vals = piece.eval_grid(x1, x2, 0, 0)[mask]
                rb.extend(block_pos[gids[bmask]])
                cb.extend([col] * int(bmask.sum()))
                vb.extend(vals[bmask])

    dim = space.dim
    interior = sp.csr_matrix(
        (np.asarray(vi), (np.asarray(ri, dtype=np.int64), np.asarray(ci, dtype=np.int64))),
        shape=(ni, dim),
    )
    boundary = sp.csr_matrix(
        (np.asarray(vb), (np.asarray(rb, dtype=np.int64), np.asarray(cb, dtype=np.int64))),
        shape=(nb, dim),
    )

    # structural candidates vs numerical audit of boundary-active columns
    col_max = np.zeros(dim)
    babs = abs(boundary)
    if babs.nnz:
        col_max = np.asarray(babs.max(axis=0).todense()).ravel()
    candidate = np.array([fn.kind in BOUNDARY_ACTIVE_KINDS for fn in space.basis])
    stray = (~candidate) & (col_max > 1e-12)
    if stray.any():
        idx = int(np.nonzero(stray)[0][0])
        raise SolverError(
            f"column {idx} ({space.basis[idx].kind}) unexpectedly carries boundary "
            f"trace {col_max[idx]:.2e}"
        )
    active = candidate & (col_max > 1e-12)

    xy_i = points.xy[points.inner_idx]
    xy_b = points.xy[points.boundary_idx]
    return CollocationSystem(
        space=space,
        points=points,
        interior=interior,
        boundary=boundary,
        rhs_interior=np.asarray(f(xy_i[:, 0], xy_i[:, 1]), dtype=float),
        rhs_boundary=np.asarray(f1(xy_b[:, 0], xy_b[:, 1]), dtype=float),
        active=active,
    )


def _dense_lstsq(A, b, stage, allow_deficient=False):
    """Least squares via column-pivoted QR.

    The interior stage must have full column rank. The boundary stage may be
    wide or rank deficient at coarse meshes (boundary data does not determine
    every boundary-active coefficient there); it then resolves to the
    minimum-norm least-squares solution and the undetermined directions are
    handed to the interior stage.
    """
    sol, res, rank, sv = sla.lstsq(A, b, lapack_driver="gelsy")
    if not allow_deficient and rank < A.shape[1]:
        raise SolverError(
            f"rank deficiency in the {stage} stage: rank {rank} < {A.shape[1]}"
        )
    return sol, rank


def _optimality_residual(A, x, b):
    """Normal-equation residual ||A^T r|| relative to the data scale
    ||A||_F (||A||_F ||x|| + ||b||); the backward-stable least-squares
    optimality measure (near-consistent systems make the r-relative
    quotient unreachable in floating point)."""
    r = b - A @ x
    frob = sp.linalg.norm(A) if sp.issparse(A) else np.linalg.norm(A)
    scale = frob * (frob * np.linalg.norm(x) + np.linalg.norm(b)) + 1e-300
    return float(np.linalg.norm(A.T @ r) / scale)


def solve_two_stage(system):
    """Boundary stage first, then the interior stage on the remaining columns.

    When the boundary block is wide (coarse meshes can activate more columns
    than there are boundary points), the boundary equations do not determine
    every active coefficient; the interior stage then also optimizes over
    the boundary-stage nullspace, which leaves the boundary residual of
    stage 1 untouched and reduces to the plain split whenever the boundary
    block has full column rank.
    """
    act = np.nonzero(system.active)[0]
    rem = np.nonzero(~system.active)[0]
    Ab = system.boundary[:, act].toarray()
    c_act, rank_b = _dense_lstsq(Ab, system.rhs_boundary, "boundary", allow_deficient=True)
    res_b = float(np.linalg.norm(Ab @ c_act - system.rhs_boundary))
    nullsp = sla.null_space(Ab) if rank_b < act.size else np.zeros((act.size, 0))
    nz = nullsp.shape[1]

    rhs2 = system.rhs_interior - system.interior[:, act] @ c_act
    B = system.interior[:, rem]
    if nz:
        extra = sp.csr_matrix(system.interior[:, act] @ nullsp)
        B = sp.hstack([B, extra], format="csr")
    if rem.size + nz <= DENSE_CUTOFF:
        c_free, _ = _dense_lstsq(B.toarray(), rhs2, "interior")
    else:
        c_free = _csne_solve(B, rhs2)
    opt = _optimality_residual(B, c_free, rhs2)
    if opt > 1e-10:
        raise SolverError(
            f"interior stage failed the least-squares optimality audit ({opt:.2e})"
        )
    res_i = float(np.linalg.norm(B @ c_free - rhs2))

    coeffs = np.zeros(system.space.dim)
    coeffs[act] = c_act + (nullsp @ c_free[rem.size:] if nz else 0.0)
    coeffs[rem] = c_free[: rem.size]
    return Solution(
        space=system.space,
        coeffs=coeffs,
        residual_boundary=res_b,
        residual_interior=res_i,
        active=system.active.copy(),
    )


def _csne_solve(B, rhs):
    """Corrected seminormal equations with two refinement sweeps."""
    G = (B.T @ B).tocsc()
    try:
        lu = spla.splu(G)
    except RuntimeError as exc:
        raise SolverError(f"interior stage rank deficient: {exc}") from exc
    d = np.abs(lu.U.diagonal())
    if d.min() <= 1e-14 * d.max():
        raise SolverError(
            f"interior stage nearly rank deficient (pivot ratio {d.min() / d.max():.2e})"
        )
    x = lu.solve(B.T @ rhs)
    for _ in range(2):
        x = x + lu.solve(B.T @ (rhs - B @ x))
    return x


# ---------------------------------------------------------------------------
# solution evaluation
# ---------------------------------------------------------------------------


def _patch_fn_partition(space):
    """Cached split of the basis: per-patch plain B-spline (j1, j2, column)
    index triples, and the remaining (edge/vertex) functions per patch."""
    cached = getattr(space, "_fn_partition", None)
    if cached is not None:
        return cached
    plain = {p.index: [] for p in space.domain.patches}
    other = {p.index: [] for p in space.domain.patches}
    for fn in space.basis:
        if fn.kind == "patch":
            plain[fn.where].append((fn.j[0], fn.j[1], fn.index))
        else:
            for pi in fn.pieces:
                other[pi].append(fn)
    plain = {k: np.asarray(v, dtype=np.int64).reshape(-1, 3) for k, v in plain.items()}
    cached = (plain, other)
    space._fn_partition = cached
    return cached


def eval_solution_grid(space, coeffs, patch_index, x1, x2, d1, d2):
    """Field value of sum_i c_i phi_i on a tensor grid of one patch.

    Plain patch B-splines are contracted separably through their coefficient
    grid; edge and vertex functions accumulate over their support boxes.
    """
    from .bspline import eval_all

    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    plain, other = _patch_fn_partition(space)
    s = space.space
    idx = plain[patch_index]
    C = np.zeros((s.n, s.n))
    if idx.size:
        C[idx[:, 0], idx[:, 1]] = coeffs[idx[:, 2]]
    B1 = eval_all(s, x1, d1)[:, d1, :]
    B2 = eval_all(s, x2, d2)[:, d2, :]
    out = B1 @ C @ B2.T
    for fn in other[patch_index]:
        if coeffs[fn.index] == 0.0:
            continue
        piece = fn.pieces[patch_index]
        a1, b1, a2, b2 = piece.box()
        lo1 = np.searchsorted(x1, a1 - 1e-14, side="left")
        hi1 = np.searchsorted(x1, b1 + 1e-14, side="right")
        lo2 = np.searchsorted(x2, a2 - 1e-14, side="left")
        hi2 = np.searchsorted(x2, b2 + 1e-14, side="right")
        if lo1 >= hi1 or lo2 >= hi2:
            continue
        out[lo1:hi1, lo2:hi2] += coeffs[fn.index] * piece.eval_grid(
            x1[lo1:hi1], x2[lo2:hi2], d1, d2
        )
    return out


def evaluate_solution(sol, location, orders=(0, 0)):
    """Evaluate the solution field (parametric derivatives via local pieces,
    physical derivatives up to total order 2).

    location: (patch_index, xi) pair, or a physical point (x, y) which is
    located by inverting the owning patch (smallest containing index).
    """
    d1, d2 = orders
    if d1 + d2 > 2:
        raise ParameterError("solution derivatives supported up to total order 2")
    space = sol.space
    dom = space.domain
    if (
        isinstance(location, tuple)
        and len(location) == 2
        and np.isscalar(location[0])
        and not np.isscalar(location[1])
    ):
        patch_index, xi = int(location[0]), np.asarray(location[1], dtype=float)
    else:
        xy = np.asarray(location, dtype=float).ravel()
        patch_index = None
        for patch in dom.patches:
            xi = patch.invert(xy)
            if xi is not None:
                patch_index = patch.index
                break
        if patch_index is None:
            raise DomainError(f"point {xy} lies outside the domain")

    pts = np.atleast_2d(xi)
    jets = {}
    if (d1, d2) == (0, 0):
        need = [(0, 0)]
    elif d1 + d2 == 1:
        need = [(1, 0), (0, 1)]
    else:
        need = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    for dd in need:
        acc = np.zeros(1)
        for fn in space.basis:
            piece = fn.pieces.get(patch_index)
            if piece is None or sol.coeffs[fn.index] == 0.0:
                continue
            a1, b1, a2, b2 = piece.box()
            if not (a1 - 1e-14 <= pts[0, 0] <= b1 + 1e-14 and a2 - 1e-14 <= pts[0, 1] <= b2 + 1e-14):
                continue
            acc += sol.coeffs[fn.index] * piece.eval_points(pts, *dd)
        jets[dd] = acc[0]
    if (d1, d2) == (0, 0):
        return jets[(0, 0)]
    # physical derivatives via the chain rule
    patch = dom.patches[patch_index]
    d10 = patch.derivs(pts, 1, 0)[0]
    d01 = patch.derivs(pts, 0, 1)[0]
    J = np.array([[d10[0], d01[0]], [d10[1], d01[1]]])
    Jinv = np.linalg.inv(J)
    grad = Jinv.T @ np.array([jets[(1, 0)], jets[(0, 1)]])
    if d1 + d2 == 1:
        return grad[0] if d1 == 1 else grad[1]
    H = np.array([[jets[(2, 0)], jets[(1, 1)]], [jets[(1, 1)], jets[(0, 2)]]])
    for c in range(2):
        Hc = np.array(
            [
                [patch.derivs(pts, 2, 0)[0][c], patch.derivs(pts, 1, 1)[0][c]],
                [patch.derivs(pts, 1, 1)[0][c], patch.derivs(pts, 0, 2)[0][c]],
            ]
        )
        H = H - grad[c] * Hc
    Hx = Jinv.T @ H @ Jinv
    if (d1, d2) == (2, 0):
        return Hx[0, 0]
    if (d1, d2) == (0, 2):
        return Hx[1, 1]
    return Hx[0, 1]
