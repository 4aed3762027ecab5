"""Collocation point generation: Greville, superconvergent, clustered.

Univariate superconvergent points are the per-span images of fixed
reference roots: for degree 5 / regularity 2 the four roots of
15x^4 - 12x^2 + 1 on [-1, 1]; for degree 6 the five roots of
99x^5 - 130x^3 + 31x, which include the span endpoints (counted once at
shared knots). The (5,2) list additionally carries the domain endpoints so
Dirichlet data can be imposed. Clustered selections drop the 0-based index
set S_k ((5,2)) or every inner knot except the first and last ((6,3)); the
(6,2) set instead adds the second and second-to-last Greville abscissae.
In every clustered case the count equals the spline space dimension.

Global point sets are deduplicated topologically: corner points through the
vertex fans, interior interface points by matching arc parameters of the
two sides within 1e-12 (mirrored points coincide whenever the 1D list is
symmetric); every surviving point is owned by the smallest patch index
containing it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bspline import greville, make_space
from .errors import ParameterError

GREVILLE = "greville"
ALL_SUPERCONVERGENT = "all-superconvergent"
CLUSTERED = "clustered-superconvergent"
STRATEGIES = (GREVILLE, ALL_SUPERCONVERGENT, CLUSTERED)

_SUPER_PR = ((5, 2), (6, 2), (6, 3))


def reference_roots(p, r):
    """Superconvergent reference roots per knot span on [-1, 1]."""
    if (p, r) == (5, 2):
        a = np.sqrt((6.0 + np.sqrt(21.0)) / 15.0)
        b = np.sqrt((6.0 - np.sqrt(21.0)) / 15.0)
        return np.array([-a, -b, b, a])
    if (p, r) in ((6, 2), (6, 3)):
        c = np.sqrt(31.0 / 99.0)
        return np.array([-1.0, -c, 0.0, c, 1.0])
    raise ParameterError(f"no superconvergent points for (p, r) = ({p}, {r})")


def omission_set(p, r, k):
    """0-based indices S_k dropped from the sorted all-points list."""
    if (p, r) == (5, 2):
        s = {4, 4 * k + 1}
        for i in range((k - 6) // 4 + 1):
            s.update({9 + 8 * i, 12 + 8 * i, 4 * k + 5 - (9 + 8 * i), 4 * k + 5 - (12 + 8 * i)})
        m = k % 4
        if m == 0:
            s.update({2 * k + 1, 2 * k + 4})
        elif m == 1:
            s.update({2 * k - 1, 2 * k + 2, 2 * k + 6})
        elif m == 3:
            s.update({2 * k + 2})
        return np.array(sorted(s), dtype=int)
    if (p, r) == (6, 3):
        # every inner knot except the first and the last; knots sit at 4j
        return np.array([8 + 4 * i for i in range(k - 2)], dtype=int)
    return np.array([], dtype=int)


@dataclass(frozen=True)
class Superconvergent1D:
    p: int
    r: int
    k: int
    all_points: np.ndarray = field(repr=False)
    omitted: np.ndarray = field(repr=False)
    added: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)

    @property
    def delta(self):
        n = self.p + 1 + self.k * (self.p - self.r)
        return self.all_points.size - n


def superconvergent_1d(p, r, k, clustered=False):
    """Assemble the univariate superconvergent points on [0, 1]."""
    if (p, r) not in _SUPER_PR:
        raise ParameterError(
            f"superconvergent points defined only for (p, r) in {_SUPER_PR}"
        )
    if k < 2:
        raise ParameterError(f"superconvergent selections assume k >= 2, got k={k}")
    roots = reference_roots(p, r)
    spans = np.arange(k + 1)
    if p == 5:
        pts = ((spans[:, None] + (1.0 + roots[None, :]) / 2.0) / (k + 1)).ravel()
        all_points = np.concatenate([[0.0], pts, [1.0]])
    else:
        first = (1.0 + roots) / 2.0 / (k + 1)
        rest = ((spans[1:, None] + (1.0 + roots[None, 1:]) / 2.0) / (k + 1)).ravel()
        all_points = np.concatenate([first, rest])
    added = np.array([])
    if clustered:
        if (p, r) == (6, 2):
            z = greville(make_space(p, r, k))
            added = np.array([z[1], z[-2]])
            points = np.sort(np.concatenate([all_points, added]))
            omitted = np.array([], dtype=int)
        else:
            omitted = omission_set(p, r, k)
            if omitted.size and omitted.max() >= all_points.size:
                raise AssertionError("omission index out of range")
            points = np.delete(all_points, omitted)
    else:
        omitted = np.array([], dtype=int)
        points = all_points
    n = p + 1 + k * (p - r)
    if clustered and points.size != n:
        raise AssertionError(
            f"clustered point count {points.size} != space dimension {n}"
        )
    return Superconvergent1D(
        p=p, r=r, k=k, all_points=all_points, omitted=omitted, added=added, points=points
    )


def local_points_1d(p, r, k, strategy):
    """The univariate collocation point list for one strategy."""
    if strategy == GREVILLE:
        return greville(make_space(p, r, k))
    if strategy == ALL_SUPERCONVERGENT:
        return superconvergent_1d(p, r, k, clustered=False).points
    if strategy == CLUSTERED:
        return superconvergent_1d(p, r, k, clustered=True).points
    raise ParameterError(f"unknown collocation strategy '{strategy}'")


def local_points(p, r, k, strategy):
    """Tensor-product local collocation grid as its 1D factor (both axes equal)."""
    ts = local_points_1d(p, r, k, strategy)
    if not (ts[0] == 0.0 and ts[-1] == 1.0):
        raise AssertionError("local point lists must contain both endpoints")
    if np.any(np.diff(ts) <= 0):
        raise AssertionError("local point list not strictly increasing")
    return ts


def local_grid(p, r, k, strategy):
    """The full tensor grid of local collocation points, shape (m^2, 2)."""
    ts = local_points(p, r, k, strategy)
    X, Y = np.meshgrid(ts, ts, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


@dataclass
class PatchPoints:
    """Tensor grid of one patch with global ownership bookkeeping."""

    patch: int
    ts: np.ndarray
    row: np.ndarray        # (m, m) global row id, -1 where owned elsewhere
    boundary: np.ndarray   # (m, m) bool


@dataclass
class CollocationPointSet:
    strategy: str
    xy: np.ndarray         # (N, 2) global points
    owner: np.ndarray      # (N,) owning patch (smallest containing index)
    local: np.ndarray      # (N, 2) local coordinates on the owner
    is_boundary: np.ndarray
    per_patch: list

    @property
    def size(self):
        return self.xy.shape[0]

    @property
    def inner_idx(self):
        return np.nonzero(~self.is_boundary)[0]

    @property
    def boundary_idx(self):
        return np.nonzero(self.is_boundary)[0]


def assemble_global(domain, p, r, k, strategy):
    """Deduplicated global collocation points with inner/boundary split."""
    ts = local_points(p, r, k, strategy)
    m = ts.size
    npatch = domain.n_patches

    owned = [np.ones((m, m), dtype=bool) for _ in range(npatch)]
    boundary = [np.zeros((m, m), dtype=bool) for _ in range(npatch)]

    corner_pos = {0: (0, 0), 1: (m - 1, 0), 2: (0, m - 1), 3: (m - 1, m - 1)}

    def side_positions(side):
        """Grid positions on a side, excluding corners, plus frame arc params."""
        idx = np.arange(1, m - 1)
        if side == 0:
            pos = np.stack([np.zeros_like(idx), idx], axis=1)
        elif side == 1:
            pos = np.stack([np.full_like(idx, m - 1), idx], axis=1)
        elif side == 2:
            pos = np.stack([idx, np.zeros_like(idx)], axis=1)
        else:
            pos = np.stack([idx, np.full_like(idx, m - 1)], axis=1)
        return pos

    # corner ownership and vertex boundary flags through the vertex records
    for v in domain.vertices:
        owner = min(v.fan_patches)
        for pi, corner in v.corner_of.items():
            i1, i2 = corner_pos[corner]
            if pi != owner:
                owned[pi][i1, i2] = False
            if v.klass != "inner":
                boundary[pi][i1, i2] = True

    # boundary-edge interiors
    for rec in domain.boundary_edges:
        for (i1, i2) in side_positions(rec.side):
            boundary[rec.patch][i1, i2] = True

    # interface interiors: match arc parameters of the two sides
    for rec in domain.interfaces:
        lists = []
        for sidx in range(2):
            pi, side = rec.sides[sidx]
            fs = rec.framed[sidx]
            pos = side_positions(side)
            xi = np.stack([ts[pos[:, 0]], ts[pos[:, 1]]], axis=1)
            u = fs.to_frame.apply(xi)
            lists.append((pi, pos, u[:, 1]))
        (pa, posa, ta), (pb, posb, tb) = lists
        ia = np.argsort(ta)
        ib = np.argsort(tb)
        ai = bi = 0
        while ai < ia.size and bi < ib.size:
            da = ta[ia[ai]]
            db = tb[ib[bi]]
            if abs(da - db) <= 1e-12:
                # coincident point: smaller patch index owns it
                if pa <= pb:
                    i1, i2 = posb[ib[bi]]
                    owned[pb][i1, i2] = False
                else:
                    i1, i2 = posa[ia[ai]]
                    owned[pa][i1, i2] = False
                ai += 1
                bi += 1
            elif da < db:
                ai += 1
            else:
                bi += 1

    xs, ys, own, loc1, loc2, bnd = [], [], [], [], [], []
    per_patch = []
    for patch in domain.patches:
        pi = patch.index
        row = -np.ones((m, m), dtype=np.int64)
        keep = owned[pi]
        i1, i2 = np.nonzero(keep)
        ids = np.arange(len(xs), len(xs) + i1.size)
        row[i1, i2] = ids
        pts = np.stack([ts[i1], ts[i2]], axis=1)
        xy = patch.evaluate(pts)
        xs.extend(xy[:, 0])
        ys.extend(xy[:, 1])
        own.extend([pi] * i1.size)
        loc1.extend(pts[:, 0])
        loc2.extend(pts[:, 1])
        bnd.extend(boundary[pi][i1, i2])
        per_patch.append(PatchPoints(patch=pi, ts=ts, row=row, boundary=boundary[pi]))
    return CollocationPointSet(
        strategy=strategy,
        xy=np.stack([np.asarray(xs), np.asarray(ys)], axis=1),
        owner=np.asarray(own, dtype=int),
        local=np.stack([np.asarray(loc1), np.asarray(loc2)], axis=1),
        is_boundary=np.asarray(bnd, dtype=bool),
        per_patch=per_patch,
    )
