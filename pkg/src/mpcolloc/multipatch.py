"""Planar multi-patch domains: patches, topology, canonical frames, gluing.

A domain is a set of quadrangular patches (bilinear, or tensor-product
spline patches that behave bilinearly along interfaces) whose closures meet
in whole shared edges or single vertices. The builder derives the full
topology: interface/boundary-edge records carrying canonical parametric
frames (interface along {u1=0}, both sides tracing it with the same u2),
and vertex records carrying counterclockwise patch fans with the vertex at
the frame origin. All reparameterizations are realized as the eight
dihedral transforms of the unit square applied at evaluation time; control
data is never rewritten.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bspline import basis_all_ders, make_space
from .errors import DomainFileError, ParameterError, RegularityError, TopologyError

# Corner codes 0..3 = parameter corners (0,0), (1,0), (0,1), (1,1).
CORNER_PARAMS = ((0, 0), (1, 0), (0, 1), (1, 1))
# Side codes 0..3 = {xi1=0}, {xi1=1}, {xi2=0}, {xi2=1}; corner pairs follow
# the side's running coordinate in ascending order.
SIDE_CORNERS = ((0, 2), (1, 3), (0, 1), (2, 3))


@dataclass(frozen=True)
class Dihedral:
    """One of the 8 parametric symmetries of [0,1]^2, as a map source->image.

    image_1 = flip1(source_{2 if swap else 1}), image_2 = flip2(source_{1 if swap else 2}),
    where flip(t) = 1-t when the flag is set.
    """

    swap: bool = False
    flip1: bool = False
    flip2: bool = False

    def apply(self, pts):
        pts = np.asarray(pts, dtype=float)
        a = pts[..., 1] if self.swap else pts[..., 0]
        b = pts[..., 0] if self.swap else pts[..., 1]
        u1 = 1.0 - a if self.flip1 else a
        u2 = 1.0 - b if self.flip2 else b
        return np.stack([u1, u2], axis=-1)

    def apply_corner(self, c):
        """Exact image of a corner code (integer arithmetic)."""
        c1, c2 = CORNER_PARAMS[c]
        a, b = (c2, c1) if self.swap else (c1, c2)
        u1 = 1 - a if self.flip1 else a
        u2 = 1 - b if self.flip2 else b
        return u1, u2

    def inverse(self):
        if self.swap:
            return Dihedral(True, self.flip2, self.flip1)
        return self

    def diff_orders(self, d1, d2):
        """Chain rule through the map: for f = g o D,
        d^{d1}_{x1} d^{d2}_{x2} f = sign * (d^{e1}_{u1} d^{e2}_{u2} g) o D.
        """
        if self.swap:
            e1, e2 = d2, d1
        else:
            e1, e2 = d1, d2
        sign = 1.0
        if self.flip1 and e1 % 2:
            sign = -sign
        if self.flip2 and e2 % 2:
            sign = -sign
        return e1, e2, sign


ALL_DIHEDRALS = tuple(
    Dihedral(sw, f1, f2) for sw in (False, True) for f1 in (False, True) for f2 in (False, True)
)


def _find_dihedral(corner_images):
    """The unique dihedral sending each corner code to its required image."""
    for d in ALL_DIHEDRALS:
        if all(d.apply_corner(c) == img for c, img in corner_images.items()):
            return d
    raise AssertionError("no dihedral realizes the requested corner images")


class Patch:
    """Bilinear quad or tensor-product spline patch with its geometry map."""

    def __init__(self, index, corners=None, control_net=None, geo_space=None):
        self.index = index
        if (corners is None) == (control_net is None):
            raise ParameterError("patch needs exactly one of corners / control_net")
        if corners is not None:
            self.corners = np.asarray(corners, dtype=float).reshape(4, 2)
            self.control_net = None
            self.geo_space = None
            c = self.corners
            self._b10 = c[1] - c[0]
            self._b01 = c[2] - c[0]
            self._b11 = c[3] - c[1] - c[2] + c[0]
        else:
            self.control_net = np.asarray(control_net, dtype=float)
            if geo_space is None:
                raise ParameterError("spline patch needs its geometry space")
            self.geo_space = geo_space
            ng = geo_space.n
            if self.control_net.shape != (ng, ng, 2):
                raise ParameterError(
                    f"control net shape {self.control_net.shape} does not match "
                    f"geometry space dimension {ng}"
                )
            self.corners = np.array(
                [
                    self.control_net[0, 0],
                    self.control_net[-1, 0],
                    self.control_net[0, -1],
                    self.control_net[-1, -1],
                ]
            )

    @property
    def is_bilinear(self):
        return self.control_net is None

    def corner_xy(self, c):
        return self.corners[c]

    def derivs_grid(self, x1, x2, d1, d2):
        """Parametric derivative of F on the tensor grid x1 x x2 -> (m1, m2, 2)."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        m1, m2 = x1.shape[0], x2.shape[0]
        if self.is_bilinear:
            out = np.zeros((m1, m2, 2))
            c0 = self.corners[0]
            if d1 == 0 and d2 == 0:
                out += c0
                out += x1[:, None, None] * self._b10
                out += x2[None, :, None] * self._b01
                out += (x1[:, None] * x2[None, :])[:, :, None] * self._b11
            elif d1 == 1 and d2 == 0:
                out += self._b10
                out += x2[None, :, None] * self._b11
            elif d1 == 0 and d2 == 1:
                out += self._b01
                out += x1[:, None, None] * self._b11
            elif d1 == 1 and d2 == 1:
                out += self._b11
            return out
        gs = self.geo_space
        f1, t1 = basis_all_ders(gs, x1, d1)
        f2, t2 = basis_all_ders(gs, x2, d2)
        b1 = np.zeros((m1, gs.n))
        b2 = np.zeros((m2, gs.n))
        cols = np.arange(gs.p + 1)
        np.put_along_axis(b1, f1[:, None] + cols, t1[:, d1, :], axis=1)
        np.put_along_axis(b2, f2[:, None] + cols, t2[:, d2, :], axis=1)
        return np.einsum("ia,jb,abc->ijc", b1, b2, self.control_net)

    def derivs(self, pts, d1, d2):
        """Parametric derivative of F at points (m,2) -> (m,2)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.is_bilinear:
            x1, x2 = pts[:, 0], pts[:, 1]
            out = np.zeros((pts.shape[0], 2))
            if d1 == 0 and d2 == 0:
                out = (
                    self.corners[0]
                    + np.outer(x1, self._b10)
                    + np.outer(x2, self._b01)
                    + np.outer(x1 * x2, self._b11)
                )
            elif d1 == 1 and d2 == 0:
                out = self._b10 + np.outer(x2, self._b11)
            elif d1 == 0 and d2 == 1:
                out = self._b01 + np.outer(x1, self._b11)
            elif d1 == 1 and d2 == 1:
                out = np.broadcast_to(self._b11, (pts.shape[0], 2)).copy()
            return out
        gs = self.geo_space
        f1, t1 = basis_all_ders(gs, pts[:, 0], d1)
        f2, t2 = basis_all_ders(gs, pts[:, 1], d2)
        win = np.arange(gs.p + 1)
        net = self.control_net[
            (f1[:, None] + win[None, :])[:, :, None],
            (f2[:, None] + win[None, :])[:, None, :],
        ]  # (m, p+1, p+1, 2)
        return np.einsum("ma,mb,mabc->mc", t1[:, d1, :], t2[:, d2, :], net)

    def evaluate(self, pts):
        return self.derivs(pts, 0, 0)

    def jacobians(self, pts):
        """J[m, c, a] = dF_c/dxi_a at each point."""
        d10 = self.derivs(pts, 1, 0)
        d01 = self.derivs(pts, 0, 1)
        return np.stack([d10, d01], axis=-1)

    def invert(self, xy, tol=1e-12, maxiter=50):
        """Local parameters of a physical point, or None if outside the patch."""
        xy = np.asarray(xy, dtype=float)
        if self.is_bilinear:
            c0, a, b, d = self.corners[0], self._b10, self._b01, self._b11
            rhs = xy - c0

            def cross(u, v):
                return u[0] * v[1] - u[1] * v[0]

            # cross(rhs - b*t, a + d*t) = 0, quadratic in t = xi2
            A = -cross(b, d)
            B = cross(rhs, d) - cross(b, a)
            C = cross(rhs, a)
            sols = []
            if abs(A) < 1e-14 * (abs(B) + abs(C) + 1e-300):
                if B != 0.0:
                    sols = [-C / B]
            else:
                disc = B * B - 4 * A * C
                if disc >= -1e-13 * (B * B + abs(4 * A * C)):
                    sq = np.sqrt(max(disc, 0.0))
                    sols = [(-B + sq) / (2 * A), (-B - sq) / (2 * A)]
            eps = 1e-9
            for t in sols:
                if not -eps <= t <= 1 + eps:
                    continue
                den = a + d * t
                num = rhs - b * t
                # xi1 from the better-conditioned component
                i = int(np.argmax(np.abs(den)))
                if den[i] == 0.0:
                    continue
                s = num[i] / den[i]
                if -eps <= s <= 1 + eps:
                    xi = np.clip([s, t], 0.0, 1.0)
                    if np.linalg.norm(self.evaluate([xi])[0] - xy) <= 1e-9 * (
                        1 + np.linalg.norm(xy)
                    ):
                        return xi
            return None
        # spline patch: Newton from the center
        xi = np.array([0.5, 0.5])
        for _ in range(maxiter):
            res = self.evaluate([xi])[0] - xy
            if np.linalg.norm(res) < tol:
                break
            J = self.jacobians([xi])[0]
            try:
                step = np.linalg.solve(J, res)
            except np.linalg.LinAlgError:
                return None
            xi = np.clip(xi - step, 0.0, 1.0)
        else:
            return None
        eps = 1e-9
        if -eps <= xi[0] <= 1 + eps and -eps <= xi[1] <= 1 + eps:
            return np.clip(xi, 0.0, 1.0)
        return None

    def check_regular(self):
        """Jacobian determinant must keep one sign over the closed square."""
        if self.is_bilinear:
            pts = np.asarray(CORNER_PARAMS, dtype=float)
        else:
            g = np.linspace(0.0, 1.0, 4 * (self.geo_space.k + 1) + 1)
            pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        J = self.jacobians(pts)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        scale = np.abs(J).max() ** 2
        if np.any(np.abs(det) < 1e-12 * scale) or (det.min() < 0 < det.max()):
            raise RegularityError(
                f"patch {self.index}: Jacobian determinant changes sign or vanishes"
            )


@dataclass
class GluingSide:
    """Linear gluing polynomials of one interface side: f(t) = c0 + c1*t."""

    alpha: tuple
    beta: tuple

    def alpha_at(self, t):
        return self.alpha[0] + self.alpha[1] * np.asarray(t, dtype=float)

    def beta_at(self, t):
        return self.beta[0] + self.beta[1] * np.asarray(t, dtype=float)


@dataclass
class GluingData:
    sides: tuple       # (GluingSide, GluingSide) in caller's side order
    c1: float
    neg_side: int      # position (0/1) of the side with alpha < 0


@dataclass
class FramedSide:
    """One side of a canonical interface frame: patch plus its frame map."""

    patch: Patch
    to_frame: Dihedral  # patch params -> frame params (interface at u1=0)

    @property
    def from_frame(self):
        return self.to_frame.inverse()

    def frame_derivs(self, u_pts, e1, e2):
        """Frame-coordinate derivative of the framed geometry at frame points."""
        m = self.from_frame
        d1, d2, sign = m.diff_orders(e1, e2)
        return sign * self.patch.derivs(m.apply(u_pts), d1, d2)

    def frame_jet(self, order=4):
        """Frame derivatives of the geometry at the frame origin, (order+1,order+1,2)."""
        m = self.from_frame
        xi0 = m.apply(np.array([0.0, 0.0]))
        jet = np.zeros((order + 1, order + 1, 2))
        for e1 in range(order + 1):
            for e2 in range(order + 1 - e1):
                d1, d2, sign = m.diff_orders(e1, e2)
                jet[e1, e2] = sign * self.patch.derivs([xi0], d1, d2)[0]
        return jet


def compute_gluing(side_a, side_b, tol=1e-10):
    """Gluing data of a canonically framed interface.

    alpha^(tau)(t) = c1 * det[D_{u1} F, D_{u2} F](0, t) and
    beta^(tau)(t) = (D_{u1}F . D_{u2}F)/|D_{u2}F|^2 (0, t); both are linear
    along the interface for admissible patches (verified at the midpoint).
    c1 minimizes ||alpha_neg + 1||_{L2}^2 + ||alpha_pos - 1||_{L2}^2.
    """
    ts = np.array([0.0, 0.5, 1.0])
    upts = np.stack([np.zeros(3), ts], axis=1)
    dets = []
    betas = []
    scale = 0.0
    for side in (side_a, side_b):
        d1 = side.frame_derivs(upts, 1, 0)
        d2 = side.frame_derivs(upts, 0, 1)
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        beta = (d1 * d2).sum(axis=1) / (d2 * d2).sum(axis=1)
        scale = max(scale, np.abs(det).max(), 1e-300)
        if abs(det[1] - 0.5 * (det[0] + det[2])) > tol * max(np.abs(det).max(), 1.0):
            raise RegularityError(
                f"patch {side.patch.index}: interface determinant is not linear"
            )
        if abs(beta[1] - 0.5 * (beta[0] + beta[2])) > tol * max(np.abs(beta).max(), 1.0):
            raise RegularityError(
                f"patch {side.patch.index}: interface gluing ratio is not linear"
            )
        dets.append((det[0], det[2]))
        betas.append((beta[0], beta[2] - beta[0]))
    sgn = [np.sign(d[0]) for d in dets]
    if sgn[0] == sgn[1] or 0.0 in sgn or np.sign(dets[0][1]) != sgn[0] or np.sign(dets[1][1]) != sgn[1]:
        raise RegularityError("interface sides do not have opposite Jacobian orientations")
    neg = 0 if sgn[0] < 0 else 1
    pos = 1 - neg

    def integ(d):
        return 0.5 * (d[0] + d[1])

    def integ_sq(d):
        return (d[0] ** 2 + d[0] * d[1] + d[1] ** 2) / 3.0

    c1 = (integ(dets[pos]) - integ(dets[neg])) / (integ_sq(dets[neg]) + integ_sq(dets[pos]))
    sides = tuple(
        GluingSide(alpha=(c1 * dets[i][0], c1 * (dets[i][1] - dets[i][0])), beta=betas[i])
        for i in range(2)
    )
    for t in (0.0, 1.0):
        if not sides[neg].alpha_at(t) < 0.0 < sides[pos].alpha_at(t):
            raise RegularityError("gluing sign invariant violated on the interface")
    return GluingData(sides=sides, c1=c1, neg_side=neg)


def check_spline_interface_admissible(side, tol=1e-10):
    """Edge-jet conditions a spline patch must satisfy along an interface.

    Along {u1=0}: the arc velocity D_{u2}F is constant, the transversal
    derivative D_{u1}F is affine, and D_{u1u1}F vanishes. Bilinear patches
    satisfy these identically.
    """
    if side.patch.is_bilinear:
        return
    ts = np.linspace(0.0, 1.0, 5)
    upts = np.stack([np.zeros(5), ts], axis=1)
    scale = max(1.0, np.abs(side.patch.control_net).max())
    d2 = side.frame_derivs(upts, 0, 1)
    if np.abs(d2 - d2[0]).max() > tol * scale:
        raise RegularityError(
            f"patch {side.patch.index}: interface arc is not affinely parameterized"
        )
    d1 = side.frame_derivs(upts, 1, 0)
    lin = d1[0] + np.outer(ts, d1[-1] - d1[0])
    if np.abs(d1 - lin).max() > tol * scale:
        raise RegularityError(
            f"patch {side.patch.index}: transversal derivative not affine along interface"
        )
    d11 = side.frame_derivs(upts, 2, 0)
    if np.abs(d11).max() > tol * scale:
        raise RegularityError(
            f"patch {side.patch.index}: second transversal derivative nonzero on interface"
        )


@dataclass
class InterfaceRecord:
    index: int
    sides: tuple          # ((patch_idx, side_code), (patch_idx, side_code))
    framed: tuple         # (FramedSide, FramedSide)
    gluing: GluingData
    vertex_ids: tuple     # vertex at u2=0, vertex at u2=1


@dataclass
class BoundaryEdgeRecord:
    index: int
    patch: int
    side: int
    framed: FramedSide    # edge at u1=0
    vertex_ids: tuple


@dataclass
class FanEdge:
    kind: str             # 'interface' | 'boundary'
    edge_index: int       # index into domain.interfaces / boundary_edges
    prev_pos: int | None  # fan position with this edge at its {u1=0} side
    next_pos: int | None  # fan position with this edge at its {u2=0} side
    gluing: GluingData | None  # sides ordered (prev, next); None for boundary


@dataclass
class VertexRecord:
    index: int
    xy: np.ndarray
    klass: str            # 'inner' | 'v1' | 'v2' | 'v3'
    valency: int
    fan_patches: list     # patch indices in counterclockwise fan order
    fan_frames: list      # Dihedral patch->fan frame, vertex at (0,0)
    fan_edges: list       # length valency (inner, cyclic) or valency+1 (boundary)
    corner_of: dict = field(default_factory=dict)  # patch index -> corner code
    # valency-2 boundary vertices: both patches framed with the shared
    # interface at {u1=0} and the vertex at u2=0
    v2_framed: tuple | None = None
    v2_gluing: GluingData | None = None


@dataclass
class MultiPatchDomain:
    patches: list
    interfaces: list
    boundary_edges: list
    vertices: list
    name: str = "domain"
    diameter: float = 1.0
    side_lookup: dict = field(default_factory=dict, repr=False)

    @property
    def n_patches(self):
        return len(self.patches)

    def vertices_of_class(self, klass):
        return [v for v in self.vertices if v.klass == klass]

    def class_counts(self):
        c = {"inner": 0, "v1": 0, "v2": 0, "v3": 0}
        for v in self.vertices:
            c[v.klass] += 1
        return c


def _cluster_corners(patches, tol_abs):
    pts = []
    owners = []
    for p in patches:
        for c in range(4):
            pts.append(p.corner_xy(c))
            owners.append((p.index, c))
    pts = np.asarray(pts)
    n = len(pts)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) <= tol_abs:
                parent[find(i)] = find(j)
    labels = {}
    vid_of = {}
    coords = []
    for i in range(n):
        root = find(i)
        if root not in labels:
            labels[root] = len(coords)
            coords.append(pts[root])
        vid_of[owners[i]] = labels[root]
    return vid_of, coords


def _frame_for_interface_side(patch, side, start_corner):
    """Dihedral sending `side` to {u1=0} traced from start_corner at u2=0."""
    c_lo, c_hi = SIDE_CORNERS[side]
    other_end = c_hi if start_corner == c_lo else c_lo
    return _find_dihedral({start_corner: (0, 0), other_end: (0, 1)})


def _frame_for_fan(corner, side_u2):
    """Dihedral with `corner` at the origin and `side_u2` along {u2=0}."""
    c_lo, c_hi = SIDE_CORNERS[side_u2]
    other_end = c_hi if corner == c_lo else c_lo
    return _find_dihedral({corner: (0, 0), other_end: (1, 0)})


def _fan_det_positive(patch, frame):
    fs = FramedSide(patch, frame)
    j1 = fs.frame_derivs(np.array([[0.0, 0.0]]), 1, 0)[0]
    j2 = fs.frame_derivs(np.array([[0.0, 0.0]]), 0, 1)[0]
    return j1[0] * j2[1] - j1[1] * j2[0] > 0.0


def build_topology(patches, tol=1e-9, name="domain"):
    """Derive the full multi-patch topology from a list of patches."""
    if not patches:
        raise TopologyError("empty patch list")
    for i, p in enumerate(patches):
        if p.index != i:
            raise TopologyError("patch indices must be 0..n-1 in order")
        p.check_regular()

    allc = np.concatenate([p.corners for p in patches])
    diam = float(np.linalg.norm(allc.max(axis=0) - allc.min(axis=0)))
    diam = max(diam, 1e-30)
    tol_abs = tol * diam

    vid_of, vcoords = _cluster_corners(patches, tol_abs)

    # sides grouped by endpoint vertex pair
    groups = {}
    for p in patches:
        for side in range(4):
            c_lo, c_hi = SIDE_CORNERS[side]
            va, vb = vid_of[(p.index, c_lo)], vid_of[(p.index, c_hi)]
            if va == vb:
                raise TopologyError(f"patch {p.index} side {side} collapses to a point")
            groups.setdefault(frozenset((va, vb)), []).append((p.index, side))

    # T-junction / hanging corner detection: a vertex inside a side's interior
    ts = np.linspace(0.0, 1.0, 33)
    for key, sides in groups.items():
        for (pi, side) in sides:
            p = patches[pi]
            frame = _frame_for_interface_side(p, side, SIDE_CORNERS[side][0])
            fs = FramedSide(p, frame)

            def curve_at(t):
                t = np.atleast_1d(t)
                u = np.stack([np.zeros(t.size), t], axis=1)
                return p.evaluate(fs.from_frame.apply(u))

            pts = curve_at(ts)
            for vm, vxy in enumerate(vcoords):
                if vm in key:
                    continue
                d2 = ((pts - vxy) ** 2).sum(axis=1)
                i = int(np.argmin(d2))
                lo = ts[max(i - 1, 0)]
                hi = ts[min(i + 1, ts.size - 1)]
                for _ in range(40):  # golden-section refinement of the distance
                    m1 = lo + 0.382 * (hi - lo)
                    m2 = lo + 0.618 * (hi - lo)
                    f1 = ((curve_at(m1)[0] - vxy) ** 2).sum()
                    f2 = ((curve_at(m2)[0] - vxy) ** 2).sum()
                    if f1 < f2:
                        hi = m2
                    else:
                        lo = m1
                tbest = 0.5 * (lo + hi)
                dist = np.linalg.norm(curve_at(tbest)[0] - vxy)
                if dist <= tol_abs:
                    raise TopologyError(
                        f"vertex {vm} lies on the interior of patch {pi} side {side} "
                        "(T-junction / hanging corner)"
                    )

    interfaces = []
    boundary_edges = []
    side_lookup = {}
    for key in sorted(groups, key=lambda k: tuple(sorted(k))):
        sides = sorted(groups[key])
        if len(sides) == 1:
            (pi, side) = sides[0]
            p = patches[pi]
            frame = _frame_for_interface_side(p, side, SIDE_CORNERS[side][0])
            rec = BoundaryEdgeRecord(
                index=len(boundary_edges),
                patch=pi,
                side=side,
                framed=FramedSide(p, frame),
                vertex_ids=(
                    vid_of[(pi, SIDE_CORNERS[side][0])],
                    vid_of[(pi, SIDE_CORNERS[side][1])],
                ),
            )
            boundary_edges.append(rec)
            side_lookup[(pi, side)] = ("boundary", rec.index, 0)
        elif len(sides) == 2:
            (pa, sa), (pb, sb) = sides
            if pa == pb:
                raise TopologyError(f"patch {pa} shares an edge with itself")
            A, B = patches[pa], patches[pb]
            ca_lo, ca_hi = SIDE_CORNERS[sa]
            frame_a = _frame_for_interface_side(A, sa, ca_lo)
            va_start = vid_of[(pa, ca_lo)]
            cb_lo, cb_hi = SIDE_CORNERS[sb]
            start_b = cb_lo if vid_of[(pb, cb_lo)] == va_start else cb_hi
            frame_b = _frame_for_interface_side(B, sb, start_b)
            fa, fb = FramedSide(A, frame_a), FramedSide(B, frame_b)
            tchk = np.linspace(0.0, 1.0, 10)
            ua = np.stack([np.zeros(10), tchk], axis=1)
            ca = A.evaluate(fa.from_frame.apply(ua))
            cb = B.evaluate(fb.from_frame.apply(ua))
            if np.abs(ca - cb).max() > tol_abs:
                raise TopologyError(
                    f"sides of patches {pa} and {pb} share endpoints but trace "
                    "different curves"
                )
            check_spline_interface_admissible(fa)
            check_spline_interface_admissible(fb)
            gluing = compute_gluing(fa, fb)
            rec = InterfaceRecord(
                index=len(interfaces),
                sides=((pa, sa), (pb, sb)),
                framed=(fa, fb),
                gluing=gluing,
                vertex_ids=(va_start, vid_of[(pa, ca_hi)]),
            )
            interfaces.append(rec)
            side_lookup[(pa, sa)] = ("interface", rec.index, 0)
            side_lookup[(pb, sb)] = ("interface", rec.index, 1)
        else:
            raise TopologyError(
                f"{len(sides)} patch sides share the same endpoints; not a valid layout"
            )

    # patch connectivity through interfaces
    adj = {p.index: set() for p in patches}
    for rec in interfaces:
        (pa, _), (pb, _) = rec.sides
        adj[pa].add(pb)
        adj[pb].add(pa)
    seen = {0}
    stack = [0]
    while stack:
        for q in adj[stack.pop()]:
            if q not in seen:
                seen.add(q)
                stack.append(q)
    if len(seen) != len(patches):
        raise TopologyError("patches are not connected through shared interfaces")

    # vertices: incidence, class, fans
    incident = {}
    for p in patches:
        for c in range(4):
            incident.setdefault(vid_of[(p.index, c)], []).append((p.index, c))
    boundary_vids = set()
    for rec in boundary_edges:
        boundary_vids.update(rec.vertex_ids)

    vertices = []
    for vid in sorted(incident):
        pcs = incident[vid]
        pset = sorted({pi for pi, _ in pcs})
        valency = len(pset)
        if len(pcs) != valency:
            raise TopologyError(f"patch touches vertex {vid} in more than one corner")
        is_boundary = vid in boundary_vids
        if not is_boundary:
            klass = "inner"
        elif valency == 1:
            klass = "v1"
        elif valency == 2:
            klass = "v2"
        else:
            klass = "v3"

        corner_of = dict(pcs)

        def sides_at(pi):
            c = corner_of[pi]
            return [s for s in range(4) if c in SIDE_CORNERS[s]]

        # choose the starting (patch, u2-side): boundary side for boundary
        # vertices, else lowest patch index; orientation fixed by det > 0
        start = None
        if is_boundary:
            candidates = []
            for pi in pset:
                for s in sides_at(pi):
                    if side_lookup[(pi, s)][0] == "boundary":
                        candidates.append((pi, s))
            for pi, s in sorted(candidates):
                fr = _frame_for_fan(corner_of[pi], s)
                if _fan_det_positive(patches[pi], fr):
                    start = (pi, s, fr)
                    break
            if start is None:
                raise TopologyError(f"no counterclockwise fan start at boundary vertex {vid}")
        else:
            pi = pset[0]
            for s in sides_at(pi):
                fr = _frame_for_fan(corner_of[pi], s)
                if _fan_det_positive(patches[pi], fr):
                    start = (pi, s, fr)
                    break
            if start is None:
                raise TopologyError(f"cannot orient fan at inner vertex {vid}")

        fan_patches = []
        fan_frames = []
        fan_side_u2 = []
        pi, s, fr = start
        for _ in range(valency):
            fan_patches.append(pi)
            fan_frames.append(fr)
            fan_side_u2.append(s)
            # the {u1=0} side of the current frame
            m = fr.inverse()
            cs = [c for c in range(4) if fr.apply_corner(c) in ((0, 0), (0, 1))]
            u1_side = next(
                s2 for s2 in range(4) if set(SIDE_CORNERS[s2]) == set(cs)
            )
            kind, eidx, pos = side_lookup[(pi, u1_side)]
            if kind == "boundary":
                if not is_boundary or len(fan_patches) != valency:
                    raise TopologyError(
                        f"fan walk at vertex {vid} hit the boundary prematurely"
                    )
                break
            rec = interfaces[eidx]
            (qa, ta), (qb, tb) = rec.sides
            npi, ns = (qb, tb) if pos == 0 else (qa, ta)
            if npi not in corner_of:
                raise TopologyError(f"fan at vertex {vid} is not a single wheel of patches")
            nfr = _frame_for_fan(corner_of[npi], ns)
            if not _fan_det_positive(patches[npi], nfr):
                raise TopologyError(f"fan orientation flip at vertex {vid}")
            pi, s, fr = npi, ns, nfr
        if sorted(set(fan_patches)) != pset:
            raise TopologyError(
                f"vertex {vid}: incident patches do not form a single fan (pinched vertex)"
            )
        if not is_boundary:
            # cyclic closure: the u1=0 side of the last patch returns to the start
            m = fan_frames[-1]
            cs = [c for c in range(4) if m.apply_corner(c) in ((0, 0), (0, 1))]
            u1_side = next(s2 for s2 in range(4) if set(SIDE_CORNERS[s2]) == set(cs))
            kind, eidx, pos = side_lookup[(fan_patches[-1], u1_side)]
            rec = interfaces[eidx]
            other = rec.sides[1 - pos]
            if other != (fan_patches[0], fan_side_u2[0]):
                raise TopologyError(f"fan at inner vertex {vid} does not close")

        # fan edges with per-fan gluing (frames start at the vertex)
        n_edges = valency if not is_boundary else valency + 1
        fan_edges = []
        for e in range(n_edges):
            next_pos = e if e < valency else None
            prev_pos = (e - 1) % valency if not is_boundary else (e - 1 if e > 0 else None)
            if prev_pos is not None and next_pos is not None:
                fs_prev = FramedSide(patches[fan_patches[prev_pos]], fan_frames[prev_pos])
                swap = Dihedral(True, False, False)
                comp = _compose(fan_frames[next_pos], swap)
                fs_next = FramedSide(patches[fan_patches[next_pos]], comp)
                kind, eidx, _ = side_lookup[
                    (fan_patches[next_pos], fan_side_u2[next_pos])
                ]
                gl = compute_gluing(fs_prev, fs_next)
                fan_edges.append(
                    FanEdge("interface", eidx, prev_pos, next_pos, gl)
                )
            else:
                pos = next_pos if next_pos is not None else prev_pos
                pi2 = fan_patches[pos]
                if next_pos is not None:
                    kind, eidx, _ = side_lookup[(pi2, fan_side_u2[pos])]
                else:
                    m = fan_frames[pos]
                    cs = [c for c in range(4) if m.apply_corner(c) in ((0, 0), (0, 1))]
                    u1_side = next(
                        s2 for s2 in range(4) if set(SIDE_CORNERS[s2]) == set(cs)
                    )
                    kind, eidx, _ = side_lookup[(pi2, u1_side)]
                if kind != "boundary":
                    raise TopologyError(f"fan bookkeeping broke at vertex {vid}")
                fan_edges.append(FanEdge("boundary", eidx, prev_pos, next_pos, None))

        vrec = VertexRecord(
            index=vid,
            xy=np.asarray(vcoords[vid]),
            klass=klass,
            valency=valency,
            fan_patches=fan_patches,
            fan_frames=fan_frames,
            fan_edges=fan_edges,
            corner_of=dict(corner_of),
        )
        if klass == "v2":
            # both patches framed with the shared interface at {u1=0}, vertex at u2=0
            iface_edge = next(fe for fe in vrec.fan_edges if fe.kind == "interface")
            rec = interfaces[iface_edge.edge_index]
            framed = []
            for pi2, side in rec.sides:
                corner = corner_of[pi2]
                c_lo, c_hi = SIDE_CORNERS[side]
                other_end = c_hi if corner == c_lo else c_lo
                fr = _find_dihedral({corner: (0, 0), other_end: (0, 1)})
                framed.append(FramedSide(patches[pi2], fr))
            vrec.v2_framed = tuple(framed)
            vrec.v2_gluing = compute_gluing(*framed)
        vertices.append(vrec)

    return MultiPatchDomain(
        patches=list(patches),
        interfaces=interfaces,
        boundary_edges=boundary_edges,
        vertices=vertices,
        name=name,
        diameter=diam,
        side_lookup=side_lookup,
    )


def _compose(first, second):
    """Dihedral equal to: apply `first`, then `second`."""
    for d in ALL_DIHEDRALS:
        ok = True
        for c in range(4):
            c1, c2 = first.apply_corner(c)
            mid = c1 + 2 * c2  # corner code of the image
            if second.apply_corner(mid) != d.apply_corner(c):
                ok = False
                break
        if ok:
            return d
    raise AssertionError("dihedral composition not closed")


def gluing_data(domain, interface_index):
    """Gluing data of an interface in its canonical frame."""
    return domain.interfaces[interface_index].gluing


def patch_derivatives(patch, xi, d1, d2):
    """Parametric derivatives of the geometry map, total order <= 4."""
    if d1 + d2 > 4:
        raise ParameterError("geometry jets are provided up to total order 4")
    return patch.derivs(np.atleast_2d(xi), d1, d2)


# ---------------------------------------------------------------------------
# degree-4 jet algebra (vertex interpolation machinery)
# ---------------------------------------------------------------------------

JET_ORDERS = [(m1, m2) for m1 in range(5) for m2 in range(5) if m1 + m2 <= 4]

_FACT = np.array([1.0, 1.0, 2.0, 6.0, 24.0])
_FACT2 = np.outer(_FACT, _FACT)
_TRUNC = np.array([[1.0 if i + j <= 4 else 0.0 for j in range(5)] for i in range(5)])


def _poly_mul(a, b):
    out = np.zeros((5, 5))
    for i in range(5):
        for j in range(5 - i):
            if a[i, j] == 0.0:
                continue
            out[i:, j:] += a[i, j] * b[: 5 - i, : 5 - j]
    return out * _TRUNC


def jet_compose(phys_jet, geo_jet):
    """4-jet of psi o F at the frame origin from psi's physical 4-jet.

    phys_jet[(m1, m2)] holds the physical derivatives of psi at the vertex;
    geo_jet[(e1, e2), c] the frame derivatives of the geometry components.
    Computed by composing the two degree-4 Taylor polynomials and truncating,
    which realizes the multivariate chain rule exactly to total order 4.
    """
    phys_jet = np.asarray(phys_jet, dtype=float)
    geo_jet = np.asarray(geo_jet, dtype=float)
    px = np.zeros((5, 5, 2))
    for (e1, e2) in JET_ORDERS:
        px[e1, e2] = geo_jet[e1, e2] / (_FACT[e1] * _FACT[e2])
    px[0, 0] = 0.0  # local coordinates centered at the vertex image
    x1p = [np.zeros((5, 5)) for _ in range(5)]
    x2p = [np.zeros((5, 5)) for _ in range(5)]
    x1p[0][0, 0] = 1.0
    x2p[0][0, 0] = 1.0
    for a in range(1, 5):
        x1p[a] = _poly_mul(x1p[a - 1], px[:, :, 0])
        x2p[a] = _poly_mul(x2p[a - 1], px[:, :, 1])
    out = np.zeros((5, 5))
    for (g1, g2) in JET_ORDERS:
        c = phys_jet[g1, g2] / (_FACT[g1] * _FACT[g2])
        if c != 0.0:
            out += c * _poly_mul(x1p[g1], x2p[g2])
    return out * _FACT2


def kron_jet(j1, j2, sigma):
    """Physical jet with the single prescribed entry sigma^(j1+j2) at (j1, j2)."""
    jet = np.zeros((5, 5))
    jet[j1, j2] = sigma ** (j1 + j2)
    return jet


def param_to_phys_jet(param_jet, geo_jet):
    """Invert jet_compose: physical 4-jet from a parametric 4-jet."""
    cols = []
    for (g1, g2) in JET_ORDERS:
        e = np.zeros((5, 5))
        e[g1, g2] = 1.0
        comp = jet_compose(e, geo_jet)
        cols.append([comp[m] for m in JET_ORDERS])
    M = np.array(cols).T
    rhs = np.array([np.asarray(param_jet)[m] for m in JET_ORDERS])
    sol = np.linalg.solve(M, rhs)
    out = np.zeros((5, 5))
    for val, (g1, g2) in zip(sol, JET_ORDERS):
        out[g1, g2] = val
    return out


# ---------------------------------------------------------------------------
# built-in domains and the domain file format
# ---------------------------------------------------------------------------


def unit_square():
    return build_topology(
        [Patch(0, corners=[(0, 0), (1, 0), (0, 1), (1, 1)])], name="unit-square"
    )


def two_patch_strip():
    return build_topology(
        [
            Patch(0, corners=[(0, 0), (1, 0), (0, 1), (1, 1)]),
            Patch(1, corners=[(0, 0), (-1, 0), (0, 1), (-1, 1)]),
        ],
        name="two-patch-strip",
    )


def pinwheel(nu):
    """nu bilinear quads around one inner vertex on a regular fan.

    Spoke corners at radius 1, outer corners at radius 2 on the half-angles.
    """
    if nu < 3:
        raise ParameterError("pinwheel needs valency nu >= 3")
    patches = []
    for ell in range(nu):
        th0 = 2 * np.pi * ell / nu
        th1 = 2 * np.pi * (ell + 1) / nu
        thm = 2 * np.pi * (ell + 0.5) / nu
        a = np.array([np.cos(th0), np.sin(th0)])
        b = np.array([np.cos(th1), np.sin(th1)])
        c = 2.0 * np.array([np.cos(thm), np.sin(thm)])
        patches.append(Patch(ell, corners=[(0.0, 0.0), tuple(a), tuple(b), tuple(c)]))
    return build_topology(patches, name=f"pinwheel{nu}")


_THREE_PATCH_NET = [
    # patch 1, rows j1 = 0..6, columns j2 = 0..6
    [
        ["17/3 2", "853/144 169/84", "103/16 57/28", "173/24 29/14", "383/48 59/28", "1223/144 179/84", "35/4 15/7"],
        ["101/18 11/6", "10163/1728 1859/1008", "411/64 209/112", "2083/288 319/168", "4633/576 649/336", "14833/1728 1969/1008", "425/48 55/28"],
        ["11/2 3/2", "371/64 169/112", "409/64 171/112", "233/32 87/56", "523/64 177/112", "561/64 179/112", "145/16 45/28"],
        ["16/3 1", "1633/288 169/168", "203/32 57/56", "37/5 99/100", "849/100 103/100", "923/100 57/50", "48/5 121/100"],
        ["31/6 1/2", "3193/576 169/336", "403/64 57/112", "749/100 8/25", "873/100 29/100", "961/100 27/50", "251/25 13/20"],
        ["91/18 1/6", "9433/1728 169/1008", "401/64 19/112", "15/2 -21/100", "437/50 -12/25", "961/100 -6/25", "201/20 -1/14"],
        ["5 0", "65/12 0", "25/4 0", "15/2 -12/25", "35/4 -21/25", "115/12 -2/3", "10 -1/2"],
    ],
    # patch 2
    [
        ["17/3 2", "50/9 13/6", "16/3 5/2", "5 3", "14/3 7/2", "40/9 23/6", "13/3 4"],
        ["853/144 169/84", "10033/1728 2209/1008", "3209/576 857/336", "167/32 173/56", "2803/576 1219/336", "8003/1728 4019/1008", "325/72 25/6"],
        ["103/16 57/28", "1211/192 251/112", "387/64 297/112", "181/32 183/56", "337/64 435/112", "961/192 481/112", "39/8 9/2"],
        ["173/24 29/14", "2033/288 389/168", "649/96 157/56", "127/20 359/100", "587/100 441/100", "109/20 99/20", "523/100 523/100"],
        ["383/48 59/28", "4499/576 803/336", "1435/192 331/112", "178/25 391/100", "661/100 49/10", "597/100 279/50", "142/25 591/100"],
        ["1223/144 179/84", "14363/1728 2459/1008", "4579/576 1027/336", "769/100 409/100", "73/10 257/50", "33/5 583/100", "31/5 37/6"],
        ["35/4 15/7", "137/16 69/28", "131/16 87/28", "799/100 209/50", "763/100 263/50", "111/16 83/14", "13/2 25/4"],
    ],
    # patch 3
    [
        ["17/3 2", "101/18 11/6", "11/2 3/2", "16/3 1", "31/6 1/2", "91/18 1/6", "5 0"],
        ["50/9 13/6", "2365/432 143/72", "85/16 13/8", "365/72 13/12", "695/144 13/24", "2015/432 13/72", "55/12 0"],
        ["16/3 5/2", "749/144 55/24", "79/16 15/8", "109/24 5/4", "199/48 5/8", "559/144 5/24", "15/4 0"],
        ["5 3", "115/24 11/4", "35/8 9/4", "19/5 43/25", "83/25 117/100", "153/50 7/10", "59/20 9/20"],
        ["14/3 7/2", "631/144 77/24", "61/16 21/8", "61/20 227/100", "123/50 181/100", "113/50 6/5", "43/20 9/10"],
        ["40/9 23/6", "1775/432 253/72", "55/16 23/8", "251/100 263/100", "7/4 113/50", "151/100 149/100", "17/12 1"],
        ["13/3 4", "143/36 11/3", "13/4 3", "56/25 141/50", "141/100 247/100", "10/9 19/12", "1 1"],
    ],
]


def appendix_three_patch():
    """Bicubic three-patch spline geometry (C2 cubics, h=1/4), bilinear-like
    along its interfaces, with one inner vertex of valency 3."""
    geo = make_space(3, 2, 3)
    patches = []
    for i, rows in enumerate(_THREE_PATCH_NET):
        net = np.empty((7, 7, 2))
        for j1, row in enumerate(rows):
            for j2, cell in enumerate(row):
                xs, ys = cell.split()
                net[j1, j2] = (float(Fraction(xs)), float(Fraction(ys)))
        patches.append(Patch(i, control_net=net, geo_space=geo))
    return build_topology(patches, name="appendix-three-patch")


BUILTIN_DOMAINS = {
    "unit-square": unit_square,
    "two-patch-strip": two_patch_strip,
    "pinwheel3": lambda: pinwheel(3),
    "pinwheel5": lambda: pinwheel(5),
    "pinwheel6": lambda: pinwheel(6),
    "appendix-three-patch": appendix_three_patch,
}


def builtin_domain(spec):
    """Builtin domain by name; pinwheel accepts any valency as pinwheel<nu>."""
    if spec in BUILTIN_DOMAINS:
        return BUILTIN_DOMAINS[spec]()
    if spec.startswith("pinwheel"):
        try:
            nu = int(spec[len("pinwheel"):])
        except ValueError as exc:
            raise ParameterError(f"unknown builtin domain '{spec}'") from exc
        return pinwheel(nu)
    raise ParameterError(f"unknown builtin domain '{spec}'")


def _parse_number(v):
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def load_domain_file(path):
    """Load a domain description (JSON); topology is always derived."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DomainFileError(f"domain file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DomainFileError(f"domain file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict) or "patches" not in doc:
        raise DomainFileError(f"domain file must carry a 'patches' list: {path}")
    patches = []
    for i, spec in enumerate(doc["patches"]):
        if "corners" in spec:
            corners = [[_parse_number(x) for x in pt] for pt in spec["corners"]]
            if len(corners) != 4:
                raise DomainFileError(f"patch {i}: corners must list 4 points")
            patches.append(Patch(i, corners=corners))
        elif "control_net" in spec:
            cn = spec["control_net"]
            try:
                space = make_space(int(cn["p"]), int(cn["r"]), int(cn["k"]))
                pts = [[[_parse_number(x) for x in pt] for pt in row] for row in cn["points"]]
            except (KeyError, TypeError) as exc:
                raise DomainFileError(f"patch {i}: malformed control_net") from exc
            patches.append(Patch(i, control_net=np.asarray(pts), geo_space=space))
        else:
            raise DomainFileError(f"patch {i}: needs 'corners' or 'control_net'")
    try:
        return build_topology(patches, name=doc.get("name", "domain"))
    except (TopologyError, RegularityError):
        raise


def domain_to_dict(domain):
    out = {"name": domain.name, "patches": []}
    for p in domain.patches:
        if p.is_bilinear:
            out["patches"].append({"corners": p.corners.tolist()})
        else:
            out["patches"].append(
                {
                    "control_net": {
                        "p": p.geo_space.p,
                        "r": p.geo_space.r,
                        "k": p.geo_space.k,
                        "points": p.control_net.tolist(),
                    }
                }
            )
    return out
