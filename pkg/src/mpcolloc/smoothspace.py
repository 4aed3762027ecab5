"""Globally C2-smooth spline space over a multi-patch domain.

The space is a direct sum of patch, edge and vertex subspaces. Patch and
boundary-edge functions are single tensor B-splines with index ranges that
keep value, gradient and Hessian zero on every interface. Interface-edge
functions are two-piece combinations whose transversal behavior is carried
by the one-span profiles

    M0 = N0 + N1 + N2,   M1 = (h/p) (N1 + 2 N2),   M2 = h^2/(p(p-1)) N2,

which form a dual basis to the transversal jet orders 0, 1, 2 at the
interface; tangential factors come from the three auxiliary spaces
S^{p,r+2}, S^{p-1,r+1}, S^{p-2,r} scaled by the linear gluing polynomials.
Vertex functions prescribe a full fourth-order jet at the vertex (scaled by
sigma to keep the local systems O(1)) and are assembled per fan patch from
edge-function combinations plus a tensor B-spline correction; the edge and
patch coefficients solve small dense interpolation systems at the vertex.

`smoothness_residual` evaluates the two-piece matching conditions (trace,
scaled first and second transversal forms) literally; it is the module's
core oracle and must vanish on every constructed function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .bspline import basis_all_ders, greville, make_space
from .errors import ConstructionError, ParameterError
from .multipatch import JET_ORDERS, Dihedral, FramedSide, _compose, jet_compose, kron_jet

_SWAP = Dihedral(swap=True)
_IDENT = Dihedral()

SUPPORTED_PR = ((5, 2), (6, 2), (6, 3))

# vertex jet index pairs (j1, j2), j1+j2 <= 4, in enumeration order
VERTEX_JETS = [(j1, j2) for j1 in range(5) for j2 in range(5 - j1)]
# per fan edge: 12 coefficient pairs (family, tangential index)
EDGE_COEFF_PAIRS = [(f, j) for f in range(3) for j in range(5 - f)]
# interpolation multi-orders (tangential <= 4, transversal <= 2, total <= 4)
EDGE_ORDERS = [(mt, mn) for mn in range(3) for mt in range(5 - mn)]


# --------------------------------------------------------------------------
# cached univariate evaluation
# --------------------------------------------------------------------------

_table_cache = {}


def _tables(space, x, nder=4):
    """Memoized (first, ders) tables; one entry serves all orders <= 4.

    Spaces are fully determined by (p, r, k), so that triple keys the cache.
    """
    nder = max(nder, 4)
    key = (space.p, space.r, space.k, x.tobytes(), nder)
    hit = _table_cache.get(key)
    if hit is None:
        if len(_table_cache) > 8192:
            _table_cache.clear()
        hit = basis_all_ders(space, x, nder)
        _table_cache[key] = hit
    return hit


def _eval1(space, j, x, d):
    """d-th derivative of basis function j at x (cached tables)."""
    x = np.asarray(x, dtype=float)
    if d > space.p:
        return np.zeros(x.shape[0])
    first, ders = _tables(space, x)
    a = j - first
    vals = np.zeros(x.shape[0])
    mask = (a >= 0) & (a <= space.p)
    vals[mask] = ders[mask, d, a[mask]]
    return vals


# --------------------------------------------------------------------------
# auxiliary spaces and transversal profiles
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AuxSpaces:
    """Main space plus the three interface trace spaces for one (p, r, k)."""

    s_main: object
    s0: object
    s1: object
    s2: object

    @property
    def p(self):
        return self.s_main.p

    @property
    def h(self):
        return self.s_main.h

    @property
    def dims(self):
        return (self.s0.n, self.s1.n, self.s2.n)


def make_aux_spaces(p, r, k):
    return AuxSpaces(
        s_main=make_space(p, r, k),
        s0=make_space(p, r + 2, k),
        s1=make_space(p - 1, r + 1, k),
        s2=make_space(p - 2, r, k),
    )


def m_profile(aux, m_index, u1, e):
    """e-th derivative of the transversal profile M_{m_index} at u1."""
    s = aux.s_main
    p, h = aux.p, aux.h
    if m_index == 0:
        return _eval1(s, 0, u1, e) + _eval1(s, 1, u1, e) + _eval1(s, 2, u1, e)
    if m_index == 1:
        return (h / p) * (_eval1(s, 1, u1, e) + 2.0 * _eval1(s, 2, u1, e))
    return (h * h / (p * (p - 1))) * _eval1(s, 2, u1, e)


def _poly_eval(c, t, mu):
    """mu-th derivative of the quadratic c0 + c1 t + c2 t^2."""
    if mu == 0:
        return c[0] + t * (c[1] + t * c[2])
    if mu == 1:
        return c[1] + 2.0 * c[2] * t
    if mu == 2:
        return np.full_like(t, 2.0 * c[2])
    return np.zeros_like(t)


def _lin_sq(a):
    return np.array([a[0] * a[0], 2.0 * a[0] * a[1], a[1] * a[1]])


def _lin_mul(a, b):
    return np.array([a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[1] * b[1]])


def _gterms(aux, family, gside):
    """Terms (prefactor, tangential poly, tangential space, extra der, M index)
    of the interface edge function family on one side."""
    p, h = aux.p, aux.h
    if family == 0:
        b = gside.beta
        return [
            (1.0, np.array([1.0, 0.0, 0.0]), aux.s0, 0, 0),
            (1.0, np.array([b[0], b[1], 0.0]), aux.s0, 1, 1),
            (1.0, _lin_sq(b), aux.s0, 2, 2),
        ]
    if family == 1:
        a, b = gside.alpha, gside.beta
        pref = p / h
        return [
            (pref, np.array([a[0], a[1], 0.0]), aux.s1, 0, 1),
            (2.0 * pref, _lin_mul(a, b), aux.s1, 1, 2),
        ]
    a = gside.alpha
    return [(p * (p - 1) / h**2, _lin_sq(a), aux.s2, 0, 2)]


def g_frame_factors(aux, family, j2, gside, u1, u2, e1, e2):
    """Separated evaluation of the (e1, e2) frame partial of g_{family,j2}.

    Returns a list of (transversal values over u1, tangential values over u2);
    the partial is the sum of their products (grid mode: sum of outer
    products). u1 is transversal to the interface, u2 runs along it.
    """
    out = []
    for pref, poly, sp, doff, mi in _gterms(aux, family, gside):
        trans = m_profile(aux, mi, u1, e1)
        if not np.any(trans):
            continue
        tang = np.zeros(u2.shape[0])
        for mu in range(min(e2, 2) + 1):
            pc = _poly_eval(poly, u2, mu)
            if np.any(pc):
                tang += comb(e2, mu) * pc * _eval1(sp, j2, u2, doff + e2 - mu)
        out.append((pref * trans, tang))
    return out


def g_frame_point(aux, family, j2, gside, e1, e2):
    """Frame partial of g_{family,j2} at the frame origin (vertex systems)."""
    z = np.zeros(1)
    total = 0.0
    for trans, tang in g_frame_factors(aux, family, j2, gside, z, z, e1, e2):
        total += trans[0] * tang[0]
    return total


# --------------------------------------------------------------------------
# evaluable pieces (all expose patch-coordinate derivatives)
# --------------------------------------------------------------------------


class BSplinePiece:
    """Tensor B-spline N_{j1}(u1) N_{j2}(u2) in a dihedral frame."""

    def __init__(self, space, j1, j2, tf=_IDENT):
        self.space = space
        self.j1 = j1
        self.j2 = j2
        self.tf = tf  # patch params -> frame params

    def _factors(self, u1, u2, e1, e2):
        return [(_eval1(self.space, self.j1, u1, e1), _eval1(self.space, self.j2, u2, e2))]

    def frame_box(self):
        a1, b1 = self.space.support(self.j1)
        a2, b2 = self.space.support(self.j2)
        return (a1, b1, a2, b2)

    max_trans_order = None  # unrestricted


class EdgePiece:
    """One side of an interface edge function in its interface frame."""

    def __init__(self, aux, family, j2, gside, tf):
        self.aux = aux
        self.family = family
        self.j2 = j2
        self.gside = gside
        self.tf = tf

    def _factors(self, u1, u2, e1, e2):
        return g_frame_factors(self.aux, self.family, self.j2, self.gside, u1, u2, e1, e2)

    def frame_box(self):
        sp = _gterms(self.aux, self.family, self.gside)[0][2]
        a2, b2 = sp.support(self.j2)
        # transversal profiles live on the first knot span
        return (0.0, self.aux.h, a2, b2)


def _map_axis(vals, flip):
    return 1.0 - vals if flip else vals


def _piece_grid(piece, x1, x2, d1, d2):
    """Patch-coordinate derivative of a framed piece on the tensor grid."""
    tf = piece.tf
    e1, e2, sign = tf.diff_orders(d1, d2)
    if tf.swap:
        u1 = _map_axis(x2, tf.flip1)
        u2 = _map_axis(x1, tf.flip2)
        out = np.zeros((x1.shape[0], x2.shape[0]))
        for trans, tang in piece._factors(u1, u2, e1, e2):
            out += np.outer(tang, trans)
        return sign * out
    u1 = _map_axis(x1, tf.flip1)
    u2 = _map_axis(x2, tf.flip2)
    out = np.zeros((x1.shape[0], x2.shape[0]))
    for trans, tang in piece._factors(u1, u2, e1, e2):
        out += np.outer(trans, tang)
    return sign * out


def _piece_points(piece, pts, d1, d2):
    tf = piece.tf
    e1, e2, sign = tf.diff_orders(d1, d2)
    u = tf.apply(pts)
    out = np.zeros(pts.shape[0])
    for trans, tang in piece._factors(u[:, 0], u[:, 1], e1, e2):
        out += trans * tang
    return sign * out


def _piece_box(piece):
    """Support box in patch coordinates (a1, b1, a2, b2)."""
    f1, g1, f2, g2 = piece.frame_box()
    m = piece.tf.inverse()
    lo = m.apply(np.array([f1, f2]))
    hi = m.apply(np.array([g1, g2]))
    a = np.minimum(lo, hi)
    b = np.maximum(lo, hi)
    return (a[0], b[0], a[1], b[1])


class CombinationPiece:
    """Linear combination of framed pieces on one patch (vertex functions)."""

    def __init__(self, terms):
        self.terms = [(c, p) for c, p in terms if c != 0.0]

    def eval_grid(self, x1, x2, d1, d2):
        out = np.zeros((x1.shape[0], x2.shape[0]))
        for c, p in self.terms:
            out += c * _piece_grid(p, x1, x2, d1, d2)
        return out

    def eval_points(self, pts, d1, d2):
        out = np.zeros(pts.shape[0])
        for c, p in self.terms:
            out += c * _piece_points(p, pts, d1, d2)
        return out

    def box(self):
        boxes = [_piece_box(p) for _, p in self.terms]
        return (
            min(b[0] for b in boxes),
            max(b[1] for b in boxes),
            min(b[2] for b in boxes),
            max(b[3] for b in boxes),
        )


class SinglePiece:
    """Adapter giving BSplinePiece / EdgePiece the piece interface."""

    def __init__(self, piece):
        self.piece = piece

    def eval_grid(self, x1, x2, d1, d2):
        return _piece_grid(self.piece, x1, x2, d1, d2)

    def eval_points(self, pts, d1, d2):
        return _piece_points(self.piece, pts, d1, d2)

    def box(self):
        return _piece_box(self.piece)


@dataclass
class BasisFunction:
    """One basis function of the smooth space, evaluable per patch."""

    index: int
    kind: str          # patch | boundary-edge | interface-edge |
                       # vertex-inner | vertex-v3 | vertex-v2 | vertex-v1
    where: int         # patch / edge / vertex id the function belongs to
    j: tuple           # (j1, j2) label within its block
    pieces: dict = field(repr=False)  # patch index -> piece

    @property
    def support_patches(self):
        return sorted(self.pieces)

    def eval_grid(self, patch_index, x1, x2, d1, d2):
        piece = self.pieces.get(patch_index)
        if piece is None:
            return np.zeros((np.size(x1), np.size(x2)))
        return piece.eval_grid(np.atleast_1d(x1), np.atleast_1d(x2), d1, d2)

    def eval_points(self, patch_index, pts, d1, d2):
        pts = np.atleast_2d(pts)
        piece = self.pieces.get(patch_index)
        if piece is None:
            return np.zeros(pts.shape[0])
        return piece.eval_points(pts, d1, d2)

    def box(self, patch_index):
        piece = self.pieces.get(patch_index)
        return None if piece is None else piece.box()


def eval_basis_function(fn, patch_index, xi, orders):
    """Parametric derivative of one basis function at a point (0 off support)."""
    d1, d2 = orders
    if d1 + d2 > 4:
        raise ParameterError("basis functions carry derivatives up to total order 4")
    return float(fn.eval_points(patch_index, np.atleast_2d(xi), d1, d2)[0])


# --------------------------------------------------------------------------
# the C2 space
# --------------------------------------------------------------------------


@dataclass
class C2Space:
    domain: object
    p: int
    r: int
    k: int
    aux: AuxSpaces
    basis: list
    counts: dict
    vertex_sigmas: dict

    @property
    def space(self):
        return self.aux.s_main

    @property
    def n(self):
        return self.aux.s_main.n

    @property
    def dim(self):
        return len(self.basis)

    def closed_form_dim(self):
        return closed_form_dim(self.domain, self.p, self.r, self.k)

    def functions_of_kind(self, kind):
        return [f for f in self.basis if f.kind == kind]


def closed_form_dim(domain, p, r, k):
    """Direct-sum dimension formula of the smooth space."""
    n = p + 1 + k * (p - r)
    c = domain.class_counts()
    return (
        domain.n_patches * (n - 6) ** 2
        + 3 * len(domain.interfaces) * (n - 2 * k - 9)
        + 3 * len(domain.boundary_edges) * (n - 8)
        + 15 * (c["inner"] + c["v1"] + c["v3"])
        + 18 * c["v2"]
    )


def min_inner_knots(p, r):
    """Smallest k with h-refineable constructions: k(p-r-2) >= 9-p."""
    import math

    return max(2, math.ceil((9 - p) / (p - r - 2)))


def _check_params(p, r, k):
    if (p, r) not in SUPPORTED_PR:
        raise ParameterError(
            f"unsupported (p, r) = ({p}, {r}); supported pairs: {SUPPORTED_PR}"
        )
    n0 = p + 1 + k * (p - r - 2)
    if k < 2 or n0 < 9:
        raise ParameterError(
            f"k too small: need k >= 2 and p+1+k(p-r-2) >= 9, got k={k} (n0={n0})"
        )


def _bspline_12_block(space, swapped):
    """12x12 jet-interpolation matrix for a boundary fan edge (B-spline basis).

    Rows follow EDGE_ORDERS as (tangential, transversal) orders; columns
    EDGE_COEFF_PAIRS as (transversal index, tangential index).
    """
    z = np.zeros(1)
    A = np.zeros((12, 12))
    for row, (mt, mn) in enumerate(EDGE_ORDERS):
        for col, (f, j) in enumerate(EDGE_COEFF_PAIRS):
            A[row, col] = _eval1(space, f, z, mn)[0] * _eval1(space, j, z, mt)[0]
    del swapped  # same matrix either way: orders are already (tan, trans)
    return A


def _edge_12_block(aux, gside):
    """12x12 matrix for an interface fan edge on the given side."""
    A = np.zeros((12, 12))
    for row, (mt, mn) in enumerate(EDGE_ORDERS):
        for col, (f, j) in enumerate(EDGE_COEFF_PAIRS):
            A[row, col] = g_frame_point(aux, f, j, gside, mn, mt)
    return A


def _rhs_12(param_jet, tangential_axis):
    """Right-hand side rows for one patch: jets at EDGE_ORDERS.

    tangential_axis 1 means the edge runs along the patch frame's first
    coordinate (u2=0 edge); 2 means along the second (u1=0 edge).
    """
    out = np.zeros(12)
    for row, (mt, mn) in enumerate(EDGE_ORDERS):
        if tangential_axis == 1:
            out[row] = param_jet[mt, mn]
        else:
            out[row] = param_jet[mn, mt]
    return out


def _corner_9_system(space):
    E = np.zeros((3, 3))
    z = np.zeros(1)
    for m in range(3):
        for j in range(3):
            E[m, j] = _eval1(space, j, z, m)[0]
    return np.kron(E, E)


class _VertexBuilder:
    """Solves the per-vertex interpolation systems and assembles pieces."""

    def __init__(self, domain, aux, vertex):
        self.domain = domain
        self.aux = aux
        self.v = vertex
        nu = vertex.valency
        self.framed = [
            FramedSide(domain.patches[pi], fr)
            for pi, fr in zip(vertex.fan_patches, vertex.fan_frames)
        ]
        # Frobenius norm of the Jacobian at the vertex
        norms = []
        for fs in self.framed:
            jet = fs.frame_jet(order=1)
            J = np.stack([jet[1, 0], jet[0, 1]], axis=-1)
            norms.append(np.linalg.norm(J))
        self.sigma = 1.0 / (aux.h / (aux.p * nu) * sum(norms))
        self.geo_jets = [fs.frame_jet(order=4) for fs in self.framed]
        # parametric jets of the 15 prescribed vertex functions, per fan patch
        self.param_jets = [
            [jet_compose(kron_jet(j1, j2, self.sigma), gj) for (j1, j2) in VERTEX_JETS]
            for gj in self.geo_jets
        ]

    def edge_coefficients(self):
        """Per fan edge: (12, 15) coefficient array over VERTEX_JETS."""
        v = self.v
        aux = self.aux
        out = []
        for e, fe in enumerate(v.fan_edges):
            if fe.kind == "interface":
                nxt = fe.next_pos
                A = _edge_12_block(aux, fe.gluing.sides[1])
                rhs = np.stack(
                    [_rhs_12(self.param_jets[nxt][q], 1) for q in range(15)], axis=1
                )
                coeff = np.linalg.solve(A, rhs)
                # cross-check from the previous patch (uniqueness of the edge data)
                prv = fe.prev_pos
                A2 = _edge_12_block(aux, fe.gluing.sides[0])
                rhs2 = np.stack(
                    [_rhs_12(self.param_jets[prv][q], 2) for q in range(15)], axis=1
                )
                coeff2 = np.linalg.solve(A2, rhs2)
                scale = max(1.0, np.abs(coeff).max())
                if np.abs(coeff - coeff2).max() > 1e-8 * scale:
                    raise ConstructionError(
                        f"vertex {v.index}: edge coefficients disagree between the "
                        f"two adjacent patches (fan edge {e}, "
                        f"mismatch {np.abs(coeff - coeff2).max():.2e})"
                    )
            else:
                space = aux.s_main
                A = _bspline_12_block(space, swapped=fe.next_pos is not None)
                if fe.next_pos is not None:
                    pos, axis = fe.next_pos, 1
                else:
                    pos, axis = fe.prev_pos, 2
                rhs = np.stack(
                    [_rhs_12(self.param_jets[pos][q], axis) for q in range(15)], axis=1
                )
                coeff = np.linalg.solve(A, rhs)
            out.append(coeff)
        return out

    def patch_coefficients(self):
        """Per fan patch: (9, 15) corner B-spline coefficients."""
        A = _corner_9_system(self.aux.s_main)
        out = []
        for pos in range(self.v.valency):
            rhs = np.zeros((9, 15))
            for q in range(15):
                jet = self.param_jets[pos][q]
                rhs[:, q] = [jet[m1, m2] for m1 in range(3) for m2 in range(3)]
            out.append(np.linalg.solve(A, rhs))
        return out

    def build_functions(self, kind, where):
        v = self.v
        aux = self.aux
        nu = v.valency
        inner = v.klass == "inner"
        a_edges = self.edge_coefficients()
        a_patch = self.patch_coefficients()
        fns = []
        for q, (j1, j2) in enumerate(VERTEX_JETS):
            pieces = {}
            for pos in range(nu):
                patch_index = v.fan_patches[pos]
                fan_tf = v.fan_frames[pos]
                terms = []
                # edge at the {u2=0} side: swapped-argument evaluation
                e_lo = pos
                fe = v.fan_edges[e_lo]
                tf_lo = _compose(fan_tf, _SWAP)
                for col, (f, jj) in enumerate(EDGE_COEFF_PAIRS):
                    c = a_edges[e_lo][col, q]
                    if fe.kind == "interface":
                        terms.append(
                            (c, EdgePiece(aux, f, jj, fe.gluing.sides[1], tf_lo))
                        )
                    else:
                        terms.append((c, BSplinePiece(aux.s_main, f, jj, tf_lo)))
                # edge at the {u1=0} side
                e_hi = (pos + 1) % nu if inner else pos + 1
                fe = v.fan_edges[e_hi]
                for col, (f, jj) in enumerate(EDGE_COEFF_PAIRS):
                    c = a_edges[e_hi][col, q]
                    if fe.kind == "interface":
                        terms.append(
                            (c, EdgePiece(aux, f, jj, fe.gluing.sides[0], fan_tf))
                        )
                    else:
                        terms.append((c, BSplinePiece(aux.s_main, f, jj, fan_tf)))
                # subtract the double-counted corner B-splines
                for a in range(3):
                    for b in range(3):
                        c = a_patch[pos][3 * a + b, q]
                        terms.append((-c, BSplinePiece(aux.s_main, a, b, fan_tf)))
                pieces[patch_index] = CombinationPiece(terms)
            fns.append(
                BasisFunction(index=-1, kind=kind, where=where, j=(j1, j2), pieces=pieces)
            )
        return fns


def build_space(domain, p, r, k):
    """Construct the C2-smooth space over the domain for parameters (p, r, k)."""
    _check_params(p, r, k)
    aux = make_aux_spaces(p, r, k)
    s = aux.s_main
    n = s.n
    n0, n1, n2 = aux.dims
    basis = []
    counts = {}

    def add(fn):
        fn.index = len(basis)
        basis.append(fn)
        counts[fn.kind] = counts.get(fn.kind, 0) + 1

    # patch functions
    for patch in domain.patches:
        for j1 in range(3, n - 3):
            for j2 in range(3, n - 3):
                add(
                    BasisFunction(
                        index=-1,
                        kind="patch",
                        where=patch.index,
                        j=(j1, j2),
                        pieces={patch.index: SinglePiece(BSplinePiece(s, j1, j2))},
                    )
                )

    # boundary edge functions
    for rec in domain.boundary_edges:
        tf = rec.framed.to_frame
        for j1 in range(3):
            for j2 in range(5 - j1, n + j1 - 5):
                add(
                    BasisFunction(
                        index=-1,
                        kind="boundary-edge",
                        where=rec.index,
                        j=(j1, j2),
                        pieces={rec.patch: SinglePiece(BSplinePiece(s, j1, j2, tf))},
                    )
                )

    # interface edge functions
    nfam = (n0, n1, n2)
    for rec in domain.interfaces:
        for j1 in range(3):
            for j2 in range(5 - j1, nfam[j1] + j1 - 5):
                pieces = {}
                for sidx in range(2):
                    fs = rec.framed[sidx]
                    pieces[fs.patch.index] = SinglePiece(
                        EdgePiece(aux, j1, j2, rec.gluing.sides[sidx], fs.to_frame)
                    )
                add(
                    BasisFunction(
                        index=-1,
                        kind="interface-edge",
                        where=rec.index,
                        j=(j1, j2),
                        pieces=pieces,
                    )
                )

    vertex_sigmas = {}

    # vertex functions, by class
    for klass, kind in (("inner", "vertex-inner"), ("v3", "vertex-v3")):
        for v in domain.vertices_of_class(klass):
            vb = _VertexBuilder(domain, aux, v)
            vertex_sigmas[v.index] = vb.sigma
            for fn in vb.build_functions(kind, v.index):
                add(fn)

    for v in domain.vertices_of_class("v2"):
        fa, fb = v.v2_framed
        gl = v.v2_gluing
        i0 = gl.neg_side
        sides = (fa, fb)
        for j1 in range(5):
            for j2 in range(5 - min(j1, 2)):
                if j1 <= 2:
                    pieces = {
                        sides[0].patch.index: SinglePiece(
                            EdgePiece(aux, j1, j2, gl.sides[0], sides[0].to_frame)
                        ),
                        sides[1].patch.index: SinglePiece(
                            EdgePiece(aux, j1, j2, gl.sides[1], sides[1].to_frame)
                        ),
                    }
                else:
                    pos = i0 if j1 == 3 else 1 - i0
                    fs = sides[pos]
                    pieces = {
                        fs.patch.index: SinglePiece(
                            BSplinePiece(s, 3 + j2 // 2, j2 % 2, fs.to_frame)
                        )
                    }
                add(
                    BasisFunction(
                        index=-1, kind="vertex-v2", where=v.index, j=(j1, j2), pieces=pieces
                    )
                )

    for v in domain.vertices_of_class("v1"):
        tf = v.fan_frames[0]
        pi = v.fan_patches[0]
        for (j1, j2) in VERTEX_JETS:
            add(
                BasisFunction(
                    index=-1,
                    kind="vertex-v1",
                    where=v.index,
                    j=(j1, j2),
                    pieces={pi: SinglePiece(BSplinePiece(s, j1, j2, tf))},
                )
            )

    return C2Space(
        domain=domain,
        p=p,
        r=r,
        k=k,
        aux=aux,
        basis=basis,
        counts=counts,
        vertex_sigmas=vertex_sigmas,
    )


# --------------------------------------------------------------------------
# single-function constructors (range-checked)
# --------------------------------------------------------------------------


def patch_function(space, i, j1, j2):
    n = space.n
    if not (3 <= j1 <= n - 4 and 3 <= j2 <= n - 4):
        raise ParameterError(f"patch function indices must lie in 3..{n - 4}")
    return next(
        f for f in space.basis if f.kind == "patch" and f.where == i and f.j == (j1, j2)
    )


def boundary_edge_function(space, i, j1, j2):
    n = space.n
    if not (0 <= j1 <= 2 and 5 - j1 <= j2 <= n + j1 - 6):
        raise ParameterError("boundary edge function index out of range")
    return next(
        f
        for f in space.basis
        if f.kind == "boundary-edge" and f.where == i and f.j == (j1, j2)
    )


def interface_edge_function(space, i, j1, j2):
    nfam = space.aux.dims
    if not (0 <= j1 <= 2 and 5 - j1 <= j2 <= nfam[j1] + j1 - 6):
        raise ParameterError("interface edge function index out of range")
    return next(
        f
        for f in space.basis
        if f.kind == "interface-edge" and f.where == i and f.j == (j1, j2)
    )


def vertex_function(space, vertex_index, j1, j2):
    v = space.domain.vertices[vertex_index]
    kind = {"inner": "vertex-inner", "v3": "vertex-v3", "v2": "vertex-v2", "v1": "vertex-v1"}[
        v.klass
    ]
    jmax2 = 4 - min(j1, 2) if v.klass == "v2" else 4 - j1
    if not (0 <= j1 <= 4 and 0 <= j2 <= jmax2):
        raise ParameterError("vertex function index out of range")
    return next(
        f
        for f in space.basis
        if f.kind == kind and f.where == vertex_index and f.j == (j1, j2)
    )


def _vertex_function_of_class(space, vertex_index, j1, j2, klass):
    v = space.domain.vertices[vertex_index]
    if v.klass != klass:
        raise ParameterError(
            f"vertex {vertex_index} has class '{v.klass}', expected '{klass}'"
        )
    return vertex_function(space, vertex_index, j1, j2)


def inner_vertex_function(space, vertex_index, j1, j2):
    return _vertex_function_of_class(space, vertex_index, j1, j2, "inner")


def boundary_vertex_v3_function(space, vertex_index, j1, j2):
    return _vertex_function_of_class(space, vertex_index, j1, j2, "v3")


def boundary_vertex_v2_function(space, vertex_index, j1, j2):
    return _vertex_function_of_class(space, vertex_index, j1, j2, "v2")


def boundary_vertex_v1_function(space, vertex_index, j1, j2):
    return _vertex_function_of_class(space, vertex_index, j1, j2, "v1")


# --------------------------------------------------------------------------
# smoothness residual oracle
# --------------------------------------------------------------------------


@dataclass
class SmoothnessResidual:
    ts: np.ndarray
    value: np.ndarray    # trace mismatch
    first: np.ndarray    # scaled transversal first-derivative mismatch
    second: np.ndarray   # scaled transversal second-derivative mismatch

    def max_abs(self):
        return max(np.abs(self.value).max(), np.abs(self.first).max(), np.abs(self.second).max())


def smoothness_residual(evaluator, framed, gluing, ts):
    """Two-piece matching residuals along a canonically framed interface.

    evaluator(patch_index, pts, d1, d2) -> values of the candidate function's
    piece on that patch in patch coordinates. The three residuals evaluate the
    trace equality, the alpha/beta-scaled transversal first-derivative form
    and the second-derivative form literally; all vanish (<= 1e-10) for
    members of the smooth space. Trace derivatives entering the scaled forms
    are taken from the first side.
    """
    ts = np.asarray(ts, dtype=float)
    upts = np.stack([np.zeros(ts.size), ts], axis=1)

    def g(side_idx, e1, e2):
        fs = framed[side_idx]
        m = fs.from_frame
        d1, d2, sign = m.diff_orders(e1, e2)
        return sign * evaluator(fs.patch.index, m.apply(upts), d1, d2)

    ga = {key: g(0, *key) for key in [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)]}
    gb = {key: g(1, *key) for key in [(0, 0), (1, 0), (1, 1), (2, 0)]}

    al = [gluing.sides[i].alpha_at(ts) for i in range(2)]
    alp = [gluing.sides[i].alpha[1] for i in range(2)]
    be = [gluing.sides[i].beta_at(ts) for i in range(2)]
    bep = [gluing.sides[i].beta[1] for i in range(2)]

    g0p, g0pp = ga[(0, 1)], ga[(0, 2)]
    r0 = ga[(0, 0)] - gb[(0, 0)]
    f_a = (ga[(1, 0)] - be[0] * g0p) / al[0]
    f_b = (gb[(1, 0)] - be[1] * g0p) / al[1]
    r1 = f_a - f_b
    g1p = ((ga[(1, 1)] - bep[0] * g0p - be[0] * g0pp) * al[0] - (ga[(1, 0)] - be[0] * g0p) * alp[0]) / al[0] ** 2
    s_a = (ga[(2, 0)] - be[0] ** 2 * g0pp - 2 * al[0] * be[0] * g1p) / al[0] ** 2
    s_b = (gb[(2, 0)] - be[1] ** 2 * g0pp - 2 * al[1] * be[1] * g1p) / al[1] ** 2
    r2 = s_a - s_b
    return SmoothnessResidual(ts=ts, value=r0, first=r1, second=r2)


def basis_interface_residual(space, fn, interface_index, ts):
    rec = space.domain.interfaces[interface_index]
    return smoothness_residual(
        lambda pi, pts, d1, d2: fn.eval_points(pi, pts, d1, d2),
        rec.framed,
        rec.gluing,
        ts,
    )


def audit_smoothness(space, n_points=20):
    """Max interface residual per interface and max vertex jet mismatch per
    inner/v3 vertex; the full-space smoothness audit."""
    from .multipatch import param_to_phys_jet

    ts = np.linspace(0.0, 1.0, n_points)
    iface_max = []
    for rec in space.domain.interfaces:
        worst = 0.0
        for fn in space.basis:
            if rec.framed[0].patch.index in fn.pieces or rec.framed[1].patch.index in fn.pieces:
                res = basis_interface_residual(space, fn, rec.index, ts)
                worst = max(worst, res.max_abs())
        iface_max.append(worst)
    vertex_max = {}
    for v in space.domain.vertices:
        if v.klass not in ("inner", "v3"):
            continue
        sig = space.vertex_sigmas[v.index]
        framed = [
            FramedSide(space.domain.patches[pi], fr)
            for pi, fr in zip(v.fan_patches, v.fan_frames)
        ]
        geo_jets = [fs.frame_jet(order=4) for fs in framed]
        worst = 0.0
        kind = "vertex-inner" if v.klass == "inner" else "vertex-v3"
        for fn in space.basis:
            if fn.kind != kind or fn.where != v.index:
                continue
            target = kron_jet(fn.j[0], fn.j[1], sig)
            for pos, fs in enumerate(framed):
                pjet = np.zeros((5, 5))
                origin = fs.from_frame.apply(np.array([[0.0, 0.0]]))
                for (e1, e2) in JET_ORDERS:
                    d1, d2, sign = fs.from_frame.diff_orders(e1, e2)
                    pjet[e1, e2] = sign * fn.eval_points(fs.patch.index, origin, d1, d2)[0]
                phys = param_to_phys_jet(pjet, geo_jets[pos])
                scale = max(np.abs(target).max(), 1e-30)
                worst = max(worst, np.abs(phys - target).max() / scale)
        vertex_max[v.index] = worst
    return iface_max, vertex_max
