"""Univariate and tensor-product B-spline spaces on [0,1].

Spaces use open knot vectors with uniform breakpoints j/(k+1): multiplicity
p+1 at 0 and 1 and p-r at each of the k inner breakpoints, so the basis is
C^r across inner knots and has dimension n = p+1+k(p-r).

Derivative evaluation follows the classic knot-difference recurrence
(NURBS book, algorithm A2.3), vectorized over evaluation points. At inner
knots the one-sided limit from the right is taken, except at x = 1 where
the left limit is used; span lookup compares against the stored breakpoint
floats, never against recomputed products, so the convention is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError


@dataclass(frozen=True)
class SplineSpace1D:
    """Open uniform spline space of degree p, regularity r, k inner knots."""

    p: int
    r: int
    k: int
    knots: np.ndarray = field(repr=False, compare=False)
    breakpoints: np.ndarray = field(repr=False, compare=False)

    @property
    def h(self):
        return 1.0 / (self.k + 1)

    @property
    def n(self):
        """Number of B-splines: p+1+k(p-r)."""
        return self.p + 1 + self.k * (self.p - self.r)

    def span_offset(self, s):
        """Index of the last knot <= x for x inside breakpoint span s."""
        return self.p + s * (self.p - self.r)

    def find_span(self, x):
        """Breakpoint span index for each x, right-continuous except at 1."""
        x = np.asarray(x)
        s = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(s, 0, self.k)

    def support(self, j):
        """Support interval [t_j, t_{j+p+1}] of basis function j."""
        return self.knots[j], self.knots[j + self.p + 1]


def make_space(p, r, k):
    """Build the open uniform spline space S^{p,r} with k inner knots.

    Raises ParameterError naming the violated inequality for invalid input.
    """
    if not p >= 1:
        raise ParameterError(f"degree must satisfy p >= 1, got p={p}")
    if not -1 <= r <= p - 1:
        raise ParameterError(f"regularity must satisfy -1 <= r <= p-1, got r={r} for p={p}")
    if not k >= 0:
        raise ParameterError(f"inner-knot count must satisfy k >= 0, got k={k}")
    breakpoints = np.arange(k + 2, dtype=float) / (k + 1)
    knots = np.concatenate(
        [
            np.zeros(p + 1),
            np.repeat(breakpoints[1:-1], p - r),
            np.ones(p + 1),
        ]
    )
    return SplineSpace1D(p=p, r=r, k=k, knots=knots, breakpoints=breakpoints)


def basis_all_ders(space, x, nder):
    """Active-basis derivative tables at points x.

    Parameters
    ----------
    space : SplineSpace1D
    x : array_like, shape (m,), values in [0, 1]
    nder : int, highest derivative order requested

    Returns
    -------
    first : (m,) int array, global index of the first active basis function
    ders : (m, nder+1, p+1) array; ders[i, d, a] is the d-th derivative of
        basis function first[i]+a at x[i]. Orders above p are zero.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise DomainError(f"evaluation points must lie in [0, 1], got range [{x.min()}, {x.max()}]")
    p = space.p
    t = space.knots
    m = x.shape[0]
    s = space.find_span(x)
    offset = space.span_offset(s)

    # Triangular table of basis values by degree, plus knot differences.
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[offset + 1 - j]
        right[:, j] = t[offset + j] - x
        saved = np.zeros(m)
        for rr in range(j):
            denom = right[:, rr + 1] + left[:, j - rr]
            ndu[:, j, rr] = denom
            temp = ndu[:, rr, j - 1] / denom
            ndu[:, rr, j] = saved + right[:, rr + 1] * temp
            saved = left[:, j - rr] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nder + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]

    # Derivative part: alternating-sum coefficients per order.
    ne = min(nder, p)
    a = np.zeros((m, 2, p + 1))
    for rr in range(p + 1):
        a[:, 0, :] = 0.0
        a[:, 1, :] = 0.0
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for kk in range(1, ne + 1):
            d = np.zeros(m)
            rk = rr - kk
            pk = p - kk
            if rr >= kk:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if rr - 1 <= pk else p - rr
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d += a[:, s2, j] * ndu[:, rk + j, pk]
            if rr <= pk:
                a[:, s2, kk] = -a[:, s1, kk - 1] / ndu[:, pk + 1, rr]
                d += a[:, s2, kk] * ndu[:, rr, pk]
            ders[:, kk, rr] = d
            s1, s2 = s2, s1

    fac = float(p)
    for kk in range(1, ne + 1):
        ders[:, kk, :] *= fac
        fac *= p - kk
    first = offset - p
    return first, ders


def eval_all(space, x, max_deriv):
    """Dense table of all basis derivatives at x.

    For scalar x returns shape (max_deriv+1, n); for an (m,) array returns
    (m, max_deriv+1, n). Derivative orders above p are zero by convention.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    first, ders = basis_all_ders(space, xa, max_deriv)
    out = np.zeros((xa.shape[0], max_deriv + 1, space.n))
    cols = first[:, None] + np.arange(space.p + 1)[None, :]
    np.put_along_axis(
        out,
        np.broadcast_to(cols[:, None, :], ders.shape),
        ders,
        axis=2,
    )
    return out[0] if scalar else out


def eval_one(space, j, x, d):
    """d-th derivative of basis function j at points x (vectorized)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    first, ders = basis_all_ders(space, x, d)
    a = j - first
    vals = np.zeros(x.shape[0])
    mask = (a >= 0) & (a <= space.p)
    vals[mask] = ders[mask, d, a[mask]]
    return vals


def greville(space):
    """Greville abscissae ζ_j = (t_{j+1}+...+t_{j+p})/p."""
    t = space.knots
    p = space.p
    windows = np.lib.stride_tricks.sliding_window_view(t[1:-1], p)
    return windows[: space.n].mean(axis=1)


@dataclass(frozen=True)
class TensorSpace2D:
    """Tensor product of two (equal) univariate spaces on [0,1]^2."""

    s1: SplineSpace1D
    s2: SplineSpace1D

    @property
    def dim(self):
        return self.s1.n * self.s2.n


def make_tensor_space(p, r, k):
    s = make_space(p, r, k)
    return TensorSpace2D(s, s)


def eval_tensor(space2d, xi, orders):
    """Table of mixed partials of all tensor B-splines at one point.

    Entry (j1, j2) is the (d1, d2) parametric derivative of
    N_{j1}(ξ1) N_{j2}(ξ2); orders above the degree are zero.
    """
    d1, d2 = orders
    v1 = eval_all(space2d.s1, float(xi[0]), d1)[d1]
    v2 = eval_all(space2d.s2, float(xi[1]), d2)[d2]
    return np.outer(v1, v2)
