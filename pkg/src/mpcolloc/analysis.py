"""Manufactured solutions, error norms by Gauss quadrature, rate studies.

Error norms are full relative Sobolev norms ||u - u_h||_X / ||u||_X for
X in {L2, H1, H2} (value plus all derivative multi-indices up to the
order), integrated span-by-span with Gauss-Legendre rules of order q per
direction (default q = p + 2) and the physical Jacobian factor.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .collocation import assemble_global
from .errors import ParameterError
from .expr import eval_jet, parse_expression
from .smoothspace import build_space
from .solver import assemble, eval_solution_grid, solve_two_stage


@dataclass
class ManufacturedSolution:
    """Closed-form exact solution with derived Poisson data f = lap(u), f1 = u."""

    name: str
    u: callable
    grad: callable   # -> (ux, uy)
    hess: callable   # -> (uxx, uxy, uyy)

    def f(self, x, y):
        uxx, _, uyy = self.hess(x, y)
        return uxx + uyy

    def f1(self, x, y):
        return self.u(x, y)


def _trig_solution(name, amp, ax, bx, ay, by):
    """u = amp * cos(ax*x + bx) * sin(ay*y + by), with hand-derived derivatives."""

    def u(x, y):
        return amp * np.cos(ax * x + bx) * np.sin(ay * y + by)

    def grad(x, y):
        return (
            -amp * ax * np.sin(ax * x + bx) * np.sin(ay * y + by),
            amp * ay * np.cos(ax * x + bx) * np.cos(ay * y + by),
        )

    def hess(x, y):
        return (
            -amp * ax * ax * np.cos(ax * x + bx) * np.sin(ay * y + by),
            -amp * ax * ay * np.sin(ax * x + bx) * np.cos(ay * y + by),
            -amp * ay * ay * np.cos(ax * x + bx) * np.sin(ay * y + by),
        )

    return ManufacturedSolution(name=name, u=u, grad=grad, hess=hess)


_CATALOG = {
    # one-patch study: u = cos(4x1 - 2) sin(4x2 - 2/3), lap u = -32 cos sin
    "onepatch": lambda: _trig_solution("onepatch", 1.0, 4.0, -2.0, 4.0, -2.0 / 3.0),
    "ua": lambda: _trig_solution("ua", -4.0, 2.0 / 3.0, 0.0, 2.0 / 3.0, 0.0),
    "ub": lambda: _trig_solution("ub", -4.0, 0.5, 0.0, 0.5, -1.0),
    "uc": lambda: _trig_solution("uc", -4.0, 0.5, 1.5, 0.5, -0.5),
    "ud": lambda: _trig_solution("ud", -4.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 0.0),
}


def catalog(name):
    """Built-in exact solutions; 'expr:<formula>' builds one from a formula."""
    if name in _CATALOG:
        return _CATALOG[name]()
    if name.startswith("expr:"):
        return from_expression(name[5:])
    raise ParameterError(
        f"unknown exact solution '{name}'; available: {sorted(_CATALOG)} or expr:<formula>"
    )


def from_expression(src):
    """Manufactured solution from a formula in x1, x2 (forward-mode jets)."""
    node = parse_expression(src)

    def u(x, y):
        return eval_jet(node, x, y).f

    def grad(x, y):
        j = eval_jet(node, x, y)
        return j.fx, j.fy

    def hess(x, y):
        j = eval_jet(node, x, y)
        return j.fxx, j.fxy, j.fyy

    return ManufacturedSolution(name=f"expr:{src}", u=u, grad=grad, hess=hess)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    """Per-span Gauss-Legendre nodes/weights on [0,1], both directions equal."""

    q: int
    k: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)


def make_quadrature(k, q):
    if q < 1:
        raise ParameterError("quadrature order must be at least 1")
    x, w = np.polynomial.legendre.leggauss(q)
    h = 1.0 / (k + 1)
    nodes = ((np.arange(k + 1)[:, None] + (1.0 + x[None, :]) / 2.0) * h).ravel()
    weights = np.tile(w * h / 2.0, k + 1)
    return QuadratureRule(q=q, k=k, nodes=nodes, weights=weights)


def _physical_jets(geo, g10, g01, g20, g11, g02):
    """Gradient and Hessian entries in physical coordinates on a grid."""
    d10, d01, d20, d11, d02 = geo
    det = d10[..., 0] * d01[..., 1] - d10[..., 1] * d01[..., 0]
    inv = 1.0 / det
    i00 = inv * d01[..., 1]
    i01 = -inv * d01[..., 0]
    i10 = -inv * d10[..., 1]
    i11 = inv * d10[..., 0]
    ux = i00 * g10 + i10 * g01
    uy = i01 * g10 + i11 * g01
    m20 = g20 - ux * d20[..., 0] - uy * d20[..., 1]
    m11 = g11 - ux * d11[..., 0] - uy * d11[..., 1]
    m02 = g02 - ux * d02[..., 0] - uy * d02[..., 1]
    a00 = i00 * m20 + i10 * m11
    a01 = i00 * m11 + i10 * m02
    a10 = i01 * m20 + i11 * m11
    a11 = i01 * m11 + i11 * m02
    uxx = a00 * i00 + a01 * i10
    uxy = a00 * i01 + a01 * i11
    uyy = a10 * i01 + a11 * i11
    return ux, uy, uxx, uxy, uyy, np.abs(det)


def error_norms(space, coeffs, exact=None, q=None):
    """Relative L2, H1, H2 errors of the coefficient field against `exact`.

    Callable either as error_norms(space, coeffs, exact, q=...) or with a
    Solution object as error_norms(solution, exact, q=...).
    """
    if exact is None:
        space, coeffs, exact = space.space, space.coeffs, coeffs
    if q is None:
        q = space.p + 2
    rule = make_quadrature(space.k, q)
    ts, w = rule.nodes, rule.weights
    W = np.outer(w, w)
    num = np.zeros(3)
    den = np.zeros(3)
    for patch in space.domain.patches:
        geo = (
            patch.derivs_grid(ts, ts, 1, 0),
            patch.derivs_grid(ts, ts, 0, 1),
            patch.derivs_grid(ts, ts, 2, 0),
            patch.derivs_grid(ts, ts, 1, 1),
            patch.derivs_grid(ts, ts, 0, 2),
        )
        g = {
            d: eval_solution_grid(space, coeffs, patch.index, ts, ts, *d)
            for d in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        }
        ux, uy, uxx, uxy, uyy, jac = _physical_jets(
            geo, g[(1, 0)], g[(0, 1)], g[(2, 0)], g[(1, 1)], g[(0, 2)]
        )
        xy = patch.derivs_grid(ts, ts, 0, 0)
        X, Y = xy[..., 0], xy[..., 1]
        eu = exact.u(X, Y)
        egx, egy = exact.grad(X, Y)
        exx, exy, eyy = exact.hess(X, Y)
        wj = W * jac

        def add(i, approx, ref):
            num[i] += ((approx - ref) ** 2 * wj).sum()
            den[i] += (ref**2 * wj).sum()

        for i in range(3):
            add(i, g[(0, 0)], eu)
        for i in range(1, 3):
            add(i, ux, egx)
            add(i, uy, egy)
        add(2, uxx, exx)
        add(2, uxy, exy)
        add(2, uyy, eyy)
    return tuple(np.sqrt(num[i] / den[i]) for i in range(3))


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------


@dataclass
class StudyRow:
    domain: str
    p: int
    r: int
    strategy: str
    k: int
    h: float
    ndof: int
    npoints: int
    rel_l2: float
    rel_h1: float
    rel_h2: float
    rate_l2: float | None = None
    rate_h1: float | None = None
    rate_h2: float | None = None


@dataclass
class ErrorReport:
    rows: list

    def rates(self):
        """Per-norm rate lists between consecutive levels."""
        out = {"l2": [], "h1": [], "h2": []}
        for row in self.rows[1:]:
            out["l2"].append(row.rate_l2)
            out["h1"].append(row.rate_h1)
            out["h2"].append(row.rate_h2)
        return out

    def to_csv(self):
        buf = io.StringIO()
        buf.write(
            "domain,p,r,strategy,k,h,ndof,npoints,relL2,relH1,relH2,rateL2,rateH1,rateH2\n"
        )
        for row in self.rows:
            rates = [
                "" if v is None else repr(float(v))
                for v in (row.rate_l2, row.rate_h1, row.rate_h2)
            ]
            buf.write(
                f"{row.domain},{row.p},{row.r},{row.strategy},{row.k},{row.h!r},"
                f"{row.ndof},{row.npoints},{row.rel_l2!r},{row.rel_h1!r},{row.rel_h2!r},"
                f"{rates[0]},{rates[1]},{rates[2]}\n"
            )
        return buf.getvalue()


def estimate_rate(h_prev, h_next, e_prev, e_next):
    return float(np.log(e_prev / e_next) / np.log(h_prev / h_next))


def solve_level(domain, p, r, k, strategy, exact, q=None):
    """Build, assemble and solve one refinement level; returns (space, solution, points)."""
    space = build_space(domain, p, r, k)
    points = assemble_global(domain, p, r, k, strategy)
    system = assemble(space, points, exact.f, exact.f1)
    sol = solve_two_stage(system)
    return space, sol, points


def convergence_study(domain, p, r, strategy, k_list, exact, q=None, progress=None):
    """Error report over a refinement sequence; rates between consecutive levels."""
    rows = []
    for k in k_list:
        space, sol, points = solve_level(domain, p, r, k, strategy, exact, q=q)
        errs = error_norms(space, sol.coeffs, exact, q=q)
        row = StudyRow(
            domain=domain.name,
            p=p,
            r=r,
            strategy=strategy,
            k=k,
            h=1.0 / (k + 1),
            ndof=space.dim,
            npoints=points.size,
            rel_l2=float(errs[0]),
            rel_h1=float(errs[1]),
            rel_h2=float(errs[2]),
        )
        if rows:
            prev = rows[-1]
            row.rate_l2 = estimate_rate(prev.h, row.h, prev.rel_l2, row.rel_l2)
            row.rate_h1 = estimate_rate(prev.h, row.h, prev.rel_h1, row.rel_h1)
            row.rate_h2 = estimate_rate(prev.h, row.h, prev.rel_h2, row.rel_h2)
        rows.append(row)
        if progress is not None:
            progress(row)
    return ErrorReport(rows=rows)
